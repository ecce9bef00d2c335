#include "geobias/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "geobias/errors.hpp"
#include "geobias/ingest.hpp"

namespace geobias {

using nlohmann::ordered_json;

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw NumericalError("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string sha256_file(const std::string& path) { return sha256_hex(slurp(path)); }

void RunManifest::add_input(const std::string& role, const std::string& path,
                            std::string_view bytes) {
  inputs.push_back({role, path, bytes.size(), sha256_hex(bytes)});
}

void RunManifest::add_output(const std::string& dir, const std::string& file) {
  const std::string bytes = slurp((std::filesystem::path(dir) / file).string());
  outputs.push_back({file, bytes.size(), sha256_hex(bytes)});
}

std::string to_json(const RunManifest& m) {
  ordered_json j;
  j["subcommand"] = m.subcommand;
  j["toolkit_version"] = m.toolkit_version;
  j["flags"] = ordered_json::object();
  for (const auto& [k, v] : m.flags) j["flags"][k] = v;
  j["inputs"] = ordered_json::array();
  for (const auto& in : m.inputs) {
    j["inputs"].push_back(
        {{"role", in.role}, {"path", in.path}, {"bytes", in.bytes}, {"sha256", in.sha256}});
  }
  j["counts"] = ordered_json::object();
  for (const auto& [k, v] : m.counts) j["counts"][k] = v;
  j["seed"] = m.seed ? ordered_json(*m.seed) : ordered_json(nullptr);
  j["generator"] = m.generator ? ordered_json(*m.generator) : ordered_json(nullptr);
  j["outputs"] = ordered_json::array();
  for (const auto& out : m.outputs) {
    j["outputs"].push_back({{"file", out.file}, {"bytes", out.bytes}, {"sha256", out.sha256}});
  }
  j["runtime"] = {{"duration_seconds", m.runtime.duration_seconds},
                  {"started_utc", m.runtime.started_utc},
                  {"threads", m.runtime.threads}};
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(std::string_view text) {
  RunManifest m;
  try {
    const auto j = ordered_json::parse(text);
    m.subcommand = j.at("subcommand").get<std::string>();
    m.toolkit_version = j.at("toolkit_version").get<std::string>();
    for (const auto& [k, v] : j.at("flags").items()) m.flags[k] = v.get<std::string>();
    for (const auto& in : j.at("inputs")) {
      m.inputs.push_back({in.at("role").get<std::string>(), in.at("path").get<std::string>(),
                          in.at("bytes").get<std::uint64_t>(),
                          in.at("sha256").get<std::string>()});
    }
    for (const auto& [k, v] : j.at("counts").items()) m.counts[k] = v.get<std::uint64_t>();
    if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("generator").is_null()) m.generator = j.at("generator").get<std::string>();
    for (const auto& out : j.at("outputs")) {
      m.outputs.push_back({out.at("file").get<std::string>(), out.at("bytes").get<std::uint64_t>(),
                           out.at("sha256").get<std::string>()});
    }
    const auto& rt = j.at("runtime");
    m.runtime.duration_seconds = rt.at("duration_seconds").get<double>();
    m.runtime.started_utc = rt.at("started_utc").get<std::string>();
    m.runtime.threads = rt.at("threads").get<unsigned>();
  } catch (const ordered_json::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const std::string& dir, const RunManifest& manifest) {
  const auto path = std::filesystem::path(dir) / kManifestFile;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << to_json(manifest);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace geobias

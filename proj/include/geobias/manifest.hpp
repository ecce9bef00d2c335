#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geobias {

std::string sha256_hex(std::string_view bytes);
// Throws InputError when the file cannot be read.
std::string sha256_file(const std::string& path);

struct InputDigest {
  std::string role;  // flag name, e.g. "users"
  std::string path;
  std::uint64_t bytes = 0;
  std::string sha256;
};

struct OutputDigest {
  std::string file;  // relative to the output directory
  std::uint64_t bytes = 0;
  std::string sha256;
};

// Everything except `runtime` is a pure function of the inputs and flags.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> flags;
  std::vector<InputDigest> inputs;
  std::map<std::string, std::uint64_t> counts;  // e.g. "users_in", "excluded.no_zip"
  std::optional<std::uint64_t> seed;
  std::optional<std::string> generator;
  std::vector<OutputDigest> outputs;
  std::string toolkit_version = GEOBIAS_VERSION;

  struct Runtime {
    double duration_seconds = 0.0;
    std::string started_utc;
    unsigned threads = 0;
  } runtime;

  void add_input(const std::string& role, const std::string& path,
                 std::string_view bytes);
  // Digests `dir/file`, which must already be written.
  void add_output(const std::string& dir, const std::string& file);
};

std::string to_json(const RunManifest& manifest);
RunManifest manifest_from_json(std::string_view text);

inline constexpr std::string_view kManifestFile = "manifest.json";

// Writes dir/manifest.json.
void write_manifest(const std::string& dir, const RunManifest& manifest);

// Current UTC time, ISO 8601.
std::string utc_timestamp();

}  // namespace geobias

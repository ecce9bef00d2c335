#include "geobias/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "geobias/errors.hpp"
#include "geobias/ingest.hpp"
#include "geobias/pipeline.hpp"

namespace geobias {

namespace {

const std::vector<std::string> kModels = {"boundary",         "boundary-nonzero", "centroid",
                                          "centroid-nonzero", "match",            "gt-count",
                                          "mm-count"};

ErrorMetric metric_from(const std::string& s) {
  return s == "centroid" ? ErrorMetric::centroid : ErrorMetric::boundary;
}

EngagementMetric engagement_from(const std::string& s) {
  if (s == "completions") return EngagementMetric::completions;
  if (s == "certifications") return EngagementMetric::certifications;
  return EngagementMetric::registrations;
}

EngagementTransform transform_from(const std::string& s) {
  if (s == "raw") return EngagementTransform::raw;
  if (s == "dichotomized") return EngagementTransform::dichotomized;
  return EngagementTransform::shifted_log;
}

struct Flags {
  std::string users, geoip, polygons, dci, registrations, out_dir, config, input_dir;
  std::string bins = "quintiles";
  std::string metric = "boundary";
  std::string psych_metric = "registrations";
  std::string transform = "shifted_log";
  std::string model = "boundary-nonzero";
  int factors = 1;
  int iterate = 0;
  double prophecy_items = 20.0;
  double ci_level = 0.95;
  bool skip_invalid = false;
};

LoadPolicy policy_of(const Flags& f) {
  return f.skip_invalid ? LoadPolicy::skip_invalid : LoadPolicy::strict;
}

void add_policy(CLI::App* app, Flags& f) {
  app->add_flag("--skip-invalid", f.skip_invalid, "Skip malformed rows instead of failing");
}

void add_out(CLI::App* app, Flags& f) {
  app->add_option("--out-dir", f.out_dir, "Output directory")->required();
}

void add_audit_inputs(CLI::App* app, Flags& f, bool required) {
  auto* u = app->add_option("--users", f.users, "Users CSV");
  auto* g = app->add_option("--geoip", f.geoip, "GeoIP blocks CSV");
  auto* p = app->add_option("--polygons", f.polygons, "ZCTA GeoJSON");
  auto* d = app->add_option("--dci", f.dci, "DCI metrics CSV");
  if (required) {
    for (auto* o : {u, g, p, d}) o->required();
  }
}

int dispatch(CLI::App& app, Flags& f) {
  const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
  if (!sub) {
    std::cerr << app.help();
    return 1;
  }
  const std::string name = sub->get_name();
  if (name == "dci") {
    DciStageOptions o;
    o.dci = f.dci;
    if (!f.polygons.empty()) o.polygons = f.polygons;
    o.out_dir = f.out_dir;
    o.policy = policy_of(f);
    run_dci_stage(o);
  } else if (name == "reconcile") {
    run_reconcile_stage({f.users, f.out_dir, policy_of(f)});
  } else if (name == "geolocate") {
    run_geolocate_stage({f.users, f.geoip, f.out_dir, policy_of(f)});
  } else if (name == "audit") {
    AuditStageOptions o;
    o.users = f.users;
    o.geoip = f.geoip;
    o.polygons = f.polygons;
    o.dci = f.dci;
    o.bins = f.bins;
    o.metric = metric_from(f.metric);
    o.out_dir = f.out_dir;
    o.policy = policy_of(f);
    run_audit_stage(o);
  } else if (name == "psych") {
    PsychStageOptions o;
    o.registrations = f.registrations;
    o.dci = f.dci;
    if (!f.polygons.empty()) o.polygons = f.polygons;
    o.metric = engagement_from(f.psych_metric);
    o.transform = transform_from(f.transform);
    o.factors = f.factors;
    o.iterate = f.iterate;
    o.prophecy_items = f.prophecy_items;
    o.out_dir = f.out_dir;
    o.policy = policy_of(f);
    run_psych_stage(o);
  } else if (name == "regress") {
    RegressStageOptions o;
    o.users = f.users;
    o.geoip = f.geoip;
    o.polygons = f.polygons;
    o.dci = f.dci;
    o.model = *parse_regression_model(f.model);
    o.ci_level = f.ci_level;
    o.out_dir = f.out_dir;
    o.policy = policy_of(f);
    run_regress_stage(o);
  } else if (name == "synth") {
    SynthStageOptions o;
    o.config = synth_config_from_json(read_input_file(f.config));
    o.config_path = f.config;
    o.out_dir = f.out_dir;
    run_synth_stage(o);
  } else if (name == "pipeline") {
    namespace fs = std::filesystem;
    auto pick = [&](const std::string& given, const char* file) {
      if (!given.empty() || f.input_dir.empty()) return given;
      return (fs::path(f.input_dir) / file).string();
    };
    PipelineOptions o;
    o.users = pick(f.users, SynthFiles::users);
    o.geoip = pick(f.geoip, SynthFiles::geoip);
    o.polygons = pick(f.polygons, SynthFiles::polygons);
    o.dci = pick(f.dci, SynthFiles::dci);
    o.registrations = pick(f.registrations, SynthFiles::registrations);
    o.bins = f.bins;
    o.metric = metric_from(f.metric);
    o.psych_metric = engagement_from(f.psych_metric);
    o.psych_transform = transform_from(f.transform);
    o.factors = f.factors;
    o.iterate = f.iterate;
    o.ci_level = f.ci_level;
    o.out_dir = f.out_dir;
    o.policy = policy_of(f);
    run_pipeline(o);
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Geolocation bias audit toolkit", "geobias"};
  app.set_version_flag("--version", GEOBIAS_VERSION);
  app.require_subcommand(1);
  Flags f;
  const auto bins = std::vector<std::string>{"deciles", "quintiles", "tiers", "subtiers"};
  const auto metrics = std::vector<std::string>{"boundary", "centroid"};
  const auto emetrics = std::vector<std::string>{"registrations", "completions", "certifications"};
  const auto transforms = std::vector<std::string>{"raw", "dichotomized", "shifted_log"};

  auto* dci = app.add_subcommand("dci", "Composite distress index");
  dci->require_subcommand(1);
  auto* build = dci->add_subcommand("build", "Score ZIPs from the seven metrics");
  build->add_option("--dci", f.dci, "DCI metrics CSV")->required();
  build->add_option("--polygons", f.polygons, "ZCTA GeoJSON for densities");
  add_out(build, f);
  add_policy(build, f);

  auto* rec = app.add_subcommand("reconcile", "Ground-truth ZIP per user");
  rec->add_option("--users", f.users, "Users CSV")->required();
  add_out(rec, f);
  add_policy(rec, f);

  auto* geo = app.add_subcommand("geolocate", "IP to ZIP lookup");
  geo->add_option("--users", f.users, "Users CSV")->required();
  geo->add_option("--geoip", f.geoip, "GeoIP blocks CSV")->required();
  add_out(geo, f);
  add_policy(geo, f);

  auto* audit = app.add_subcommand("audit", "Geolocation error and bias reports");
  add_audit_inputs(audit, f, true);
  audit->add_option("--bins", f.bins, "Binning")->check(CLI::IsMember(bins));
  audit->add_option("--metric", f.metric, "Error metric")->check(CLI::IsMember(metrics));
  add_out(audit, f);
  add_policy(audit, f);

  auto* psych = app.add_subcommand("psych", "ZIP by course factor analysis");
  psych->add_option("--registrations", f.registrations, "Registrations CSV")->required();
  psych->add_option("--dci", f.dci, "DCI metrics CSV")->required();
  psych->add_option("--polygons", f.polygons, "ZCTA GeoJSON");
  psych->add_option("--metric", f.psych_metric, "Engagement metric")->check(CLI::IsMember(emetrics));
  psych->add_option("--transform", f.transform, "Score transform")->check(CLI::IsMember(transforms));
  psych->add_option("--factors", f.factors, "Factors to extract")->check(CLI::PositiveNumber);
  psych->add_option("--iterate", f.iterate, "Communality iterations")->check(CLI::NonNegativeNumber);
  psych->add_option("--prophecy-items", f.prophecy_items, "Spearman-Brown target length")
      ->check(CLI::PositiveNumber);
  add_out(psych, f);
  add_policy(psych, f);

  auto* reg = app.add_subcommand("regress", "OLS models of error, match and counts");
  add_audit_inputs(reg, f, true);
  reg->add_option("--model", f.model, "Model")->required()->check(CLI::IsMember(kModels));
  reg->add_option("--ci-level", f.ci_level, "Confidence level")->check(CLI::Range(0.5, 0.9999));
  add_out(reg, f);
  add_policy(reg, f);

  auto* syn = app.add_subcommand("synth", "Synthetic world with planted bias");
  syn->add_option("--config", f.config, "Config JSON")->required();
  add_out(syn, f);

  auto* pipe = app.add_subcommand("pipeline", "All stages end to end");
  pipe->add_option("--input-dir", f.input_dir, "Directory with synth-named input files");
  add_audit_inputs(pipe, f, false);
  pipe->add_option("--registrations", f.registrations, "Registrations CSV");
  pipe->add_option("--bins", f.bins, "Binning")->check(CLI::IsMember(bins));
  pipe->add_option("--metric", f.metric, "Error metric")->check(CLI::IsMember(metrics));
  pipe->add_option("--psych-metric", f.psych_metric, "Engagement metric")
      ->check(CLI::IsMember(emetrics));
  pipe->add_option("--transform", f.transform, "Score transform")->check(CLI::IsMember(transforms));
  pipe->add_option("--factors", f.factors, "Factors to extract")->check(CLI::PositiveNumber);
  pipe->add_option("--iterate", f.iterate, "Communality iterations")->check(CLI::NonNegativeNumber);
  pipe->add_option("--ci-level", f.ci_level, "Confidence level")->check(CLI::Range(0.5, 0.9999));
  add_out(pipe, f);
  add_policy(pipe, f);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << GEOBIAS_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return dispatch(app, f);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace geobias

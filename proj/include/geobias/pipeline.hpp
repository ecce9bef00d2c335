#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geobias/audit.hpp"
#include "geobias/dci.hpp"
#include "geobias/geolocate.hpp"
#include "geobias/ingest.hpp"
#include "geobias/manifest.hpp"
#include "geobias/psychometrics.hpp"
#include "geobias/regression.hpp"
#include "geobias/synth.hpp"

namespace geobias {

// Stage runners behind the CLI subcommands. Each one reads its inputs,
// writes its report files into out_dir (created if needed) together with a
// manifest.json, and returns that manifest. threads = 0 means
// worker_threads().

struct DciStageOptions {
  std::string dci;
  std::optional<std::string> polygons;
  std::string out_dir;
  LoadPolicy policy = LoadPolicy::strict;
};
RunManifest run_dci_stage(const DciStageOptions& options, unsigned threads = 0);

struct ReconcileStageOptions {
  std::string users;
  std::string out_dir;
  LoadPolicy policy = LoadPolicy::strict;
};
RunManifest run_reconcile_stage(const ReconcileStageOptions& options, unsigned threads = 0);

struct GeolocateStageOptions {
  std::string users;
  std::string geoip;
  std::string out_dir;
  LoadPolicy policy = LoadPolicy::strict;
};
RunManifest run_geolocate_stage(const GeolocateStageOptions& options, unsigned threads = 0);

// --bins: deciles, quintiles, tiers or subtiers.
//   deciles   population / area / density deciles, DCI sub-tiers
//   quintiles population / area / density quintiles, DCI tiers
//   tiers     DCI tiers
//   subtiers  DCI sub-tiers
std::optional<std::vector<std::pair<ZipProperty, BinScheme>>> parse_bins_flag(
    const std::string& text);

struct AuditStageOptions {
  std::string users;
  std::string geoip;
  std::string polygons;
  std::string dci;
  std::string bins = "quintiles";
  ErrorMetric metric = ErrorMetric::boundary;
  std::string out_dir;
  LoadPolicy policy = LoadPolicy::strict;
};
RunManifest run_audit_stage(const AuditStageOptions& options, unsigned threads = 0);

struct PsychStageOptions {
  std::string registrations;
  std::string dci;
  std::optional<std::string> polygons;
  EngagementMetric metric = EngagementMetric::registrations;
  EngagementTransform transform = EngagementTransform::shifted_log;
  int factors = 1;
  int iterate = 0;
  double prophecy_items = 20.0;
  std::string out_dir;
  LoadPolicy policy = LoadPolicy::strict;
};
RunManifest run_psych_stage(const PsychStageOptions& options, unsigned threads = 0);

struct RegressStageOptions {
  std::string users;
  std::string geoip;
  std::string polygons;
  std::string dci;
  RegressionModel model = RegressionModel::boundary_nonzero;
  double ci_level = 0.95;
  std::string out_dir;
  LoadPolicy policy = LoadPolicy::strict;
};
RunManifest run_regress_stage(const RegressStageOptions& options, unsigned threads = 0);

struct SynthStageOptions {
  SynthConfig config;
  std::optional<std::string> config_path;  // digested into the manifest
  std::string out_dir;
};
RunManifest run_synth_stage(const SynthStageOptions& options, unsigned threads = 0);

// File names written by synth and looked up by pipeline --input-dir.
struct SynthFiles {
  static constexpr const char* polygons = "zip_polygons.geojson";
  static constexpr const char* dci = "dci_metrics.csv";
  static constexpr const char* geoip = "geoip_blocks.csv";
  static constexpr const char* users = "users.csv";
  static constexpr const char* registrations = "registrations.csv";
  static constexpr const char* truth = "truth.csv";
  static constexpr const char* config = "config.json";
};

struct PipelineOptions {
  std::string users;
  std::string geoip;
  std::string polygons;
  std::string dci;
  std::string registrations;
  std::string bins = "quintiles";
  ErrorMetric metric = ErrorMetric::boundary;
  EngagementMetric psych_metric = EngagementMetric::registrations;
  EngagementTransform psych_transform = EngagementTransform::shifted_log;
  int factors = 1;
  int iterate = 0;
  double ci_level = 0.95;
  std::string out_dir;
  LoadPolicy policy = LoadPolicy::strict;
};

// Runs dci, reconcile, geolocate, audit, psych and every regression model
// into subdirectories of out_dir (regress/<model>), then writes a top-level
// manifest listing every stage's data files.
RunManifest run_pipeline(const PipelineOptions& options, unsigned threads = 0);

// ---------------------------------------------------------------------------
// Shared audit plumbing
// ---------------------------------------------------------------------------

struct AuditInputs {
  std::vector<UserInputRow> users;
  GeoIpIndex index;
  std::map<ZipCode, ZipPolygon> polygons;
  DciTable dci;
};

struct AuditRun {
  std::vector<UserAudit> audits;  // input order
  std::map<std::string, std::uint64_t> counts;
};

AuditRun compute_audits(const AuditInputs& inputs, unsigned threads = 0);

}  // namespace geobias

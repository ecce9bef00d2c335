#include "geobias/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>

#include "geobias/csv.hpp"
#include "geobias/errors.hpp"
#include "geobias/parallel.hpp"
#include "geobias/reconcile.hpp"

namespace geobias {

namespace fs = std::filesystem;
using csv::format_double;
using csv::format_optional;
using csv::write_record;

namespace {

class StageRecorder {
 public:
  StageRecorder(std::string subcommand, std::string out_dir, unsigned threads)
      : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
    if (out_dir_.empty()) throw InputError("an output directory is required");
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec || !fs::is_directory(out_dir_)) {
      throw InputError("cannot create output directory '" + out_dir_ + "'");
    }
    manifest_.subcommand = std::move(subcommand);
    manifest_.runtime.started_utc = utc_timestamp();
    manifest_.runtime.threads = threads;
  }

  RunManifest& manifest() { return manifest_; }
  const std::string& dir() const { return out_dir_; }

  std::string input(const std::string& role, const std::string& path) {
    if (path.empty()) throw InputError("missing --" + role);
    std::string bytes = read_input_file(path);
    manifest_.add_input(role, path, bytes);
    return bytes;
  }

  void count(const std::string& key, std::uint64_t value) { manifest_.counts[key] = value; }

  void report(const std::string& prefix, const LoadReport& r) {
    count(prefix + ".rows_in", r.total_rows);
    count(prefix + ".rows_accepted", r.accepted);
    count(prefix + ".rows_invalid", r.errors.size());
  }

  void file(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const auto path = fs::path(out_dir_) / name;
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw InputError("cannot write '" + path.string() + "'");
      body(out);
      if (!out) throw InputError("write failed for '" + path.string() + "'");
    }
    manifest_.add_output(out_dir_, name);
  }

  RunManifest finish() {
    manifest_.runtime.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_manifest(out_dir_, manifest_);
    return manifest_;
  }

 private:
  std::string out_dir_;
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
};

unsigned resolve_threads(unsigned threads) { return threads ? threads : worker_threads(); }

std::string policy_name(LoadPolicy p) { return p == LoadPolicy::strict ? "strict" : "skip_invalid"; }

std::string int_str(long long v) { return std::to_string(v); }

DciTable load_dci_table(StageRecorder& rec, const std::string& path, LoadPolicy policy,
                        const std::map<ZipCode, ZipPolygon>* polygons) {
  auto loaded = load_dci_csv(rec.input("dci", path), policy);
  rec.report("dci", loaded.report);
  DciTable table = composite_dci(loaded.rows);
  if (polygons) attach_density(table, *polygons);
  return table;
}

std::map<ZipCode, ZipPolygon> load_polygons(StageRecorder& rec, const std::string& path) {
  auto polygons = load_zip_polygons(rec.input("polygons", path));
  rec.count("polygons.features", polygons.size());
  return polygons;
}

std::vector<UserInputRow> load_users(StageRecorder& rec, const std::string& path,
                                     LoadPolicy policy) {
  auto loaded = load_users_csv(rec.input("users", path), policy);
  rec.report("users", loaded.report);
  return std::move(loaded.rows);
}

GeoIpIndex load_index(StageRecorder& rec, const std::string& path, LoadPolicy policy) {
  auto loaded = load_geoip_csv(rec.input("geoip", path), policy);
  rec.report("geoip", loaded.report);
  GeoIpIndex index = build_index(loaded.rows);
  rec.count("geoip.host_bits_masked", index.warnings().size());
  return index;
}

AuditInputs load_audit_inputs(StageRecorder& rec, const std::string& users,
                              const std::string& geoip, const std::string& polygons,
                              const std::string& dci, LoadPolicy policy) {
  AuditInputs in;
  in.users = load_users(rec, users, policy);
  in.index = load_index(rec, geoip, policy);
  in.polygons = load_polygons(rec, polygons);
  in.dci = load_dci_table(rec, dci, policy, &in.polygons);
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// audit plumbing
// ---------------------------------------------------------------------------

AuditRun compute_audits(const AuditInputs& inputs, unsigned threads) {
  struct Slot {
    ReconcileOutcome outcome;
    bool located = false;
    std::optional<AuditResult> result;
  };
  std::vector<Slot> slots(inputs.users.size());
  parallel_for(
      inputs.users.size(),
      [&](std::size_t i) {
        const UserInputRow& u = inputs.users[i];
        Slot& s = slots[i];
        s.outcome = reconcile_row(u);
        if (!s.outcome.truth) return;
        const auto mm = lookup(inputs.index, u.modal_ip);
        if (!mm) return;
        s.located = true;
        s.result = audit_user(u.user_id, *s.outcome.truth, mm->zip, inputs.polygons, inputs.dci);
      },
      threads);

  AuditRun run;
  auto& c = run.counts;
  c["users"] = inputs.users.size();
  for (auto e : {ReconcileExclusion::confidently_outside_us, ReconcileExclusion::no_zip}) {
    c["excluded." + std::string(to_string(e))] = 0;
  }
  c["excluded.no_geoip_zip"] = 0;
  for (auto e : {AuditExclusion::gt_zip_no_polygon, AuditExclusion::gt_zip_no_dci,
                 AuditExclusion::mm_zip_no_polygon, AuditExclusion::mm_zip_no_dci}) {
    c["excluded." + std::string(to_string(e))] = 0;
  }
  for (auto r : {ReconcileRule::agree, ReconcileRule::parsed_only, ReconcileRule::geocode_only,
                 ReconcileRule::disagree}) {
    c["audited.rule." + std::string(to_string(r))] = 0;
  }
  std::uint64_t exact = 0, with_boundary = 0, outside = 0;
  for (auto& s : slots) {
    if (!s.outcome.truth) {
      ++c["excluded." + std::string(to_string(*s.outcome.excluded))];
    } else if (!s.located) {
      ++c["excluded.no_geoip_zip"];
    } else if (const auto* ex = std::get_if<AuditExclusion>(&*s.result)) {
      ++c["excluded." + std::string(to_string(*ex))];
    } else {
      UserAudit& a = std::get<UserAudit>(*s.result);
      ++c["audited.rule." + std::string(to_string(a.rule))];
      if (a.exact_match) ++exact;
      if (a.boundary_distance) ++with_boundary;
      if (a.coords_outside_gt_zip) ++outside;
      run.audits.push_back(std::move(a));
    }
  }
  c["audited"] = run.audits.size();
  c["audited.exact_match"] = exact;
  c["audited.with_boundary_error"] = with_boundary;
  c["audited.coords_outside_gt_zip"] = outside;
  return run;
}

std::optional<std::vector<std::pair<ZipProperty, BinScheme>>> parse_bins_flag(
    const std::string& text) {
  using P = ZipProperty;
  using S = BinScheme;
  if (text == "deciles") {
    return std::vector<std::pair<P, S>>{
        {P::population, S::deciles}, {P::area, S::deciles}, {P::density, S::deciles},
        {P::dci, S::sub_tiers}};
  }
  if (text == "quintiles") {
    return std::vector<std::pair<P, S>>{
        {P::population, S::quintiles}, {P::area, S::quintiles}, {P::density, S::quintiles},
        {P::dci, S::tiers}};
  }
  if (text == "tiers") return std::vector<std::pair<P, S>>{{P::dci, S::tiers}};
  if (text == "subtiers") return std::vector<std::pair<P, S>>{{P::dci, S::sub_tiers}};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// dci / reconcile / geolocate
// ---------------------------------------------------------------------------

RunManifest run_dci_stage(const DciStageOptions& o, unsigned threads) {
  StageRecorder rec("dci build", o.out_dir, resolve_threads(threads));
  rec.manifest().flags = {{"dci", o.dci},
                          {"polygons", o.polygons.value_or("")},
                          {"policy", policy_name(o.policy)}};
  std::map<ZipCode, ZipPolygon> polygons;
  if (o.polygons) polygons = load_polygons(rec, *o.polygons);
  const DciTable table = load_dci_table(rec, o.dci, o.policy, o.polygons ? &polygons : nullptr);
  std::size_t with_density = 0;
  rec.file("dci_scores.csv", [&](std::ostream& os) {
    write_record(os, {"zip", "dci", "tier", "sub_tier", "population", "density"});
    for (const auto& [zip, s] : table) {
      if (s.density) ++with_density;
      write_record(os, {zip, format_double(s.dci), std::string(to_string(s.tier)),
                        int_str(s.sub_tier), int_str(s.population), format_optional(s.density)});
    }
  });
  rec.count("zips_out", table.size());
  rec.count("zips_without_polygon", table.size() - with_density);
  return rec.finish();
}

RunManifest run_reconcile_stage(const ReconcileStageOptions& o, unsigned threads) {
  threads = resolve_threads(threads);
  StageRecorder rec("reconcile", o.out_dir, threads);
  rec.manifest().flags = {{"users", o.users}, {"policy", policy_name(o.policy)}};
  const auto users = load_users(rec, o.users, o.policy);
  std::vector<ReconcileOutcome> outcomes(users.size());
  parallel_for(users.size(), [&](std::size_t i) { outcomes[i] = reconcile_row(users[i]); }, threads);
  rec.file("ground_truth.csv", [&](std::ostream& os) {
    write_record(os, {"user_id", "gt_zip", "gt_lat", "gt_lon", "rule"});
    for (std::size_t i = 0; i < users.size(); ++i) {
      const auto& t = outcomes[i].truth;
      if (!t) continue;
      write_record(os, {users[i].user_id, t->zip,
                        t->coords ? format_double(t->coords->lat) : "",
                        t->coords ? format_double(t->coords->lon) : "",
                        std::string(to_string(t->rule))});
    }
  });
  const ReconcileSummary s = summarize(outcomes);
  rec.file("reconcile_summary.csv", [&](std::ostream& os) {
    write_record(os, {"category", "kind", "users", "pct_of_users"});
    auto row = [&](const std::string& name, const char* kind, std::size_t n) {
      const double pct = s.total ? 100.0 * static_cast<double>(n) / static_cast<double>(s.total) : 0.0;
      write_record(os, {name, kind, std::to_string(n), format_double(pct)});
    };
    for (auto r : {ReconcileRule::agree, ReconcileRule::parsed_only, ReconcileRule::geocode_only,
                   ReconcileRule::disagree}) {
      row(std::string(to_string(r)), "rule", s.by_rule[static_cast<std::size_t>(r)]);
    }
    for (auto e : {ReconcileExclusion::confidently_outside_us, ReconcileExclusion::no_zip}) {
      row(std::string(to_string(e)), "excluded", s.by_exclusion[static_cast<std::size_t>(e)]);
    }
    row("with_coords", "coords", s.with_coords);
  });
  rec.count("users_in", s.total);
  std::size_t kept = 0;
  for (auto n : s.by_rule) kept += n;
  rec.count("ground_truth_out", kept);
  rec.count("excluded.confidently_outside_us", s.by_exclusion[0]);
  rec.count("excluded.no_zip", s.by_exclusion[1]);
  return rec.finish();
}

RunManifest run_geolocate_stage(const GeolocateStageOptions& o, unsigned threads) {
  StageRecorder rec("geolocate", o.out_dir, resolve_threads(threads));
  rec.manifest().flags = {{"users", o.users}, {"geoip", o.geoip}, {"policy", policy_name(o.policy)}};
  const auto users = load_users(rec, o.users, o.policy);
  const GeoIpIndex index = load_index(rec, o.geoip, o.policy);
  std::size_t located = 0, no_block = 0, no_zip = 0;
  rec.file("geolocated.csv", [&](std::ostream& os) {
    write_record(os, {"user_id", "ip", "network", "mm_zip", "mm_lat", "mm_lon", "status"});
    for (const auto& u : users) {
      const GeoIpBlock* b = index.find(u.modal_ip);
      std::string status = "ok";
      if (!b) {
        status = "no_block";
        ++no_block;
      } else if (b->zip.empty()) {
        status = "no_zip";
        ++no_zip;
      } else {
        ++located;
      }
      write_record(os, {u.user_id, format_ipv4(u.modal_ip), b ? b->network : "",
                        b ? b->zip : "", b && b->point ? format_double(b->point->lat) : "",
                        b && b->point ? format_double(b->point->lon) : "", status});
    }
  });
  rec.count("users_in", users.size());
  rec.count("located", located);
  rec.count("excluded.no_block", no_block);
  rec.count("excluded.block_without_zip", no_zip);
  return rec.finish();
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

RunManifest run_audit_stage(const AuditStageOptions& o, unsigned threads) {
  threads = resolve_threads(threads);
  const auto bins = parse_bins_flag(o.bins);
  if (!bins) throw InputError("unknown --bins '" + o.bins + "'");
  StageRecorder rec("audit", o.out_dir, threads);
  rec.manifest().flags = {{"users", o.users},       {"geoip", o.geoip},
                          {"polygons", o.polygons}, {"dci", o.dci},
                          {"bins", o.bins},         {"metric", std::string(to_string(o.metric))},
                          {"policy", policy_name(o.policy)}};
  const AuditInputs inputs =
      load_audit_inputs(rec, o.users, o.geoip, o.polygons, o.dci, o.policy);
  AuditRun run = compute_audits(inputs, threads);
  for (const auto& [k, v] : run.counts) rec.count(k, v);
  const std::span<const UserAudit> audits(run.audits);

  rec.file("audit_users.csv", [&](std::ostream& os) {
    write_record(os, {"user_id", "gt_zip", "mm_zip", "rule", "exact_match", "boundary_deg",
                      "boundary_miles", "centroid_miles", "gt_dci", "gt_tier", "mm_dci",
                      "mm_tier", "coords_outside_gt_zip"});
    for (const auto& a : audits) {
      write_record(os, {a.user_id, a.gt_zip, a.mm_zip, std::string(to_string(a.rule)),
                        a.exact_match ? "1" : "0", format_optional(a.boundary_distance),
                        format_optional(error_of(a, ErrorMetric::boundary)),
                        format_optional(a.centroid_distance), format_double(a.gt_props.dci),
                        std::string(to_string(a.gt_props.tier)), format_double(a.mm_props.dci),
                        std::string(to_string(a.mm_props.tier)),
                        a.coords_outside_gt_zip ? "1" : "0"});
    }
  });

  // bin edges come from the ZIPs the audited users touch
  std::map<ZipCode, ZipProps> zips;
  for (const auto& a : audits) {
    zips.emplace(a.gt_zip, a.gt_props);
    zips.emplace(a.mm_zip, a.mm_props);
  }
  std::vector<BinSpec> specs;
  for (const auto& [property, scheme] : *bins) {
    std::vector<double> values;
    for (const auto& [zip, p] : zips) values.push_back(value_of(p, property));
    const std::string key = std::string(to_string(property)) + "." + std::string(to_string(scheme));
    try {
      specs.push_back(make_bin_edges(values, property, scheme));
      rec.count("bins." + key, specs.back().bin_count());
    } catch (const InputError&) {
      rec.count("bins_skipped." + key, 1);
    }
  }

  const auto probs = default_quantile_probs();
  std::size_t skipped = 0;
  rec.file("bin_summary.csv", [&](std::ostream& os) {
    write_record(os, {"property", "scheme", "bin", "upper_bound", "n_users", "pct_exact_match",
                      "n_positive_errors", "geo_mean_error", "geo_sd_error"});
    for (const auto& spec : specs) {
      for (const auto& b : summarize_bins(audits, spec, o.metric, &skipped)) {
        write_record(os, {std::string(to_string(spec.property())),
                          std::string(to_string(spec.scheme())), std::to_string(b.bin + 1),
                          format_double(b.upper_bound), std::to_string(b.n_users),
                          format_optional(b.pct_exact_match), std::to_string(b.n_positive_errors),
                          format_optional(b.geo_mean_error), format_optional(b.geo_sd_error)});
      }
    }
  });
  rec.count("users_without_error", skipped);

  rec.file("quantiles.csv", [&](std::ostream& os) {
    csv::Record header{"property", "scheme", "bin", "upper_bound", "n_users"};
    for (double p : probs) header.push_back("q" + std::to_string(static_cast<int>(std::lround(p * 100))));
    write_record(os, header);
    for (const auto& spec : specs) {
      for (const auto& q : error_quantiles(audits, spec, o.metric, probs)) {
        csv::Record r{std::string(to_string(spec.property())),
                      std::string(to_string(spec.scheme())), std::to_string(q.bin + 1),
                      format_double(q.upper_bound), std::to_string(q.n_users)};
        for (double v : q.values) r.push_back(format_double(v));
        write_record(os, r);
      }
    }
  });

  for (auto norm : {Normalization::none, Normalization::row}) {
    const char* name = norm == Normalization::none ? "transition_counts.csv" : "transition_rownorm.csv";
    rec.file(name, [&](std::ostream& os) {
      write_record(os, {"property", "scheme", "gt_bin", "gt_upper_bound", "mm_bin",
                        "mm_upper_bound", norm == Normalization::none ? "users" : "fraction"});
      for (const auto& spec : specs) {
        const TransitionMatrix m = transition_matrix(audits, spec, norm);
        for (std::size_t i = 0; i < m.cells.size(); ++i) {
          for (std::size_t j = 0; j < m.cells[i].size(); ++j) {
            write_record(os, {std::string(to_string(spec.property())),
                              std::string(to_string(spec.scheme())), std::to_string(i + 1),
                              format_double(m.upper_bounds[i]), std::to_string(j + 1),
                              format_double(m.upper_bounds[j]), format_double(m.cells[i][j])});
          }
        }
      }
    });
  }

  rec.file("dci_difference.csv", [&](std::ostream& os) {
    write_record(os, {"gt_tier", "n_users", "median_abs_diff", "rms_diff"});
    for (const auto& r : dci_difference_stats(audits)) {
      write_record(os, {std::string(to_string(r.tier)), std::to_string(r.n_users),
                        format_double(r.median_abs_diff), format_double(r.rms_diff)});
    }
  });

  std::map<ZipCode, std::size_t> gt_counts, mm_counts;
  for (const auto& a : audits) {
    ++gt_counts[a.gt_zip];
    ++mm_counts[a.mm_zip];
  }
  const PerCapitaReport pc = per_capita_by_tier(gt_counts, mm_counts, inputs.dci);
  rec.file("tier_rates.csv", [&](std::ostream& os) {
    write_record(os, {"level_type", "level", "label", "population", "gt_users", "mm_users",
                      "gt_per_100k", "mm_per_100k"});
    for (const auto& l : pc.tiers) {
      write_record(os, {"tier", std::to_string(l.level + 1),
                        std::string(to_string(static_cast<Tier>(l.level))),
                        format_double(l.population), std::to_string(l.gt_users),
                        std::to_string(l.mm_users), format_double(l.gt_per_100k),
                        format_double(l.mm_per_100k)});
    }
    for (const auto& l : pc.sub_tiers) {
      write_record(os, {"sub_tier", std::to_string(l.level), std::to_string(l.level * 10),
                        format_double(l.population), std::to_string(l.gt_users),
                        std::to_string(l.mm_users), format_double(l.gt_per_100k),
                        format_double(l.mm_per_100k)});
    }
  });
  rec.file("gap_summary.csv", [&](std::ostream& os) {
    write_record(os, {"definition", "gt_gap", "mm_gap", "relative_change"});
    write_record(os, {"ratio", format_optional(pc.gap.gt_ratio), format_optional(pc.gap.mm_ratio),
                      format_optional(pc.gap.ratio_change)});
    write_record(os, {"difference", format_optional(pc.gap.gt_difference),
                      format_optional(pc.gap.mm_difference),
                      format_optional(pc.gap.difference_change)});
  });
  return rec.finish();
}

// ---------------------------------------------------------------------------
// psych
// ---------------------------------------------------------------------------

RunManifest run_psych_stage(const PsychStageOptions& o, unsigned threads) {
  StageRecorder rec("psych", o.out_dir, resolve_threads(threads));
  rec.manifest().flags = {{"registrations", o.registrations},
                          {"dci", o.dci},
                          {"polygons", o.polygons.value_or("")},
                          {"metric", std::string(to_string(o.metric))},
                          {"transform", std::string(to_string(o.transform))},
                          {"factors", std::to_string(o.factors)},
                          {"iterate", std::to_string(o.iterate)},
                          {"prophecy_items", format_double(o.prophecy_items)},
                          {"policy", policy_name(o.policy)}};
  if (o.factors < 1) throw InputError("--factors must be >= 1");
  if (o.iterate < 0) throw InputError("--iterate must be >= 0");
  auto regs = load_registrations_csv(rec.input("registrations", o.registrations), o.policy);
  rec.report("registrations", regs.report);
  std::map<ZipCode, ZipPolygon> polygons;
  if (o.polygons) polygons = load_polygons(rec, *o.polygons);
  const DciTable dci = load_dci_table(rec, o.dci, o.policy, o.polygons ? &polygons : nullptr);

  MatrixBuildReport br;
  const EngagementMatrix raw = build_matrix(regs.rows, dci, o.metric, &br);
  rec.count("registrations.staff", br.staff_rows);
  rec.count("registrations.no_zip", br.no_zip_rows);
  rec.count("registrations.zip_without_dci", br.zip_without_dci_rows);
  rec.count("registrations.used", br.used_rows);
  rec.count("matrix.zips", raw.zips.size());
  rec.count("matrix.courses", raw.courses.size());
  const EngagementMatrix m =
      o.transform == EngagementTransform::raw ? raw : transform(raw, o.transform);

  const FactorSolution fs = principal_factors(m.values, o.factors, o.iterate);
  rec.count("items.retained", fs.retained_items.size());
  rec.count("items.dropped_zero_variance", fs.dropped_items.size());

  Eigen::MatrixXd retained(m.values.rows(), static_cast<Eigen::Index>(fs.retained_items.size()));
  for (std::size_t j = 0; j < fs.retained_items.size(); ++j) {
    retained.col(static_cast<Eigen::Index>(j)) = m.values.col(static_cast<Eigen::Index>(fs.retained_items[j]));
  }
  const double alpha = cronbach_alpha(retained);
  const double p_items = static_cast<double>(fs.retained_items.size());
  const double prophecy = spearman_brown(alpha, p_items, o.prophecy_items);
  const auto item_r = item_test_correlations(retained);

  rec.file("scree.csv", [&](std::ostream& os) {
    write_record(os, {"index", "eigenvalue"});
    for (Eigen::Index i = 0; i < fs.eigenvalues.size(); ++i) {
      write_record(os, {std::to_string(i + 1), format_double(fs.eigenvalues(i))});
    }
  });
  const Eigen::MatrixXd raw_loadings = fs.raw_loadings();
  rec.file("loadings.csv", [&](std::ostream& os) {
    csv::Record header{"course", "item_mean", "item_sd"};
    for (int k = 1; k <= fs.n_factors; ++k) header.push_back("loading_" + std::to_string(k));
    for (int k = 1; k <= fs.n_factors; ++k) header.push_back("raw_loading_" + std::to_string(k));
    for (const char* h : {"communality", "uniqueness", "item_test_r"}) header.push_back(h);
    write_record(os, header);
    for (std::size_t j = 0; j < fs.retained_items.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      csv::Record r{m.courses[fs.retained_items[j]], format_double(fs.item_means(jj)),
                    format_double(fs.item_sds(jj))};
      for (int k = 0; k < fs.n_factors; ++k) r.push_back(format_double(fs.loadings(jj, k)));
      for (int k = 0; k < fs.n_factors; ++k) r.push_back(format_double(raw_loadings(jj, k)));
      r.push_back(format_double(fs.communalities(jj)));
      r.push_back(format_double(fs.uniqueness(jj)));
      r.push_back(format_optional(item_r[j]));
      write_record(os, r);
    }
  });
  const ShiftedLog slog = shifted_log(fs.scores.col(0), std::nullopt);
  rec.file("scores.csv", [&](std::ostream& os) {
    csv::Record header{"zip"};
    for (int k = 1; k <= fs.n_factors; ++k) header.push_back("score_" + std::to_string(k));
    header.push_back("ln_shifted_score_1");
    write_record(os, header);
    for (std::size_t i = 0; i < m.zips.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      csv::Record r{m.zips[i]};
      for (int k = 0; k < fs.n_factors; ++k) r.push_back(format_double(fs.scores(ii, k)));
      r.push_back(format_double(slog.values[i]));
      write_record(os, r);
    }
  });
  rec.file("reliability.json", [&](std::ostream& os) {
    nlohmann::ordered_json j;
    j["metric"] = std::string(to_string(o.metric));
    j["transform"] = std::string(to_string(o.transform));
    j["n_zips"] = m.zips.size();
    j["n_items"] = fs.retained_items.size();
    j["cronbach_alpha"] = alpha;
    j["prophecy_items"] = o.prophecy_items;
    j["spearman_brown"] = prophecy;
    j["first_eigenvalue"] = fs.eigenvalues.size() ? fs.eigenvalues(0) : 0.0;
    j["variance_explained_first"] = fs.variance_explained_first;
    j["variance_explained_first_over_items"] = fs.variance_explained_first_over_items;
    j["smc_used"] = fs.smc_used;
    j["iterations"] = fs.iterations;
    j["score_log_shift"] = slog.shift;
    os << j.dump(2) << "\n";
  });

  std::vector<Series> series;
  auto add = [&](std::string name, SeriesTransform t, auto&& value) {
    Series s;
    s.name = std::move(name);
    s.transform = t;
    for (std::size_t i = 0; i < m.zips.size(); ++i) s.values.push_back(value(i));
    series.push_back(std::move(s));
  };
  add("factor_1_score", SeriesTransform::identity,
      [&](std::size_t i) -> std::optional<double> { return fs.scores(static_cast<Eigen::Index>(i), 0); });
  add("factor_1_ln_shifted", SeriesTransform::identity,
      [&](std::size_t i) -> std::optional<double> { return slog.values[i]; });
  add("per_capita_total", SeriesTransform::log_plus_1, [&](std::size_t i) -> std::optional<double> {
    return raw.values.row(static_cast<Eigen::Index>(i)).sum();
  });
  add("dci", SeriesTransform::identity,
      [&](std::size_t i) -> std::optional<double> { return dci.at(m.zips[i]).dci; });
  add("population", SeriesTransform::log, [&](std::size_t i) -> std::optional<double> {
    return static_cast<double>(dci.at(m.zips[i]).population);
  });
  if (o.polygons) {
    add("density", SeriesTransform::log,
        [&](std::size_t i) -> std::optional<double> { return dci.at(m.zips[i]).density; });
    add("area", SeriesTransform::log, [&](std::size_t i) -> std::optional<double> {
      const auto it = polygons.find(m.zips[i]);
      if (it == polygons.end()) return std::nullopt;
      return it->second.total_area();
    });
  }
  const CorrelationTable ct = correlate(series);
  rec.file("correlations.csv", [&](std::ostream& os) {
    write_record(os, {"row", "row_transform", "col", "col_transform", "r", "n", "flagged"});
    for (std::size_t i = 0; i < ct.names.size(); ++i) {
      for (std::size_t j = 0; j < ct.names.size(); ++j) {
        write_record(os, {ct.names[i], std::string(to_string(series[i].transform)), ct.names[j],
                          std::string(to_string(series[j].transform)), format_optional(ct.r[i][j]),
                          std::to_string(ct.n[i][j]), ct.flagged(i, j) ? "1" : "0"});
      }
    }
  });
  return rec.finish();
}

// ---------------------------------------------------------------------------
// regress
// ---------------------------------------------------------------------------

RunManifest run_regress_stage(const RegressStageOptions& o, unsigned threads) {
  threads = resolve_threads(threads);
  StageRecorder rec("regress", o.out_dir, threads);
  rec.manifest().flags = {{"users", o.users},       {"geoip", o.geoip},
                          {"polygons", o.polygons}, {"dci", o.dci},
                          {"model", std::string(to_string(o.model))},
                          {"ci_level", format_double(o.ci_level)},
                          {"policy", policy_name(o.policy)}};
  const AuditInputs inputs =
      load_audit_inputs(rec, o.users, o.geoip, o.polygons, o.dci, o.policy);
  const AuditRun run = compute_audits(inputs, threads);
  for (const auto& [k, v] : run.counts) rec.count(k, v);
  const RegressionData data = prepare_regression_vars(run.audits, o.model);
  rec.count("regression.rows", static_cast<std::uint64_t>(data.y.size()));
  rec.count("regression.dropped_rows", data.dropped_rows);
  const auto fits = nested_fits(data, o.ci_level);

  const std::string model = std::string(to_string(o.model));
  rec.file("regression_" + model + ".csv", [&](std::ostream& os) {
    write_record(os, {"model", "target", "spec", "term", "coef", "std_err", "t", "p", "ci_low",
                      "ci_high", "n", "dof", "r_squared", "degenerate_fit"});
    for (std::size_t s = 0; s < fits.size(); ++s) {
      const OlsFit& f = fits[s];
      for (const auto& c : f.coefficients) {
        write_record(os, {model, data.target_name, std::to_string(s + 1), c.name,
                          format_double(c.coef), format_double(c.std_err), format_optional(c.t),
                          format_optional(c.p), format_double(c.ci_low), format_double(c.ci_high),
                          std::to_string(f.n), std::to_string(f.dof), format_double(f.r_squared),
                          f.degenerate_fit ? "1" : "0"});
      }
    }
  });
  rec.file("interpretation.txt", [&](std::ostream& os) {
    const OlsFit& full = fits.back();
    os << "model " << model << ", target " << data.target_name << ", n = " << full.n << "\n";
    for (const auto& it : semielasticity_report(full, data)) {
      os << it.regressor << " [" << it.kind << "]: " << it.text << "\n";
    }
  });
  return rec.finish();
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

RunManifest run_synth_stage(const SynthStageOptions& o, unsigned threads) {
  threads = resolve_threads(threads);
  StageRecorder rec("synth", o.out_dir, threads);
  if (o.config_path) {
    rec.manifest().flags["config"] = *o.config_path;
    rec.input("config", *o.config_path);
  }
  rec.manifest().seed = o.config.seed;
  rec.manifest().generator = std::string(kSynthGenerator);
  const SynthWorld world = generate_world(o.config);
  const SynthUsers users = generate_users(world, threads);
  rec.file(SynthFiles::config, [&](std::ostream& os) { os << synth_config_to_json(o.config) << "\n"; });
  rec.file(SynthFiles::polygons, [&](std::ostream& os) { write_zip_polygons(os, world.polygons); });
  rec.file(SynthFiles::dci, [&](std::ostream& os) { write_dci_csv(os, world.dci_rows); });
  rec.file(SynthFiles::geoip, [&](std::ostream& os) { write_geoip_csv(os, world.geoip_rows); });
  rec.file(SynthFiles::users, [&](std::ostream& os) { write_users_csv(os, users.users); });
  rec.file(SynthFiles::registrations,
           [&](std::ostream& os) { write_registrations_csv(os, users.registrations); });
  rec.file(SynthFiles::truth, [&](std::ostream& os) { write_truth_csv(os, users.truth); });
  rec.count("cells", world.cells.size());
  rec.count("users", users.users.size());
  rec.count("registrations", users.registrations.size());
  std::uint64_t matched = 0;
  for (const auto& t : users.truth) matched += t.matched ? 1 : 0;
  rec.count("matched", matched);
  return rec.finish();
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

RunManifest run_pipeline(const PipelineOptions& o, unsigned threads) {
  threads = resolve_threads(threads);
  StageRecorder rec("pipeline", o.out_dir, threads);
  rec.manifest().flags = {{"users", o.users},
                          {"geoip", o.geoip},
                          {"polygons", o.polygons},
                          {"dci", o.dci},
                          {"registrations", o.registrations},
                          {"bins", o.bins},
                          {"metric", std::string(to_string(o.metric))},
                          {"psych_metric", std::string(to_string(o.psych_metric))},
                          {"transform", std::string(to_string(o.psych_transform))},
                          {"factors", std::to_string(o.factors)},
                          {"iterate", std::to_string(o.iterate)},
                          {"ci_level", format_double(o.ci_level)},
                          {"policy", policy_name(o.policy)}};
  for (const auto& [role, path] : std::vector<std::pair<std::string, std::string>>{
           {"users", o.users}, {"geoip", o.geoip}, {"polygons", o.polygons},
           {"dci", o.dci}, {"registrations", o.registrations}}) {
    rec.input(role, path);
  }
  const fs::path root(o.out_dir);
  auto collect = [&](const std::string& sub, const RunManifest& m) {
    for (const auto& out : m.outputs) {
      rec.manifest().outputs.push_back({sub + "/" + out.file, out.bytes, out.sha256});
    }
  };
  collect("dci", run_dci_stage({o.dci, o.polygons, (root / "dci").string(), o.policy}, threads));
  collect("reconcile", run_reconcile_stage({o.users, (root / "reconcile").string(), o.policy}, threads));
  collect("geolocate",
          run_geolocate_stage({o.users, o.geoip, (root / "geolocate").string(), o.policy}, threads));
  AuditStageOptions a;
  a.users = o.users;
  a.geoip = o.geoip;
  a.polygons = o.polygons;
  a.dci = o.dci;
  a.bins = o.bins;
  a.metric = o.metric;
  a.out_dir = (root / "audit").string();
  a.policy = o.policy;
  collect("audit", run_audit_stage(a, threads));
  PsychStageOptions p;
  p.registrations = o.registrations;
  p.dci = o.dci;
  p.polygons = o.polygons;
  p.metric = o.psych_metric;
  p.transform = o.psych_transform;
  p.factors = o.factors;
  p.iterate = o.iterate;
  p.out_dir = (root / "psych").string();
  p.policy = o.policy;
  collect("psych", run_psych_stage(p, threads));
  for (auto model : {RegressionModel::boundary, RegressionModel::boundary_nonzero,
                     RegressionModel::centroid, RegressionModel::centroid_nonzero,
                     RegressionModel::match, RegressionModel::gt_count, RegressionModel::mm_count}) {
    const std::string sub = "regress/" + std::string(to_string(model));
    RegressStageOptions r;
    r.users = o.users;
    r.geoip = o.geoip;
    r.polygons = o.polygons;
    r.dci = o.dci;
    r.model = model;
    r.ci_level = o.ci_level;
    r.out_dir = (root / sub).string();
    r.policy = o.policy;
    collect(sub, run_regress_stage(r, threads));
  }
  rec.count("stages", 12);
  return rec.finish();
}

}  // namespace geobias

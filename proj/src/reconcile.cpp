#include "geobias/reconcile.hpp"

namespace geobias {

std::string_view to_string(ReconcileRule rule) {
  switch (rule) {
    case ReconcileRule::agree: return "agree";
    case ReconcileRule::parsed_only: return "parsed_only";
    case ReconcileRule::geocode_only: return "geocode_only";
    case ReconcileRule::disagree: return "disagree";
  }
  return "?";
}

std::string_view to_string(ReconcileExclusion reason) {
  switch (reason) {
    case ReconcileExclusion::confidently_outside_us: return "confidently_outside_us";
    case ReconcileExclusion::no_zip: return "no_zip";
  }
  return "?";
}

bool is_geocodable(const UserInputRow& row) {
  return !row.parsed_zip.empty() ||
         (!row.parsed_city.empty() && !row.parsed_state.empty());
}

bool is_confident(const UserInputRow& row) {
  return row.geo_accuracy == GeocodeAccuracy::rooftop ||
         row.geo_accuracy == GeocodeAccuracy::range_interpolated;
}

namespace {

std::optional<GeoPoint> confident_coords(const UserInputRow& row) {
  if (!is_confident(row) || !row.geo_lat || !row.geo_lon) return std::nullopt;
  return GeoPoint{*row.geo_lat, *row.geo_lon};
}

}  // namespace

ReconcileOutcome reconcile_row(const UserInputRow& row) {
  ReconcileOutcome out;
  if (row.geo_in_us == TriState::no && is_confident(row)) {
    out.excluded = ReconcileExclusion::confidently_outside_us;
    return out;
  }
  const bool has_parsed = !row.parsed_zip.empty();
  const bool has_geo = !row.geo_zip.empty();
  if (!has_parsed && !has_geo) {
    out.excluded = ReconcileExclusion::no_zip;
    return out;
  }

  GroundTruth gt;
  if (has_parsed && has_geo && row.parsed_zip == row.geo_zip) {
    gt.zip = row.parsed_zip;
    gt.coords = confident_coords(row);
    gt.rule = ReconcileRule::agree;
  } else if (has_parsed && !has_geo) {
    gt.zip = row.parsed_zip;
    gt.rule = ReconcileRule::parsed_only;
  } else if (!has_parsed) {
    gt.zip = row.geo_zip;
    if (row.address_type == AddressType::street_address) {
      gt.coords = confident_coords(row);
    }
    gt.rule = ReconcileRule::geocode_only;
  } else {
    gt.zip = row.parsed_zip;
    gt.coords = confident_coords(row);
    gt.rule = ReconcileRule::disagree;
  }
  out.truth = std::move(gt);
  return out;
}

std::optional<GroundTruth> resolve_ground_truth(const UserInputRow& row) {
  return reconcile_row(row).truth;
}

ReconcileSummary summarize(const std::vector<ReconcileOutcome>& outcomes) {
  ReconcileSummary s;
  s.total = outcomes.size();
  for (const auto& o : outcomes) {
    if (o.truth) {
      ++s.by_rule[static_cast<std::size_t>(o.truth->rule)];
      if (o.truth->coords) ++s.with_coords;
    } else if (o.excluded) {
      ++s.by_exclusion[static_cast<std::size_t>(*o.excluded)];
    }
  }
  return s;
}

}  // namespace geobias

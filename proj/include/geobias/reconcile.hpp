#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "geobias/geometry.hpp"
#include "geobias/ingest.hpp"

namespace geobias {

enum class ReconcileRule { agree, parsed_only, geocode_only, disagree };
enum class ReconcileExclusion { confidently_outside_us, no_zip };

std::string_view to_string(ReconcileRule rule);
std::string_view to_string(ReconcileExclusion reason);

struct GroundTruth {
  ZipCode zip;
  std::optional<GeoPoint> coords;  // only from a confident geocode
  ReconcileRule rule = ReconcileRule::agree;
};

// Parsed ZIP, or both parsed city and state.
bool is_geocodable(const UserInputRow& row);
// rooftop or range_interpolated.
bool is_confident(const UserInputRow& row);

// Outcome of the ground-truth rules for one user: either a GroundTruth or
// the reason the user was dropped.
struct ReconcileOutcome {
  std::optional<GroundTruth> truth;
  std::optional<ReconcileExclusion> excluded;
};

ReconcileOutcome reconcile_row(const UserInputRow& row);
std::optional<GroundTruth> resolve_ground_truth(const UserInputRow& row);

struct ReconcileSummary {
  std::size_t total = 0;
  std::array<std::size_t, 4> by_rule{};       // indexed by ReconcileRule
  std::array<std::size_t, 2> by_exclusion{};  // indexed by ReconcileExclusion
  std::size_t with_coords = 0;
};

ReconcileSummary summarize(const std::vector<ReconcileOutcome>& outcomes);

}  // namespace geobias

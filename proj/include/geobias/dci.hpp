#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "geobias/geometry.hpp"
#include "geobias/ingest.hpp"
#include "geobias/zip.hpp"

namespace geobias {

// DCI tiers, best (0) to worst (4).
enum class Tier { Prosperous, Comfortable, MidTier, AtRisk, Distressed };
inline constexpr int kTierCount = 5;

std::string_view to_string(Tier tier);

enum class Orientation { higher_is_worse, higher_is_better };

struct DciMetric {
  std::string_view name;
  Orientation orientation;
  double DciInputRow::*field;
};

// The seven component metrics, in input-column order.
const std::array<DciMetric, 7>& dci_metrics();

struct DciScore {
  ZipCode zip;
  double dci = 0.0;  // 0 best .. 100 worst
  Tier tier = Tier::Prosperous;
  int sub_tier = 1;  // 1..10
  long long population = 0;
  std::optional<double> density;  // people per sq mi, when a polygon exists
  std::optional<int> density_category;
};

using DciTable = std::map<ZipCode, DciScore>;

// Fractional ranks 1..N with ties given the mean of their positions.
// Smaller key ranks first.
std::vector<double> fractional_ranks(std::span<const double> keys);

// Ranks each metric (1 = best), averages the seven ranks, re-ranks the
// averages and scales to 100 * (rank - 1) / (N - 1). Requires N >= 2 and
// unique ZIPs; throws InputError otherwise. Densities are left empty.
DciTable composite_dci(const std::vector<DciInputRow>& rows);

// [0,20) Prosperous ... [80,100] Distressed. Throws InputError outside [0,100].
Tier tier_of(double dci);
// floor(dci / 10) + 1, capped at 10.
int sub_tier_of(double dci);

// population / (land + water area). Throws InputError on zero area.
double density_of(long long population, const ZipPolygon& poly);

// Fills DciScore::density for every ZIP that has a polygon.
void attach_density(DciTable& scores, const std::map<ZipCode, ZipPolygon>& polygons);

}  // namespace geobias

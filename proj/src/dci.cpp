#include "geobias/dci.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "geobias/errors.hpp"

namespace geobias {

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::Prosperous: return "Prosperous";
    case Tier::Comfortable: return "Comfortable";
    case Tier::MidTier: return "Mid-tier";
    case Tier::AtRisk: return "At risk";
    case Tier::Distressed: return "Distressed";
  }
  return "?";
}

const std::array<DciMetric, 7>& dci_metrics() {
  static const std::array<DciMetric, 7> metrics{{
      {"no_hs_diploma_rate", Orientation::higher_is_worse,
       &DciInputRow::no_hs_diploma_rate},
      {"housing_vacancy_rate", Orientation::higher_is_worse,
       &DciInputRow::housing_vacancy_rate},
      {"unemployment_rate", Orientation::higher_is_worse,
       &DciInputRow::unemployment_rate},
      {"poverty_rate", Orientation::higher_is_worse, &DciInputRow::poverty_rate},
      {"median_income_ratio", Orientation::higher_is_better,
       &DciInputRow::median_income_ratio},
      {"employment_change_pct", Orientation::higher_is_better,
       &DciInputRow::employment_change_pct},
      {"establishments_change_pct", Orientation::higher_is_better,
       &DciInputRow::establishments_change_pct},
  }};
  return metrics;
}

std::vector<double> fractional_ranks(std::span<const double> keys) {
  const std::size_t n = keys.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && keys[order[j]] == keys[order[i]]) ++j;
    // positions i+1 .. j share their mean
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mean_rank;
    i = j;
  }
  return ranks;
}

DciTable composite_dci(const std::vector<DciInputRow>& rows) {
  const std::size_t n = rows.size();
  if (n < 2) throw InputError("composite DCI needs at least 2 ZIP codes");
  {
    std::set<std::string_view> seen;
    for (const auto& r : rows) {
      if (!seen.insert(r.zip).second) {
        throw InputError("duplicate ZIP " + r.zip + " in DCI input");
      }
    }
  }

  std::vector<double> rank_sum(n, 0.0);
  std::vector<double> keys(n);
  for (const auto& metric : dci_metrics()) {
    const double sign = metric.orientation == Orientation::higher_is_worse ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) keys[i] = sign * (rows[i].*metric.field);
    const auto ranks = fractional_ranks(keys);
    for (std::size_t i = 0; i < n; ++i) rank_sum[i] += ranks[i];
  }
  std::vector<double> averages(n);
  for (std::size_t i = 0; i < n; ++i) {
    averages[i] = rank_sum[i] / static_cast<double>(dci_metrics().size());
  }
  const auto final_ranks = fractional_ranks(averages);

  DciTable out;
  for (std::size_t i = 0; i < n; ++i) {
    DciScore s;
    s.zip = rows[i].zip;
    s.dci = 100.0 * (final_ranks[i] - 1.0) / (static_cast<double>(n) - 1.0);
    s.tier = tier_of(s.dci);
    s.sub_tier = sub_tier_of(s.dci);
    s.population = rows[i].population;
    s.density_category = rows[i].density_category;
    out.emplace(s.zip, std::move(s));
  }
  return out;
}

Tier tier_of(double dci) {
  if (!(dci >= 0.0 && dci <= 100.0)) {
    throw InputError("DCI outside [0, 100]");
  }
  if (dci < 20.0) return Tier::Prosperous;
  if (dci < 40.0) return Tier::Comfortable;
  if (dci < 60.0) return Tier::MidTier;
  if (dci < 80.0) return Tier::AtRisk;
  return Tier::Distressed;
}

int sub_tier_of(double dci) {
  if (!(dci >= 0.0 && dci <= 100.0)) {
    throw InputError("DCI outside [0, 100]");
  }
  return std::min(static_cast<int>(std::floor(dci / 10.0)) + 1, 10);
}

double density_of(long long population, const ZipPolygon& poly) {
  const double area = poly.total_area();
  if (!(area > 0.0)) throw InputError("ZIP " + poly.zip() + ": zero total area");
  if (population < 0) throw InputError("negative population");
  return static_cast<double>(population) / area;
}

void attach_density(DciTable& scores, const std::map<ZipCode, ZipPolygon>& polygons) {
  for (auto& [zip, score] : scores) {
    auto it = polygons.find(zip);
    if (it != polygons.end()) score.density = density_of(score.population, it->second);
  }
}

}  // namespace geobias

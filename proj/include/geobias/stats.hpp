#pragma once

#include <optional>
#include <span>
#include <vector>

namespace geobias::stats {

double mean(std::span<const double> x);
// n - 1 denominator. Requires at least two values.
double sample_variance(std::span<const double> x);

// Linear interpolation between closest order statistics ("type 7"):
// h = (n - 1) p, q = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
// `sorted` must be ascending and non-empty; p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> values, double p);
double median(std::vector<double> values);

// Pearson correlation; absent when either series has zero variance or
// fewer than two points.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

}  // namespace geobias::stats

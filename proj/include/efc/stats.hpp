#pragma once

#include <span>
#include <vector>

namespace efc::stats {

double mean(std::span<const double> xs);

/// Linear-interpolation quantile of the sorted sample (the "type 7"
/// definition). q in [0, 1]; NaN entries are ignored; NaN if no data.
double quantile(std::vector<double> xs, double q);

/// Pearson correlation; NaN when either side has zero variance or n < 2.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Average ranks (1-based, ties share the mean rank).
std::vector<double> average_ranks(std::span<const double> xs);

double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace efc::stats

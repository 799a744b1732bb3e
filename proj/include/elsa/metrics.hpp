#pragma once

#include <span>
#include <vector>

namespace elsa {

/// Area under the ROC curve where label 1 marks the positive (normal) class
/// and higher scores should rank positives first. Mann-Whitney statistic with
/// average ranks for ties, i.e. P(s_pos > s_neg) + P(s_pos == s_neg) / 2.
/// Throws ValidationError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Sample Pearson correlation. Needs >= 2 points and nonzero variances.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

// Average (tie-aware) 1-based ranks.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace elsa

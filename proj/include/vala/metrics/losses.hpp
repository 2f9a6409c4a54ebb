#pragma once

#include <span>
#include <vector>

#include "vala/metrics/bit_matrix.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

struct LossConfig {
  double alpha = 1.0;  ///< view-loss weight
  double beta = 1.0;   ///< attribute-loss weight
  std::vector<double> positive_rates;

  void validate() const;
};

inline constexpr double kLogClamp = 1e-12;
inline constexpr int kRightView = 3;

/// Negative log-likelihood of the labelled view:
///   -(1 / (T L)) sum_l log softmax(logits_l)[label_l]
/// over batch x 4 logits, T = num_views. With num_views == 3 the right-view
/// logit is dropped before the softmax and right-view samples are excluded
/// (L counts the samples that remain).
Tensor view_loss(const Tensor& logits, std::span<const int> labels, int num_views = 4);

/// Weighted sigmoid cross-entropy over batch x K logits:
///   -(1/N) sum_i sum_j w_ij [y log s + (1-y) log(1-s)],  s = sigmoid(logit)
/// with w_ij = exp(1 - r_j) for positives and exp(r_j) for negatives. Log
/// arguments are clamped to >= 1e-12.
Tensor attr_loss(const Tensor& logits, const BitMatrix& labels, std::span<const double> rates);

/// Same objective with unit weights (plain binary cross-entropy).
Tensor unweighted_bce(const Tensor& logits, const BitMatrix& labels);

Tensor combined_loss(const Tensor& view_term, const Tensor& attr_term, double alpha, double beta);
double combined_loss(double view_term, double attr_term, double alpha, double beta);

/// r_j = fraction of rows with attribute j set.
std::vector<double> positive_rates(const BitMatrix& labels);

}  // namespace vala

#include "vala/metrics/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vala/numerics/kink.hpp"
#include "vala/numerics/ops.hpp"

namespace vala {

namespace {

double sigmoid_of(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void check_rates(std::span<const double> rates) {
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (!(rates[j] >= 0.0 && rates[j] <= 1.0)) {
      throw std::invalid_argument("positive rate r_" + std::to_string(j) + " = " +
                                  std::to_string(rates[j]) + " is outside [0, 1]");
    }
  }
}

// Shared kernel of the weighted and unweighted sigmoid cross-entropy.
Tensor sigmoid_cross_entropy(const Tensor& logits, const BitMatrix& labels,
                             std::span<const double> rates, bool weighted, const char* name) {
  if (logits.rank() != 2 || logits.dim(0) != labels.rows() || logits.dim(1) != labels.cols()) {
    throw ShapeError(std::string(name) + ": logits " + shape_str(logits.shape()) +
                     " do not match labels " + std::to_string(labels.rows()) + "x" +
                     std::to_string(labels.cols()));
  }
  const std::size_t n = labels.rows(), k = labels.cols();
  if (weighted) {
    if (rates.size() != k) {
      throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(k) +
                                  " positive rates, got " + std::to_string(rates.size()));
    }
    check_rates(rates);
  }
  auto weight = [&](std::size_t j, bool positive) {
    if (!weighted) return 1.0;
    return positive ? std::exp(1.0 - rates[j]) : std::exp(rates[j]);
  };

  const auto x = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const bool y = labels.at(i, j);
      const double p = y ? sigmoid_of(x[i * k + j]) : sigmoid_of(-x[i * k + j]);
      if (kink::active()) kink::record(kink::Site::log_clamp, p < kLogClamp ? 1 : 0);
      total += weight(j, y) * std::log(std::max(p, kLogClamp));
    }
  }
  const double loss = -total / static_cast<double>(n);

  std::vector<double> w(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) w[i * k + j] = weight(j, labels.at(i, j));
  }
  auto fn = [logits, labels, w = std::move(w), n, k](std::span<const double> dy,
                                                     std::span<const double>) {
    auto dx = grad_sink(logits);
    if (dx.empty()) return;
    const auto x = logits.data();
    const double g = dy[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t idx = i * k + j;
        if (labels.at(i, j)) {
          const double s = sigmoid_of(x[idx]);
          if (s >= kLogClamp) dx[idx] += -g * w[idx] * sigmoid_of(-x[idx]);
        } else {
          const double one_minus = sigmoid_of(-x[idx]);
          if (one_minus >= kLogClamp) dx[idx] += g * w[idx] * sigmoid_of(x[idx]);
        }
      }
    }
  };
  return make_result(Shape{1}, {loss}, name, {logits}, std::move(fn));
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) {
    throw std::invalid_argument("loss weights alpha and beta must be non-negative");
  }
  check_rates(positive_rates);
}

Tensor view_loss(const Tensor& logits, std::span<const int> labels, int num_views) {
  if (num_views != 3 && num_views != 4) {
    throw std::invalid_argument("view_loss: num_views must be 3 or 4");
  }
  if (labels.empty()) throw std::invalid_argument("view_loss: empty batch");
  if (logits.rank() != 2 || logits.dim(0) != labels.size() ||
      logits.dim(1) < static_cast<std::size_t>(num_views)) {
    throw ShapeError("view_loss: logits " + shape_str(logits.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels over " + std::to_string(num_views) +
                     " views");
  }
  const std::size_t cols = logits.dim(1);
  const auto t = static_cast<std::size_t>(num_views);
  std::vector<std::size_t> rows;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (labels[l] < 0 || labels[l] > kRightView) {
      throw std::invalid_argument("view_loss: label " + std::to_string(labels[l]) +
                                  " is not a view index");
    }
    if (labels[l] < num_views) rows.push_back(l);
  }

  const auto x = logits.data();
  std::vector<double> probs(labels.size() * t, 0.0);
  double total = 0.0;
  for (auto l : rows) {
    const double* row = x.data() + l * cols;
    const double top = *std::max_element(row, row + t);
    double z = 0.0;
    for (std::size_t v = 0; v < t; ++v) z += std::exp(row[v] - top);
    const double log_z = top + std::log(z);
    for (std::size_t v = 0; v < t; ++v) probs[l * t + v] = std::exp(row[v] - log_z);
    total += row[labels[l]] - log_z;
  }
  const double norm = rows.empty() ? 0.0 : 1.0 / static_cast<double>(t * rows.size());
  const double loss = rows.empty() ? 0.0 : -total * norm;

  std::vector<int> label_copy(labels.begin(), labels.end());
  auto fn = [logits, rows, probs = std::move(probs), label_copy, norm, t, cols](
                std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(logits);
    if (dx.empty()) return;
    for (auto l : rows) {
      for (std::size_t v = 0; v < t; ++v) {
        const double target = static_cast<int>(v) == label_copy[l] ? 1.0 : 0.0;
        dx[l * cols + v] += dy[0] * norm * (probs[l * t + v] - target);
      }
    }
  };
  return make_result(Shape{1}, {loss}, "view_loss", {logits}, std::move(fn));
}

Tensor attr_loss(const Tensor& logits, const BitMatrix& labels, std::span<const double> rates) {
  return sigmoid_cross_entropy(logits, labels, rates, true, "attr_loss");
}

Tensor unweighted_bce(const Tensor& logits, const BitMatrix& labels) {
  return sigmoid_cross_entropy(logits, labels, {}, false, "bce");
}

Tensor combined_loss(const Tensor& view_term, const Tensor& attr_term, double alpha, double beta) {
  return add(scale(view_term, alpha), scale(attr_term, beta));
}

double combined_loss(double view_term, double attr_term, double alpha, double beta) {
  return alpha * view_term + beta * attr_term;
}

std::vector<double> positive_rates(const BitMatrix& labels) {
  if (labels.rows() == 0) throw std::invalid_argument("positive_rates: empty dataset");
  std::vector<double> rates(labels.cols(), 0.0);
  for (std::size_t j = 0; j < labels.cols(); ++j) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.rows(); ++i) positives += labels.at(i, j) ? 1 : 0;
    rates[j] = static_cast<double>(positives) / static_cast<double>(labels.rows());
  }
  return rates;
}

}  // namespace vala

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vala/metrics/bit_matrix.hpp"

namespace vala {

enum class MetricMode { example_based, label_based };

MetricMode parse_metric_mode(const std::string& text);
std::string to_string(MetricMode mode);

struct AttributeCounters {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t positives() const { return tp + fn; }
  std::size_t negatives() const { return tn + fp; }
  std::size_t total() const { return tp + tn + fp + fn; }
};

std::vector<AttributeCounters> count_attributes(const BitMatrix& preds, const BitMatrix& labels);

struct MeanAccuracy {
  double value = 0.0;
  /// Attributes whose labels are all positive or all negative; their
  /// undefined ratio was left out of the average.
  std::vector<std::size_t> degenerate;
};

/// Mean of TP_i/P_i and TN_i/N_i over attributes. Undefined ratios are
/// skipped and the denominator shrinks accordingly.
MeanAccuracy mean_accuracy(const BitMatrix& preds, const BitMatrix& labels);
MeanAccuracy mean_accuracy(std::span<const AttributeCounters> counters);

struct InstanceMetrics {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// example_based averages set ratios per sample; label_based averages
/// per-attribute counter ratios. F1 always combines the averaged precision
/// and recall.
InstanceMetrics instance_metrics(const BitMatrix& preds, const BitMatrix& labels,
                                 MetricMode mode = MetricMode::example_based);

inline constexpr std::size_t kViewCount = 4;
using ViewConfusion = std::array<std::array<std::size_t, kViewCount>, kViewCount>;

struct MetricsReport {
  MetricMode mode = MetricMode::example_based;
  double mA = 0.0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  std::vector<AttributeCounters> counters;
  std::vector<std::size_t> degenerate_attributes;
  /// Rows are true views, columns predicted views.
  ViewConfusion view_confusion{};

  nlohmann::json to_json() const;
};

/// `true_views` and `predicted_views` may be empty when no view branch exists.
MetricsReport build_report(const BitMatrix& preds, const BitMatrix& labels,
                           std::span<const int> true_views, std::span<const int> predicted_views,
                           MetricMode mode = MetricMode::example_based);

/// Thresholds probabilities at 0.5 (p >= 0.5 is positive).
BitMatrix threshold(std::span<const double> probabilities, std::size_t rows, std::size_t cols,
                    double cut = 0.5);

}  // namespace vala

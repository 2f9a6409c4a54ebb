#include "vala/metrics/metrics.hpp"

#include <stdexcept>

namespace vala {

namespace {

void check_pair(const BitMatrix& preds, const BitMatrix& labels) {
  if (preds.rows() != labels.rows() || preds.cols() != labels.cols()) {
    throw std::invalid_argument("metrics: predictions are " + std::to_string(preds.rows()) + "x" +
                                std::to_string(preds.cols()) + " but labels are " +
                                std::to_string(labels.rows()) + "x" +
                                std::to_string(labels.cols()));
  }
  if (labels.rows() == 0 || labels.cols() == 0) {
    throw std::invalid_argument("metrics: empty prediction set");
  }
}

// a / b, or the convention value when b is zero.
double ratio_or(std::size_t a, std::size_t b, double when_empty) {
  return b == 0 ? when_empty : static_cast<double>(a) / static_cast<double>(b);
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

MetricMode parse_metric_mode(const std::string& text) {
  if (text == "example_based") return MetricMode::example_based;
  if (text == "label_based") return MetricMode::label_based;
  throw std::invalid_argument("unknown metric mode '" + text +
                              "' (expected example_based or label_based)");
}

std::string to_string(MetricMode mode) {
  return mode == MetricMode::example_based ? "example_based" : "label_based";
}

std::vector<AttributeCounters> count_attributes(const BitMatrix& preds, const BitMatrix& labels) {
  check_pair(preds, labels);
  std::vector<AttributeCounters> counters(labels.cols());
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    for (std::size_t j = 0; j < labels.cols(); ++j) {
      const bool y = labels.at(i, j), p = preds.at(i, j);
      auto& c = counters[j];
      if (y && p) ++c.tp;
      else if (y) ++c.fn;
      else if (p) ++c.fp;
      else ++c.tn;
    }
  }
  return counters;
}

MeanAccuracy mean_accuracy(std::span<const AttributeCounters> counters) {
  MeanAccuracy out;
  double total = 0.0;
  std::size_t defined = 0;
  for (std::size_t j = 0; j < counters.size(); ++j) {
    const auto& c = counters[j];
    if (c.positives() > 0) {
      total += ratio_or(c.tp, c.positives(), 0.0);
      ++defined;
    }
    if (c.negatives() > 0) {
      total += ratio_or(c.tn, c.negatives(), 0.0);
      ++defined;
    }
    if (c.positives() == 0 || c.negatives() == 0) out.degenerate.push_back(j);
  }
  out.value = defined == 0 ? 0.0 : total / static_cast<double>(defined);
  return out;
}

MeanAccuracy mean_accuracy(const BitMatrix& preds, const BitMatrix& labels) {
  const auto counters = count_attributes(preds, labels);
  return mean_accuracy(counters);
}

InstanceMetrics instance_metrics(const BitMatrix& preds, const BitMatrix& labels,
                                 MetricMode mode) {
  check_pair(preds, labels);
  InstanceMetrics m;
  if (mode == MetricMode::example_based) {
    const std::size_t n = labels.rows(), k = labels.cols();
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t both = 0, either = 0, predicted = 0, actual = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const bool y = labels.at(i, j), p = preds.at(i, j);
        both += (y && p) ? 1 : 0;
        either += (y || p) ? 1 : 0;
        predicted += p ? 1 : 0;
        actual += y ? 1 : 0;
      }
      m.accuracy += ratio_or(both, either, 1.0);
      m.precision += ratio_or(both, predicted, actual == 0 ? 1.0 : 0.0);
      m.recall += ratio_or(both, actual, predicted == 0 ? 1.0 : 0.0);
    }
    m.accuracy /= static_cast<double>(n);
    m.precision /= static_cast<double>(n);
    m.recall /= static_cast<double>(n);
  } else {
    const auto counters = count_attributes(preds, labels);
    for (const auto& c : counters) {
      const std::size_t predicted = c.tp + c.fp;
      m.accuracy += ratio_or(c.tp + c.tn, c.total(), 1.0);
      m.precision += ratio_or(c.tp, predicted, c.positives() == 0 ? 1.0 : 0.0);
      m.recall += ratio_or(c.tp, c.positives(), predicted == 0 ? 1.0 : 0.0);
    }
    const auto k = static_cast<double>(counters.size());
    m.accuracy /= k;
    m.precision /= k;
    m.recall /= k;
  }
  m.f1 = harmonic(m.precision, m.recall);
  return m;
}

MetricsReport build_report(const BitMatrix& preds, const BitMatrix& labels,
                           std::span<const int> true_views, std::span<const int> predicted_views,
                           MetricMode mode) {
  MetricsReport report;
  report.mode = mode;
  report.counters = count_attributes(preds, labels);
  const auto ma = mean_accuracy(report.counters);
  report.mA = ma.value;
  report.degenerate_attributes = ma.degenerate;
  const auto inst = instance_metrics(preds, labels, mode);
  report.accuracy = inst.accuracy;
  report.precision = inst.precision;
  report.recall = inst.recall;
  report.f1 = inst.f1;
  if (true_views.size() != predicted_views.size()) {
    throw std::invalid_argument("metrics: view label and prediction counts differ");
  }
  for (std::size_t i = 0; i < true_views.size(); ++i) {
    const int t = true_views[i], p = predicted_views[i];
    if (t < 0 || t >= static_cast<int>(kViewCount) || p < 0 ||
        p >= static_cast<int>(kViewCount)) {
      throw std::invalid_argument("metrics: view index out of range");
    }
    ++report.view_confusion[t][p];
  }
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["mA"] = mA;
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  auto column = [&](std::size_t AttributeCounters::*field) {
    std::vector<std::size_t> v;
    for (const auto& c : counters) v.push_back(c.*field);
    return v;
  };
  j["counters"] = {{"tp", column(&AttributeCounters::tp)},
                   {"tn", column(&AttributeCounters::tn)},
                   {"fp", column(&AttributeCounters::fp)},
                   {"fn", column(&AttributeCounters::fn)}};
  j["degenerate_attributes"] = degenerate_attributes;
  j["view_confusion"] = view_confusion;
  return j;
}

BitMatrix threshold(std::span<const double> probabilities, std::size_t rows, std::size_t cols,
                    double cut) {
  if (probabilities.size() != rows * cols) {
    throw std::invalid_argument("threshold: probability count does not match shape");
  }
  BitMatrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out.set(i, j, probabilities[i * cols + j] >= cut);
  }
  return out;
}

}  // namespace vala

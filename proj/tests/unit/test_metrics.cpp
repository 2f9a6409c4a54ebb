#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "vala/metrics/losses.hpp"
#include "vala/metrics/metrics.hpp"
#include "vala/numerics/grad_check.hpp"
#include "vala/numerics/ops.hpp"
#include "vala/numerics/rng.hpp"

using namespace vala;

namespace {

BitMatrix bits(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> v) {
  return BitMatrix(rows, cols, std::move(v));
}

BitMatrix random_bits(std::size_t rows, std::size_t cols, Rng& rng, double p = 0.5) {
  BitMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m.set(i, j, rng.bernoulli(p));
  return m;
}

Tensor random_logits(std::size_t rows, std::size_t cols, Rng& rng, double spread = 3.0) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-spread, spread);
  return Tensor::parameter({rows, cols}, std::move(v));
}

// Reference implementations built on std::set, written independently of the
// counter-based library code.
struct Reference {
  double acc, prec, rec, f1;
};

std::set<std::size_t> row_set(const BitMatrix& m, std::size_t i) {
  std::set<std::size_t> s;
  for (std::size_t j = 0; j < m.cols(); ++j)
    if (m.at(i, j)) s.insert(j);
  return s;
}

Reference reference_example_based(const BitMatrix& pred, const BitMatrix& label) {
  double a = 0, p = 0, r = 0;
  for (std::size_t i = 0; i < label.rows(); ++i) {
    const auto y = row_set(label, i), yh = row_set(pred, i);
    std::set<std::size_t> inter, uni;
    std::set_intersection(y.begin(), y.end(), yh.begin(), yh.end(),
                          std::inserter(inter, inter.begin()));
    std::set_union(y.begin(), y.end(), yh.begin(), yh.end(), std::inserter(uni, uni.begin()));
    a += uni.empty() ? 1.0 : double(inter.size()) / double(uni.size());
    if (yh.empty()) p += y.empty() ? 1.0 : 0.0;
    else p += double(inter.size()) / double(yh.size());
    if (y.empty()) r += yh.empty() ? 1.0 : 0.0;
    else r += double(inter.size()) / double(y.size());
  }
  const double n = double(label.rows());
  a /= n, p /= n, r /= n;
  return {a, p, r, p + r > 0 ? 2 * p * r / (p + r) : 0.0};
}

Reference reference_label_based(const BitMatrix& pred, const BitMatrix& label) {
  double a = 0, p = 0, r = 0;
  for (std::size_t j = 0; j < label.cols(); ++j) {
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < label.rows(); ++i) {
      const int y = label.at(i, j), yh = pred.at(i, j);
      tp += y * yh;
      tn += (1 - y) * (1 - yh);
      fp += (1 - y) * yh;
      fn += y * (1 - yh);
    }
    a += (tp + tn) / (tp + tn + fp + fn);
    p += (tp + fp) == 0 ? ((tp + fn) == 0 ? 1.0 : 0.0) : tp / (tp + fp);
    r += (tp + fn) == 0 ? ((tp + fp) == 0 ? 1.0 : 0.0) : tp / (tp + fn);
  }
  const double k = double(label.cols());
  a /= k, p /= k, r /= k;
  return {a, p, r, p + r > 0 ? 2 * p * r / (p + r) : 0.0};
}

double reference_mean_accuracy(const BitMatrix& pred, const BitMatrix& label) {
  double total = 0;
  int terms = 0;
  for (std::size_t j = 0; j < label.cols(); ++j) {
    int pos = 0, neg = 0, tp = 0, tn = 0;
    for (std::size_t i = 0; i < label.rows(); ++i) {
      if (label.at(i, j)) {
        ++pos;
        tp += pred.at(i, j);
      } else {
        ++neg;
        tn += !pred.at(i, j);
      }
    }
    if (pos) total += double(tp) / pos, ++terms;
    if (neg) total += double(tn) / neg, ++terms;
  }
  return total / terms;
}

BitMatrix permute_rows(const BitMatrix& m, const std::vector<std::size_t>& perm) {
  BitMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out.set(i, j, m.at(perm[i], j));
  return out;
}

BitMatrix permute_cols(const BitMatrix& m, const std::vector<std::size_t>& perm) {
  BitMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out.set(i, j, m.at(i, perm[j]));
  return out;
}

}  // namespace

TEST_CASE("view_loss") {
  SUBCASE("uniform logits give ln4 / 4") {
    const Tensor logits({1, 4}, 0.0);
    const std::vector<int> labels{2};
    CHECK(view_loss(logits, labels).item() == doctest::Approx(std::log(4.0) / 4.0).epsilon(1e-15));
  }
  SUBCASE("confident correct prediction tends to zero") {
    const Tensor logits({1, 4}, std::vector<double>{0, 0, 60, 0});
    const std::vector<int> labels{2};
    CHECK(view_loss(logits, labels).item() < 1e-20);
  }
  SUBCASE("permutation invariance over the batch") {
    Rng rng(3);
    const Tensor logits = random_logits(6, 4, rng);
    std::vector<int> labels{0, 1, 2, 3, 1, 0};
    const double base = view_loss(logits, labels).item();
    std::vector<double> rev;
    for (std::size_t i = 6; i-- > 0;)
      for (std::size_t v = 0; v < 4; ++v) rev.push_back(logits.data()[i * 4 + v]);
    std::reverse(labels.begin(), labels.end());
    CHECK(view_loss(Tensor({6, 4}, rev), labels).item() == doctest::Approx(base).epsilon(1e-14));
  }
  SUBCASE("three-view mode drops the right view") {
    const Tensor logits({3, 4}, std::vector<double>{0, 0, 0, 9, 1, 2, 3, 4, 0, 0, 0, 0});
    const std::vector<int> labels{0, 3, 1};
    // Rows 0 and 2 see uniform logits over three views.
    CHECK(view_loss(logits, labels, 3).item() ==
          doctest::Approx(std::log(3.0) / 3.0).epsilon(1e-14));
    const std::vector<int> right_only{3};
    const Tensor one({1, 4}, 0.0);
    CHECK(view_loss(one, right_only, 3).item() == 0.0);
  }
  SUBCASE("rejections") {
    const Tensor logits({1, 4}, 0.0);
    CHECK_THROWS(view_loss(logits, std::vector<int>{}));
    CHECK_THROWS(view_loss(logits, std::vector<int>{4}));
    CHECK_THROWS(view_loss(logits, std::vector<int>{-1}));
    CHECK_THROWS(view_loss(logits, std::vector<int>{0, 1}));
  }
  SUBCASE("gradient") {
    Rng rng(11);
    std::vector<Tensor> leaves{random_logits(5, 4, rng)};
    const std::vector<int> labels{0, 3, 1, 2, 3};
    for (int views : {3, 4}) {
      LossFn loss = [&]() { return view_loss(leaves[0], labels, views); };
      const auto report = check_gradients("view_loss", loss, leaves);
      CHECK(report.passed());
      CHECK(report.max_rel_error < 1e-7);
    }
  }
}

TEST_CASE("attr_loss") {
  SUBCASE("zero logit, positive label, r = 0.5") {
    const Tensor logits({1, 1}, 0.0);
    const std::vector<double> r{0.5};
    CHECK(attr_loss(logits, bits(1, 1, {1}), r).item() ==
          doctest::Approx(std::exp(0.5) * std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("r = 1 on a positive reduces to plain cross-entropy") {
    const Tensor logits({1, 1}, 0.7);
    const std::vector<double> r{1.0};
    CHECK(attr_loss(logits, bits(1, 1, {1}), r).item() ==
          doctest::Approx(unweighted_bce(logits, bits(1, 1, {1})).item()).epsilon(1e-15));
  }
  SUBCASE("r = 0.5 everywhere is e^0.5 times unweighted BCE") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const auto n = 1 + rng.below(8), k = 1 + rng.below(6);
      const Tensor logits = random_logits(n, k, rng, 8.0);
      const auto labels = random_bits(n, k, rng);
      const std::vector<double> r(k, 0.5);
      const double weighted = attr_loss(logits, labels, r).item();
      const double plain = unweighted_bce(logits, labels).item();
      CHECK(std::abs(weighted / std::exp(0.5) - plain) < 1e-12);
    }
  }
  SUBCASE("non-negative and clamped on saturation") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor logits = random_logits(4, 3, rng, 50.0);
      const auto labels = random_bits(4, 3, rng);
      std::vector<double> r(3);
      for (double& x : r) x = rng.uniform();
      const double v = attr_loss(logits, labels, r).item();
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
    }
    const Tensor wrong({1, 1}, 1000.0);
    const std::vector<double> r{0.0};
    CHECK(attr_loss(wrong, bits(1, 1, {0}), r).item() ==
          doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  }
  SUBCASE("rejections") {
    const Tensor logits({1, 2}, 0.0);
    CHECK_THROWS(attr_loss(logits, bits(1, 2, {1, 0}), std::vector<double>{0.5}));
    CHECK_THROWS(attr_loss(logits, bits(1, 2, {1, 0}), std::vector<double>{0.5, 1.5}));
    CHECK_THROWS(attr_loss(logits, bits(1, 2, {1, 0}), std::vector<double>{-0.1, 0.5}));
    CHECK_THROWS(attr_loss(logits, bits(2, 1, {1, 0}), std::vector<double>{0.5}));
  }
  SUBCASE("gradient") {
    Rng rng(17);
    std::vector<Tensor> leaves{random_logits(4, 5, rng)};
    const auto labels = random_bits(4, 5, rng);
    std::vector<double> r(5);
    for (double& x : r) x = rng.uniform();
    LossFn loss = [&]() { return attr_loss(leaves[0], labels, r); };
    const auto report = check_gradients("attr_loss", loss, leaves);
    CHECK(report.passed());
    CHECK(report.max_rel_error < 1e-7);
  }
}

TEST_CASE("combined_loss") {
  CHECK(combined_loss(0.3, 0.7, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(combined_loss(0.3, 0.7, 0.0, 2.0) == 1.4);
  CHECK(combined_loss(0.3, 0.7, 3.0, 5.0) == doctest::Approx(3.0 * combined_loss(0.3, 0.7, 1.0, 5.0 / 3.0)));

  // Gradient of alpha*A + beta*B is alpha*dA + beta*dB.
  Rng rng(21);
  const Tensor x = random_logits(3, 4, rng);
  const auto labels = random_bits(3, 4, rng);
  const std::vector<int> views{0, 2, 3};
  const std::vector<double> r{0.2, 0.4, 0.6, 0.8};
  auto grad_of = [&](double a, double b) {
    Tensor leaf = x;
    leaf.zero_grad();
    backward(combined_loss(view_loss(leaf, views), attr_loss(leaf, labels, r), a, b));
    return std::vector<double>(leaf.grad().begin(), leaf.grad().end());
  };
  const auto gv = grad_of(1.0, 0.0), ga = grad_of(0.0, 1.0), g = grad_of(0.7, 1.9);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - (0.7 * gv[i] + 1.9 * ga[i])) < 1e-12);
}

TEST_CASE("positive_rates") {
  CHECK(positive_rates(bits(4, 1, {1, 0, 1, 0}))[0] == 0.5);
  CHECK(positive_rates(bits(3, 1, {1, 1, 1}))[0] == 1.0);
  CHECK_THROWS(positive_rates(BitMatrix(0, 3)));
  const auto a = positive_rates(bits(3, 2, {1, 0, 0, 0, 1, 1}));
  const auto b = positive_rates(bits(3, 2, {1, 1, 1, 0, 0, 0}));
  CHECK(a == b);
}

TEST_CASE("mean_accuracy") {
  Rng rng(2);
  const auto labels = random_bits(10, 4, rng);
  CHECK(mean_accuracy(labels, labels).value == 1.0);
  BitMatrix flipped(10, 4);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 4; ++j) flipped.set(i, j, !labels.at(i, j));
  CHECK(mean_accuracy(flipped, labels).value == 0.0);

  SUBCASE("hand case") {
    const auto y = bits(4, 2, {1, 0, 1, 1, 0, 0, 0, 1});
    const auto p = bits(4, 2, {1, 0, 0, 1, 0, 1, 0, 1});
    const double oracle = reference_mean_accuracy(p, y);
    CHECK(oracle == 0.75);
    CHECK(mean_accuracy(p, y).value == oracle);
    CHECK(mean_accuracy(p, y).degenerate.empty());
  }
  SUBCASE("degenerate attribute is flagged and its undefined ratio skipped") {
    const auto y = bits(3, 2, {1, 0, 1, 1, 1, 0});
    const auto p = bits(3, 2, {1, 0, 0, 1, 1, 1});
    const auto ma = mean_accuracy(p, y);
    REQUIRE(ma.degenerate == std::vector<std::size_t>{0});
    CHECK(ma.value == doctest::Approx((2.0 / 3.0 + 1.0 + 0.5) / 3.0).epsilon(1e-15));
  }
  SUBCASE("invariant under sample and attribute permutations") {
    for (int trial = 0; trial < 50; ++trial) {
      const auto n = 2 + rng.below(10), k = 1 + rng.below(6);
      const auto y = random_bits(n, k, rng), p = random_bits(n, k, rng);
      const double base = mean_accuracy(p, y).value;
      CHECK(std::abs(base - reference_mean_accuracy(p, y)) < 1e-12);
      std::vector<std::size_t> rows(n), cols(k);
      std::iota(rows.begin(), rows.end(), 0);
      std::iota(cols.begin(), cols.end(), 0);
      rng.shuffle(std::span<std::size_t>(rows));
      rng.shuffle(std::span<std::size_t>(cols));
      CHECK(std::abs(mean_accuracy(permute_rows(p, rows), permute_rows(y, rows)).value - base) < 1e-12);
      CHECK(std::abs(mean_accuracy(permute_cols(p, cols), permute_cols(y, cols)).value - base) < 1e-12);
    }
  }
  CHECK_THROWS(mean_accuracy(BitMatrix(2, 2), BitMatrix(2, 3)));
}

TEST_CASE("instance_metrics") {
  SUBCASE("perfect predictions") {
    Rng rng(4);
    const auto y = random_bits(6, 5, rng);
    for (auto mode : {MetricMode::example_based, MetricMode::label_based}) {
      const auto m = instance_metrics(y, y, mode);
      CHECK(m.accuracy == 1.0);
      CHECK(m.precision == 1.0);
      CHECK(m.recall == 1.0);
      CHECK(m.f1 == 1.0);
    }
  }
  SUBCASE("hand set arithmetic") {
    const auto m = instance_metrics(bits(1, 3, {1, 0, 0}), bits(1, 3, {1, 1, 0}));
    CHECK(m.accuracy == 0.5);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("empty-set conventions") {
    const auto none = instance_metrics(bits(1, 2, {0, 0}), bits(1, 2, {0, 0}));
    CHECK(none.accuracy == 1.0);
    CHECK(none.precision == 1.0);
    CHECK(none.recall == 1.0);
    const auto missed = instance_metrics(bits(1, 2, {0, 0}), bits(1, 2, {1, 0}));
    CHECK(missed.precision == 0.0);
    CHECK(missed.recall == 0.0);
    CHECK(missed.f1 == 0.0);
  }
  SUBCASE("random instances against the brute-force reference") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      const auto n = 1 + rng.below(6), k = 1 + rng.below(5);
      const double density = rng.uniform(0.1, 0.9);
      const auto y = random_bits(n, k, rng, density), p = random_bits(n, k, rng, density);
      const auto eb = instance_metrics(p, y, MetricMode::example_based);
      const auto lb = instance_metrics(p, y, MetricMode::label_based);
      const auto re = reference_example_based(p, y), rl = reference_label_based(p, y);
      CHECK(std::abs(eb.accuracy - re.acc) < 1e-12);
      CHECK(std::abs(eb.precision - re.prec) < 1e-12);
      CHECK(std::abs(eb.recall - re.rec) < 1e-12);
      CHECK(std::abs(eb.f1 - re.f1) < 1e-12);
      CHECK(std::abs(lb.accuracy - rl.acc) < 1e-12);
      CHECK(std::abs(lb.precision - rl.prec) < 1e-12);
      CHECK(std::abs(lb.recall - rl.rec) < 1e-12);
      CHECK(std::abs(lb.f1 - rl.f1) < 1e-12);
      for (double v : {eb.accuracy, eb.precision, eb.recall, eb.f1, lb.accuracy, lb.precision,
                       lb.recall, lb.f1, mean_accuracy(p, y).value}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      if (k == 1) CHECK(std::abs(eb.accuracy - lb.accuracy) < 1e-12);
    }
  }
}

TEST_CASE("metrics report") {
  const auto y = bits(4, 2, {1, 0, 1, 1, 0, 0, 0, 1});
  const auto p = bits(4, 2, {1, 0, 0, 1, 0, 1, 0, 1});
  const std::vector<int> tv{0, 1, 2, 3}, pv{0, 1, 3, 3};
  const auto report = build_report(p, y, tv, pv);
  CHECK(report.mA == 0.75);
  CHECK(report.f1 == doctest::Approx(2 * report.precision * report.recall /
                                     (report.precision + report.recall)));
  for (const auto& c : report.counters) CHECK(c.total() == 4);
  CHECK(report.view_confusion[2][3] == 1);
  CHECK(report.view_confusion[3][3] == 1);
  const auto j = report.to_json();
  CHECK(j["mA"].get<double>() == 0.75);
  CHECK(j["counters"]["tp"].size() == 2);
  CHECK(j["mode"] == "example_based");
  CHECK(j["view_confusion"][2][3] == 1);
  CHECK(parse_metric_mode("label_based") == MetricMode::label_based);
  CHECK_THROWS(parse_metric_mode("instance"));
  CHECK(threshold(std::vector<double>{0.5, 0.49}, 1, 2) == bits(1, 2, {1, 0}));
}

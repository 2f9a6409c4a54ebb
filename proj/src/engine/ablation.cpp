#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "vala/engine/engine.hpp"
#include "vala/numerics/errors.hpp"
#include "vala/numerics/json_util.hpp"

namespace vala {

namespace {

std::string slug(Variant v) {
  std::string s = variant_name(v);
  for (char& c : s) {
    if (c == '+') c = '_';
    else c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

std::string format(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void AblationConfig::validate() const {
  if (variants.empty()) throw ConfigError("ablation: no variants configured");
  if (seeds.empty()) throw ConfigError("ablation: no seeds configured");
  for (std::size_t i = 0; i < variants.size(); ++i) {
    for (std::size_t j = i + 1; j < variants.size(); ++j) {
      if (variants[i] == variants[j]) {
        throw ConfigError("ablation: variant " + variant_name(variants[i]) + " listed twice");
      }
    }
  }
}

nlohmann::json to_json(const AblationConfig& c) {
  nlohmann::json names = nlohmann::json::array();
  for (auto v : c.variants) names.push_back(variant_name(v));
  return {{"variants", names}, {"seeds", c.seeds}};
}

AblationConfig ablation_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"variants", "seeds"}, "ablation");
  AblationConfig c;
  std::vector<std::string> names;
  read_key(j, "variants", names, "ablation");
  if (j.contains("variants")) {
    c.variants.clear();
    for (const auto& n : names) c.variants.push_back(parse_variant(n));
  }
  read_key(j, "seeds", c.seeds, "ablation");
  c.validate();
  return c;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const AblationRow& AblationTable::row(Variant v) const {
  for (const auto& r : rows) {
    if (r.variant == v) return r;
  }
  throw std::out_of_range("ablation table has no row for " + variant_name(v));
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json out_rows = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& e : r.runs) runs.push_back(e.to_json());
    nlohmann::json row = {{"variant", variant_name(r.variant)},
                          {"mA", r.mA},
                          {"accuracy", r.accuracy},
                          {"precision", r.precision},
                          {"recall", r.recall},
                          {"f1", r.f1},
                          {"view_accuracy", nullptr},
                          {"runs", runs}};
    if (r.view_accuracy) row["view_accuracy"] = *r.view_accuracy;
    out_rows.push_back(std::move(row));
  }
  return {{"seeds", seeds}, {"statistic", "median"}, {"rows", out_rows}};
}

std::string AblationTable::to_text() const {
  const std::vector<std::string> header{"variant", "mA", "accuracy", "precision", "recall", "F1"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    cells.push_back({variant_name(r.variant), format(100 * r.mA, 2), format(100 * r.accuracy, 2),
                     format(100 * r.precision, 2), format(100 * r.recall, 2),
                     format(100 * r.f1, 2)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::string pad(width[c] - line[c].size(), ' ');
      if (c == 0) os << line[c] << pad;
      else os << "  " << pad << line[c];
    }
    os << '\n';
  }
  return os.str();
}

AblationTable run_ablation_suite(const ModelConfig& base, const TrainConfig& cfg,
                                 const AblationConfig& ablation, const PreparedSplit& train_split,
                                 const PreparedSplit& eval_split, const TrainOptions& options) {
  ablation.validate();
  AblationTable table;
  table.seeds = ablation.seeds;
  for (auto variant : ablation.variants) {
    ModelConfig mc = base;
    const bool stop = mc.flags.stop_view_gradient;
    mc.flags = variant_flags(variant);
    mc.flags.stop_view_gradient = stop;

    AblationRow row;
    row.variant = variant;
    for (auto seed : ablation.seeds) {
      TrainConfig tc = cfg;
      tc.seed = seed;
      TrainOptions run_options;
      run_options.progress = options.progress;
      if (options.out_dir) {
        run_options.out_dir = *options.out_dir / slug(variant) / ("seed" + std::to_string(seed));
      }
      const auto t0 = std::chrono::steady_clock::now();
      TrainResult result = train(mc, train_split, tc, run_options);
      row.runs.push_back(evaluate(result.model, eval_split));
      if (options.progress) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        options.progress(variant_name(variant) + " seed " + std::to_string(seed) + ": mA " +
                         format(row.runs.back().example_based.mA, 4) + " [" + format(secs, 1) +
                         " s]");
      }
    }
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto& e : row.runs) v.push_back(field(e));
      return median(std::move(v));
    };
    row.mA = med([](const EvalReport& e) { return e.example_based.mA; });
    row.accuracy = med([](const EvalReport& e) { return e.example_based.accuracy; });
    row.precision = med([](const EvalReport& e) { return e.example_based.precision; });
    row.recall = med([](const EvalReport& e) { return e.example_based.recall; });
    row.f1 = med([](const EvalReport& e) { return e.example_based.f1; });
    if (row.runs.front().view_accuracy) {
      row.view_accuracy = med([](const EvalReport& e) { return e.view_accuracy.value_or(0.0); });
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace vala

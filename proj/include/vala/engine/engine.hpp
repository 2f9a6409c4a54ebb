#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vala/data/dataset.hpp"
#include "vala/metrics/metrics.hpp"
#include "vala/model/checkpoint.hpp"
#include "vala/model/vala_model.hpp"
#include "vala/numerics/rng.hpp"

namespace vala {

/// groups: the view branch trains at lr_shallow while everything else trains
/// at lr_deep, throughout. phases: every parameter trains at lr_shallow for
/// the first phase_split fraction of epochs, then at lr_deep.
enum class LrSchedule { groups, phases };
std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& text);

struct TrainConfig {
  std::size_t batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 5e-5;
  double lr_shallow = 0.1;
  double lr_deep = 0.01;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double alpha = 1.0, beta = 1.0;
  /// Validate and checkpoint every this many epochs (0: only after the last).
  std::size_t eval_every = 0;
  /// Random-crop padding in pixels at model resolution.
  std::size_t pad = 4;
  LrSchedule schedule = LrSchedule::groups;
  double phase_split = 0.5;
  /// Keep every step's loss terms in the log, not just the epoch means.
  bool log_steps = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Decoded images resized to the model's input size, kept in [0, 1].
struct PreparedSplit {
  std::size_t height = 0, width = 0;
  std::vector<std::string> ids;
  std::vector<std::string> attr_names;
  std::vector<std::vector<double>> images;  ///< 3 x height x width each
  BitMatrix labels;
  std::vector<int> views;  ///< -1 where missing

  std::size_t size() const { return images.size(); }
  bool all_views_present() const;
};

PreparedSplit prepare_split(const Dataset& dataset, std::size_t height, std::size_t width,
                            std::size_t threads = decode_threads());

/// Classic momentum with L2 folded into the gradient:
///   v <- momentum v + g + weight_decay p;  p <- p - lr v
/// Throws TrainingError, leaving everything untouched, if `grad` holds a
/// non-finite value.
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              double lr, double momentum, double weight_decay);

/// Everything besides the model needed to continue a run.
struct TrainState {
  std::size_t epoch = 0;  ///< completed epochs
  std::vector<std::vector<double>> velocities;  ///< parallel to model.parameters()
  Rng rng{0};
};

/// FNV-1a over the canonical JSON of both configs, with the fields that only
/// decide how long to run (epochs, eval_every) left out so a run can be
/// extended from its checkpoint.
std::string config_hash(const ModelConfig& model, const TrainConfig& train);

/// Model tensors plus "velocity/<name>" entries; meta carries the epoch, the
/// rng state, the train config and its hash.
TensorArchive make_checkpoint(VALAModel& model, const TrainState& state, const TrainConfig& cfg);
/// Restores a checkpoint written by make_checkpoint.
struct LoadedRun {
  VALAModel model;
  TrainState state;
  TrainConfig config;
};
LoadedRun load_run(const TensorArchive& archive);

struct EvalReport {
  MetricsReport example_based, label_based;
  std::optional<double> view_accuracy;  ///< absent without a view branch
  std::size_t samples = 0;

  nlohmann::json to_json() const;
};

/// Eval-mode forward over the whole split, thresholded at 0.5.
EvalReport evaluate(VALAModel& model, const PreparedSplit& split);

struct LossTerms {
  double view = 0.0, attr = 0.0, total = 0.0;
};

/// Mean objective over the split in eval mode without augmentation.
LossTerms dataset_loss(VALAModel& model, const PreparedSplit& split, const TrainConfig& cfg,
                       std::span<const double> positive_rates);

struct TrainResult {
  VALAModel model;
  TrainState state;
  std::vector<nlohmann::json> log;  ///< one object per epoch, epoch 0 first
  std::optional<EvalReport> last_eval;
};

struct TrainOptions {
  /// Checkpoints and train_log.jsonl go here when set.
  std::optional<std::filesystem::path> out_dir;
  const PreparedSplit* val = nullptr;
  /// Continue from this checkpoint instead of initialising.
  const TensorArchive* resume = nullptr;
  /// Progress lines (human diagnostics).
  std::function<void(const std::string&)> progress;
};

/// The model is initialised with init_seed = cfg.seed; shuffling and crops
/// draw from one stream seeded from cfg.seed. Written checkpoints also carry
/// the training split's attribute names in meta["attr_names"].
TrainResult train(ModelConfig model_config, const PreparedSplit& data, const TrainConfig& cfg,
                  const TrainOptions& options = {});

struct AblationConfig {
  std::vector<Variant> variants = all_variants();
  std::vector<std::uint64_t> seeds{0, 1, 2};

  void validate() const;
};

nlohmann::json to_json(const AblationConfig& c);
/// Variants by display name. Missing keys keep their defaults; unknown keys
/// throw ConfigError.
AblationConfig ablation_config_from_json(const nlohmann::json& j);

struct AblationRow {
  Variant variant = Variant::baseline;
  std::vector<EvalReport> runs;  ///< one per seed, in seed order
  /// Medians over seeds of the example-based metrics.
  double mA = 0.0, accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  std::optional<double> view_accuracy;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  /// Throws std::out_of_range when the variant was not run.
  const AblationRow& row(Variant v) const;
  nlohmann::json to_json() const;
  /// Aligned columns: variant, mA, accuracy, precision, recall, F1.
  std::string to_text() const;
};

/// Middle value, or the mean of the two middle values for even counts.
double median(std::vector<double> values);

/// Trains every configured variant at every seed on `train_split` and
/// evaluates on `eval_split`. Variants replace the flags of `base` except
/// stop_view_gradient. With options.out_dir set, each run writes under
/// <out_dir>/<variant>/seed<k>/.
AblationTable run_ablation_suite(const ModelConfig& base, const TrainConfig& cfg,
                                 const AblationConfig& ablation, const PreparedSplit& train_split,
                                 const PreparedSplit& eval_split, const TrainOptions& options = {});

}  // namespace vala

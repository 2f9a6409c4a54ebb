#include "vala/engine/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vala/data/preprocess.hpp"
#include "vala/metrics/losses.hpp"
#include "vala/numerics/errors.hpp"
#include "vala/numerics/json_util.hpp"
#include "vala/numerics/ops.hpp"

namespace vala {

namespace {

constexpr std::uint64_t kStreamSalt = 0x5851f42d4c957f2dull;
constexpr std::size_t kEvalChunk = 200;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

void check_rate(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("train.") + name + " must be a finite non-negative number");
  }
}

double normalized(double v) { return (v - kNormMean) / kNormStd; }

/// Builds the N x 3 x H x W input for `rows`; with `rng` every image is
/// randomly cropped first.
Tensor assemble(const PreparedSplit& split, std::span<const std::size_t> rows, std::size_t pad,
                Rng* rng) {
  const std::size_t per = 3 * split.height * split.width;
  std::vector<double> buf(rows.size() * per);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& src = split.images[rows[b]];
    double* dst = buf.data() + b * per;
    if (rng) {
      const Tensor cropped =
          random_crop(Tensor({3, split.height, split.width}, src), pad, *rng);
      const auto v = cropped.data();
      for (std::size_t i = 0; i < per; ++i) dst[i] = normalized(v[i]);
    } else {
      for (std::size_t i = 0; i < per; ++i) dst[i] = normalized(src[i]);
    }
  }
  return Tensor({rows.size(), 3, split.height, split.width}, std::move(buf));
}

BitMatrix label_rows(const PreparedSplit& split, std::span<const std::size_t> rows) {
  BitMatrix out(rows.size(), split.labels.cols());
  for (std::size_t b = 0; b < rows.size(); ++b)
    for (std::size_t j = 0; j < split.labels.cols(); ++j) out.set(b, j, split.labels.at(rows[b], j));
  return out;
}

std::vector<int> view_rows(const PreparedSplit& split, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(split.views[r]);
  return out;
}

struct StepLoss {
  Tensor view, attr, total;
};

StepLoss objective(const ForwardOutput& out, const ModelConfig& mc, const BitMatrix& labels,
                   std::span<const int> views, const TrainConfig& cfg,
                   std::span<const double> rates) {
  StepLoss l;
  l.attr = attr_loss(out.attr_logits, labels, rates);
  l.view = mc.flags.has_view_branch()
               ? view_loss(out.view.logits, views, static_cast<int>(mc.flags.num_views))
               : Tensor::scalar(0.0);
  l.total = combined_loss(l.view, l.attr, cfg.alpha, cfg.beta);
  return l;
}

void check_model_matches(const VALAModel& model, const PreparedSplit& split) {
  if (model.config().num_attributes != split.labels.cols()) {
    throw ConfigError("attribute count mismatch: model has K = " +
                      std::to_string(model.config().num_attributes) + ", data has K = " +
                      std::to_string(split.labels.cols()));
  }
  const auto& bb = model.config().backbone;
  if (bb.height != split.height || bb.width != split.width) {
    throw ConfigError("input size mismatch: model expects " + std::to_string(bb.height) + "x" +
                      std::to_string(bb.width) + ", data was prepared at " +
                      std::to_string(split.height) + "x" + std::to_string(split.width));
  }
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string to_string(LrSchedule s) { return s == LrSchedule::groups ? "groups" : "phases"; }

LrSchedule parse_lr_schedule(const std::string& text) {
  if (text == "groups") return LrSchedule::groups;
  if (text == "phases") return LrSchedule::phases;
  throw ConfigError("unknown lr schedule '" + text + "' (expected groups or phases)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  check_rate(momentum, "momentum");
  check_rate(weight_decay, "weight_decay");
  check_rate(lr_shallow, "lr_shallow");
  check_rate(lr_deep, "lr_deep");
  check_rate(alpha, "alpha");
  check_rate(beta, "beta");
  if (momentum >= 1.0) throw ConfigError("train.momentum must be below 1");
  if (!(phase_split >= 0.0 && phase_split <= 1.0)) {
    throw ConfigError("train.phase_split must lie in [0, 1]");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"lr_shallow", c.lr_shallow},
          {"lr_deep", c.lr_deep},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"eval_every", c.eval_every},
          {"pad", c.pad},
          {"schedule", to_string(c.schedule)},
          {"phase_split", c.phase_split},
          {"log_steps", c.log_steps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  const std::string where = "train";
  reject_unknown_keys(j,
                      {"batch_size", "momentum", "weight_decay", "lr_shallow", "lr_deep", "epochs",
                       "seed", "alpha", "beta", "eval_every", "pad", "schedule", "phase_split",
                       "log_steps"},
                      where);
  TrainConfig c;
  read_key(j, "batch_size", c.batch_size, where);
  read_key(j, "momentum", c.momentum, where);
  read_key(j, "weight_decay", c.weight_decay, where);
  read_key(j, "lr_shallow", c.lr_shallow, where);
  read_key(j, "lr_deep", c.lr_deep, where);
  read_key(j, "epochs", c.epochs, where);
  read_key(j, "seed", c.seed, where);
  read_key(j, "alpha", c.alpha, where);
  read_key(j, "beta", c.beta, where);
  read_key(j, "eval_every", c.eval_every, where);
  read_key(j, "pad", c.pad, where);
  std::string schedule = to_string(c.schedule);
  read_key(j, "schedule", schedule, where);
  c.schedule = parse_lr_schedule(schedule);
  read_key(j, "phase_split", c.phase_split, where);
  read_key(j, "log_steps", c.log_steps, where);
  c.validate();
  return c;
}

bool PreparedSplit::all_views_present() const {
  return std::all_of(views.begin(), views.end(), [](int v) { return v >= 0; });
}

PreparedSplit prepare_split(const Dataset& dataset, std::size_t height, std::size_t width,
                            std::size_t threads) {
  PreparedSplit out;
  out.height = height;
  out.width = width;
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  const auto decoded = decode_images(dataset, all, threads);
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    const auto& e = dataset.manifest().entries[i];
    if (decoded[i].channels != 3) {
      throw DataError("sample " + e.id + ": expected an RGB image");
    }
    const Tensor resized = resize_bilinear(decoded[i].to_tensor(), height, width);
    out.images.emplace_back(resized.data().begin(), resized.data().end());
    out.ids.push_back(e.id);
  }
  out.attr_names = dataset.manifest().attr_names;
  out.labels = dataset.labels();
  out.views = dataset.views();
  return out;
}

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              double lr, double momentum, double weight_decay) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw TrainingError("non-finite gradient at element " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

std::string config_hash(const ModelConfig& model, const TrainConfig& train) {
  nlohmann::json t = to_json(train);
  t.erase("epochs");
  t.erase("eval_every");
  const nlohmann::json both = {{"model", to_json(model)}, {"train", t}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(both.dump())));
  return buf;
}

TensorArchive make_checkpoint(VALAModel& model, const TrainState& state, const TrainConfig& cfg) {
  TensorArchive archive;
  store_model(archive, model);
  const auto& params = model.parameters();
  if (state.velocities.size() != params.size()) {
    throw std::invalid_argument("make_checkpoint: velocity count does not match the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    archive.add("velocity/" + params[i].name, params[i].value.shape(), state.velocities[i]);
  }
  archive.meta["epoch"] = state.epoch;
  archive.meta["rng"] = state.rng.state();
  archive.meta["train"] = to_json(cfg);
  archive.meta["config_hash"] = config_hash(model.config(), cfg);
  return archive;
}

LoadedRun load_run(const TensorArchive& archive) {
  for (const char* key : {"epoch", "rng", "train", "config_hash"}) {
    if (!archive.meta.contains(key)) {
      throw FormatError(std::string("checkpoint meta lacks '") + key + "'; not a training checkpoint");
    }
  }
  LoadedRun run{restore_model(archive), TrainState{}, train_config_from_json(archive.meta["train"])};
  if (config_hash(run.model.config(), run.config) != archive.meta["config_hash"].get<std::string>()) {
    throw FormatError("checkpoint config hash does not match its stored configuration");
  }
  run.state.epoch = archive.meta["epoch"].get<std::size_t>();
  run.state.rng.set_state(archive.meta["rng"].get<std::string>());
  for (const auto& p : run.model.parameters()) {
    const auto* e = archive.find("velocity/" + p.name);
    if (!e || e->shape != p.value.shape()) {
      throw FormatError("checkpoint velocity for " + p.name + " is missing or misshapen");
    }
    run.state.velocities.push_back(e->data);
  }
  return run;
}

nlohmann::json EvalReport::to_json() const {
  return {{"samples", samples},
          {"example_based", example_based.to_json()},
          {"label_based", label_based.to_json()},
          {"view_accuracy", view_accuracy ? nlohmann::json(*view_accuracy) : nlohmann::json()}};
}

EvalReport evaluate(VALAModel& model, const PreparedSplit& split) {
  check_model_matches(model, split);
  const std::size_t n = split.size(), k = split.labels.cols();
  const bool views = model.config().flags.has_view_branch() && split.all_views_present();
  const std::size_t num_views = model.config().flags.num_views;
  std::vector<double> probs(n * k);
  std::vector<int> predicted;
  NoGradGuard no_grad;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    rows.resize(std::min(kEvalChunk, n - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto out = model.forward(assemble(split, rows, 0, nullptr), BnMode::eval);
    const auto logits = out.attr_logits.data();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double z = logits[i];
      probs[start * k + i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    if (views) {
      const auto vl = out.view.logits.data();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto* row = vl.data() + r * kNumViews;
        predicted.push_back(static_cast<int>(std::max_element(row, row + num_views) - row));
      }
    }
  }
  const BitMatrix preds = threshold(probs, n, k);
  const std::span<const int> truth = views ? std::span<const int>(split.views) : std::span<const int>();
  EvalReport r;
  r.samples = n;
  r.example_based = build_report(preds, split.labels, truth, predicted, MetricMode::example_based);
  r.label_based = build_report(preds, split.labels, truth, predicted, MetricMode::label_based);
  if (views && n > 0) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += predicted[i] == split.views[i];
    r.view_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  }
  return r;
}

LossTerms dataset_loss(VALAModel& model, const PreparedSplit& split, const TrainConfig& cfg,
                       std::span<const double> positive_rates) {
  check_model_matches(model, split);
  if (split.size() == 0) throw DataError("dataset_loss: empty split");
  NoGradGuard no_grad;
  LossTerms sum;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < split.size(); start += kEvalChunk) {
    rows.resize(std::min(kEvalChunk, split.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto out = model.forward(assemble(split, rows, 0, nullptr), BnMode::eval);
    const auto views = view_rows(split, rows);
    const auto l = objective(out, model.config(), label_rows(split, rows), views, cfg, positive_rates);
    const double w = static_cast<double>(rows.size());
    sum.view += w * l.view.item();
    sum.attr += w * l.attr.item();
  }
  const double n = static_cast<double>(split.size());
  sum.view /= n;
  sum.attr /= n;
  sum.total = combined_loss(sum.view, sum.attr, cfg.alpha, cfg.beta);
  return sum;
}

TrainResult train(ModelConfig model_config, const PreparedSplit& data, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  model_config.init_seed = cfg.seed;
  model_config.validate();
  if (data.size() == 0) throw DataError("training split is empty");
  if (model_config.flags.has_view_branch() && !data.all_views_present()) {
    throw DataError("the view branch is enabled but some training samples have no view label");
  }

  TrainResult result{VALAModel(model_config), TrainState{}, {}, std::nullopt};
  TrainState& state = result.state;
  if (options.resume) {
    LoadedRun run = load_run(*options.resume);
    if (config_hash(run.model.config(), run.config) != config_hash(model_config, cfg)) {
      throw ConfigError("resume checkpoint was written by a different configuration");
    }
    result.model = std::move(run.model);
    state = std::move(run.state);
  } else {
    state.rng = Rng(cfg.seed ^ kStreamSalt);
    for (const auto& p : result.model.parameters()) state.velocities.emplace_back(p.value.numel(), 0.0);
  }
  VALAModel& model = result.model;
  check_model_matches(model, data);
  if (options.val) check_model_matches(model, *options.val);

  const auto rates = positive_rates(data.labels);
  const std::string hash = config_hash(model.config(), cfg);
  std::ofstream log_file;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_file.open(*options.out_dir / "train_log.jsonl",
                  options.resume ? std::ios::app : std::ios::trunc);
    if (!log_file) throw ConfigError("cannot write to " + options.out_dir->string());
  }
  auto emit = [&](nlohmann::json entry) {
    if (log_file) log_file << entry.dump() << '\n' << std::flush;
    result.log.push_back(std::move(entry));
  };
  auto snapshot = [&]() {
    TensorArchive archive = make_checkpoint(model, state, cfg);
    if (!data.attr_names.empty()) archive.meta["attr_names"] = data.attr_names;
    return archive;
  };
  auto say = [&](const std::string& line) {
    if (options.progress) options.progress(line);
  };

  if (!options.resume) {
    const LossTerms init = dataset_loss(model, data, cfg, rates);
    emit({{"epoch", 0},
          {"config_hash", hash},
          {"init", {{"loss_vp", init.view}, {"loss_a", init.attr}, {"total", init.total}}}});
  }

  auto& params = model.parameters();
  std::vector<std::size_t> order(data.size());
  const std::size_t phase_end =
      static_cast<std::size_t>(std::llround(cfg.phase_split * static_cast<double>(cfg.epochs)));
  for (std::size_t epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double lr_shallow = cfg.lr_shallow, lr_deep = cfg.lr_deep;
    if (cfg.schedule == LrSchedule::phases) {
      lr_shallow = lr_deep = epoch <= phase_end ? cfg.lr_shallow : cfg.lr_deep;
    }
    std::iota(order.begin(), order.end(), 0);
    state.rng.shuffle(std::span<std::size_t>(order));

    nlohmann::json steps = nlohmann::json::array();
    double sum_v = 0, sum_a = 0, sum_t = 0;
    std::size_t step_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      // A lone trailing sample would give batch statistics with zero variance.
      if (len == 1 && start > 0) break;
      const std::span<const std::size_t> rows(order.data() + start, len);
      const Tensor x = assemble(data, rows, cfg.pad, &state.rng);
      const auto out = model.forward(x, BnMode::train);
      const auto views = view_rows(data, rows);
      const StepLoss loss =
          objective(out, model.config(), label_rows(data, rows), views, cfg, rates);
      const double lv = loss.view.item(), la = loss.attr.item(), lt = loss.total.item();
      if (!std::isfinite(lt)) {
        throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step_count + 1) + " (loss_vp " + fixed(lv) +
                            ", loss_a " + fixed(la) + ")");
      }
      for (auto& p : params) p.value.zero_grad();
      backward(loss.total);
      for (auto& p : params) {
        if (!p.value.has_grad()) continue;
        for (double g : p.value.grad()) {
          if (!std::isfinite(g)) {
            throw TrainingError("non-finite gradient in " + p.name + " at epoch " +
                                std::to_string(epoch) + ", step " + std::to_string(step_count + 1) +
                                " (loss " + fixed(lt) + ")");
          }
        }
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const double lr = p.group == ParamGroup::shallow ? lr_shallow : lr_deep;
        std::vector<double> zeros;
        std::span<const double> g;
        if (p.value.has_grad()) {
          g = p.value.grad();
        } else {
          zeros.assign(p.value.numel(), 0.0);
          g = zeros;
        }
        sgd_step(p.value.mutable_data(), g, state.velocities[i], lr, cfg.momentum, cfg.weight_decay);
      }
      if (cfg.log_steps) steps.push_back({lv, la, lt});
      sum_v += lv;
      sum_a += la;
      sum_t += lt;
      ++step_count;
    }
    state.epoch = epoch;

    const double denom = static_cast<double>(std::max<std::size_t>(step_count, 1));
    nlohmann::json entry = {{"epoch", epoch},
                            {"lr", {{"shallow", lr_shallow}, {"deep", lr_deep}}},
                            {"train",
                             {{"loss_vp", sum_v / denom},
                              {"loss_a", sum_a / denom},
                              {"total", sum_t / denom},
                              {"steps_run", step_count}}}};
    if (cfg.log_steps) entry["train"]["steps"] = std::move(steps);

    const bool checkpoint_epoch =
        epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
    std::string val_note;
    if (checkpoint_epoch && options.val) {
      result.last_eval = evaluate(model, *options.val);
      entry["val"] = result.last_eval->to_json();
      val_note = " val mA " + fixed(result.last_eval->example_based.mA);
    }
    if (checkpoint_epoch && options.out_dir) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_e%03zu.vala", epoch);
      const TensorArchive archive = snapshot();
      save_archive((*options.out_dir / name).string(), archive);
      save_archive((*options.out_dir / "last.vala").string(), archive);
    }
    emit(std::move(entry));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    say("epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.epochs) + " loss " +
        fixed(sum_t / denom) + " (vp " + fixed(sum_v / denom) + ", a " + fixed(sum_a / denom) +
        ")" + val_note + " [" + fixed(secs, 1) + " s]");
  }
  if (options.out_dir && cfg.epochs == 0) {
    save_archive((*options.out_dir / "last.vala").string(), snapshot());
  }
  return result;
}

}  // namespace vala

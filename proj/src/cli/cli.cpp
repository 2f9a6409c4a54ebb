#include "vala/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "vala/data/dataset.hpp"
#include "vala/engine/grad_suite.hpp"
#include "vala/model/checkpoint.hpp"
#include "vala/numerics/errors.hpp"

namespace vala::cli {

namespace {

namespace fs = std::filesystem;

/// Bad invocation: missing arguments, unusable output location.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

void print(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

RunConfig resolve_config(const Globals& g) {
  return g.config.empty() ? RunConfig{} : load_run_config(g.config);
}

fs::path writable_dir(const std::string& out, const std::string& command) {
  if (out.empty()) throw UsageError(command + " needs --out DIR");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw UsageError("cannot create " + out + ": " + ec.message());
  const fs::path probe = fs::path(out) / ".vala_write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw UsageError("cannot write to " + out);
  }
  fs::remove(probe, ec);
  return out;
}

PreparedSplit load_split(const fs::path& data_dir, const std::string& split, const ModelConfig& mc) {
  const fs::path manifest = data_dir / (split + ".jsonl");
  if (!fs::exists(manifest)) throw DataError("no " + split + " manifest at " + manifest.string());
  return prepare_split(Dataset::open(manifest.string()), mc.backbone.height, mc.backbone.width);
}

// Shape mismatches between a checkpoint and data are artifact problems, not
// configuration mistakes of the caller.
template <class F>
auto against_artifacts(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
}

int cmd_synth(const Globals& g, Streams io) {
  RunConfig rc = resolve_config(g);
  if (g.seed) rc.synth.seed = *g.seed;
  rc.synth.validate();
  const fs::path dir = writable_dir(g.out, "synth");
  synth_generate(rc.synth, dir);
  print(io.out, {{"command", "synth"},
                 {"out", dir.string()},
                 {"seed", rc.synth.seed},
                 {"train", rc.synth.train},
                 {"val", rc.synth.val},
                 {"test", rc.synth.test}});
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string variant;
  std::optional<std::size_t> epochs;
  std::string resume;
};

int cmd_train(const Globals& g, const TrainArgs& a, Streams io) {
  RunConfig rc = resolve_config(g);
  if (g.seed) rc.train.seed = *g.seed;
  if (!a.variant.empty()) {
    const bool stop = rc.model.flags.stop_view_gradient;
    rc.model.flags = variant_flags(parse_variant(a.variant));
    rc.model.flags.stop_view_gradient = stop;
  }
  if (a.epochs) rc.train.epochs = *a.epochs;
  rc.train.validate();
  rc.model.validate();
  const fs::path dir = writable_dir(g.out, "train");

  const PreparedSplit train_split = load_split(a.data, "train", rc.model);
  std::optional<PreparedSplit> val;
  if (fs::exists(fs::path(a.data) / "val.jsonl")) val = load_split(a.data, "val", rc.model);

  TrainOptions options;
  options.out_dir = dir;
  options.val = val ? &*val : nullptr;
  options.progress = [&](const std::string& line) { io.err << line << '\n'; };
  std::optional<TensorArchive> resume;
  if (!a.resume.empty()) {
    resume = load_archive(a.resume);
    options.resume = &*resume;
  }
  TrainResult result = train(rc.model, train_split, rc.train, options);

  nlohmann::json summary = {{"command", "train"},
                            {"variant", variant_label(rc.model.flags)},
                            {"epochs", result.state.epoch},
                            {"checkpoint", (dir / "last.vala").string()},
                            {"log", (dir / "train_log.jsonl").string()},
                            {"val", nullptr}};
  if (result.last_eval) summary["val"] = result.last_eval->to_json();
  print(io.out, summary);
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
};

int cmd_eval(const EvalArgs& a, Streams io) {
  VALAModel model = against_artifacts([&] { return restore_model(load_archive(a.checkpoint)); });
  const PreparedSplit split = load_split(a.data, a.split, model.config());
  const EvalReport report = against_artifacts([&] { return evaluate(model, split); });
  print(io.out, report.to_json());
  return 0;
}

int cmd_ablate(const Globals& g, const std::string& data, Streams io) {
  RunConfig rc = resolve_config(g);
  if (g.seed) {
    for (std::size_t i = 0; i < rc.ablation.seeds.size(); ++i) rc.ablation.seeds[i] = *g.seed + i;
  }
  const fs::path dir = writable_dir(g.out, "ablate");
  const PreparedSplit train_split = load_split(data, "train", rc.model);
  const PreparedSplit test_split = load_split(data, "test", rc.model);

  TrainOptions options;
  options.out_dir = dir;
  options.progress = [&](const std::string& line) { io.err << line << '\n'; };
  const AblationTable table =
      run_ablation_suite(rc.model, rc.train, rc.ablation, train_split, test_split, options);

  const nlohmann::json j = table.to_json();
  std::ofstream(dir / "ablation.json") << j.dump(2) << '\n';
  std::ofstream(dir / "ablation.txt") << table.to_text();
  io.err << table.to_text();
  print(io.out, j);
  return 0;
}

struct GradArgs {
  std::size_t count = 1;
  bool skip_model = false;
  bool inject_fault = false;
};

int cmd_gradcheck(const Globals& g, const GradArgs& a, Streams io) {
  GradSuiteOptions options;
  options.first_seed = g.seed.value_or(0);
  options.seeds = a.count;
  options.include_model = !a.skip_model;
  options.inject_fault = a.inject_fault;
  const GradSuiteReport report = run_grad_suite(options);
  print(io.out, report.to_json());
  for (const auto* f : report.failures()) {
    io.err << "FAIL " << f->op << ": max relative error " << f->max_rel_error << " (tol " << f->tol
           << ", " << f->checked << " checked)\n";
  }
  return report.passed() ? 0 : 1;
}

int cmd_heatmap(const Globals& g, const std::string& checkpoint, const std::string& image,
                Streams io) {
  const fs::path dir = writable_dir(g.out, "heatmap");
  const TensorArchive archive = load_archive(checkpoint);
  VALAModel model = against_artifacts([&] { return restore_model(archive); });
  std::vector<std::string> names;
  if (archive.meta.contains("attr_names")) {
    names = archive.meta.at("attr_names").get<std::vector<std::string>>();
  }
  const auto files = against_artifacts([&] { return write_heatmaps(model, read_ppm(image), names, dir); });
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : files) list.push_back(f.string());
  print(io.out, {{"command", "heatmap"}, {"count", files.size()}, {"files", list}});
  return 0;
}

int cmd_info(const Globals& g, const std::string& checkpoint, Streams io) {
  if (!checkpoint.empty()) {
    const TensorArchive archive = load_archive(checkpoint);
    const VALAModel model = against_artifacts([&] { return restore_model(archive); });
    print(io.out, {{"checkpoint", checkpoint},
                   {"variant", variant_label(model.config().flags)},
                   {"param_count", model.param_count()},
                   {"tensors", archive.entries.size()},
                   {"meta", archive.meta}});
    return 0;
  }
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : all_variants()) variants.push_back(variant_name(v));
  print(io.out, {{"tool", "vala"},
                 {"run_config_version", kRunConfigVersion},
                 {"variants", variants},
                 {"config", to_json(resolve_config(g))}});
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"View-attribute localisation for pedestrian attribute recognition", "vala"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--data", train_args.data, "Dataset directory")->required();
  train->add_option("--variant", train_args.variant, "Ablation variant, e.g. VF+4VP");
  train->add_option("--epochs", train_args.epochs, "Epoch count override");
  train->add_option("--resume", train_args.resume, "Continue from this checkpoint");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval->add_option("--split", eval_args.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));

  std::string ablate_data;
  auto* ablate = app.add_subcommand("ablate", "Train and compare the ablation variants");
  ablate->add_option("--data", ablate_data, "Dataset directory")->required();

  GradArgs grad_args;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--count", grad_args.count, "Number of consecutive seeds")
      ->check(CLI::PositiveNumber);
  gradcheck->add_flag("--skip-model", grad_args.skip_model, "Primitives and losses only");
  gradcheck->add_flag("--inject-fault", grad_args.inject_fault)->group("");

  std::string heat_ckpt, heat_image;
  auto* heatmap = app.add_subcommand("heatmap", "Export attention maps as PGM images");
  heatmap->add_option("checkpoint", heat_ckpt, "Checkpoint file")->required();
  heatmap->add_option("image", heat_image, "PPM image")->required();

  std::string info_ckpt;
  auto* info = app.add_subcommand("info", "Describe defaults or a checkpoint");
  info->add_option("checkpoint", info_ckpt, "Checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, err, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, err, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return 2;
  }

  const Streams io{out, err};
  try {
    if (synth->parsed()) return cmd_synth(g, io);
    if (train->parsed()) return cmd_train(g, train_args, io);
    if (eval->parsed()) return cmd_eval(eval_args, io);
    if (ablate->parsed()) return cmd_ablate(g, ablate_data, io);
    if (gradcheck->parsed()) return cmd_gradcheck(g, grad_args, io);
    if (heatmap->parsed()) return cmd_heatmap(g, heat_ckpt, heat_image, io);
    if (info->parsed()) return cmd_info(g, info_ckpt, io);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace vala::cli

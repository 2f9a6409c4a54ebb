#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "vala/data/preprocess.hpp"
#include "vala/data/synth.hpp"
#include "vala/engine/engine.hpp"
#include "vala/metrics/losses.hpp"
#include "vala/numerics/errors.hpp"

using namespace vala;
namespace fs = std::filesystem;

namespace {

PreparedSplit synth_split(Split split, std::size_t n, std::size_t h = 32, std::size_t w = 24) {
  const auto cfg = SynthConfig::defaults();
  PreparedSplit out;
  out.height = h;
  out.width = w;
  out.labels = BitMatrix(n, cfg.attributes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto spec = draw_sample_spec(cfg, split, i);
    const Tensor t = resize_bilinear(render_sample(cfg, spec).to_tensor(), h, w);
    out.images.emplace_back(t.data().begin(), t.data().end());
    out.ids.push_back(spec.id);
    out.views.push_back(spec.view);
    for (std::size_t j = 0; j < spec.attrs.size(); ++j) out.labels.set(i, j, spec.attrs[j]);
  }
  return out;
}

ModelConfig compact(Variant v = Variant::vala) {
  ModelConfig c;
  c.backbone = BackboneConfig::compact();
  c.flags = variant_flags(v);
  return c;
}

std::string archive_bytes(const TensorArchive& a) {
  std::ostringstream os;
  write_archive(os, a);
  return os.str();
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.pad = 2;
  t.seed = 5;
  return t;
}

}  // namespace

TEST_CASE("sgd step") {
  SUBCASE("zero learning rate still updates velocity") {
    std::vector<double> p{1.0, -2.0}, v{0.5, 0.0};
    const std::vector<double> g{0.25, 1.0};
    sgd_step(p, g, v, 0.0, 0.9, 0.1);
    CHECK(p == std::vector<double>{1.0, -2.0});
    CHECK(v[0] == doctest::Approx(0.9 * 0.5 + 0.25 + 0.1 * 1.0).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(1.0 - 0.2).epsilon(1e-15));
  }
  SUBCASE("weight decay alone shrinks by 1 - lr wd") {
    std::vector<double> p{3.0, -0.5}, v{0.0, 0.0};
    const std::vector<double> g{0.0, 0.0};
    sgd_step(p, g, v, 0.01, 0.9, 5e-5);
    CHECK(std::abs(p[0] - 3.0 * (1 - 5e-7)) < 1e-15);
    CHECK(std::abs(p[1] + 0.5 * (1 - 5e-7)) < 1e-15);
  }
  SUBCASE("two momentum steps move lr (g + 1.9 g)") {
    std::vector<double> p{0.0}, v{0.0};
    const std::vector<double> g{0.3};
    sgd_step(p, g, v, 0.01, 0.9, 0.0);
    sgd_step(p, g, v, 0.01, 0.9, 0.0);
    CHECK(std::abs(p[0] + 0.01 * (0.3 + 1.9 * 0.3)) < 1e-15);
  }
  SUBCASE("non-finite gradient halts without touching state") {
    std::vector<double> p{1.0, 2.0}, v{0.1, 0.2};
    const std::vector<double> g{0.5, std::nan("")};
    CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 0.9, 0.0), TrainingError);
    CHECK(p == std::vector<double>{1.0, 2.0});
    CHECK(v == std::vector<double>{0.1, 0.2});
  }
}

TEST_CASE("parameter groups partition the model") {
  for (Variant v : all_variants()) {
    VALAModel m(compact(v));
    std::size_t shallow = 0, deep = 0;
    for (const auto& p : m.parameters()) {
      const bool view = p.name.rfind("view.", 0) == 0;
      CHECK(view == (p.group == ParamGroup::shallow));
      (p.group == ParamGroup::shallow ? shallow : deep) += p.value.numel();
    }
    CHECK(shallow + deep == m.param_count());
    CHECK((shallow > 0) == variant_flags(v).has_view_branch());
  }
}

TEST_CASE("train config") {
  TrainConfig d;
  CHECK(d.batch_size == 64);
  CHECK(d.momentum == 0.9);
  CHECK(d.weight_decay == 5e-5);
  CHECK(d.lr_shallow == 0.1);
  CHECK(d.lr_deep == 0.01);
  CHECK(d.epochs == 30);
  const auto back = train_config_from_json(to_json(d));
  CHECK(to_json(back) == to_json(d));
  CHECK_THROWS_AS(train_config_from_json({{"batchsize", 3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"batch_size", 0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"lr_deep", -1.0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"schedule", "cosine"}}), ConfigError);

  auto other = d;
  other.epochs = 3;
  other.eval_every = 1;
  CHECK(config_hash(ModelConfig{}, d) == config_hash(ModelConfig{}, other));
  other.lr_deep = 0.02;
  CHECK(config_hash(ModelConfig{}, d) != config_hash(ModelConfig{}, other));
}

TEST_CASE("zero epochs leaves the initialisation") {
  const auto data = synth_split(Split::train, 16);
  auto cfg = quick(0);
  auto r = train(compact(), data, cfg);
  auto mc = compact();
  mc.init_seed = cfg.seed;
  VALAModel fresh(mc);
  REQUIRE(fresh.parameters().size() == r.model.parameters().size());
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i) {
    const auto a = fresh.parameters()[i].value.data(), b = r.model.parameters()[i].value.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  CHECK(r.log.size() == 1);
  CHECK(r.log[0]["epoch"] == 0);
}

TEST_CASE("training log and determinism") {
  const auto data = synth_split(Split::train, 48);
  const auto val = synth_split(Split::val, 24);
  auto cfg = quick(2);
  cfg.alpha = 0.7;
  cfg.beta = 1.3;
  TrainOptions opt;
  opt.val = &val;
  auto a = train(compact(), data, cfg, opt);
  auto b = train(compact(), data, cfg, opt);

  REQUIRE(a.log.size() == 3);
  CHECK(a.log == b.log);
  CHECK(archive_bytes(make_checkpoint(a.model, a.state, cfg)) ==
        archive_bytes(make_checkpoint(b.model, b.state, cfg)));
  for (std::size_t e = 1; e < a.log.size(); ++e) {
    const auto& steps = a.log[e]["train"]["steps"];
    CHECK(steps.size() == 3);
    for (const auto& s : steps) {
      const double vp = s[0], at = s[1], total = s[2];
      CHECK(std::abs(total - (0.7 * vp + 1.3 * at)) <= 1e-10);
    }
  }
  CHECK(a.log[2].contains("val"));
  CHECK(a.last_eval->to_json() == a.log[2]["val"]);

  auto other = cfg;
  other.seed = 6;
  auto c = train(compact(), data, other, opt);
  CHECK(c.log[1]["train"] != a.log[1]["train"]);
}

TEST_CASE("first epoch lowers the loss") {
  const auto data = synth_split(Split::train, 256);
  auto cfg = quick(1);
  cfg.batch_size = 32;
  const auto rates = positive_rates(data.labels);
  auto mc = compact();
  mc.init_seed = cfg.seed;
  VALAModel init(mc);
  const LossTerms before = dataset_loss(init, data, cfg, rates);
  auto r = train(compact(), data, cfg);
  const LossTerms after = dataset_loss(r.model, data, cfg, rates);
  CHECK(r.log[0]["init"]["total"].get<double>() == before.total);
  CHECK(after.total < before.total);
  CHECK(before.total == doctest::Approx(before.view + before.attr).epsilon(1e-12));
}

TEST_CASE("training rejects unusable data") {
  auto data = synth_split(Split::train, 8);
  data.views[3] = -1;
  CHECK_THROWS_AS(train(compact(), data, quick(1)), DataError);
  CHECK_NOTHROW(train(compact(Variant::baseline), data, quick(1)));
  PreparedSplit empty;
  empty.height = 32;
  empty.width = 24;
  CHECK_THROWS_AS(train(compact(), empty, quick(1)), DataError);

  const auto full = synth_split(Split::train, 8);
  auto mc = compact();
  mc.num_attributes = 5;
  CHECK_THROWS_AS(train(mc, full, quick(1)), ConfigError);
}

TEST_CASE("checkpoints") {
  const auto data = synth_split(Split::train, 32);
  const auto val = synth_split(Split::val, 40);
  const auto dir = fs::temp_directory_path() / "vala_test_engine_ckpt";
  fs::remove_all(dir);
  auto cfg = quick(4);
  cfg.eval_every = 2;
  TrainOptions opt;
  opt.out_dir = dir;
  opt.val = &val;
  auto full = train(compact(), data, cfg, opt);
  CHECK(fs::exists(dir / "checkpoint_e002.vala"));
  CHECK(fs::exists(dir / "checkpoint_e004.vala"));
  CHECK(fs::exists(dir / "train_log.jsonl"));

  SUBCASE("save, load, save is byte-identical") {
    const auto archive = load_archive((dir / "last.vala").string());
    auto run = load_run(archive);
    CHECK(archive_bytes(make_checkpoint(run.model, run.state, run.config)) == archive_bytes(archive));
    CHECK(run.state.epoch == 4);
    CHECK(evaluate(run.model, val).to_json() == full.last_eval->to_json());
    CHECK(evaluate(run.model, val).to_json() == evaluate(full.model, val).to_json());
  }
  SUBCASE("resuming matches an uninterrupted run") {
    const auto mid = load_archive((dir / "checkpoint_e002.vala").string());
    TrainOptions resume;
    resume.resume = &mid;
    auto rest = train(compact(), data, cfg, resume);
    CHECK(archive_bytes(make_checkpoint(rest.model, rest.state, cfg)) ==
          archive_bytes(load_archive((dir / "last.vala").string())));
    auto changed = cfg;
    changed.lr_deep = 0.5;
    CHECK_THROWS_AS(train(compact(), data, changed, resume), ConfigError);
  }
  SUBCASE("log file mirrors the returned log") {
    std::ifstream is(dir / "train_log.jsonl");
    std::string line;
    std::size_t i = 0;
    while (std::getline(is, line)) CHECK(nlohmann::json::parse(line) == full.log.at(i++));
    CHECK(i == full.log.size());
  }
}

TEST_CASE("phase schedule") {
  const auto data = synth_split(Split::train, 16);
  auto cfg = quick(4);
  cfg.schedule = LrSchedule::phases;
  const auto r = train(compact(), data, cfg);
  for (std::size_t e = 1; e <= 4; ++e) {
    const double expected = e <= 2 ? cfg.lr_shallow : cfg.lr_deep;
    CHECK(r.log[e]["lr"]["shallow"] == expected);
    CHECK(r.log[e]["lr"]["deep"] == expected);
  }
  cfg.schedule = LrSchedule::groups;
  const auto g = train(compact(), data, cfg);
  CHECK(g.log[1]["lr"]["shallow"] == 0.1);
  CHECK(g.log[1]["lr"]["deep"] == 0.01);
}

TEST_CASE("evaluation") {
  const auto test = synth_split(Split::test, 1000);
  auto mc = compact();
  mc.zero_init_final = false;
  VALAModel untrained(mc);
  const auto a = evaluate(untrained, test);
  const auto b = evaluate(untrained, test);
  CHECK(a.to_json() == b.to_json());
  REQUIRE(a.view_accuracy.has_value());
  CHECK(std::abs(*a.view_accuracy - 0.25) <= 0.05);
  CHECK(a.example_based.mode == MetricMode::example_based);
  CHECK(a.label_based.mode == MetricMode::label_based);
  CHECK(a.example_based.mA == a.label_based.mA);

  VALAModel baseline(compact(Variant::baseline));
  CHECK_FALSE(evaluate(baseline, test).view_accuracy.has_value());

  auto wrong = compact();
  wrong.num_attributes = 3;
  VALAModel mismatched(wrong);
  CHECK_THROWS_AS(evaluate(mismatched, test), ConfigError);
}

TEST_CASE("eight samples can be memorised") {
  const auto data = synth_split(Split::train, 8);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 8;
  cfg.pad = 0;
  cfg.log_steps = false;
  auto r = train(compact(), data, cfg);
  const auto report = evaluate(r.model, data);
  CHECK(report.example_based.accuracy >= 0.99);
}

#include <chrono>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "vala/model/checkpoint.hpp"
#include "vala/model/model_grad_check.hpp"
#include "vala/model/vala_model.hpp"
#include "vala/numerics/errors.hpp"
#include "vala/numerics/rng.hpp"

using namespace vala;

namespace {

Tensor random_images(std::size_t n, const BackboneConfig& bb, Rng& rng) {
  std::vector<double> v(n * bb.in_channels * bb.height * bb.width);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor({n, bb.in_channels, bb.height, bb.width}, std::move(v));
}

ModelConfig compact_config(Variant v = Variant::vala) {
  ModelConfig c;
  c.backbone = BackboneConfig::compact();
  c.view_reducer_channels = 8;
  c.view_hidden = 8;
  c.flags = variant_flags(v);
  return c;
}

std::size_t argmax4(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("backbone shapes") {
  const auto desk = BackboneConfig::desk().stage_shapes();
  CHECK(desk[0] == Shape{64, 16, 12});
  CHECK(desk[1] == Shape{96, 8, 6});
  CHECK(desk[2] == Shape{128, 8, 6});
  CHECK(BackboneConfig::full_scale().stage_shapes()[0] == Shape{384, 17, 17});

  BackboneConfig bad;
  bad.height = 66;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  VALAModel model(ModelConfig{});
  const auto out = model.forward(Tensor({3, 64, 48}, 0.0), BnMode::eval);
  CHECK(out.feat_a.shape() == Shape{1, 64, 16, 12});
  CHECK(out.feat_b.shape() == Shape{1, 96, 8, 6});
  CHECK(out.feat_c.shape() == Shape{1, 128, 8, 6});
  CHECK(out.attr_logits.shape() == Shape{1, 8});
  CHECK(out.view.logits.shape() == Shape{1, 4});
  for (double v : out.attr_logits.data()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(model.forward(Tensor({3, 32, 48}, 0.0), BnMode::eval), ShapeError);
}

TEST_CASE("view weights") {
  SUBCASE("zero logits") {
    const auto vw = view_weights_from_logits(Tensor({1, 4}, 0.0), 4);
    for (double v : vw.y_vp1.data()) CHECK(v == 0.5);
    for (double v : vw.y_vp2.data()) CHECK(v == 0.25);
  }
  SUBCASE("logits [10, 0, 0, 0]") {
    const auto vw = view_weights_from_logits(Tensor({4}, std::vector<double>{10, 0, 0, 0}), 4);
    const double z = std::exp(10.0) + 3.0;
    CHECK(vw.y_vp2.data()[0] == doctest::Approx(std::exp(10.0) / z).epsilon(1e-14));
    CHECK(vw.y_vp2.data()[1] == doctest::Approx(1.0 / z).epsilon(1e-14));
    CHECK(vw.y_vp2.data()[0] == doctest::Approx(0.99986).epsilon(1e-5));
  }
  SUBCASE("three views drop the right logit") {
    const auto vw = view_weights_from_logits(Tensor({1, 4}, std::vector<double>{0, 0, 0, 50}), 3);
    CHECK(vw.y_vp2.data()[3] == 0.0);
    CHECK(vw.y_vp2.data()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("the three forms agree on the winning view") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> l(4);
      for (double& x : l) x = rng.uniform(-5, 5);
      const auto vw = view_weights_from_logits(Tensor({4}, l), 4);
      const auto win = argmax4(l);
      CHECK(argmax4(vw.y_vp1.data()) == win);
      CHECK(argmax4(vw.y_vp2.data()) == win);
      double total = 0;
      for (double v : vw.y_vp2.data()) total += v;
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("view_modulate") {
  Rng rng(2);
  std::vector<double> v(8 * 3 * 2);
  for (double& x : v) x = rng.uniform(-1, 1);
  const Tensor feat({8, 3, 2}, v);
  const auto ones = view_modulate(feat, Tensor({4}, 1.0));
  CHECK(std::equal(ones.data().begin(), ones.data().end(), feat.data().begin()));
  const auto first = view_modulate(feat, Tensor({4}, std::vector<double>{1, 0, 0, 0}));
  for (std::size_t i = 0; i < feat.numel(); ++i) {
    CHECK(first.data()[i] == (i < 2 * 6 ? feat.data()[i] : 0.0));
  }
  const auto half = view_modulate(feat, Tensor({4}, 0.5));
  for (std::size_t i = 0; i < feat.numel(); ++i) CHECK(half.data()[i] == 0.5 * feat.data()[i]);
  CHECK_THROWS_AS(view_modulate(Tensor({6, 2, 2}, 1.0), Tensor({4}, 1.0)), ConfigError);
  BackboneConfig odd = BackboneConfig::compact();
  odd.channels[0] = 18;
  ModelConfig cfg;
  cfg.backbone = odd;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("fuse") {
  Rng rng(3);
  std::vector<Tensor> maps;
  for (int t = 0; t < 4; ++t) {
    std::vector<double> v(2 * 3 * 2);
    for (double& x : v) x = rng.uniform(0.01, 0.99);
    maps.emplace_back(Shape{2, 3, 2}, v);
  }
  SUBCASE("one-hot selects a single view") {
    for (std::size_t t = 0; t < 4; ++t) {
      std::vector<double> w(4, 0.0);
      w[t] = 1.0;
      const auto s = fuse(Tensor({4}, w), maps);
      CHECK(std::equal(s.data().begin(), s.data().end(), maps[t].data().begin()));
    }
  }
  SUBCASE("identical maps are weight-invariant, distinct maps are not") {
    const std::vector<Tensor> same(4, maps[0]);
    const auto a = fuse(Tensor({4}, std::vector<double>{0.7, 0.1, 0.15, 0.05}), same);
    const auto b = fuse(Tensor({4}, std::vector<double>{0.25, 0.25, 0.25, 0.25}), same);
    for (std::size_t i = 0; i < a.numel(); ++i) {
      CHECK(std::abs(a.data()[i] - maps[0].data()[i]) < 1e-10);
      CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-10);
    }
    const auto c = fuse(Tensor({4}, std::vector<double>{0.7, 0.1, 0.15, 0.05}), maps);
    const auto d = fuse(Tensor({4}, std::vector<double>{0.25, 0.25, 0.25, 0.25}), maps);
    CHECK(std::abs(c.data()[0] - d.data()[0]) > 1e-6);
  }
  SUBCASE("perturbing one map matters iff its weight is nonzero") {
    const Tensor w({4}, std::vector<double>{0.5, 0.5, 0.0, 0.0});
    const auto base = fuse(w, maps);
    for (std::size_t t = 0; t < 4; ++t) {
      auto changed = maps;
      changed[t] = maps[t].clone();
      changed[t].mutable_data()[0] += 0.1;
      const bool moved = fuse(w, changed).data()[0] != base.data()[0];
      CHECK(moved == (t < 2));
    }
  }
  SUBCASE("constant maps average") {
    std::vector<Tensor> flat;
    for (double c : {0.1, 0.2, 0.3, 0.4}) flat.emplace_back(Shape{2, 3, 2}, c);
    const auto s = fuse(Tensor({4}, 0.25), flat);
    for (double v : s.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("initialisation anchors") {
  Rng rng(4);
  for (auto [variant, expected] : {std::pair{Variant::vala, 0.125},
                                   std::pair{Variant::vf_4vp_rah, 0.25},
                                   std::pair{Variant::vf_4vp_raw, 0.25}}) {
    VALAModel model(compact_config(variant));
    const auto out = model.forward(random_images(2, model.config().backbone, rng), BnMode::train);
    for (double v : out.view.y_vp1.data()) CHECK(std::abs(v - 0.5) < 1e-12);
    for (double v : out.view.y_vp2.data()) CHECK(std::abs(v - 0.25) < 1e-12);
    REQUIRE(out.regional.size() == 4);
    for (const auto& m : out.regional) {
      CHECK(m.shape() == Shape{2, 8, 8, 6});
      for (double v : m.data()) CHECK(std::abs(v - expected) < 1e-12);
    }
  }
}

TEST_CASE("regional maps lie strictly inside (0, 1)") {
  Rng rng(5);
  auto cfg = compact_config();
  cfg.zero_init_final = false;
  VALAModel model(cfg);
  const auto out = model.forward(random_images(2, cfg.backbone, rng), BnMode::train);
  for (const auto& m : out.regional)
    for (double v : m.data()) CHECK((v > 0.0 && v < 1.0));
  CHECK(out.regional[0].data()[0] != out.regional[1].data()[0]);
}

TEST_CASE("variants") {
  for (auto v : all_variants()) {
    CHECK(parse_variant(variant_name(v)) == v);
    CHECK(variant_label(variant_flags(v)) == variant_name(v));
    VALAModel model(compact_config(v));
    Rng rng(6);
    const auto out = model.forward(random_images(2, model.config().backbone, rng), BnMode::train);
    CHECK(out.attr_logits.shape() == Shape{2, 8});
    CHECK(out.view.logits.defined() == variant_flags(v).has_view_branch());
  }
  for (std::size_t a = 0; a < all_variants().size(); ++a)
    for (std::size_t b = a + 1; b < all_variants().size(); ++b)
      CHECK_FALSE(variant_flags(all_variants()[a]) == variant_flags(all_variants()[b]));

  auto count = [](Variant v) { return VALAModel(compact_config(v)).param_count(); };
  CHECK(count(Variant::vf_4vp_rah) < count(Variant::vala));
  CHECK(count(Variant::vf_4vp_raw) < count(Variant::vala));
  CHECK(count(Variant::baseline_ra) < count(Variant::vala));
  CHECK(count(Variant::baseline) < count(Variant::vf));
  CHECK(count(Variant::vf) < count(Variant::vf_4vp));
  CHECK(count(Variant::vf_3vp) == count(Variant::vf_4vp));
  CHECK(parse_variant("vf+4vp+rah") == Variant::vf_4vp_rah);
  CHECK_THROWS_AS(parse_variant("VF+5VP"), ConfigError);
}

TEST_CASE("param_count") {
  ParamRegistry reg(0);
  const auto lin = Linear::create(reg, "l", 7, 5, Init::fan_in, ParamGroup::deep);
  const auto conv = Conv::create(reg, "c", 3, 4, 3, 1, Init::kaiming, ParamGroup::deep);
  CHECK(lin.weight.numel() + lin.bias.numel() == 7 * 5 + 5);
  CHECK(conv.weight.numel() + conv.bias.numel() == 4 * 3 * 9 + 4);

  // Desk default, counted once and pinned.
  VALAModel desk(ModelConfig{});
  std::size_t expected = 0;
  expected += 64 * 3 * 9 + 2 * 64;          // stage A conv + bn
  expected += 96 * 64 * 9 + 2 * 96;          // stage B
  expected += 128 * 96 * 9 + 2 * 128;        // stage C
  expected += 32 * 64 * 9 + 32;              // view reducer
  expected += 16 * 32 + 16 + 4 * 16 + 4;     // view fc1, fc2
  expected += 128 * 128 + 128;               // attention trunk
  expected += 12 * (8 * 128 + 8);            // f1, f2, f3 per view
  expected += 2 * 8;                         // head bn
  CHECK(desk.param_count() == expected);
  CHECK(desk.param_count() == 216164);
}

TEST_CASE("external attention slot") {
  auto cfg = compact_config();
  cfg.flags.attention = Attention::external;
  CHECK_THROWS_AS(VALAModel{cfg}, ConfigError);

  struct Flat final : AttentionModule {
    std::size_t k;
    explicit Flat(std::size_t k) : k(k) {}
    std::vector<Tensor> forward(const Tensor& feat, BnMode) override {
      return std::vector<Tensor>(4, Tensor({feat.dim(0), k, feat.dim(2), feat.dim(3)}, 0.5));
    }
  };
  VALAModel model(cfg, [](const AttentionContext& ctx, ParamRegistry&) {
    return std::make_unique<Flat>(ctx.attributes);
  });
  Rng rng(7);
  const auto out = model.forward(random_images(2, cfg.backbone, rng), BnMode::train);
  CHECK(out.fused.data()[0] == 0.5);
}

TEST_CASE("eval forward is deterministic") {
  Rng rng(8);
  auto cfg = compact_config();
  cfg.zero_init_final = false;
  VALAModel model(cfg);
  const Tensor images = random_images(3, cfg.backbone, rng);
  model.forward(images, BnMode::train);
  const auto a = model.forward(images, BnMode::eval), b = model.forward(images, BnMode::eval);
  CHECK(std::equal(a.attr_logits.data().begin(), a.attr_logits.data().end(),
                   b.attr_logits.data().begin()));
  // Batch composition does not change eval outputs.
  const auto single = model.forward(reshape(slice(images, 0, 1, 1), {3, 32, 24}), BnMode::eval);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(single.attr_logits.data()[j] == doctest::Approx(a.attr_logits.data()[8 + j]).epsilon(1e-12));
  }
}

TEST_CASE("config json") {
  auto cfg = compact_config(Variant::vf_4vp_rab);
  cfg.flags.stop_view_gradient = true;
  const auto back = model_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"num_atributes", 3}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"flags", {{"num_views", 5}}}}), ConfigError);
  const auto preset = model_config_from_json(
      nlohmann::json{{"backbone", {{"preset", "compact"}}}, {"flags", {{"variant", "Baseline"}}}});
  CHECK(preset.backbone.height == 32);
  CHECK(preset.flags == variant_flags(Variant::baseline));
}

TEST_CASE("checkpoint container") {
  Rng rng(9);
  auto cfg = compact_config();
  cfg.zero_init_final = false;
  VALAModel model(cfg);
  const Tensor images = random_images(2, cfg.backbone, rng);
  model.forward(images, BnMode::train);

  TensorArchive archive;
  archive.meta["epoch"] = 3;
  store_model(archive, model);
  std::ostringstream first;
  write_archive(first, archive);
  const std::string bytes = first.str();
  CHECK(bytes.substr(0, 5) == "VALA1");

  std::istringstream in(bytes);
  const auto loaded = read_archive(in);
  std::ostringstream second;
  write_archive(second, loaded);
  CHECK(second.str() == bytes);

  VALAModel restored = restore_model(loaded);
  const auto a = model.forward(images, BnMode::eval), b = restored.forward(images, BnMode::eval);
  CHECK(std::equal(a.attr_logits.data().begin(), a.attr_logits.data().end(),
                   b.attr_logits.data().begin()));

  auto expect_format_error = [](std::string data) {
    std::istringstream is(data);
    CHECK_THROWS_AS(read_archive(is), FormatError);
  };
  std::string bad_magic = bytes;
  bad_magic[4] = '2';
  expect_format_error(bad_magic);
  expect_format_error(bytes.substr(0, bytes.size() - 3));
  expect_format_error(bytes.substr(0, 20));
  expect_format_error(bytes + "x");
  std::string bad_manifest = bytes;
  bad_manifest[13] = '#';
  expect_format_error(bad_manifest);
}

TEST_CASE("assembled model gradients") {
  ModelGradCheckOptions opts;
  opts.directions_per_param = 2;
  for (auto v : {Variant::vala, Variant::vf_4vp, Variant::vf_3vp, Variant::vf_4vp_rah,
                 Variant::vf_4vp_raw, Variant::vfb_vpb_ra, Variant::vf_4vp_rab,
                 Variant::baseline}) {
    const auto report = model_grad_check(compact_config(v), 100 + static_cast<int>(v), opts);
    INFO(report.op << " max rel " << report.max_rel_error << " skipped " << report.skipped_kinks);
    CHECK(report.passed());
  }
  const auto start = std::chrono::steady_clock::now();
  const auto desk = model_grad_check(ModelConfig{}, 1, opts);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  INFO("desk max rel " << desk.max_rel_error << " in " << seconds << " s");
  CHECK(desk.passed());
  MESSAGE("desk model grad check: " << desk.max_rel_error << " (" << desk.checked << " checked, "
                                    << seconds << " s)");
}

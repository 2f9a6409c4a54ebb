#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "vala/data/dataset.hpp"
#include "vala/data/preprocess.hpp"
#include "vala/data/synth.hpp"
#include "vala/numerics/errors.hpp"

using namespace vala;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vala_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

SynthConfig small_synth(std::size_t train = 40, std::size_t val = 10, std::size_t test = 20) {
  auto c = SynthConfig::defaults();
  c.train = train;
  c.val = val;
  c.test = test;
  return c;
}

Tensor random_chw(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> v(c * h * w);
  for (double& x : v) x = rng.uniform();
  return Tensor({c, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("pnm roundtrip and corruption") {
  Rng rng(3);
  Image8 rgb(3, 5, 7), gray(1, 4, 3);
  for (auto& p : rgb.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  for (auto& p : gray.pixels) p = static_cast<std::uint8_t>(rng.below(256));

  for (const auto* img : {&rgb, &gray}) {
    std::stringstream ss;
    write_pnm(ss, *img);
    CHECK(read_pnm(ss) == *img);
  }

  std::stringstream commented("P5\n# a comment\n2 1\n# another\n255\n" + std::string("\x01\x02", 2));
  const auto c = read_pnm(commented);
  CHECK(c.channels == 1);
  CHECK(c.pixels == std::vector<std::uint8_t>{1, 2});

  std::stringstream good;
  write_pnm(good, rgb);
  const std::string bytes = good.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_pnm(truncated), FormatError);
  std::stringstream trailing(bytes + "x");
  CHECK_THROWS_AS(read_pnm(trailing), FormatError);
  std::stringstream magic("P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(read_pnm(magic), FormatError);
  std::stringstream depth("P6\n1 1\n65535\n" + std::string(6, '\0'));
  CHECK_THROWS_AS(read_pnm(depth), FormatError);

  const auto dir = scratch("pnm");
  write_ppm((dir / "a.ppm").string(), rgb);
  write_pgm((dir / "b.pgm").string(), gray);
  CHECK(read_ppm((dir / "a.ppm").string()) == rgb);
  CHECK(read_pgm((dir / "b.pgm").string()) == gray);
  CHECK_THROWS_AS(read_ppm((dir / "missing.ppm").string()), DataError);

  const Tensor t = rgb.to_tensor();
  CHECK(t.shape() == Shape{3, 5, 7});
  CHECK(t.data()[1 * 35 + 2 * 7 + 4] == doctest::Approx(rgb.at(2, 4, 1) / 255.0));
  CHECK(Image8::from_tensor(t) == rgb);
}

TEST_CASE("manifest roundtrip and errors") {
  Manifest m;
  m.num_attributes = 3;
  m.attr_names = {"a", "b", "c"};
  m.entries = {{"x0", "images/x0.ppm", {1, 0, 1}, 2}, {"x1", "images/x1.ppm", {0, 0, 0}, {}}};
  std::stringstream ss;
  write_manifest(ss, m);
  CHECK(parse_manifest(ss) == m);

  SUBCASE("K mismatch cites its line") {
    std::ostringstream text;
    text << R"({"K": 2, "attr_names": ["a", "b"]})" << '\n';
    for (int i = 0; i < 5; ++i) {
      text << R"({"id": "s)" << i << R"(", "image": "i.ppm", "attrs": [0, 1], "view": 0})" << '\n';
    }
    text << R"({"id": "bad", "image": "i.ppm", "attrs": [0, 1, 1], "view": 0})" << '\n';
    std::istringstream is(text.str());
    try {
      parse_manifest(is, "m.jsonl");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("m.jsonl:7:") != std::string::npos);
    }
  }
  SUBCASE("empty file is an empty dataset") {
    std::istringstream is("");
    const auto empty = parse_manifest(is);
    CHECK(empty.entries.empty());
    Dataset ds(empty, ".");
    CHECK(ds.size() == 0);
    CHECK(ds.labels().rows() == 0);
  }
  SUBCASE("malformed lines") {
    const std::string header = R"({"K": 1})" "\n";
    for (const std::string bad :
         {R"({"id": "a", "image": "i", "attrs": [2]})", R"({"id": "a", "image": "i", "attrs": [1], "view": 4})",
          R"({"id": "a", "image": "i", "attrs": [1], "colour": 1})", "{not json", R"([1, 2])"}) {
      std::istringstream is(header + bad + "\n");
      CHECK_THROWS_WITH_AS(parse_manifest(is, "f"), doctest::Contains("f:2:"), FormatError);
    }
    std::istringstream dup(header + R"({"id": "a", "image": "i", "attrs": [1]})" "\n" +
                           R"({"id": "a", "image": "j", "attrs": [0]})" "\n");
    CHECK_THROWS_WITH_AS(parse_manifest(dup, "f"), doctest::Contains("f:3:"), FormatError);
  }
}

TEST_CASE("missing image names the sample") {
  const auto dir = scratch("missing");
  Manifest m;
  m.num_attributes = 1;
  m.entries = {{"gone", "images/gone.ppm", {1}, 0}};
  save_manifest((dir / "m.jsonl").string(), m);
  const auto ds = Dataset::open((dir / "m.jsonl").string());
  CHECK_THROWS_WITH_AS(ds.decode(0), doctest::Contains("gone"), DataError);
}

TEST_CASE("random crop") {
  Rng rng(11);
  const Tensor img = random_chw(3, 6, 5, rng);

  SUBCASE("pad 0 is identity and still draws twice") {
    Rng a(5), b(5);
    const Tensor out = random_crop(img, 0, a);
    CHECK(std::equal(out.data().begin(), out.data().end(), img.data().begin()));
    b.uniform();
    b.uniform();
    CHECK(a == b);
  }
  SUBCASE("exactly two draws for any pad") {
    for (std::size_t pad : {1u, 4u, 9u}) {
      Rng a(pad), b(pad);
      random_crop(img, pad, a);
      b.uniform();
      b.uniform();
      CHECK(a == b);
    }
  }
  SUBCASE("constant image keeps its value wherever the window overlaps") {
    const Tensor flat({3, 8, 6}, 0.7);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(seed);
      const Tensor out = random_crop(flat, 4, r);
      CHECK(out.shape() == flat.shape());
      std::size_t kept = 0;
      for (double v : out.data()) {
        CHECK((v == 0.7 || v == 0.0));
        kept += v == 0.7;
      }
      // The window shifts by at most 4 in each direction.
      CHECK(kept >= 3u * 4u * 2u);
    }
  }
  SUBCASE("output is a shifted copy") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r(seed), replay(seed);
      const std::size_t pad = 2;
      const Tensor out = random_crop(img, pad, r);
      const auto oy = static_cast<long>(std::min<std::size_t>(
          static_cast<std::size_t>(replay.uniform() * 5), 4));
      const auto ox = static_cast<long>(std::min<std::size_t>(
          static_cast<std::size_t>(replay.uniform() * 5), 4));
      for (std::size_t c = 0; c < 3; ++c)
        for (long y = 0; y < 6; ++y)
          for (long x = 0; x < 5; ++x) {
            const long sy = y + oy - 2, sx = x + ox - 2;
            const double want = (sy < 0 || sy >= 6 || sx < 0 || sx >= 5)
                                    ? 0.0
                                    : img.data()[(c * 6 + sy) * 5 + sx];
            CHECK(out.data()[(c * 6 + y) * 5 + x] == want);
          }
    }
  }
  SUBCASE("fixed seed gives a fixed crop") {
    Rng a(99), b(99);
    const Tensor x = random_crop(img, 4, a), y = random_crop(img, 4, b);
    CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  }
}

TEST_CASE("normalize and resize") {
  Rng rng(2);
  const Tensor img = random_chw(3, 8, 6, rng);

  const Tensor same = resize_bilinear(img, 8, 6);
  CHECK(std::equal(same.data().begin(), same.data().end(), img.data().begin()));

  const Tensor half = normalize_resize(Tensor({3, 64, 48}, 0.5), 32, 24);
  CHECK(half.shape() == Shape{3, 32, 24});
  for (double v : half.data()) CHECK(v == 0.0);

  // Halving with half-pixel centres averages each 2 x 2 block.
  const Tensor down = resize_bilinear(img, 4, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) {
        auto at = [&](std::size_t yy, std::size_t xx) { return img.data()[(c * 8 + yy) * 6 + xx]; };
        const double want =
            (at(2 * y, 2 * x) + at(2 * y + 1, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x + 1)) / 4;
        CHECK(down.data()[(c * 4 + y) * 3 + x] == doctest::Approx(want).epsilon(1e-12));
      }

  const Tensor norm = normalize_resize(img, 8, 6);
  for (std::size_t i = 0; i < img.numel(); ++i) {
    CHECK(norm.data()[i] == doctest::Approx((img.data()[i] - kNormMean) / kNormStd));
    CHECK(norm.data()[i] >= -2.0);
    CHECK(norm.data()[i] <= 2.0);
  }
  const Tensor up = resize_bilinear(img, 16, 12);
  for (double v : up.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS(normalize_resize(img, 0, 6));
}

TEST_CASE("synth config validation") {
  CHECK_NOTHROW(SynthConfig::defaults().validate());
  CHECK(SynthConfig::defaults().attributes.size() == 8);

  auto escape = SynthConfig::defaults();
  escape.attributes[0].base.y = -0.05;
  CHECK_THROWS_AS(escape.validate(), ConfigError);

  auto wide = SynthConfig::defaults();
  wide.attributes[1].views[kLeft].dx = 0.45;
  CHECK_THROWS_AS(wide.validate(), ConfigError);

  auto hidden = SynthConfig::defaults();
  for (auto& v : hidden.attributes[2].views) v.visible = false;
  CHECK_THROWS_AS(hidden.validate(), ConfigError);

  const auto roundtrip = synth_config_from_json(to_json(SynthConfig::defaults()));
  CHECK(to_json(roundtrip) == to_json(SynthConfig::defaults()));
  CHECK_THROWS_AS(synth_config_from_json({{"noize", 0.1}}), ConfigError);
  CHECK(synth_config_from_json({{"seed", 3}}).seed == 3);
}

TEST_CASE("synth output is deterministic and consistent") {
  const auto cfg = small_synth();
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  synth_generate(cfg, a);
  synth_generate(cfg, b);

  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    CHECK(slurp(entry.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files == 40u + 10u + 20u + 4u);

  auto other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(render_sample(other, draw_sample_spec(other, Split::train, 0)) !=
        render_sample(cfg, draw_sample_spec(cfg, Split::train, 0)));

  std::set<std::string> ids;
  std::size_t total = 0;
  for (Split split : {Split::train, Split::val, Split::test}) {
    const auto ds = Dataset::open((a / (to_string(split) + ".jsonl")).string());
    CHECK(ds.num_attributes() == 8);
    CHECK(ds.all_views_present());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& e = ds.manifest().entries[i];
      ids.insert(e.id);
      ++total;
      const auto spec = draw_sample_spec(cfg, split, i);
      CHECK(spec.id == e.id);
      CHECK(spec.attrs == e.attrs);
      CHECK(spec.view == *e.view);
      CHECK(render_sample(cfg, spec) == ds.decode(i));
      const Sample s = ds.sample(i);
      CHECK(s.image.shape() == Shape{3, 64, 48});
      for (double v : s.image.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  CHECK(ids.size() == total);
}

TEST_CASE("synth label rates") {
  auto cfg = SynthConfig::defaults();
  cfg.attributes[3].probability = 0.0;
  for (std::size_t j = 0; j < cfg.attributes.size(); ++j) {
    if (j != 3) cfg.attributes[j].probability = 0.5;
  }
  std::vector<std::size_t> positives(cfg.attributes.size(), 0);
  std::array<std::size_t, 4> views{};
  const std::size_t n = 4000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = draw_sample_spec(cfg, Split::train, i);
    ++views[static_cast<std::size_t>(s.view)];
    for (std::size_t j = 0; j < s.attrs.size(); ++j) {
      positives[j] += s.attrs[j];
      if (s.attrs[j]) CHECK(!s.decoys[j]);
    }
  }
  CHECK(positives[3] == 0);
  for (std::size_t j = 0; j < positives.size(); ++j) {
    if (j == 3) continue;
    const double rate = static_cast<double>(positives[j]) / n;
    CHECK(rate >= 0.47);
    CHECK(rate <= 0.53);
  }
  // Uniform views: each count within 5 sigma of 1000.
  for (std::size_t v : views) CHECK(std::abs(static_cast<double>(v) - 1000.0) < 5 * std::sqrt(750.0));
}

TEST_CASE("synth attribute pixels depend on the view") {
  auto cfg = SynthConfig::defaults();
  cfg.noise = 0.0;
  cfg.clutter = 0;
  cfg.color_jitter = 0.0;
  // Find a positive backpack in every view and check it lands where that view puts it.
  std::array<bool, 4> seen{};
  for (std::size_t i = 0; i < 400; ++i) {
    const auto s = draw_sample_spec(cfg, Split::train, i);
    if (!s.attrs[1] || seen[static_cast<std::size_t>(s.view)]) continue;
    seen[static_cast<std::size_t>(s.view)] = true;
    const Image8 img = render_sample(cfg, s);
    auto is_pack = [&](double fx, double fy) {
      const auto x = static_cast<std::size_t>(fx * 48), y = static_cast<std::size_t>(fy * 64);
      const auto& c = cfg.attributes[1].color;
      return img.at(y, x, 0) == std::lround(c[0] * 255) && img.at(y, x, 1) == std::lround(c[1] * 255);
    };
    const double mid = s.oy + 0.38;
    switch (s.view) {
      case kRear: CHECK(is_pack(s.cx + 0.09, s.oy + 0.45)); break;  // below long hair
      case kFront: CHECK(!is_pack(s.cx, mid)); CHECK(is_pack(s.cx - 0.126, mid)); break;
      case kLeft: CHECK(is_pack(s.cx + 0.185, mid)); break;
      case kRight: CHECK(is_pack(s.cx - 0.185, mid)); break;
    }
  }
  CHECK(seen == std::array<bool, 4>{true, true, true, true});
}

TEST_CASE("threaded decode keeps manifest order") {
  const auto dir = scratch("threads");
  synth_generate(small_synth(30, 0, 0), dir);
  const auto ds = Dataset::open((dir / "train.jsonl").string());
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = idx.size() - 1 - i;

  const auto serial = decode_images(ds, idx, 1);
  for (std::size_t t : {2u, 3u, 8u}) CHECK(decode_images(ds, idx, t) == serial);
  for (std::size_t k = 0; k < idx.size(); ++k) CHECK(serial[k] == ds.decode(idx[k]));

  setenv("VALA_THREADS", "3", 1);
  CHECK(decode_threads() == 3);
  setenv("VALA_THREADS", "zero", 1);
  CHECK(decode_threads() >= 1);
  unsetenv("VALA_THREADS");

  fs::remove(ds.image_path(idx[5]));
  fs::remove(ds.image_path(idx[20]));
  for (std::size_t t : {1u, 4u}) {
    CHECK_THROWS_WITH_AS(decode_images(ds, idx, t),
                         doctest::Contains(ds.manifest().entries[idx[5]].id.c_str()), DataError);
  }
}

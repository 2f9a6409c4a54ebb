#include "vala/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vala/data/dataset.hpp"
#include "vala/numerics/errors.hpp"
#include "vala/numerics/json_util.hpp"
#include "vala/numerics/rng.hpp"

namespace vala {

namespace {

using Color = std::array<double, 3>;

constexpr double kHeadTop = 0.08, kHeadBottom = 0.22, kHeadHalf = 0.11;
constexpr double kTorsoBottom = 0.58;
constexpr double kLegsBottom = 0.93;
constexpr double kCreaseTop = 0.71, kCreaseBottom = 0.87;
constexpr double kTorsoHalfWide = 0.20, kTorsoHalfSide = 0.13;
// Clutter stays this far from the figure's centre line.
constexpr double kClutterClearance = 0.30;

const std::vector<Color> kSkin{{0.96, 0.80, 0.69}, {0.87, 0.67, 0.50}, {0.60, 0.42, 0.30},
                               {0.40, 0.27, 0.20}};
const std::vector<Color> kHair{{0.10, 0.08, 0.06}, {0.35, 0.20, 0.10}, {0.70, 0.55, 0.30},
                               {0.80, 0.80, 0.82}};
const std::vector<Color> kClothes{{0.20, 0.25, 0.50}, {0.45, 0.45, 0.48}, {0.28, 0.40, 0.30},
                                  {0.50, 0.22, 0.25}, {0.35, 0.30, 0.45}, {0.55, 0.50, 0.40}};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Box {
  double x0, y0, x1, y1;
};

ShapeBox apply(const ShapeBox& base, const ViewModifier& m) {
  return {base.dx + m.dx, base.y + m.dy, base.w * m.sx, base.h * m.sy};
}

const std::string& shape_of(const AttributeSpec& a, const ViewModifier& m) {
  return m.shape.empty() ? a.shape : m.shape;
}

class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w) : h_(h), w_(w), px_(3 * h * w, 0.0) {}

  void fill(const Box& b, const Color& c) {
    const auto x0 = to_px(b.x0, w_), x1 = std::max(to_px(b.x1, w_), x0 + 1);
    const auto y0 = to_px(b.y0, h_), y1 = std::max(to_px(b.y1, h_), y0 + 1);
    for (std::size_t y = y0; y < std::min(y1, h_); ++y)
      for (std::size_t x = x0; x < std::min(x1, w_); ++x)
        for (std::size_t ch = 0; ch < 3; ++ch) px_[(y * w_ + x) * 3 + ch] = c[ch];
  }

  void shape(const std::string& kind, double cx, double oy, const ShapeBox& s, const Color& c) {
    const double left = cx + s.dx - s.w / 2, top = oy + s.y;
    if (kind == "pair") {
      const double stroke = s.w * 0.2;
      fill({left, top, left + stroke, top + s.h}, c);
      fill({left + s.w - stroke, top, left + s.w, top + s.h}, c);
    } else {
      fill({left, top, left + s.w, top + s.h}, c);
    }
  }

  Image8 finish(double noise, std::uint64_t noise_seed) const {
    Rng rng(noise_seed);
    Image8 img(3, h_, w_);
    for (std::size_t i = 0; i < px_.size(); ++i) {
      const double v = std::clamp(px_[i] + rng.uniform(-noise, noise), 0.0, 1.0);
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
  }

 private:
  static std::size_t to_px(double f, std::size_t extent) {
    return static_cast<std::size_t>(
        std::clamp(std::lround(f * static_cast<double>(extent)), 0L, static_cast<long>(extent)));
  }

  std::size_t h_, w_;
  std::vector<double> px_;
};

Color jittered(const Color& c, double amount, Rng& rng) {
  Color out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + rng.uniform(-amount, amount), 0.0, 1.0);
  return out;
}

template <class T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.below(items.size())];
}

bool side_view(int view) { return view == kLeft || view == kRight; }

// Head with the view cue: full face (front), hair only (rear) or a profile
// with the face on the side the figure is facing.
void draw_figure(Canvas& canvas, const SampleSpec& s) {
  const double cx = s.cx, oy = s.oy;
  const bool side = side_view(s.view);
  const double torso_half = side ? kTorsoHalfSide : kTorsoHalfWide;
  if (side) {
    canvas.fill({cx - 0.08, oy + kTorsoBottom, cx + 0.08, oy + kLegsBottom}, s.legs);
  } else {
    canvas.fill({cx - 0.16, oy + kTorsoBottom, cx - 0.03, oy + kLegsBottom}, s.legs);
    canvas.fill({cx + 0.03, oy + kTorsoBottom, cx + 0.16, oy + kLegsBottom}, s.legs);
  }
  canvas.fill({cx - torso_half, oy + kHeadBottom, cx + torso_half, oy + kTorsoBottom}, s.torso);
  // Body cues: a shirt front and trouser creases seen from the front; a hand,
  // a foot and a crease on the side the figure faces.
  const Color shirt{0.92, 0.90, 0.78};
  if (s.view == kFront) {
    canvas.fill({cx - 0.06, oy + kHeadBottom, cx + 0.06, oy + 0.36}, shirt);
    for (double leg : {cx - 0.095, cx + 0.095}) {
      canvas.fill({leg - 0.025, oy + kCreaseTop, leg + 0.025, oy + kCreaseBottom}, shirt);
    }
  }
  if (side) {
    const double f = s.view == kLeft ? -1.0 : 1.0;
    const double hand0 = cx + f * 0.11, hand1 = cx + f * 0.18;
    canvas.fill({std::min(hand0, hand1), oy + 0.46, std::max(hand0, hand1), oy + 0.52}, s.skin);
    const double foot0 = cx + f * 0.08, foot1 = cx + f * 0.17;
    canvas.fill({std::min(foot0, foot1), oy + 0.88, std::max(foot0, foot1), oy + kLegsBottom},
                s.legs);
    const double crease = cx + f * 0.06;
    canvas.fill({crease - 0.025, oy + kCreaseTop, crease + 0.025, oy + kCreaseBottom}, shirt);
  }

  const Box head{cx - kHeadHalf, oy + kHeadTop, cx + kHeadHalf, oy + kHeadBottom};
  const Color eye{0.05, 0.05, 0.08};
  switch (s.view) {
    case kFront:
      canvas.fill(head, s.skin);
      canvas.fill({head.x0, head.y0, head.x1, oy + 0.11}, s.hair);
      canvas.fill({cx - 0.07, oy + 0.13, cx - 0.03, oy + 0.16}, eye);
      canvas.fill({cx + 0.03, oy + 0.13, cx + 0.07, oy + 0.16}, eye);
      break;
    case kRear:
      canvas.fill(head, s.hair);
      break;
    case kLeft:
      canvas.fill(head, s.skin);
      canvas.fill({head.x0 - 0.04, oy + 0.14, head.x0, oy + 0.18}, s.skin);
      canvas.fill({cx + 0.02, head.y0, head.x1, head.y1}, s.hair);
      canvas.fill({head.x0, head.y0, head.x1, oy + 0.11}, s.hair);
      canvas.fill({cx - 0.09, oy + 0.13, cx - 0.05, oy + 0.16}, eye);
      break;
    default:
      canvas.fill(head, s.skin);
      canvas.fill({head.x1, oy + 0.14, head.x1 + 0.04, oy + 0.18}, s.skin);
      canvas.fill({head.x0, head.y0, cx - 0.02, head.y1}, s.hair);
      canvas.fill({head.x0, head.y0, head.x1, oy + 0.11}, s.hair);
      canvas.fill({cx + 0.05, oy + 0.13, cx + 0.09, oy + 0.16}, eye);
      break;
  }
}

ViewModifier view_mod(double dx, double dy = 0, double sx = 1, double sy = 1,
                      std::string shape = "") {
  ViewModifier m;
  m.dx = dx;
  m.dy = dy;
  m.sx = sx;
  m.sy = sy;
  m.shape = std::move(shape);
  return m;
}

nlohmann::json to_json(const ViewModifier& m) {
  return {{"visible", m.visible}, {"dx", m.dx}, {"dy", m.dy},
          {"sx", m.sx},           {"sy", m.sy}, {"shape", m.shape}};
}

ViewModifier modifier_from_json(const nlohmann::json& j, const std::string& where) {
  reject_unknown_keys(j, {"visible", "dx", "dy", "sx", "sy", "shape"}, where);
  ViewModifier m;
  read_key(j, "visible", m.visible, where);
  read_key(j, "dx", m.dx, where);
  read_key(j, "dy", m.dy, where);
  read_key(j, "sx", m.sx, where);
  read_key(j, "sy", m.sy, where);
  read_key(j, "shape", m.shape, where);
  return m;
}

void check_shape_name(const std::string& shape, const std::string& where) {
  if (shape != "rect" && shape != "pair") {
    throw ConfigError(where + ": unknown shape '" + shape + "' (expected rect or pair)");
  }
}

}  // namespace

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  auto attr = [&](std::string name, Color color, double p, ShapeBox base) {
    AttributeSpec a;
    a.name = std::move(name);
    a.color = color;
    a.probability = p;
    a.base = base;
    c.attributes.push_back(a);
    return &c.attributes.back();
  };

  auto* hat = attr("hat", {0.85, 0.12, 0.12}, 0.4, {0.0, 0.02, 0.28, 0.06});
  hat->views[kLeft] = view_mod(-0.03);
  hat->views[kRight] = view_mod(0.03);

  // Straps from the front, a pack on the back, a bump behind a side view.
  // Absent packs are mimicked by what a pack looks like from another view.
  auto* pack = attr("backpack", {0.90, 0.42, 0.05}, 0.45, {0.0, 0.26, 0.28, 0.24});
  pack->views[kFront] = view_mod(0, -0.03, 1.0, 1.0, "pair");
  pack->views[kLeft] = view_mod(0.185, 0, 0.4);
  pack->views[kRight] = view_mod(-0.185, 0, 0.4);
  pack->decoys[kFront] = view_mod(0);
  pack->decoys[kRear] = view_mod(0, -0.03, 1.0, 1.0, "pair");
  pack->decoys[kLeft] = view_mod(-0.185, 0, 0.4);
  pack->decoys[kRight] = view_mod(0.185, 0, 0.4);
  pack->decoy_probability = 0.5;

  auto* hair = attr("long_hair", {0, 0, 0}, 0.4, {0.0, 0.20, 0.22, 0.20});
  hair->hair_color = true;
  hair->views[kFront] = view_mod(0, -0.08, 1.3, 1.3, "pair");
  hair->views[kLeft] = view_mod(0.10, -0.06, 0.45, 1.2);
  hair->views[kRight] = view_mod(-0.10, -0.06, 0.45, 1.2);

  // A chest print with a small tag on the back of the shoulder. Each view's
  // decoy is another view's look: a centred print seen from behind is a back
  // print, not the logo.
  auto* logo = attr("logo", {0.95, 0.85, 0.10}, 0.35, {0.0, 0.30, 0.14, 0.10});
  logo->views[kRear] = view_mod(0.12, -0.05, 0.7, 0.7);
  logo->views[kLeft] = view_mod(-0.06);
  logo->views[kRight] = view_mod(0.06);
  logo->decoys[kFront] = view_mod(0.12, -0.05, 0.7, 0.7);
  logo->decoys[kRear] = view_mod(0);
  logo->decoys[kLeft] = view_mod(0.06);
  logo->decoys[kRight] = view_mod(-0.06);
  logo->decoy_probability = 0.5;

  auto* skirt = attr("skirt", {0.80, 0.20, 0.70}, 0.3, {0.0, 0.56, 0.38, 0.14});
  skirt->views[kLeft] = view_mod(0, 0, 0.75);
  skirt->views[kRight] = view_mod(0, 0, 0.75);

  auto* shoes = attr("shoes", {0.95, 0.95, 0.95}, 0.4, {0.0, 0.90, 0.34, 0.06});
  shoes->shape = "pair";
  shoes->views[kLeft] = view_mod(-0.04, 0, 0.55, 1.0, "rect");
  shoes->views[kRight] = view_mod(0.04, 0, 0.55, 1.0, "rect");

  // A green band at the waist looks locally like a scarf at the neck.
  auto* scarf = attr("scarf", {0.10, 0.70, 0.25}, 0.35, {0.0, 0.205, 0.26, 0.05});
  scarf->views[kRear] = view_mod(0, 0, 1.0, 0.7);
  scarf->views[kLeft] = view_mod(0, 0, 0.75);
  scarf->views[kRight] = view_mod(0, 0, 0.75);
  for (auto& d : scarf->decoys) d = view_mod(0, 0.33);
  scarf->decoy_probability = 0.5;

  // Carried at the hip on the side that faces the camera; a bag on the
  // ground is not carried.
  auto* bag = attr("handbag", {0.10, 0.75, 0.85}, 0.35, {-0.25, 0.45, 0.09, 0.12});
  bag->views[kRear] = view_mod(0.50);
  bag->views[kLeft] = view_mod(0.08);
  bag->views[kRight] = view_mod(0.42);
  bag->decoys[kFront] = view_mod(0, 0.40);
  bag->decoys[kRear] = view_mod(0.50, 0.40);
  bag->decoys[kLeft] = view_mod(0.08, 0.40);
  bag->decoys[kRight] = view_mod(0.42, 0.40);
  bag->decoy_probability = 0.5;
  return c;
}

void SynthConfig::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synth: canvas must be at least 8x8");
  if (attributes.empty()) throw ConfigError("synth: at least one attribute is required");
  if (!(noise >= 0.0 && noise <= 0.5)) throw ConfigError("synth: noise must lie in [0, 0.5]");
  if (!(color_jitter >= 0.0 && color_jitter <= 0.5)) {
    throw ConfigError("synth: color_jitter must lie in [0, 0.5]");
  }
  if (!(jitter_x >= 0.0 && jitter_x < 0.2) || !(jitter_y >= 0.0 && jitter_y < 0.2)) {
    throw ConfigError("synth: jitter must lie in [0, 0.2)");
  }
  const double eps = 1e-9;
  auto inside = [&](const ShapeBox& s, const std::string& where) {
    if (!(s.w > 0 && s.h > 0)) throw ConfigError(where + ": shape has no area");
    const double x0 = 0.5 - jitter_x + s.dx - s.w / 2, x1 = 0.5 + jitter_x + s.dx + s.w / 2;
    const double y0 = s.y - jitter_y, y1 = s.y + s.h + jitter_y;
    if (x0 < -eps || x1 > 1 + eps || y0 < -eps || y1 > 1 + eps) {
      throw ConfigError(where + ": shape can leave the canvas");
    }
  };
  for (const auto& a : attributes) {
    if (a.name.empty()) throw ConfigError("synth: attribute without a name");
    if (!(a.probability >= 0.0 && a.probability <= 1.0)) {
      throw ConfigError("synth: attribute " + a.name + " probability outside [0, 1]");
    }
    if (!(a.decoy_probability >= 0.0 && a.decoy_probability <= 1.0)) {
      throw ConfigError("synth: attribute " + a.name + " decoy_probability outside [0, 1]");
    }
    check_shape_name(a.shape, "synth: attribute " + a.name);
    bool seen = false;
    for (std::size_t v = 0; v < 4; ++v) {
      const std::string where = "synth: attribute " + a.name + " (" + kViewNames[v] + " view)";
      const auto& m = a.views[v];
      if (m.visible) {
        seen = true;
        if (!m.shape.empty()) check_shape_name(m.shape, where);
        inside(apply(a.base, m), where);
      }
      if (a.decoys[v]) {
        if (!a.decoys[v]->shape.empty()) check_shape_name(a.decoys[v]->shape, where + " decoy");
        inside(apply(a.base, *a.decoys[v]), where + " decoy");
      }
    }
    if (!seen) throw ConfigError("synth: attribute " + a.name + " is invisible from every view");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : c.attributes) {
    nlohmann::json views = nlohmann::json::array(), decoys = nlohmann::json::array();
    for (std::size_t v = 0; v < 4; ++v) {
      views.push_back(to_json(a.views[v]));
      decoys.push_back(a.decoys[v] ? to_json(*a.decoys[v]) : nlohmann::json(nullptr));
    }
    attrs.push_back({{"name", a.name},
                     {"color", a.color},
                     {"hair_color", a.hair_color},
                     {"probability", a.probability},
                     {"shape", a.shape},
                     {"base", {{"dx", a.base.dx}, {"y", a.base.y}, {"w", a.base.w}, {"h", a.base.h}}},
                     {"views", views},
                     {"decoys", decoys},
                     {"decoy_probability", a.decoy_probability}});
  }
  return {{"height", c.height},   {"width", c.width},         {"attributes", attrs},
          {"noise", c.noise},     {"color_jitter", c.color_jitter}, {"clutter", c.clutter},
          {"jitter_x", c.jitter_x}, {"jitter_y", c.jitter_y}, {"train", c.train},
          {"val", c.val},         {"test", c.test},           {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  const std::string where = "synth";
  reject_unknown_keys(j,
                      {"height", "width", "attributes", "noise", "color_jitter", "clutter",
                       "jitter_x", "jitter_y", "train", "val", "test", "seed"},
                      where);
  SynthConfig c = SynthConfig::defaults();
  read_key(j, "height", c.height, where);
  read_key(j, "width", c.width, where);
  read_key(j, "noise", c.noise, where);
  read_key(j, "color_jitter", c.color_jitter, where);
  read_key(j, "clutter", c.clutter, where);
  read_key(j, "jitter_x", c.jitter_x, where);
  read_key(j, "jitter_y", c.jitter_y, where);
  read_key(j, "train", c.train, where);
  read_key(j, "val", c.val, where);
  read_key(j, "test", c.test, where);
  read_key(j, "seed", c.seed, where);
  if (j.contains("attributes")) {
    if (!j["attributes"].is_array()) throw ConfigError("synth.attributes: expected an array");
    c.attributes.clear();
    for (std::size_t i = 0; i < j["attributes"].size(); ++i) {
      const auto& aj = j["attributes"][i];
      const std::string aw = "synth.attributes[" + std::to_string(i) + "]";
      reject_unknown_keys(aj,
                          {"name", "color", "hair_color", "probability", "shape", "base", "views",
                           "decoys", "decoy_probability"},
                          aw);
      AttributeSpec a;
      read_key(aj, "name", a.name, aw);
      read_key(aj, "color", a.color, aw);
      read_key(aj, "hair_color", a.hair_color, aw);
      read_key(aj, "probability", a.probability, aw);
      read_key(aj, "shape", a.shape, aw);
      read_key(aj, "decoy_probability", a.decoy_probability, aw);
      if (aj.contains("base")) {
        const auto& b = aj["base"];
        reject_unknown_keys(b, {"dx", "y", "w", "h"}, aw + ".base");
        read_key(b, "dx", a.base.dx, aw + ".base");
        read_key(b, "y", a.base.y, aw + ".base");
        read_key(b, "w", a.base.w, aw + ".base");
        read_key(b, "h", a.base.h, aw + ".base");
      }
      for (const char* key : {"views", "decoys"}) {
        if (!aj.contains(key)) continue;
        if (!aj[key].is_array() || aj[key].size() != 4) {
          throw ConfigError(aw + "." + key + ": expected 4 entries (front, rear, left, right)");
        }
        for (std::size_t v = 0; v < 4; ++v) {
          const auto& mj = aj[key][v];
          const std::string mw = aw + "." + key + "[" + std::to_string(v) + "]";
          if (std::string(key) == "views") {
            a.views[v] = modifier_from_json(mj, mw);
          } else if (!mj.is_null()) {
            a.decoys[v] = modifier_from_json(mj, mw);
          }
        }
      }
      c.attributes.push_back(std::move(a));
    }
  }
  c.validate();
  return c;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

SampleSpec draw_sample_spec(const SynthConfig& cfg, Split split, std::size_t index) {
  Rng rng(splitmix(cfg.seed ^ splitmix((static_cast<std::uint64_t>(split) << 40) + index)));
  SampleSpec s;
  char id[32];
  std::snprintf(id, sizeof id, "%s_%06zu", to_string(split).c_str(), index);
  s.id = id;
  s.view = static_cast<int>(rng.below(4));
  s.cx = 0.5 + rng.uniform(-cfg.jitter_x, cfg.jitter_x);
  s.oy = rng.uniform(-cfg.jitter_y, cfg.jitter_y);
  const double g = rng.uniform(0.55, 0.75);
  s.background = {g, g, g};
  s.skin = jittered(pick(kSkin, rng), cfg.color_jitter, rng);
  s.hair = jittered(pick(kHair, rng), cfg.color_jitter, rng);
  s.torso = jittered(pick(kClothes, rng), cfg.color_jitter, rng);
  s.legs = jittered(pick(kClothes, rng), cfg.color_jitter, rng);
  for (const auto& a : cfg.attributes) {
    s.attrs.push_back(rng.bernoulli(a.probability) ? 1 : 0);
    s.decoys.push_back(!s.attrs.back() && a.decoys[s.view] && rng.bernoulli(a.decoy_probability));
    s.attr_colors.push_back(jittered(a.hair_color ? s.hair : a.color, cfg.color_jitter, rng));
  }
  for (std::size_t k = 0; k < cfg.clutter; ++k) {
    const double w = rng.uniform(0.06, 0.12), h = rng.uniform(0.05, 0.12);
    const bool left = rng.bernoulli(0.5);
    const double lo = left ? 0.0 : s.cx + kClutterClearance;
    const double hi = left ? s.cx - kClutterClearance - w : 1.0 - w;
    const double x = rng.uniform(lo, std::max(lo, hi));
    const double y = rng.uniform(0.0, 1.0 - h);
    const auto& a = cfg.attributes[rng.below(cfg.attributes.size())];
    const Color c = jittered(a.hair_color ? s.hair : a.color, cfg.color_jitter, rng);
    if (hi > lo) s.clutter.push_back({x, y, x + w, y + h, c});
  }
  s.noise_seed = rng.next_u64();
  return s;
}

Image8 render_sample(const SynthConfig& cfg, const SampleSpec& s) {
  Canvas canvas(cfg.height, cfg.width);
  canvas.fill({0, 0, 1, 1}, s.background);
  for (const auto& p : s.clutter) canvas.fill({p.x0, p.y0, p.x1, p.y1}, p.color);
  draw_figure(canvas, s);
  for (std::size_t j = 0; j < cfg.attributes.size(); ++j) {
    const auto& a = cfg.attributes[j];
    const ViewModifier* m = nullptr;
    if (s.attrs[j] && a.views[s.view].visible) m = &a.views[s.view];
    else if (s.decoys[j]) m = &*a.decoys[s.view];
    if (m) canvas.shape(shape_of(a, *m), s.cx, s.oy, apply(a.base, *m), s.attr_colors[j]);
  }
  return canvas.finish(cfg.noise, s.noise_seed);
}

void synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw ConfigError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  for (Split split : {Split::train, Split::val, Split::test}) {
    const std::size_t count =
        split == Split::train ? cfg.train : (split == Split::val ? cfg.val : cfg.test);
    Manifest m;
    m.num_attributes = cfg.attributes.size();
    for (const auto& a : cfg.attributes) m.attr_names.push_back(a.name);
    for (std::size_t i = 0; i < count; ++i) {
      const SampleSpec s = draw_sample_spec(cfg, split, i);
      const std::string rel = "images/" + s.id + ".ppm";
      write_ppm((out_dir / rel).string(), render_sample(cfg, s));
      m.entries.push_back({s.id, rel, s.attrs, s.view});
    }
    save_manifest((out_dir / (to_string(split) + ".jsonl")).string(), m);
  }
  std::ofstream os(out_dir / "synth_config.json", std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + (out_dir / "synth_config.json").string());
  os << to_json(cfg).dump(2) << '\n';
}

}  // namespace vala

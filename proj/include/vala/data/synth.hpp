#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vala/data/image_io.hpp"

namespace vala {

// All geometry is in canvas fractions. Horizontal positions are offsets from
// the figure's centre line, vertical positions are measured from the top.

struct ShapeBox {
  double dx = 0.0, y = 0.0, w = 0.1, h = 0.1;
};

/// How an attribute (or its decoy) appears from one view.
struct ViewModifier {
  bool visible = true;
  double dx = 0.0, dy = 0.0, sx = 1.0, sy = 1.0;
  /// "rect" or "pair" (the two vertical edges of the box); empty keeps the
  /// attribute's shape.
  std::string shape;
};

struct AttributeSpec {
  std::string name;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  /// Draws in the sample's hair colour instead of `color`.
  bool hair_color = false;
  double probability = 0.5;
  std::string shape = "rect";
  ShapeBox base;
  std::array<ViewModifier, 4> views;
  /// Look-alikes drawn, with decoy_probability, when the attribute is absent.
  std::array<std::optional<ViewModifier>, 4> decoys;
  double decoy_probability = 0.0;
};

struct SynthConfig {
  std::size_t height = 64, width = 48;
  std::vector<AttributeSpec> attributes;
  double noise = 0.08;
  double color_jitter = 0.05;
  /// Distractor patches in the side margins, coloured like attributes.
  std::size_t clutter = 3;
  double jitter_x = 0.06, jitter_y = 0.015;
  std::size_t train = 4000, val = 500, test = 1000;
  std::uint64_t seed = 7;

  /// Eight attributes (hat, backpack, long_hair, logo, skirt, shoes, scarf,
  /// handbag) whose placement and look depend on the view.
  static SynthConfig defaults();
  /// Throws ConfigError when a shape can leave the canvas, an attribute is
  /// invisible from every view, or a value is out of range.
  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
SynthConfig synth_config_from_json(const nlohmann::json& j);

enum class Split { train = 0, val = 1, test = 2 };
std::string to_string(Split s);

struct ClutterPatch {
  double x0, y0, x1, y1;
  std::array<double, 3> color;
};

/// Everything random about one sample; rendering is a pure function of it.
struct SampleSpec {
  std::string id;
  int view = 0;
  std::vector<std::uint8_t> attrs;
  std::vector<std::uint8_t> decoys;
  double cx = 0.5, oy = 0.0;
  std::array<double, 3> background{}, skin{}, hair{}, torso{}, legs{};
  std::vector<std::array<double, 3>> attr_colors;
  std::vector<ClutterPatch> clutter;
  std::uint64_t noise_seed = 0;
};

SampleSpec draw_sample_spec(const SynthConfig& cfg, Split split, std::size_t index);
Image8 render_sample(const SynthConfig& cfg, const SampleSpec& spec);

/// Writes images/<id>.ppm, train.jsonl, val.jsonl, test.jsonl and
/// synth_config.json under `out_dir`.
void synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace vala

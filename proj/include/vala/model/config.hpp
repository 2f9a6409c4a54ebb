#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "vala/numerics/json_util.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

/// Three conv stages standing in for the Inception-A/B/C taps. Each block is
/// conv3x3 + batch norm + relu; a stage's stride is applied by its first block.
struct BackboneConfig {
  std::size_t in_channels = 3;
  std::size_t height = 64;
  std::size_t width = 48;
  std::array<std::size_t, 3> channels{64, 96, 128};
  std::array<std::size_t, 3> strides{4, 2, 1};
  std::array<std::size_t, 3> blocks{1, 1, 1};

  static BackboneConfig desk();
  /// Shape arithmetic target: 384 x 17 x 17 at the first tap.
  static BackboneConfig full_scale();
  /// Small preset used where many training runs must fit in minutes.
  static BackboneConfig compact();

  /// Throws ConfigError on indivisible spatial extents or empty stages.
  void validate() const;
  /// C x H x W of each stage output.
  std::array<Shape, 3> stage_shapes() const;
};

enum class Attention { full, height_only, width_only, none, external };
enum class Tap { A, B, C };

struct ModelFlags {
  bool use_view_feedback = true;
  bool use_view_weights = true;
  int num_views = 4;
  Attention attention = Attention::full;
  Tap view_tap = Tap::A;
  Tap attn_tap = Tap::C;
  /// Stops view-loss gradients at the view predictor input.
  bool stop_view_gradient = false;

  bool has_view_branch() const { return use_view_feedback || use_view_weights; }
  bool operator==(const ModelFlags&) const = default;
};

enum class Variant {
  baseline,
  vf,
  vf_3vp,
  vf_4vp,
  baseline_ra,
  vf_4vp_rah,
  vf_4vp_raw,
  vfb_vpb_ra,
  vf_4vp_rab,
  vala,
};

const std::vector<Variant>& all_variants();
std::string variant_name(Variant v);
/// Accepts the display names ("VF+4VP+RAH") case-insensitively.
Variant parse_variant(const std::string& name);
ModelFlags variant_flags(Variant v);
/// Display name of the variant with exactly these flags, or "custom".
std::string variant_label(const ModelFlags& flags);

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t num_attributes = 8;
  std::size_t view_reducer_channels = 32;
  std::size_t view_hidden = 16;
  ModelFlags flags;
  /// Zero-initialises the last view layer and the per-view attention convs.
  bool zero_init_final = true;
  std::uint64_t init_seed = 0;

  void validate() const;
};

std::string to_string(Attention a);
std::string to_string(Tap t);
Attention parse_attention(const std::string& text);
Tap parse_tap(const std::string& text);

nlohmann::json to_json(const BackboneConfig& c);
nlohmann::json to_json(const ModelFlags& f);
nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
BackboneConfig backbone_from_json(const nlohmann::json& j);
ModelFlags flags_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace vala

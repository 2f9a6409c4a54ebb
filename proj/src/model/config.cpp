#include "vala/model/config.hpp"

#include <algorithm>
#include <cctype>

#include "vala/numerics/errors.hpp"

namespace vala {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct VariantEntry {
  Variant variant;
  const char* name;
  ModelFlags flags;
};

const std::vector<VariantEntry>& variant_table() {
  using A = Attention;
  static const std::vector<VariantEntry> table = {
      {Variant::baseline, "Baseline", {false, false, 4, A::none, Tap::A, Tap::C}},
      {Variant::vf, "VF", {true, false, 4, A::none, Tap::A, Tap::C}},
      {Variant::vf_3vp, "VF+3VP", {true, true, 3, A::none, Tap::A, Tap::C}},
      {Variant::vf_4vp, "VF+4VP", {true, true, 4, A::none, Tap::A, Tap::C}},
      {Variant::baseline_ra, "Baseline+RA", {false, false, 4, A::full, Tap::A, Tap::C}},
      {Variant::vf_4vp_rah, "VF+4VP+RAH", {true, true, 4, A::height_only, Tap::A, Tap::C}},
      {Variant::vf_4vp_raw, "VF+4VP+RAW", {true, true, 4, A::width_only, Tap::A, Tap::C}},
      {Variant::vfb_vpb_ra, "VFB+VPB+RA", {true, true, 4, A::full, Tap::B, Tap::C}},
      {Variant::vf_4vp_rab, "VF+4VP+RAB", {true, true, 4, A::full, Tap::A, Tap::B}},
      {Variant::vala, "VALA", {true, true, 4, A::full, Tap::A, Tap::C}},
  };
  return table;
}

template <std::size_t N>
std::array<std::size_t, N> read_triple(const nlohmann::json& j, const char* key,
                                       std::array<std::size_t, N> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != N) {
    throw ConfigError(std::string("backbone.") + key + ": expected an array of " +
                      std::to_string(N) + " positive integers");
  }
  std::array<std::size_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number_unsigned()) {
      throw ConfigError(std::string("backbone.") + key + ": entries must be positive integers");
    }
    out[i] = v[i].get<std::size_t>();
  }
  return out;
}

std::size_t read_count(const nlohmann::json& j, const char* key, std::size_t fallback,
                       const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_unsigned()) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  return j.at(key).get<std::size_t>();
}

}  // namespace

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::full_scale() {
  BackboneConfig c;
  c.height = 272;
  c.width = 272;
  c.channels = {384, 1024, 1536};
  c.strides = {16, 1, 1};
  return c;
}

BackboneConfig BackboneConfig::compact() {
  BackboneConfig c;
  c.height = 32;
  c.width = 24;
  c.channels = {16, 32, 32};
  c.strides = {2, 2, 1};
  return c;
}

void BackboneConfig::validate() const {
  if (in_channels == 0 || height == 0 || width == 0) {
    throw ConfigError("backbone: input extents must be positive");
  }
  std::size_t cumulative = 1;
  for (std::size_t s = 0; s < 3; ++s) {
    if (channels[s] == 0 || strides[s] == 0 || blocks[s] == 0) {
      throw ConfigError("backbone: stage " + std::to_string(s) +
                        " needs positive channels, stride and block count");
    }
    cumulative *= strides[s];
    if (height % cumulative != 0 || width % cumulative != 0) {
      throw ConfigError("backbone: input " + std::to_string(height) + "x" +
                        std::to_string(width) + " is not divisible by the cumulative stride " +
                        std::to_string(cumulative) + " of stage " + std::to_string(s));
    }
  }
}

std::array<Shape, 3> BackboneConfig::stage_shapes() const {
  validate();
  std::array<Shape, 3> out;
  std::size_t h = height, w = width;
  for (std::size_t s = 0; s < 3; ++s) {
    h /= strides[s];
    w /= strides[s];
    out[s] = {channels[s], h, w};
  }
  return out;
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> list = [] {
    std::vector<Variant> v;
    for (const auto& e : variant_table()) v.push_back(e.variant);
    return v;
  }();
  return list;
}

std::string variant_name(Variant v) {
  for (const auto& e : variant_table()) {
    if (e.variant == v) return e.name;
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(const std::string& name) {
  for (const auto& e : variant_table()) {
    if (lower(e.name) == lower(name)) return e.variant;
  }
  throw ConfigError("unknown model variant '" + name + "'");
}

ModelFlags variant_flags(Variant v) {
  for (const auto& e : variant_table()) {
    if (e.variant == v) return e.flags;
  }
  throw ConfigError("unknown variant");
}

std::string variant_label(const ModelFlags& flags) {
  ModelFlags plain = flags;
  plain.stop_view_gradient = false;
  for (const auto& e : variant_table()) {
    if (e.flags == plain) return e.name;
  }
  return "custom";
}

void ModelConfig::validate() const {
  backbone.validate();
  if (num_attributes == 0) throw ConfigError("model: num_attributes must be positive");
  if (flags.num_views != 3 && flags.num_views != 4) {
    throw ConfigError("model: num_views must be 3 or 4");
  }
  if (flags.view_tap != Tap::A && flags.view_tap != Tap::B) {
    throw ConfigError("model: view_tap must be A or B");
  }
  if (flags.attn_tap != Tap::B && flags.attn_tap != Tap::C) {
    throw ConfigError("model: attn_tap must be B or C");
  }
  if (flags.has_view_branch()) {
    const std::size_t c = backbone.channels[flags.view_tap == Tap::A ? 0 : 1];
    if (c % 4 != 0) {
      throw ConfigError("model: view feedback needs the tapped channel count (" +
                        std::to_string(c) + ") to be divisible by 4");
    }
    if (view_reducer_channels == 0 || view_hidden == 0) {
      throw ConfigError("model: view predictor widths must be positive");
    }
  }
}

std::string to_string(Attention a) {
  switch (a) {
    case Attention::full: return "full";
    case Attention::height_only: return "height_only";
    case Attention::width_only: return "width_only";
    case Attention::none: return "none";
    case Attention::external: return "slot:external";
  }
  return "?";
}

std::string to_string(Tap t) {
  switch (t) {
    case Tap::A: return "A";
    case Tap::B: return "B";
    case Tap::C: return "C";
  }
  return "?";
}

Attention parse_attention(const std::string& text) {
  for (auto a : {Attention::full, Attention::height_only, Attention::width_only, Attention::none,
                 Attention::external}) {
    if (to_string(a) == text) return a;
  }
  throw ConfigError("unknown attention mode '" + text + "'");
}

Tap parse_tap(const std::string& text) {
  for (auto t : {Tap::A, Tap::B, Tap::C}) {
    if (to_string(t) == text) return t;
  }
  throw ConfigError("unknown tap '" + text + "'");
}

nlohmann::json to_json(const BackboneConfig& c) {
  return {{"in_channels", c.in_channels}, {"height", c.height},   {"width", c.width},
          {"channels", c.channels},       {"strides", c.strides}, {"blocks", c.blocks}};
}

nlohmann::json to_json(const ModelFlags& f) {
  return {{"use_view_feedback", f.use_view_feedback},
          {"use_view_weights", f.use_view_weights},
          {"num_views", f.num_views},
          {"attention", to_string(f.attention)},
          {"view_tap", to_string(f.view_tap)},
          {"attn_tap", to_string(f.attn_tap)},
          {"stop_view_gradient", f.stop_view_gradient}};
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"backbone", to_json(c.backbone)},
          {"num_attributes", c.num_attributes},
          {"view_reducer_channels", c.view_reducer_channels},
          {"view_hidden", c.view_hidden},
          {"flags", to_json(c.flags)},
          {"zero_init_final", c.zero_init_final},
          {"init_seed", c.init_seed}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j) {
  const std::string where = "backbone";
  reject_unknown_keys(j, {"preset", "in_channels", "height", "width", "channels", "strides", "blocks"},
                      where);
  BackboneConfig c;
  if (j.contains("preset")) {
    std::string preset;
    read_key(j, "preset", preset, where);
    if (preset == "desk") c = BackboneConfig::desk();
    else if (preset == "compact") c = BackboneConfig::compact();
    else if (preset == "full_scale") c = BackboneConfig::full_scale();
    else throw ConfigError("backbone.preset: unknown preset '" + preset + "'");
  }
  c.in_channels = read_count(j, "in_channels", c.in_channels, where);
  c.height = read_count(j, "height", c.height, where);
  c.width = read_count(j, "width", c.width, where);
  c.channels = read_triple(j, "channels", c.channels);
  c.strides = read_triple(j, "strides", c.strides);
  c.blocks = read_triple(j, "blocks", c.blocks);
  c.validate();
  return c;
}

ModelFlags flags_from_json(const nlohmann::json& j) {
  const std::string where = "flags";
  reject_unknown_keys(j,
                      {"variant", "use_view_feedback", "use_view_weights", "num_views",
                       "attention", "view_tap", "attn_tap", "stop_view_gradient"},
                      where);
  ModelFlags f;
  if (j.contains("variant")) {
    std::string name;
    read_key(j, "variant", name, where);
    f = variant_flags(parse_variant(name));
  }
  read_key(j, "use_view_feedback", f.use_view_feedback, where);
  read_key(j, "use_view_weights", f.use_view_weights, where);
  read_key(j, "num_views", f.num_views, where);
  read_key(j, "stop_view_gradient", f.stop_view_gradient, where);
  std::string text;
  if (j.contains("attention")) {
    read_key(j, "attention", text, where);
    f.attention = parse_attention(text);
  }
  if (j.contains("view_tap")) {
    read_key(j, "view_tap", text, where);
    f.view_tap = parse_tap(text);
  }
  if (j.contains("attn_tap")) {
    read_key(j, "attn_tap", text, where);
    f.attn_tap = parse_tap(text);
  }
  return f;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  const std::string where = "model";
  reject_unknown_keys(j,
                      {"backbone", "num_attributes", "view_reducer_channels", "view_hidden",
                       "flags", "zero_init_final", "init_seed"},
                      where);
  ModelConfig c;
  if (j.contains("backbone")) c.backbone = backbone_from_json(j.at("backbone"));
  if (j.contains("flags")) c.flags = flags_from_json(j.at("flags"));
  c.num_attributes = read_count(j, "num_attributes", c.num_attributes, where);
  c.view_reducer_channels = read_count(j, "view_reducer_channels", c.view_reducer_channels, where);
  c.view_hidden = read_count(j, "view_hidden", c.view_hidden, where);
  read_key(j, "zero_init_final", c.zero_init_final, where);
  read_key(j, "init_seed", c.init_seed, where);
  c.validate();
  return c;
}

}  // namespace vala

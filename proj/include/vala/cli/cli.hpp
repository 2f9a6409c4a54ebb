#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vala/data/image_io.hpp"
#include "vala/data/synth.hpp"
#include "vala/engine/engine.hpp"
#include "vala/model/config.hpp"
#include "vala/model/vala_model.hpp"

namespace vala::cli {

inline constexpr int kRunConfigVersion = 1;

/// Everything a command can be configured with, as one JSON document:
///   {"version": 1, "synth": {...}, "model": {...}, "train": {...},
///    "loss": {"alpha", "beta"}, "ablation": {"variants", "seeds"}}
/// Loss weights live under "loss" only; the train section rejects them.
struct RunConfig {
  SynthConfig synth = SynthConfig::defaults();
  ModelConfig model;
  TrainConfig train;
  AblationConfig ablation;
};

nlohmann::json to_json(const RunConfig& c);
/// Throws ConfigError on a missing or unsupported version, unknown keys at
/// any level, or invalid values. Missing sections keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Min-max scales `map` (h x w) to 0..255, a constant map becoming all 0,
/// and upsamples it to out_h x out_w by nearest neighbour.
Image8 heatmap_image(std::span<const double> map, std::size_t h, std::size_t w,
                     std::size_t out_h, std::size_t out_w);

/// Writes <attr>_<view>.pgm for every attribute and view plus
/// <attr>_fused.pgm, at the model's input resolution. Returns the paths in
/// attribute-major order. Throws DataError when the model has no attention
/// maps or the image does not fit the model.
std::vector<std::filesystem::path> write_heatmaps(VALAModel& model, const Image8& image,
                                                  const std::vector<std::string>& attr_names,
                                                  const std::filesystem::path& out_dir);

/// Entry point of the vala tool. Machine-readable results go to `out` as
/// JSON, diagnostics to `err`. Returns 0 on success, 1 on a runtime or
/// check failure, 2 on a configuration or usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vala::cli

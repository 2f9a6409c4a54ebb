#include <algorithm>
#include <cctype>
#include <cmath>

#include "vala/cli/cli.hpp"
#include "vala/data/dataset.hpp"
#include "vala/data/preprocess.hpp"
#include "vala/numerics/errors.hpp"

namespace vala::cli {

namespace {

std::string file_stem(const std::string& name) {
  std::string s = name;
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-') c = '_';
  }
  return s;
}

}  // namespace

Image8 heatmap_image(std::span<const double> map, std::size_t h, std::size_t w,
                     std::size_t out_h, std::size_t out_w) {
  if (map.size() != h * w || h == 0 || w == 0) {
    throw std::invalid_argument("heatmap_image: map size does not match h x w");
  }
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  const double range = *hi - *lo;
  Image8 out(1, out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = y * h / out_h;
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t sx = x * w / out_w;
      const double v = range > 0.0 ? (map[sy * w + sx] - *lo) / range : 0.0;
      out.at(y, x, 0) = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  }
  return out;
}

std::vector<std::filesystem::path> write_heatmaps(VALAModel& model, const Image8& image,
                                                  const std::vector<std::string>& attr_names,
                                                  const std::filesystem::path& out_dir) {
  const auto& cfg = model.config();
  const auto& bb = cfg.backbone;
  if (image.channels != bb.in_channels) {
    throw DataError("image has " + std::to_string(image.channels) + " channels, the model expects " +
                    std::to_string(bb.in_channels));
  }
  if (!attr_names.empty() && attr_names.size() != cfg.num_attributes) {
    throw DataError("checkpoint names " + std::to_string(attr_names.size()) +
                    " attributes but the model predicts " + std::to_string(cfg.num_attributes));
  }
  const Tensor input = normalize_resize(image.to_tensor(), bb.height, bb.width);
  ForwardOutput out;
  {
    NoGradGuard no_grad;
    out = model.forward(input, BnMode::eval);
  }
  if (out.regional.empty() || !out.fused.defined()) {
    throw DataError("the checkpoint's variant has no regional attention maps");
  }

  const std::size_t k = cfg.num_attributes;
  const std::size_t h = out.fused.dim(2), w = out.fused.dim(3);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const Tensor& maps, std::size_t j, const std::string& stem) {
    const auto plane = maps.data().subspan(j * h * w, h * w);
    const auto path = out_dir / (stem + ".pgm");
    write_pgm(path.string(), heatmap_image(plane, h, w, bb.height, bb.width));
    written.push_back(path);
  };
  for (std::size_t j = 0; j < k; ++j) {
    const std::string attr = file_stem(attr_names.empty() ? "attr" + std::to_string(j) : attr_names[j]);
    for (std::size_t t = 0; t < out.regional.size(); ++t) {
      emit(out.regional[t], j, attr + "_" + kViewNames[t]);
    }
    emit(out.fused, j, attr + "_fused");
  }
  return written;
}

}  // namespace vala::cli

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vala/data/image_io.hpp"
#include "vala/metrics/bit_matrix.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

enum ViewIndex : int { kFront = 0, kRear = 1, kLeft = 2, kRight = 3 };
inline const std::array<std::string, 4> kViewNames{"front", "rear", "left", "right"};

struct ManifestEntry {
  std::string id;
  std::string image;  ///< relative to the manifest directory
  std::vector<std::uint8_t> attrs;
  std::optional<int> view;

  bool operator==(const ManifestEntry&) const = default;
};

/// JSONL: a header object {K, attr_names, view_names}, then one
/// {id, image, attrs, view} object per line. An empty file is an empty
/// dataset.
struct Manifest {
  std::size_t num_attributes = 0;
  std::vector<std::string> attr_names;
  std::vector<std::string> view_names{kViewNames.begin(), kViewNames.end()};
  std::vector<ManifestEntry> entries;

  bool operator==(const Manifest&) const = default;
};

/// Errors cite 1-based line numbers of `source`.
Manifest parse_manifest(std::istream& is, const std::string& source = "<manifest>");
void write_manifest(std::ostream& os, const Manifest& manifest);
Manifest read_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& manifest);

struct Sample {
  std::string id;
  Tensor image;  ///< 3 x H x W in [0, 1]
  std::vector<std::uint8_t> attrs;
  std::optional<int> view;
};

/// Manifest plus its directory; images are decoded on demand.
class Dataset {
 public:
  static Dataset open(const std::string& manifest_path);
  Dataset(Manifest manifest, std::filesystem::path root);

  std::size_t size() const { return manifest_.entries.size(); }
  std::size_t num_attributes() const { return manifest_.num_attributes; }
  const Manifest& manifest() const { return manifest_; }
  std::filesystem::path image_path(std::size_t i) const;

  Image8 decode(std::size_t i) const;
  Sample sample(std::size_t i) const;
  BitMatrix labels() const;
  /// -1 where the view is missing.
  std::vector<int> views() const;
  bool all_views_present() const;

 private:
  Manifest manifest_;
  std::filesystem::path root_;
};

/// Worker count for image decoding: VALA_THREADS when set to a positive
/// integer, otherwise the hardware concurrency.
std::size_t decode_threads();

/// Decodes `indices` on up to `threads` workers. The result follows the
/// order of `indices` whatever order the workers finish in.
std::vector<Image8> decode_images(const Dataset& dataset, std::span<const std::size_t> indices,
                                  std::size_t threads);

}  // namespace vala

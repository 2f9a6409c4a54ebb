#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "vala/model/vala_model.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

// Binary container layout (all integers little-endian):
//   "VALA1"
//   u64 manifest length, then the manifest as compact JSON:
//     {"entries": [{"name", "shape", "offset"}...], "meta": {...}, "payload_count": n}
//   u64 payload count n, then n little-endian IEEE-754 doubles.
// Offsets count doubles from the start of the payload.

inline constexpr char kCheckpointMagic[] = "VALA1";

struct ArchiveEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(const std::string& name) const;
  void add(std::string name, Shape shape, std::vector<double> data);
};

/// Throws FormatError on any structural problem.
void write_archive(std::ostream& os, const TensorArchive& archive);
TensorArchive read_archive(std::istream& is);
void save_archive(const std::string& path, const TensorArchive& archive);
TensorArchive load_archive(const std::string& path);

/// Parameters go under "param/<name>", running stats under "buffer/<name>";
/// meta["model"] holds the model config.
void store_model(TensorArchive& archive, VALAModel& model);
/// Rebuilds the model from meta["model"] and copies every stored tensor.
VALAModel restore_model(const TensorArchive& archive);
/// Copies stored tensors into an existing model of the same layout.
void load_model_state(VALAModel& model, const TensorArchive& archive);

}  // namespace vala

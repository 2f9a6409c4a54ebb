#include "vala/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "vala/numerics/errors.hpp"

namespace vala {

namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;
// Rejects absurd lengths from corrupted headers before allocating.
constexpr std::uint64_t kMaxManifestBytes = 1ull << 30;

void put_u64(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::string entries_error(const std::string& msg) { return "checkpoint manifest: " + msg; }

}  // namespace

const ArchiveEntry* TensorArchive::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void TensorArchive::add(std::string name, Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("archive entry " + name + ": shape does not match data");
  }
  entries.push_back({std::move(name), std::move(shape), std::move(data)});
}

void write_archive(std::ostream& os, const TensorArchive& archive) {
  nlohmann::json manifest;
  manifest["meta"] = archive.meta;
  manifest["entries"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : archive.entries) {
    manifest["entries"].push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
    offset += e.data.size();
  }
  manifest["payload_count"] = offset;
  const std::string text = manifest.dump();

  os.write(kCheckpointMagic, kMagicLength);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u64(os, offset);
  for (const auto& e : archive.entries) {
    for (double d : e.data) put_u64(os, std::bit_cast<std::uint64_t>(d));
  }
  if (!os) throw FormatError("failed to write checkpoint");
}

TensorArchive read_archive(std::istream& is) {
  char magic[kMagicLength];
  if (!is.read(magic, kMagicLength) || std::memcmp(magic, kCheckpointMagic, kMagicLength) != 0) {
    throw FormatError("not a checkpoint: bad magic (expected VALA1)");
  }
  const std::uint64_t manifest_len = get_u64(is, "manifest length");
  if (manifest_len > kMaxManifestBytes) throw FormatError("checkpoint manifest length is corrupt");
  std::string text(manifest_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(manifest_len))) {
    throw FormatError("checkpoint truncated inside the manifest");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(entries_error(e.what()));
  }
  if (!manifest.is_object() || !manifest.contains("entries") || !manifest["entries"].is_array() ||
      !manifest.contains("payload_count") || !manifest["payload_count"].is_number_unsigned()) {
    throw FormatError(entries_error("missing entries or payload_count"));
  }
  const std::uint64_t declared = manifest["payload_count"].get<std::uint64_t>();
  const std::uint64_t count = get_u64(is, "payload count");
  if (count != declared) throw FormatError("checkpoint payload count disagrees with manifest");

  TensorArchive archive;
  archive.meta = manifest.value("meta", nlohmann::json::object());
  std::set<std::string> names;
  std::uint64_t expected_offset = 0;
  struct Pending {
    std::string name;
    Shape shape;
  };
  std::vector<Pending> pending;
  for (const auto& e : manifest["entries"]) {
    try {
      Pending p{e.at("name").get<std::string>(), e.at("shape").get<Shape>()};
      const auto offset = e.at("offset").get<std::uint64_t>();
      if (offset != expected_offset) throw FormatError(entries_error("offsets are not contiguous"));
      if (p.shape.empty()) throw FormatError(entries_error(p.name + " has an empty shape"));
      for (auto d : p.shape) {
        if (d == 0) throw FormatError(entries_error(p.name + " has a zero extent"));
      }
      if (!names.insert(p.name).second) {
        throw FormatError(entries_error("duplicate entry " + p.name));
      }
      expected_offset += shape_numel(p.shape);
      if (expected_offset > count) throw FormatError(entries_error(p.name + " exceeds payload"));
      pending.push_back(std::move(p));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(entries_error(ex.what()));
    }
  }
  if (expected_offset != count) throw FormatError(entries_error("payload has unclaimed values"));

  for (auto& p : pending) {
    std::vector<double> data(shape_numel(p.shape));
    for (double& d : data) d = std::bit_cast<double>(get_u64(is, "payload"));
    archive.entries.push_back({std::move(p.name), std::move(p.shape), std::move(data)});
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("checkpoint has trailing bytes after the payload");
  }
  return archive;
}

void save_archive(const std::string& path, const TensorArchive& archive) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_archive(os, archive);
}

TensorArchive load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  return read_archive(is);
}

void store_model(TensorArchive& archive, VALAModel& model) {
  archive.meta["model"] = to_json(model.config());
  for (const auto& p : model.parameters()) {
    archive.add("param/" + p.name, p.value.shape(),
                std::vector<double>(p.value.data().begin(), p.value.data().end()));
  }
  for (const auto& b : model.buffers()) {
    archive.add("buffer/" + b.name, {b.values->size()}, *b.values);
  }
}

void load_model_state(VALAModel& model, const TensorArchive& archive) {
  for (auto& p : model.parameters()) {
    const auto* e = archive.find("param/" + p.name);
    if (!e) throw FormatError("checkpoint is missing parameter " + p.name);
    if (e->shape != p.value.shape()) {
      throw FormatError("checkpoint parameter " + p.name + " has shape " + shape_str(e->shape) +
                        ", model expects " + shape_str(p.value.shape()));
    }
    std::copy(e->data.begin(), e->data.end(), p.value.mutable_data().begin());
  }
  for (auto& b : model.buffers()) {
    const auto* e = archive.find("buffer/" + b.name);
    if (!e) throw FormatError("checkpoint is missing buffer " + b.name);
    if (e->data.size() != b.values->size()) {
      throw FormatError("checkpoint buffer " + b.name + " has the wrong length");
    }
    *b.values = e->data;
  }
}

VALAModel restore_model(const TensorArchive& archive) {
  if (!archive.meta.contains("model")) throw FormatError("checkpoint has no model config");
  VALAModel model(model_config_from_json(archive.meta["model"]));
  load_model_state(model, archive);
  return model;
}

}  // namespace vala

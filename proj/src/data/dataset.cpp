#include "vala/data/dataset.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vala/numerics/errors.hpp"

namespace vala {

namespace {

std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key,
                                     const std::string& where) {
  if (!j.contains(key)) return {};
  if (!j[key].is_array()) throw FormatError(where + key + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw FormatError(where + key + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

Manifest parse_manifest(std::istream& is, const std::string& source) {
  Manifest m;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(is, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = at_line(source, line);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      throw FormatError(where + "malformed JSON");
    }
    if (!j.is_object()) throw FormatError(where + "expected a JSON object");

    if (!have_header) {
      if (!j.contains("K") || !j["K"].is_number_unsigned()) {
        throw FormatError(where + "header must carry a non-negative integer K");
      }
      for (const auto& item : j.items()) {
        if (item.key() != "K" && item.key() != "attr_names" && item.key() != "view_names") {
          throw FormatError(where + "unknown header key '" + item.key() + "'");
        }
      }
      m.num_attributes = j["K"].get<std::size_t>();
      m.attr_names = string_list(j, "attr_names", where);
      if (j.contains("view_names")) m.view_names = string_list(j, "view_names", where);
      if (!m.attr_names.empty() && m.attr_names.size() != m.num_attributes) {
        throw FormatError(where + "attr_names has " + std::to_string(m.attr_names.size()) +
                          " names but K = " + std::to_string(m.num_attributes));
      }
      if (m.view_names.size() != 4) throw FormatError(where + "view_names must list 4 views");
      have_header = true;
      continue;
    }

    ManifestEntry e;
    for (const auto& item : j.items()) {
      const auto& k = item.key();
      if (k != "id" && k != "image" && k != "attrs" && k != "view") {
        throw FormatError(where + "unknown key '" + k + "'");
      }
    }
    if (!j.contains("id") || !j["id"].is_string()) throw FormatError(where + "missing string id");
    if (!j.contains("image") || !j["image"].is_string()) {
      throw FormatError(where + "missing string image");
    }
    if (!j.contains("attrs") || !j["attrs"].is_array()) {
      throw FormatError(where + "missing attrs array");
    }
    e.id = j["id"].get<std::string>();
    e.image = j["image"].get<std::string>();
    if (!ids.insert(e.id).second) throw FormatError(where + "duplicate id '" + e.id + "'");
    if (j["attrs"].size() != m.num_attributes) {
      throw FormatError(where + "attrs has length " + std::to_string(j["attrs"].size()) +
                        ", expected K = " + std::to_string(m.num_attributes));
    }
    for (const auto& v : j["attrs"]) {
      if (!v.is_number_integer() || (v.get<long long>() != 0 && v.get<long long>() != 1)) {
        throw FormatError(where + "attrs entries must be 0 or 1");
      }
      e.attrs.push_back(static_cast<std::uint8_t>(v.get<int>()));
    }
    if (j.contains("view") && !j["view"].is_null()) {
      if (!j["view"].is_number_integer() || j["view"].get<long long>() < 0 ||
          j["view"].get<long long>() > 3) {
        throw FormatError(where + "view must be 0-3 or null");
      }
      e.view = j["view"].get<int>();
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(std::ostream& os, const Manifest& m) {
  nlohmann::json header = {{"K", m.num_attributes}, {"attr_names", m.attr_names},
                           {"view_names", m.view_names}};
  os << header.dump() << '\n';
  for (const auto& e : m.entries) {
    nlohmann::json j = {{"id", e.id}, {"image", e.image}, {"attrs", e.attrs}};
    j["view"] = e.view ? nlohmann::json(*e.view) : nlohmann::json(nullptr);
    os << j.dump() << '\n';
  }
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path);
  return parse_manifest(is, path);
}

void save_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_manifest(os, manifest);
}

Dataset Dataset::open(const std::string& manifest_path) {
  return Dataset(read_manifest(manifest_path),
                 std::filesystem::path(manifest_path).parent_path());
}

Dataset::Dataset(Manifest manifest, std::filesystem::path root)
    : manifest_(std::move(manifest)), root_(std::move(root)) {}

std::filesystem::path Dataset::image_path(std::size_t i) const {
  return root_ / manifest_.entries.at(i).image;
}

Image8 Dataset::decode(std::size_t i) const {
  const auto path = image_path(i);
  if (!std::filesystem::exists(path)) {
    throw DataError("sample " + manifest_.entries[i].id + " (entry " + std::to_string(i + 1) +
                    "): missing image file " + path.string());
  }
  return read_ppm(path.string());
}

Sample Dataset::sample(std::size_t i) const {
  const auto& e = manifest_.entries.at(i);
  return {e.id, decode(i).to_tensor(), e.attrs, e.view};
}

BitMatrix Dataset::labels() const {
  BitMatrix m(size(), num_attributes());
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < num_attributes(); ++j) m.set(i, j, manifest_.entries[i].attrs[j]);
  return m;
}

std::vector<int> Dataset::views() const {
  std::vector<int> v;
  for (const auto& e : manifest_.entries) v.push_back(e.view ? *e.view : -1);
  return v;
}

bool Dataset::all_views_present() const {
  for (const auto& e : manifest_.entries) {
    if (!e.view) return false;
  }
  return true;
}

std::size_t decode_threads() {
  if (const char* env = std::getenv("VALA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<Image8> decode_images(const Dataset& dataset, std::span<const std::size_t> indices,
                                  std::size_t threads) {
  std::vector<Image8> out(indices.size());
  threads = std::max<std::size_t>(1, std::min(threads, indices.size()));
  if (threads <= 1) {
    for (std::size_t k = 0; k < indices.size(); ++k) out[k] = dataset.decode(indices[k]);
    return out;
  }
  // Failures are kept per slot so the reported error does not depend on
  // thread scheduling.
  std::vector<std::exception_ptr> failures(indices.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < indices.size();) {
      try {
        out[k] = dataset.decode(indices[k]);
      } catch (...) {
        failures[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return out;
}

}  // namespace vala

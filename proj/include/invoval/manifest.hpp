#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "invoval/core.hpp"
#include "invoval/image.hpp"

namespace invoval {

/// Maps a manifest-relative image path to a decoded image. Throws on failure.
using ImageResolver = std::function<ImagePtr(const std::string& relative_path)>;

/// Resolver that decodes files relative to `base_dir`.
inline ImageResolver directory_resolver(std::filesystem::path base_dir) {
  return [base = std::move(base_dir)](const std::string& rel) -> ImagePtr {
    const auto full = base / rel;
    if (!std::filesystem::exists(full)) {
      throw Error(ErrorKind::ImageLoad, "image path does not resolve: '" + full.string() + "'");
    }
    return std::make_shared<const DocumentImage>(load_image(full));
  };
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorKind::MalformedManifest, path + ": missing field '" + key + "'");
  return *it;
}

inline void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                                const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw Error(ErrorKind::MalformedManifest, path + ": unknown field '" + it.key() + "'");
  }
}

inline BBox parse_box(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorKind::MalformedManifest, path + ": box must be [x_min, y_min, x_max, y_max]");
  }
  std::array<double, 4> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::MalformedManifest, path + ": box coordinates must be numbers");
    v[i] = j[i].get<double>();
  }
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace detail

/// Parses and validates a manifest document. Images are resolved eagerly so
/// that box bounds can be checked; the first violation is reported with its
/// JSON path.
inline DatasetManifest parse_manifest(std::string_view text, const ImageResolver& resolve) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::MalformedManifest, std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorKind::MalformedManifest, "$: manifest must be an object");
  detail::reject_unknown_keys(root, {"split", "records"}, "$");

  DatasetManifest out;
  const auto& split = detail::require(root, "split", "$");
  if (!split.is_string() || !parse_split(split.get<std::string>())) {
    throw Error(ErrorKind::MalformedManifest, "$.split: expected one of train|validation|test");
  }
  out.split = *parse_split(split.get<std::string>());

  const auto& records = detail::require(root, "records", "$");
  if (!records.is_array()) throw Error(ErrorKind::MalformedManifest, "$.records: expected an array");

  std::set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string rpath = "$.records[" + std::to_string(i) + "]";
    const auto& jr = records[i];
    if (!jr.is_object()) throw Error(ErrorKind::MalformedManifest, rpath + ": expected an object");
    detail::reject_unknown_keys(jr, {"id", "image", "handwritten", "annotations"}, rpath);

    DocumentRecord rec;
    const auto& id = detail::require(jr, "id", rpath);
    const auto& image = detail::require(jr, "image", rpath);
    const auto& hw = detail::require(jr, "handwritten", rpath);
    const auto& anns = detail::require(jr, "annotations", rpath);
    if (!id.is_string() || id.get<std::string>().empty())
      throw Error(ErrorKind::MalformedManifest, rpath + ".id: expected a nonempty string");
    if (!image.is_string()) throw Error(ErrorKind::MalformedManifest, rpath + ".image: expected a string");
    if (!hw.is_boolean()) throw Error(ErrorKind::MalformedManifest, rpath + ".handwritten: expected a boolean");
    if (!anns.is_array()) throw Error(ErrorKind::MalformedManifest, rpath + ".annotations: expected an array");

    rec.id = id.get<std::string>();
    if (!seen.insert(rec.id).second) throw Error(ErrorKind::MalformedManifest, rpath + ".id: duplicate id '" + rec.id + "'");
    rec.image_path = image.get<std::string>();
    rec.handwritten = hw.get<bool>();
    rec.image = resolve(rec.image_path);
    if (!rec.image || rec.image->empty()) throw Error(ErrorKind::ImageLoad, rpath + ".image: resolver returned no image");

    for (std::size_t k = 0; k < anns.size(); ++k) {
      const std::string apath = rpath + ".annotations[" + std::to_string(k) + "]";
      const auto& ja = anns[k];
      if (!ja.is_object()) throw Error(ErrorKind::MalformedManifest, apath + ": expected an object");
      detail::reject_unknown_keys(ja, {"class", "box", "text"}, apath);
      const auto& cls = detail::require(ja, "class", apath);
      if (!cls.is_string()) throw Error(ErrorKind::MalformedManifest, apath + ".class: expected a string");
      auto fc = parse_field_class(cls.get<std::string>());
      if (!fc) throw Error(ErrorKind::UnknownClass, apath + ".class: '" + cls.get<std::string>() + "'");

      Annotation a;
      a.field_class = *fc;
      a.box = detail::parse_box(detail::require(ja, "box", apath), apath + ".box");
      if (!a.box.valid()) {
        throw Error(ErrorKind::BoxOutOfBounds, apath + ".box: inverted, zero-area, negative or non-finite box");
      }
      if (!a.box.inside(rec.image->width(), rec.image->height())) {
        throw Error(ErrorKind::BoxOutOfBounds, apath + ".box: exceeds image bounds " + std::to_string(rec.image->width()) +
                                                   "x" + std::to_string(rec.image->height()));
      }
      if (auto t = ja.find("text"); t != ja.end() && !t->is_null()) {
        if (!t->is_string()) throw Error(ErrorKind::MalformedManifest, apath + ".text: expected a string or null");
        a.text = t->get<std::string>();
      }
      rec.annotations.push_back(std::move(a));
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : manifest.records) {
    nlohmann::json anns = nlohmann::json::array();
    for (const auto& a : r.annotations) {
      anns.push_back({{"class", std::string(to_string(a.field_class))},
                      {"box", a.box.as_array()},
                      {"text", a.text ? nlohmann::json(*a.text) : nlohmann::json(nullptr)}});
    }
    records.push_back({{"id", r.id}, {"image", r.image_path}, {"handwritten", r.handwritten}, {"annotations", anns}});
  }
  return {{"split", std::string(to_string(manifest.split))}, {"records", records}};
}

inline std::string serialize_manifest(const DatasetManifest& manifest) { return manifest_to_json(manifest).dump(2) + "\n"; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

/// Loads a manifest file; image paths resolve against its directory.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), directory_resolver(path.parent_path()));
}

/// Writes the manifest and every in-memory image to `dir` (images at their
/// recorded relative paths).
inline void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir,
                           std::string_view filename = "manifest.json") {
  std::filesystem::create_directories(dir);
  for (const auto& r : manifest.records)
    if (r.image) save_image(*r.image, dir / r.image_path);
  write_file(dir / filename, serialize_manifest(manifest));
}

}  // namespace invoval

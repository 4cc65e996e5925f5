#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "invoval/error.hpp"

namespace invoval {

// ---------------------------------------------------------------------------
// Field classes
// ---------------------------------------------------------------------------

/// Annotated element kinds. `Other` is the background label produced by token
/// labeling; it never appears in annotation files.
enum class FieldClass : std::uint8_t {
  Title,
  Client,
  Stamp,
  Signature,
  Date,
  Total,
  TotalValue,
  Other,
};

inline constexpr std::size_t kNumClasses = 8;

inline constexpr std::array<FieldClass, kNumClasses> kAllClasses = {
    FieldClass::Title, FieldClass::Client, FieldClass::Stamp,      FieldClass::Signature,
    FieldClass::Date,  FieldClass::Total,  FieldClass::TotalValue, FieldClass::Other};

/// The five keyword (text) fields, in the order reports list them.
inline constexpr std::array<FieldClass, 5> kTextFields = {
    FieldClass::Title, FieldClass::Client, FieldClass::Date, FieldClass::Total, FieldClass::TotalValue};

/// Classes produced by the stamp/signature detector.
inline constexpr std::array<FieldClass, 2> kObjectClasses = {FieldClass::Stamp, FieldClass::Signature};

constexpr std::size_t index_of(FieldClass c) noexcept { return static_cast<std::size_t>(c); }

constexpr bool is_object_class(FieldClass c) noexcept {
  return c == FieldClass::Stamp || c == FieldClass::Signature;
}

constexpr bool is_text_field(FieldClass c) noexcept {
  return c != FieldClass::Other && !is_object_class(c);
}

inline std::string_view to_string(FieldClass c) {
  switch (c) {
    case FieldClass::Title: return "Title";
    case FieldClass::Client: return "Client";
    case FieldClass::Stamp: return "Stamp";
    case FieldClass::Signature: return "Signature";
    case FieldClass::Date: return "Date";
    case FieldClass::Total: return "Total";
    case FieldClass::TotalValue: return "TotalValue";
    case FieldClass::Other: return "O";
  }
  return "O";
}

/// Parses a class name. "O" (or "Other") is accepted only when `allow_other`.
inline std::optional<FieldClass> parse_field_class(std::string_view s, bool allow_other = false) {
  for (FieldClass c : kAllClasses) {
    if (c == FieldClass::Other) continue;
    if (s == to_string(c)) return c;
  }
  if (allow_other && (s == "O" || s == "Other")) return FieldClass::Other;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Axis-aligned box in pixel coordinates, corner form, origin top-left.
struct BBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }

  /// Finite, non-negative, and strictly positive extent on both axes.
  bool valid() const noexcept {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max) &&
           x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max;
  }

  bool inside(double width, double height) const noexcept { return x_max <= width && y_max <= height; }

  std::array<double, 4> as_array() const noexcept { return {x_min, y_min, x_max, y_max}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

/// Intersection over union; 0 for disjoint boxes.
inline double bbox_iou(const BBox& a, const BBox& b) noexcept {
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Smallest box containing both.
inline BBox envelope(const BBox& a, const BBox& b) noexcept {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min), std::max(a.x_max, b.x_max),
          std::max(a.y_max, b.y_max)};
}

inline BBox clip(const BBox& box, double width, double height) noexcept {
  return {std::clamp(box.x_min, 0.0, width), std::clamp(box.y_min, 0.0, height), std::clamp(box.x_max, 0.0, width),
          std::clamp(box.y_max, 0.0, height)};
}

/// Smallest distance from any box edge to any image border.
inline double border_distance(const BBox& box, double width, double height) noexcept {
  return std::min({box.x_min, box.y_min, width - box.x_max, height - box.y_max});
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

struct Annotation {
  FieldClass field_class = FieldClass::Title;
  BBox box;
  std::optional<std::string> text;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// 8-bit RGB raster, row-major, interleaved channels.
class DocumentImage {
 public:
  static constexpr int kChannels = 3;

  DocumentImage() = default;

  DocumentImage(int width, int height, std::uint8_t fill = 255)
      : DocumentImage(width, height,
                      std::vector<std::uint8_t>(checked_size(width, height), fill)) {}

  DocumentImage(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != checked_size(width, height)) {
      throw Error(ErrorKind::InvalidParams, "pixel buffer length does not match width x height x 3");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }
  std::vector<std::uint8_t>& pixels() noexcept { return pixels_; }

  std::uint8_t at(int x, int y, int c) const { return pixels_[offset(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c) { return pixels_[offset(x, y, c)]; }

  friend bool operator==(const DocumentImage&, const DocumentImage&) = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidParams, "image dimensions must be positive");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels;
  }

  std::size_t offset(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * kChannels +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

using ImagePtr = std::shared_ptr<const DocumentImage>;

struct DocumentRecord {
  std::string id;
  std::string image_path;  // relative to the manifest directory
  ImagePtr image;
  std::vector<Annotation> annotations;
  bool handwritten = false;

  std::vector<BBox> boxes() const {
    std::vector<BBox> out;
    out.reserve(annotations.size());
    for (const auto& a : annotations) out.push_back(a.box);
    return out;
  }
};

enum class Split { Train, Validation, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

struct DatasetManifest {
  Split split = Split::Train;
  std::vector<DocumentRecord> records;

  const DocumentRecord* find(std::string_view id) const {
    for (const auto& r : records)
      if (r.id == id) return &r;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Class statistics
// ---------------------------------------------------------------------------

/// Per-class integer counts indexed by FieldClass.
struct ClassCounts {
  std::array<std::size_t, kNumClasses> counts{};

  std::size_t operator[](FieldClass c) const noexcept { return counts[index_of(c)]; }
  std::size_t& operator[](FieldClass c) noexcept { return counts[index_of(c)]; }

  std::size_t total() const noexcept {
    std::size_t t = 0;
    for (auto v : counts) t += v;
    return t;
  }

  ClassCounts& operator+=(const ClassCounts& o) noexcept {
    for (std::size_t i = 0; i < kNumClasses; ++i) counts[i] += o.counts[i];
    return *this;
  }
  friend ClassCounts operator+(ClassCounts a, const ClassCounts& b) noexcept { return a += b; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

inline ClassCounts class_distribution(const DatasetManifest& manifest) {
  ClassCounts out;
  for (const auto& r : manifest.records)
    for (const auto& a : r.annotations) ++out[a.field_class];
  return out;
}

}  // namespace invoval

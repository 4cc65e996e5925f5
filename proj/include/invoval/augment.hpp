#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include "invoval/core.hpp"
#include "invoval/image.hpp"
#include "invoval/seed.hpp"

namespace invoval {

enum class Interpolation { Nearest, Bilinear, Cubic };

inline int cv_interpolation(Interpolation i) {
  switch (i) {
    case Interpolation::Nearest: return cv::INTER_NEAREST;
    case Interpolation::Bilinear: return cv::INTER_LINEAR;
    case Interpolation::Cubic: return cv::INTER_CUBIC;
  }
  return cv::INTER_LINEAR;
}

struct ImageSize {
  int width = 0;
  int height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Photometric jitter. Brightness, contrast and saturation factors are drawn
/// from [1 - x, 1 + x]; the hue shift from [-hue, hue] of the hue circle.
struct JitterParams {
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.05;
  double probability = 0.5;
};

struct MedianBlurParams {
  int kernel = 3;
};

/// One multiplier per channel, drawn uniformly from [min, max].
struct NoiseParams {
  double min = 0.5;
  double max = 1.0;
};

struct KeywordAugConfig {
  int median_blur_kernel = 3;
  double blur_probability = 0.5;
  JitterParams jitter{};
  double pad_probability = 1.0;
  double pad_fraction = 0.05;
  double max_rotation_deg = 5.0;
  double rotation_probability = 1.0;
  Interpolation rotation_interpolation = Interpolation::Cubic;
  double crop_margin_px = 20.0;
  std::optional<ImageSize> resize_target = ImageSize{850, 1100};
};

struct DetectionAugConfig {
  double max_rotation_deg = 10.0;
  double rotation_probability = 0.5;
  Interpolation rotation_interpolation = Interpolation::Bilinear;
  JitterParams jitter{.probability = 0.4};
  double noise_probability = 0.3;
  NoiseParams noise{};
};

namespace detail {

inline void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidParams, std::string(name) + " must lie in [0, 1]");
}

inline void check_jitter(const JitterParams& j) {
  check_probability(j.probability, "jitter probability");
  if (!(j.brightness >= 0 && j.brightness < 1 && j.contrast >= 0 && j.contrast < 1 && j.saturation >= 0 &&
        j.saturation < 1 && j.hue >= 0 && j.hue <= 0.5)) {
    throw Error(ErrorKind::InvalidParams, "jitter ranges out of bounds");
  }
}

inline void check_noise(const NoiseParams& n) {
  if (!(n.min >= 0.5 && n.max <= 1.0 && n.min <= n.max)) {
    throw Error(ErrorKind::InvalidParams, "noise multiplier range must lie within [0.5, 1.0]");
  }
}

}  // namespace detail

inline void validate(const KeywordAugConfig& c) {
  if (c.median_blur_kernel < 1 || c.median_blur_kernel % 2 == 0)
    throw Error(ErrorKind::InvalidParams, "median blur kernel must be odd and positive");
  detail::check_probability(c.blur_probability, "blur probability");
  detail::check_probability(c.pad_probability, "pad probability");
  detail::check_probability(c.rotation_probability, "rotation probability");
  detail::check_jitter(c.jitter);
  if (!(c.pad_fraction >= 0 && c.pad_fraction <= 0.5)) throw Error(ErrorKind::InvalidParams, "pad fraction out of range");
  if (!(c.max_rotation_deg >= 0 && c.max_rotation_deg <= 180)) throw Error(ErrorKind::InvalidParams, "max rotation out of range");
  if (!(c.crop_margin_px >= 0)) throw Error(ErrorKind::InvalidParams, "crop margin must be non-negative");
  if (c.resize_target && (c.resize_target->width <= 0 || c.resize_target->height <= 0))
    throw Error(ErrorKind::InvalidParams, "resize target must be positive");
}

inline void validate(const DetectionAugConfig& c) {
  detail::check_probability(c.rotation_probability, "rotation probability");
  detail::check_probability(c.noise_probability, "noise probability");
  detail::check_jitter(c.jitter);
  detail::check_noise(c.noise);
  if (!(c.max_rotation_deg >= 0 && c.max_rotation_deg <= 180)) throw Error(ErrorKind::InvalidParams, "max rotation out of range");
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Rotation about the image center onto an expanded canvas that holds the
/// whole rotated image. Positive angles rotate counter-clockwise on screen.
struct RotationPlan {
  double angle_deg = 0;
  int canvas_width = 0;
  int canvas_height = 0;
  double cos_a = 1;
  double sin_a = 0;
  double src_cx = 0, src_cy = 0;  // edge coordinates
  double dst_cx = 0, dst_cy = 0;

  cv::Point2d map(double x, double y) const noexcept {
    const double dx = x - src_cx, dy = y - src_cy;
    return {cos_a * dx + sin_a * dy + dst_cx, -sin_a * dx + cos_a * dy + dst_cy};
  }

  /// Axis-aligned envelope of the four rotated corners, clipped to the canvas.
  BBox map(const BBox& b) const noexcept {
    const std::array<cv::Point2d, 4> pts = {map(b.x_min, b.y_min), map(b.x_max, b.y_min), map(b.x_max, b.y_max),
                                            map(b.x_min, b.y_max)};
    BBox out{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
    for (const auto& p : pts) {
      out.x_min = std::min(out.x_min, p.x);
      out.y_min = std::min(out.y_min, p.y);
      out.x_max = std::max(out.x_max, p.x);
      out.y_max = std::max(out.y_max, p.y);
    }
    return clip(out, canvas_width, canvas_height);
  }

  /// Affine matrix in OpenCV's pixel-center convention.
  cv::Mat pixel_matrix() const {
    const double ox = 0.5 - src_cx, oy = 0.5 - src_cy;
    cv::Mat m = (cv::Mat_<double>(2, 3) << cos_a, sin_a, cos_a * ox + sin_a * oy + dst_cx - 0.5,  //
                 -sin_a, cos_a, -sin_a * ox + cos_a * oy + dst_cy - 0.5);
    return m;
  }
};

inline RotationPlan plan_rotation(int width, int height, double angle_deg) {
  RotationPlan p;
  p.angle_deg = angle_deg;
  const double rad = angle_deg * std::numbers::pi / 180.0;
  p.cos_a = std::cos(rad);
  p.sin_a = std::sin(rad);
  const double ac = std::abs(p.cos_a), as = std::abs(p.sin_a);
  // The small slack keeps exact right angles from growing the canvas by one pixel.
  p.canvas_width = std::max(1, static_cast<int>(std::ceil(ac * width + as * height - 1e-6)));
  p.canvas_height = std::max(1, static_cast<int>(std::ceil(as * width + ac * height - 1e-6)));
  p.src_cx = width / 2.0;
  p.src_cy = height / 2.0;
  p.dst_cx = p.canvas_width / 2.0;
  p.dst_cy = p.canvas_height / 2.0;
  return p;
}

struct RotationResult {
  DocumentImage image;
  std::vector<BBox> boxes;
  bool guard_triggered = false;
};

/// Rotates image and boxes together. With `margin_px > 0`, the rotation is
/// skipped (input returned, `guard_triggered` set) if any rotated box would
/// end closer than `margin_px` to a border of the rotated canvas.
inline RotationResult rotate_with_boxes(const DocumentImage& image, const std::vector<BBox>& boxes, double angle_deg,
                                        Interpolation interpolation, double margin_px, double max_angle_deg) {
  if (!std::isfinite(angle_deg) || std::abs(angle_deg) > max_angle_deg) {
    throw Error(ErrorKind::InvalidAngle,
                "rotation of " + std::to_string(angle_deg) + " deg exceeds bound " + std::to_string(max_angle_deg));
  }
  if (angle_deg == 0.0) return {image, boxes, false};

  const RotationPlan plan = plan_rotation(image.width(), image.height(), angle_deg);
  std::vector<BBox> rotated;
  rotated.reserve(boxes.size());
  for (const auto& b : boxes) {
    BBox r = plan.map(b);
    if (margin_px > 0 && border_distance(r, plan.canvas_width, plan.canvas_height) < margin_px) {
      return {image, boxes, true};
    }
    rotated.push_back(r);
  }

  cv::Mat dst;
  cv::warpAffine(as_mat(image), dst, plan.pixel_matrix(), cv::Size(plan.canvas_width, plan.canvas_height),
                 cv_interpolation(interpolation), cv::BORDER_CONSTANT, cv::Scalar(255, 255, 255));
  return {from_mat(dst), std::move(rotated), false};
}

struct ScaleResult {
  DocumentImage image;
  std::vector<BBox> boxes;
};

/// Bilinear resample to the target size; boxes scale per axis.
inline ScaleResult scale_with_boxes(const DocumentImage& image, const std::vector<BBox>& boxes, int target_w,
                                    int target_h) {
  if (target_w <= 0 || target_h <= 0) throw Error(ErrorKind::InvalidParams, "resize target must be positive");
  if (target_w == image.width() && target_h == image.height()) return {image, boxes};
  const double sx = static_cast<double>(target_w) / image.width();
  const double sy = static_cast<double>(target_h) / image.height();
  cv::Mat dst;
  cv::resize(as_mat(image), dst, cv::Size(target_w, target_h), 0, 0, cv::INTER_LINEAR);
  std::vector<BBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    out.push_back(clip({b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy}, target_w, target_h));
  }
  return {from_mat(dst), std::move(out)};
}

/// Replicate-border padding on all four sides; boxes shift by the left/top pad.
inline ScaleResult pad_with_boxes(const DocumentImage& image, const std::vector<BBox>& boxes, int pad_x, int pad_y) {
  if (pad_x < 0 || pad_y < 0) throw Error(ErrorKind::InvalidParams, "padding must be non-negative");
  if (pad_x == 0 && pad_y == 0) return {image, boxes};
  cv::Mat dst;
  cv::copyMakeBorder(as_mat(image), dst, pad_y, pad_y, pad_x, pad_x, cv::BORDER_REPLICATE);
  std::vector<BBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back({b.x_min + pad_x, b.y_min + pad_y, b.x_max + pad_x, b.y_max + pad_y});
  return {from_mat(dst), std::move(out)};
}

// ---------------------------------------------------------------------------
// Photometric operations (geometry untouched)
// ---------------------------------------------------------------------------

using PhotometricParams = std::variant<MedianBlurParams, JitterParams, NoiseParams>;

struct PhotometricResult {
  DocumentImage image;
  /// Values drawn from the stream: jitter {brightness, contrast, saturation,
  /// hue shift}; noise {r, g, b multipliers}; empty for median blur.
  std::vector<double> sampled;
};

namespace detail {

inline DocumentImage to_u8(const cv::Mat& f32) {
  cv::Mat u8;
  f32.convertTo(u8, CV_8UC3);  // rounds and saturates to [0, 255]
  return from_mat(u8);
}

inline PhotometricResult median_blur(const DocumentImage& image, const MedianBlurParams& p) {
  if (p.kernel < 1 || p.kernel % 2 == 0) throw Error(ErrorKind::InvalidParams, "median blur kernel must be odd");
  if (p.kernel == 1) return {image, {}};
  cv::Mat dst;
  cv::medianBlur(as_mat(image), dst, p.kernel);
  return {from_mat(dst), {}};
}

inline void rotate_hue(float& r, float& g, float& b, float shift_deg) {
  const float v = std::max({r, g, b});
  const float d = v - std::min({r, g, b});
  if (d <= 0.0f) return;  // gray pixels have no hue
  const float s = d / v;
  float h = v == r ? 60.0f * (g - b) / d : v == g ? 120.0f + 60.0f * (b - r) / d : 240.0f + 60.0f * (r - g) / d;
  h += shift_deg;
  h -= 360.0f * std::floor(h / 360.0f);
  const float hh = h / 60.0f;
  const int sector = std::min(5, static_cast<int>(hh));
  const float f = hh - static_cast<float>(sector);
  const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

/// Brightness, contrast about the mean luma, saturation about per-pixel luma,
/// then a hue rotation; every stage clamps to [0, 1]. One pass for the mean,
/// one for the pixels.
inline PhotometricResult color_jitter(const DocumentImage& image, const JitterParams& p, SeedStream& stream) {
  check_jitter(p);
  const double b = stream.uniform(1 - p.brightness, 1 + p.brightness);
  const double c = stream.uniform(1 - p.contrast, 1 + p.contrast);
  const double s = stream.uniform(1 - p.saturation, 1 + p.saturation);
  const double h = stream.uniform(-p.hue, p.hue);

  const auto& src = image.pixels();
  const std::size_t n = src.size() / 3;
  const float fb = static_cast<float>(b / 255.0), fc = static_cast<float>(c), fs = static_cast<float>(s);
  const float shift = static_cast<float>(h * 360.0);
  auto luma = [](float r, float g, float bl) { return 0.299f * r + 0.587f * g + 0.114f * bl; };
  auto unit = [](float v) { return std::clamp(v, 0.0f, 1.0f); };

  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = &src[3 * i];
    sum += luma(std::min(px[0] * fb, 1.0f), std::min(px[1] * fb, 1.0f), std::min(px[2] * fb, 1.0f));
  }
  const float mean = n ? static_cast<float>(sum / static_cast<double>(n)) : 0.0f;

  std::vector<std::uint8_t> out(src.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = &src[3 * i];
    float rgb[3];
    for (int k = 0; k < 3; ++k) rgb[k] = unit((std::min(px[k] * fb, 1.0f) - mean) * fc + mean);
    const float y = luma(rgb[0], rgb[1], rgb[2]);
    for (float& v : rgb) v = unit(y + (v - y) * fs);
    if (shift != 0.0f) rotate_hue(rgb[0], rgb[1], rgb[2], shift);
    for (int k = 0; k < 3; ++k) out[3 * i + k] = cv::saturate_cast<std::uint8_t>(rgb[k] * 255.0f);
  }
  return {DocumentImage(image.width(), image.height(), std::move(out)), {b, c, s, h}};
}

inline PhotometricResult multiplicative_noise(const DocumentImage& image, const NoiseParams& p, SeedStream& stream) {
  check_noise(p);
  std::array<double, 3> m{};
  for (auto& v : m) v = stream.uniform(p.min, p.max);
  cv::Mat f;
  as_mat(image).convertTo(f, CV_32FC3);
  cv::multiply(f, cv::Scalar(m[0], m[1], m[2]), f);
  return {to_u8(f), {m[0], m[1], m[2]}};
}

}  // namespace detail

/// Applies one photometric operation. Output has the input's dimensions,
/// samples are clamped to [0, 255], and the result depends only on the image,
/// the parameters and the stream state.
inline PhotometricResult apply_photometric(const DocumentImage& image, const PhotometricParams& params,
                                           SeedStream& stream) {
  return std::visit(
      [&](const auto& p) -> PhotometricResult {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, MedianBlurParams>) return detail::median_blur(image, p);
        else if constexpr (std::is_same_v<T, JitterParams>) return detail::color_jitter(image, p, stream);
        else return detail::multiplicative_noise(image, p, stream);
      },
      params);
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

/// What a pipeline run actually did; used by reports and invariant checks.
struct AugmentTrace {
  bool padded = false;
  bool blurred = false;
  std::optional<std::array<double, 4>> jitter;
  bool rotation_sampled = false;
  double angle_deg = 0;
  bool rotation_applied = false;
  bool guard_triggered = false;
  std::optional<std::array<double, 3>> noise_multipliers;
  bool resized = false;
  double effective_margin_px = 0;
};

inline nlohmann::json to_json(const AugmentTrace& t) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"padded", t.padded},
          {"blurred", t.blurred},
          {"jitter", opt(t.jitter)},
          {"rotation_sampled", t.rotation_sampled},
          {"angle_deg", t.angle_deg},
          {"rotation_applied", t.rotation_applied},
          {"guard_triggered", t.guard_triggered},
          {"noise_multipliers", opt(t.noise_multipliers)},
          {"resized", t.resized},
          {"effective_margin_px", t.effective_margin_px}};
}

struct AugmentResult {
  DocumentRecord record;
  AugmentTrace trace;
};

/// Stream indices; one independent stream per operation.
enum class AugOp : std::uint64_t {
  Pad = 0,
  Blur = 1,
  Jitter = 2,
  Rotate = 3,
  DetRotate = 10,
  DetJitter = 11,
  DetNoise = 12,
};

inline SeedStream op_stream(std::uint64_t seed, const DocumentRecord& r, AugOp op) {
  return SeedStream::derive(seed, r.id, static_cast<std::uint64_t>(op));
}

namespace detail {

inline DocumentRecord with_geometry(const DocumentRecord& src, DocumentImage image, const std::vector<BBox>& boxes) {
  DocumentRecord out = src;
  out.image = std::make_shared<const DocumentImage>(std::move(image));
  for (std::size_t i = 0; i < boxes.size(); ++i) out.annotations[i].box = boxes[i];
  return out;
}

inline void require_machine_written(const DocumentRecord& r) {
  if (r.handwritten) throw Error(ErrorKind::HandwrittenRecord, "record '" + r.id + "' is handwritten");
  if (!r.image) throw Error(ErrorKind::InvalidParams, "record '" + r.id + "' has no image");
}

}  // namespace detail

/// Keyword-track augmentation: pad -> median blur / color jitter -> rotation
/// with margin guard -> bilinear resize. The margin is enforced on the final
/// output, so a shrinking resize raises the margin required after rotation.
inline AugmentResult augment_keyword(const DocumentRecord& record, const KeywordAugConfig& cfg, std::uint64_t seed) {
  detail::require_machine_written(record);
  validate(cfg);
  AugmentTrace trace;
  DocumentImage img = *record.image;
  std::vector<BBox> boxes = record.boxes();

  if (auto s = op_stream(seed, record, AugOp::Pad); s.bernoulli(cfg.pad_probability)) {
    const int px = static_cast<int>(std::lround(cfg.pad_fraction * img.width()));
    const int py = static_cast<int>(std::lround(cfg.pad_fraction * img.height()));
    auto r = pad_with_boxes(img, boxes, px, py);
    img = std::move(r.image);
    boxes = std::move(r.boxes);
    trace.padded = true;
  }
  if (auto s = op_stream(seed, record, AugOp::Blur); s.bernoulli(cfg.blur_probability)) {
    img = apply_photometric(img, MedianBlurParams{cfg.median_blur_kernel}, s).image;
    trace.blurred = true;
  }
  if (auto s = op_stream(seed, record, AugOp::Jitter); s.bernoulli(cfg.jitter.probability)) {
    auto r = apply_photometric(img, cfg.jitter, s);
    img = std::move(r.image);
    trace.jitter = std::array<double, 4>{r.sampled[0], r.sampled[1], r.sampled[2], r.sampled[3]};
  }
  if (auto s = op_stream(seed, record, AugOp::Rotate); s.bernoulli(cfg.rotation_probability)) {
    trace.rotation_sampled = true;
    trace.angle_deg = s.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    double margin = cfg.crop_margin_px;
    if (cfg.resize_target) {
      const auto plan = plan_rotation(img.width(), img.height(), trace.angle_deg);
      const double scale = std::min(static_cast<double>(cfg.resize_target->width) / plan.canvas_width,
                                    static_cast<double>(cfg.resize_target->height) / plan.canvas_height);
      if (scale < 1.0) margin /= scale;
    }
    trace.effective_margin_px = margin;
    auto r = rotate_with_boxes(img, boxes, trace.angle_deg, cfg.rotation_interpolation, margin, cfg.max_rotation_deg);
    trace.guard_triggered = r.guard_triggered;
    trace.rotation_applied = !r.guard_triggered && trace.angle_deg != 0.0;
    img = std::move(r.image);
    boxes = std::move(r.boxes);
  }
  if (cfg.resize_target) {
    auto r = scale_with_boxes(img, boxes, cfg.resize_target->width, cfg.resize_target->height);
    trace.resized = true;
    img = std::move(r.image);
    boxes = std::move(r.boxes);
  }
  return {detail::with_geometry(record, std::move(img), boxes), trace};
}

/// Detection-track augmentation: rotation (no guard, boxes clipped) -> color
/// jitter -> per-channel multiplicative noise.
inline AugmentResult augment_detection(const DocumentRecord& record, const DetectionAugConfig& cfg, std::uint64_t seed) {
  detail::require_machine_written(record);
  validate(cfg);
  AugmentTrace trace;
  DocumentImage img = *record.image;
  std::vector<BBox> boxes = record.boxes();

  if (auto s = op_stream(seed, record, AugOp::DetRotate); s.bernoulli(cfg.rotation_probability)) {
    trace.rotation_sampled = true;
    trace.angle_deg = s.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    auto r = rotate_with_boxes(img, boxes, trace.angle_deg, cfg.rotation_interpolation, 0.0, cfg.max_rotation_deg);
    trace.rotation_applied = trace.angle_deg != 0.0;
    img = std::move(r.image);
    boxes = std::move(r.boxes);
  }
  if (auto s = op_stream(seed, record, AugOp::DetJitter); s.bernoulli(cfg.jitter.probability)) {
    auto r = apply_photometric(img, cfg.jitter, s);
    img = std::move(r.image);
    trace.jitter = std::array<double, 4>{r.sampled[0], r.sampled[1], r.sampled[2], r.sampled[3]};
  }
  if (auto s = op_stream(seed, record, AugOp::DetNoise); s.bernoulli(cfg.noise_probability)) {
    auto r = apply_photometric(img, cfg.noise, s);
    img = std::move(r.image);
    trace.noise_multipliers = std::array<double, 3>{r.sampled[0], r.sampled[1], r.sampled[2]};
  }
  return {detail::with_geometry(record, std::move(img), boxes), trace};
}

}  // namespace invoval

#pragma once

// Pipeline configuration. Precedence, lowest to highest: built-in defaults,
// the JSON config file, command-line flags.

#include <cstdio>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "invoval/augment.hpp"
#include "invoval/manifest.hpp"
#include "invoval/seed.hpp"
#include "invoval/validator.hpp"

namespace invoval {

/// Layout and detector backend descriptors: "mock" or "onnx:<model file>".
struct BackendSpec {
  std::string layout = "mock";
  std::string detector = "mock";
  friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

struct PipelineConfig {
  KeywordAugConfig keyword_aug;
  DetectionAugConfig detection_aug;
  /// mock | recorded-tsv:<dir> | recorded-read:<dir> | tesseract | remote
  std::string ocr = "mock";
  BackendSpec backends;
  double score_threshold = 0.5;
  double nms_iou = 0.5;
  double label_overlap = 0.5;
  int max_sequence_length = 512;
  int window_overlap = 0;
  ValidationCriteria validation;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int jobs = 0;  // 0 = available parallelism
  int max_inflight_requests = 4;

  int effective_jobs() const { return jobs > 0 ? jobs : std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }
};

namespace detail {

inline bool valid_model_descriptor(const std::string& d) { return d == "mock" || (d.starts_with("onnx:") && d.size() > 5); }

inline bool valid_ocr_descriptor(const std::string& d) {
  if (d == "mock" || d == "tesseract" || d == "remote") return true;
  for (const char* p : {"recorded-tsv:", "recorded-read:"})
    if (d.starts_with(p) && d.size() > std::string_view(p).size()) return true;
  return false;
}

inline std::string_view interpolation_name(Interpolation i) {
  switch (i) {
    case Interpolation::Nearest: return "nearest";
    case Interpolation::Bilinear: return "bilinear";
    case Interpolation::Cubic: return "cubic";
  }
  return "bilinear";
}

inline Interpolation parse_interpolation(const std::string& s) {
  if (s == "nearest") return Interpolation::Nearest;
  if (s == "bilinear") return Interpolation::Bilinear;
  if (s == "cubic") return Interpolation::Cubic;
  throw Error(ErrorKind::Config, "unknown interpolation '" + s + "'");
}

/// Visits every key of `obj`; unknown keys are configuration errors.
template <class F>
void for_each_key(const nlohmann::json& obj, const std::string& path, F&& on_key) {
  if (!obj.is_object()) throw Error(ErrorKind::Config, path + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!on_key(it.key(), *it)) throw Error(ErrorKind::Config, path + ": unknown key '" + it.key() + "'");
}

inline nlohmann::json to_json(const JitterParams& j) {
  return {{"brightness", j.brightness}, {"contrast", j.contrast}, {"saturation", j.saturation},
          {"hue", j.hue},               {"probability", j.probability}};
}

inline JitterParams jitter_from_json(const nlohmann::json& j, JitterParams out, const std::string& path) {
  for_each_key(j, path, [&](const std::string& k, const nlohmann::json& v) {
    if (k == "brightness") out.brightness = v.get<double>();
    else if (k == "contrast") out.contrast = v.get<double>();
    else if (k == "saturation") out.saturation = v.get<double>();
    else if (k == "hue") out.hue = v.get<double>();
    else if (k == "probability") out.probability = v.get<double>();
    else return false;
    return true;
  });
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const KeywordAugConfig& c) {
  nlohmann::json resize = nullptr;
  if (c.resize_target) resize = {c.resize_target->width, c.resize_target->height};
  return {{"median_blur_kernel", c.median_blur_kernel},
          {"blur_probability", c.blur_probability},
          {"jitter", detail::to_json(c.jitter)},
          {"pad_probability", c.pad_probability},
          {"pad_fraction", c.pad_fraction},
          {"max_rotation_deg", c.max_rotation_deg},
          {"rotation_probability", c.rotation_probability},
          {"rotation_interpolation", detail::interpolation_name(c.rotation_interpolation)},
          {"crop_margin_px", c.crop_margin_px},
          {"resize_target", resize}};
}

inline nlohmann::json to_json(const DetectionAugConfig& c) {
  return {{"max_rotation_deg", c.max_rotation_deg},
          {"rotation_probability", c.rotation_probability},
          {"rotation_interpolation", detail::interpolation_name(c.rotation_interpolation)},
          {"jitter", detail::to_json(c.jitter)},
          {"noise_probability", c.noise_probability},
          {"noise", {{"min", c.noise.min}, {"max", c.noise.max}}}};
}

/// Canonical JSON form; keys are sorted by nlohmann::json.
inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"keyword_aug", to_json(c.keyword_aug)},
          {"detection_aug", to_json(c.detection_aug)},
          {"ocr", c.ocr},
          {"backends", {{"layout", c.backends.layout}, {"detector", c.backends.detector}}},
          {"score_threshold", c.score_threshold},
          {"nms_iou", c.nms_iou},
          {"label_overlap", c.label_overlap},
          {"max_sequence_length", c.max_sequence_length},
          {"window_overlap", c.window_overlap},
          {"validation", to_json(c.validation)},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"jobs", c.jobs},
          {"max_inflight_requests", c.max_inflight_requests}};
}

/// Throws Config on the first violated invariant.
inline void validate(const PipelineConfig& c) {
  try {
    validate(c.keyword_aug);
    validate(c.detection_aug);
    c.validation.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    throw Error(ErrorKind::Config, e.what());
  }
  if (!detail::valid_ocr_descriptor(c.ocr)) throw Error(ErrorKind::Config, "unknown OCR engine '" + c.ocr + "'");
  if (!detail::valid_model_descriptor(c.backends.layout))
    throw Error(ErrorKind::Config, "unknown layout backend '" + c.backends.layout + "'");
  if (!detail::valid_model_descriptor(c.backends.detector))
    throw Error(ErrorKind::Config, "unknown detector backend '" + c.backends.detector + "'");
  for (double v : {c.score_threshold, c.nms_iou, c.label_overlap})
    if (!(v >= 0 && v <= 1)) throw Error(ErrorKind::Config, "thresholds must lie in [0, 1]");
  if (c.max_sequence_length < 1) throw Error(ErrorKind::Config, "max_sequence_length must be positive");
  if (c.window_overlap < 0 || c.window_overlap >= c.max_sequence_length)
    throw Error(ErrorKind::Config, "window_overlap must lie in [0, max_sequence_length)");
  if (c.jobs < 0) throw Error(ErrorKind::Config, "jobs must be >= 0");
  if (c.max_inflight_requests < 1 || c.max_inflight_requests > 64)
    throw Error(ErrorKind::Config, "max_inflight_requests must lie in [1, 64]");
  if (c.output_dir.empty()) throw Error(ErrorKind::Config, "output_dir must be nonempty");
}

/// Overlays `j` onto `base`. Unknown keys and wrong types are Config errors.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  using detail::for_each_key;
  try {
    for_each_key(j, "config", [&](const std::string& k, const nlohmann::json& v) {
      if (k == "keyword_aug") {
        auto& a = c.keyword_aug;
        for_each_key(v, "config.keyword_aug", [&](const std::string& kk, const nlohmann::json& vv) {
          if (kk == "median_blur_kernel") a.median_blur_kernel = vv.get<int>();
          else if (kk == "blur_probability") a.blur_probability = vv.get<double>();
          else if (kk == "jitter") a.jitter = detail::jitter_from_json(vv, a.jitter, "config.keyword_aug.jitter");
          else if (kk == "pad_probability") a.pad_probability = vv.get<double>();
          else if (kk == "pad_fraction") a.pad_fraction = vv.get<double>();
          else if (kk == "max_rotation_deg") a.max_rotation_deg = vv.get<double>();
          else if (kk == "rotation_probability") a.rotation_probability = vv.get<double>();
          else if (kk == "rotation_interpolation") a.rotation_interpolation = detail::parse_interpolation(vv.get<std::string>());
          else if (kk == "crop_margin_px") a.crop_margin_px = vv.get<double>();
          else if (kk == "resize_target") {
            if (vv.is_null()) a.resize_target.reset();
            else {
              const auto wh = vv.get<std::array<int, 2>>();
              a.resize_target = ImageSize{wh[0], wh[1]};
            }
          } else return false;
          return true;
        });
      } else if (k == "detection_aug") {
        auto& a = c.detection_aug;
        for_each_key(v, "config.detection_aug", [&](const std::string& kk, const nlohmann::json& vv) {
          if (kk == "max_rotation_deg") a.max_rotation_deg = vv.get<double>();
          else if (kk == "rotation_probability") a.rotation_probability = vv.get<double>();
          else if (kk == "rotation_interpolation") a.rotation_interpolation = detail::parse_interpolation(vv.get<std::string>());
          else if (kk == "jitter") a.jitter = detail::jitter_from_json(vv, a.jitter, "config.detection_aug.jitter");
          else if (kk == "noise_probability") a.noise_probability = vv.get<double>();
          else if (kk == "noise") {
            for_each_key(vv, "config.detection_aug.noise", [&](const std::string& n, const nlohmann::json& nv) {
              if (n == "min") a.noise.min = nv.get<double>();
              else if (n == "max") a.noise.max = nv.get<double>();
              else return false;
              return true;
            });
          } else return false;
          return true;
        });
      } else if (k == "ocr") c.ocr = v.get<std::string>();
      else if (k == "backends") {
        for_each_key(v, "config.backends", [&](const std::string& kk, const nlohmann::json& vv) {
          if (kk == "layout") c.backends.layout = vv.get<std::string>();
          else if (kk == "detector") c.backends.detector = vv.get<std::string>();
          else return false;
          return true;
        });
      } else if (k == "score_threshold") c.score_threshold = v.get<double>();
      else if (k == "nms_iou") c.nms_iou = v.get<double>();
      else if (k == "label_overlap") c.label_overlap = v.get<double>();
      else if (k == "max_sequence_length") c.max_sequence_length = v.get<int>();
      else if (k == "window_overlap") c.window_overlap = v.get<int>();
      else if (k == "validation") c.validation = criteria_from_json(v);
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "output_dir") c.output_dir = v.get<std::string>();
      else if (k == "jobs") c.jobs = v.get<int>();
      else if (k == "max_inflight_requests") c.max_inflight_requests = v.get<int>();
      else return false;
      return true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    throw Error(ErrorKind::Config, e.what());
  }
  validate(c);
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::Config, "config '" + path.string() + "' is not valid JSON");
  return config_from_json(j, std::move(base));
}

/// `--backend` flag: "mock", "onnx:<dir>" (dir holds layout.onnx and
/// detector.onnx) or "layout=<desc>,detector=<desc>" (either part optional).
inline BackendSpec parse_backend_flag(const std::string& flag, BackendSpec base = {}) {
  if (flag == "mock") return {};
  if (flag.starts_with("onnx:") && flag.find('=') == std::string::npos) {
    const std::filesystem::path dir = flag.substr(5);
    return {"onnx:" + (dir / "layout.onnx").string(), "onnx:" + (dir / "detector.onnx").string()};
  }
  std::size_t pos = 0;
  bool any = false;
  while (pos <= flag.size()) {
    const auto comma = std::min(flag.find(',', pos), flag.size());
    const auto part = flag.substr(pos, comma - pos);
    if (part.starts_with("layout=")) base.layout = part.substr(7);
    else if (part.starts_with("detector=")) base.detector = part.substr(9);
    else throw Error(ErrorKind::Config, "unknown backend descriptor '" + flag + "'");
    any = true;
    pos = comma + 1;
  }
  if (!any || !detail::valid_model_descriptor(base.layout) || !detail::valid_model_descriptor(base.detector))
    throw Error(ErrorKind::Config, "unknown backend descriptor '" + flag + "'");
  return base;
}

/// 16 hex digits of FNV-1a over the canonical JSON, leaving out settings that
/// cannot change results (output_dir, jobs).
inline std::string config_fingerprint(const PipelineConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  j.erase("jobs");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace invoval

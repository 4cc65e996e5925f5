#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "invoval/core.hpp"
#include "invoval/labeling.hpp"
#include "invoval/seed.hpp"

namespace invoval {

using ClassScores = std::array<double, kNumClasses>;

/// A stamp or signature found by a detector.
struct Detection {
  FieldClass field_class = FieldClass::Stamp;
  BBox box;
  double score = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

inline nlohmann::json to_json(const Detection& d) {
  return {{"class", std::string(to_string(d.field_class))}, {"box", d.box.as_array()}, {"score", d.score}};
}

inline Detection detection_from_json(const nlohmann::json& j) {
  try {
    auto c = parse_field_class(j.at("class").get<std::string>());
    if (!c || !is_object_class(*c)) throw Error(ErrorKind::UnknownClass, "detection class must be Stamp or Signature");
    const auto b = j.at("box").get<std::array<double, 4>>();
    Detection d{*c, {b[0], b[1], b[2], b[3]}, j.at("score").get<double>()};
    if (!d.box.valid() || !(d.score >= 0 && d.score <= 1)) throw Error(ErrorKind::MalformedManifest, "detection violates its invariants");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedManifest, std::string("detection: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Backend interfaces
// ---------------------------------------------------------------------------

class LayoutBackend {
 public:
  virtual ~LayoutBackend() = default;
  virtual std::string name() const = 0;
  /// False when predict() must not run concurrently; callers serialize.
  virtual bool concurrent() const { return true; }
  /// One score vector over all classes (Other included) per token.
  virtual std::vector<ClassScores> predict(const SequenceExample& example, const DocumentImage& image) = 0;
};

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual std::string name() const = 0;
  virtual bool concurrent() const { return true; }
  virtual std::vector<Detection> predict(const DocumentImage& image, std::string_view document_id) = 0;
};

/// Wraps a non-concurrent backend behind a mutex.
class SerializedLayoutBackend final : public LayoutBackend {
 public:
  explicit SerializedLayoutBackend(std::shared_ptr<LayoutBackend> inner) : inner_(std::move(inner)) {}
  std::string name() const override { return inner_->name(); }
  std::vector<ClassScores> predict(const SequenceExample& ex, const DocumentImage& image) override {
    std::lock_guard lock(mu_);
    return inner_->predict(ex, image);
  }

 private:
  std::shared_ptr<LayoutBackend> inner_;
  std::mutex mu_;
};

class SerializedDetectorBackend final : public DetectorBackend {
 public:
  explicit SerializedDetectorBackend(std::shared_ptr<DetectorBackend> inner) : inner_(std::move(inner)) {}
  std::string name() const override { return inner_->name(); }
  std::vector<Detection> predict(const DocumentImage& image, std::string_view id) override {
    std::lock_guard lock(mu_);
    return inner_->predict(image, id);
  }

 private:
  std::shared_ptr<DetectorBackend> inner_;
  std::mutex mu_;
};

template <class Backend, class Serialized>
std::shared_ptr<Backend> make_safe(std::shared_ptr<Backend> b) {
  if (!b || b->concurrent()) return b;
  return std::make_shared<Serialized>(std::move(b));
}

inline std::shared_ptr<LayoutBackend> make_safe(std::shared_ptr<LayoutBackend> b) {
  return make_safe<LayoutBackend, SerializedLayoutBackend>(std::move(b));
}
inline std::shared_ptr<DetectorBackend> make_safe(std::shared_ptr<DetectorBackend> b) {
  return make_safe<DetectorBackend, SerializedDetectorBackend>(std::move(b));
}

// ---------------------------------------------------------------------------
// Token classification
// ---------------------------------------------------------------------------

struct TokenPrediction {
  FieldClass label = FieldClass::Other;
  double confidence = 0;
};

/// Maps a score vector onto the probability simplex: vectors already on it
/// (non-negative, summing to 1) pass through, anything else goes through a
/// max-shifted softmax.
inline ClassScores to_probabilities(const ClassScores& s) {
  double sum = 0;
  bool nonneg = true;
  for (double v : s) {
    sum += v;
    nonneg = nonneg && v >= 0;
  }
  if (nonneg && std::abs(sum - 1.0) <= 1e-9) return s;
  const double mx = *std::max_element(s.begin(), s.end());
  ClassScores p{};
  double z = 0;
  for (std::size_t i = 0; i < s.size(); ++i) z += (p[i] = std::exp(s[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

/// Argmax label (ties to the lowest class index) and its probability.
inline std::vector<TokenPrediction> classify_tokens(LayoutBackend& backend, const SequenceExample& example,
                                                    const DocumentImage& image) {
  std::vector<ClassScores> scores;
  try {
    scores = backend.predict(example, image);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::BackendFailure) throw;
    throw Error(ErrorKind::BackendFailure, backend.name() + " on '" + example.document_id + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::BackendFailure, backend.name() + " on '" + example.document_id + "': " + e.what());
  }
  if (scores.size() != example.size()) {
    throw Error(ErrorKind::BackendFailure, backend.name() + " returned " + std::to_string(scores.size()) +
                                               " score vectors for " + std::to_string(example.size()) + " tokens");
  }
  std::vector<TokenPrediction> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    for (double v : s)
      if (!std::isfinite(v)) throw Error(ErrorKind::BackendFailure, backend.name() + " produced a non-finite score");
    const auto p = to_probabilities(s);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    out.push_back({kAllClasses[best], p[best]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detection post-processing
// ---------------------------------------------------------------------------

inline std::vector<Detection> filter_detections(const std::vector<Detection>& dets, double score_threshold) {
  std::vector<Detection> out;
  for (const auto& d : dets)
    if (d.score >= score_threshold) out.push_back(d);
  return out;
}

/// Score-descending order; equal scores fall back to box coordinates.
inline bool detection_rank_less(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.box.as_array() < b.box.as_array();
}

/// Per-class greedy non-maximum suppression. Output is in rank order.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold = 0.5) {
  std::stable_sort(dets.begin(), dets.end(), detection_rank_less);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.field_class == d.field_class && bbox_iou(k.box, d.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Mock backends
// ---------------------------------------------------------------------------

/// Layout backend that echoes the labels carried by the example as one-hot
/// probability vectors.
class MockLayoutBackend final : public LayoutBackend {
 public:
  std::string name() const override { return "mock"; }
  std::vector<ClassScores> predict(const SequenceExample& ex, const DocumentImage&) override {
    std::vector<ClassScores> out(ex.size(), ClassScores{});
    for (std::size_t i = 0; i < ex.size(); ++i) out[i][index_of(ex.labels[i])] = 1.0;
    return out;
  }
};

/// Detector that replays annotated stamps and signatures with score 0.9,
/// plus a shifted duplicate of each (score 0.6, removed by NMS) and one
/// low-score spurious box per document (score 0.2, removed by the score
/// filter).
class MockDetectorBackend final : public DetectorBackend {
 public:
  explicit MockDetectorBackend(const DatasetManifest& manifest) {
    for (const auto& r : manifest.records) {
      auto& v = gold_[r.id];
      for (const auto& a : r.annotations)
        if (is_object_class(a.field_class)) v.push_back(a);
    }
  }

  std::string name() const override { return "mock"; }

  std::vector<Detection> predict(const DocumentImage& image, std::string_view document_id) override {
    std::vector<Detection> out;
    auto it = gold_.find(std::string(document_id));
    if (it == gold_.end()) return out;
    const double w = image.width(), h = image.height();
    for (const auto& a : it->second) {
      out.push_back({a.field_class, a.box, 0.9});
      const double dx = 0.03 * a.box.width();
      out.push_back({a.field_class, clip({a.box.x_min + dx, a.box.y_min, a.box.x_max + dx, a.box.y_max}, w, h), 0.6});
    }
    const auto hsh = fnv1a64(document_id);
    const auto cls = (hsh & 1) ? FieldClass::Stamp : FieldClass::Signature;
    out.push_back({cls, {0.02 * w, 0.02 * h, 0.08 * w, 0.05 * h}, 0.2});
    return out;
  }

 private:
  std::map<std::string, std::vector<Annotation>> gold_;
};

}  // namespace invoval

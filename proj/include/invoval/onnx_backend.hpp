#pragma once

// Model backends over ONNX files, executed with OpenCV's dnn module.
//
// Layout model tensors (float32):
//   input_ids     [512, 1]            hashed word ids, 0 = padding
//   bbox          [512, 4]            boxes on the 0-1000 grid
//   pixel_values  [1, 3, 224, 224]    RGB in [0, 1]
//   logits        [512, 8]            FieldClass order, Other last
//
// Detector model tensors (float32):
//   image    [1, 3, 320, 320]   RGB in [0, 1]
//   boxes    4N values          x_min, y_min, x_max, y_max in the 320 frame
//   scores   N values           in [0, 1]
//   classes  N values           0 = Stamp, 1 = Signature

#include <cmath>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include "invoval/core.hpp"
#include "invoval/image.hpp"
#include "invoval/inference.hpp"
#include "invoval/seed.hpp"
#include "invoval/text.hpp"

namespace invoval {

inline constexpr int kLayoutSequenceLength = 512;
inline constexpr int kLayoutImageSize = 224;
inline constexpr int kDetectorImageSize = 320;
inline constexpr std::uint64_t kVocabularySize = 30000;

/// Vocabulary id of a word: 1 + FNV-1a of the normalized word mod the
/// vocabulary size. 0 is reserved for padding.
inline float token_id(std::string_view word) {
  return static_cast<float>(1 + fnv1a64(normalize_word(word)) % kVocabularySize);
}

namespace detail {

inline cv::dnn::Net load_onnx(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorKind::Config, "model file '" + path.string() + "' not found");
  try {
    cv::dnn::Net net = cv::dnn::readNetFromONNX(path.string());
    if (net.empty()) throw Error(ErrorKind::Config, "model '" + path.string() + "' has no layers");
    net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    return net;
  } catch (const cv::Exception& e) {
    throw Error(ErrorKind::Config, "cannot load model '" + path.string() + "': " + e.what());
  }
}

/// NCHW float blob of the RGB image resized to side x side, scaled to [0, 1].
inline cv::Mat image_blob(const DocumentImage& image, int side) {
  return cv::dnn::blobFromImage(as_mat(image), 1.0 / 255.0, cv::Size(side, side), cv::Scalar(), false, false, CV_32F);
}

}  // namespace detail

class OnnxLayoutBackend final : public LayoutBackend {
 public:
  explicit OnnxLayoutBackend(const std::filesystem::path& path) : net_(detail::load_onnx(path)), name_("onnx:" + path.string()) {}

  std::string name() const override { return name_; }
  bool concurrent() const override { return false; }

  std::vector<ClassScores> predict(const SequenceExample& ex, const DocumentImage& image) override {
    const auto n = static_cast<int>(ex.size());
    if (n > kLayoutSequenceLength) {
      throw Error(ErrorKind::InvalidParams, "window of " + std::to_string(n) + " tokens exceeds the model length " +
                                                std::to_string(kLayoutSequenceLength));
    }
    cv::Mat ids(kLayoutSequenceLength, 1, CV_32F, cv::Scalar(0));
    cv::Mat boxes(kLayoutSequenceLength, 4, CV_32F, cv::Scalar(0));
    for (int i = 0; i < n; ++i) {
      ids.at<float>(i, 0) = token_id(ex.words[static_cast<std::size_t>(i)]);
      for (int k = 0; k < 4; ++k) boxes.at<float>(i, k) = static_cast<float>(ex.boxes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
    }
    cv::Mat logits;
    try {
      net_.setInput(ids, "input_ids");
      net_.setInput(boxes, "bbox");
      net_.setInput(detail::image_blob(image, kLayoutImageSize), "pixel_values");
      logits = net_.forward("logits");
    } catch (const cv::Exception& e) {
      throw Error(ErrorKind::BackendFailure, name_ + ": " + e.what());
    }
    if (logits.total() != static_cast<std::size_t>(kLayoutSequenceLength) * kNumClasses) {
      throw Error(ErrorKind::BackendFailure, name_ + ": logits must hold 512 x 8 values");
    }
    const float* p = logits.ptr<float>();
    std::vector<ClassScores> out(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t k = 0; k < kNumClasses; ++k) out[i][k] = p[i * kNumClasses + k];
    return out;
  }

 private:
  cv::dnn::Net net_;
  std::string name_;
};

class OnnxDetectorBackend final : public DetectorBackend {
 public:
  explicit OnnxDetectorBackend(const std::filesystem::path& path)
      : net_(detail::load_onnx(path)), name_("onnx:" + path.string()) {}

  std::string name() const override { return name_; }
  bool concurrent() const override { return false; }

  std::vector<Detection> predict(const DocumentImage& image, std::string_view) override {
    std::vector<cv::Mat> outs;
    try {
      net_.setInput(detail::image_blob(image, kDetectorImageSize), "image");
      net_.forward(outs, std::vector<cv::String>{"boxes", "scores", "classes"});
    } catch (const cv::Exception& e) {
      throw Error(ErrorKind::BackendFailure, name_ + ": " + e.what());
    }
    const std::size_t n = outs[1].total();
    if (outs[0].total() != 4 * n || outs[2].total() != n) {
      throw Error(ErrorKind::BackendFailure, name_ + ": boxes/scores/classes sizes disagree");
    }
    const float* b = outs[0].ptr<float>();
    const float* s = outs[1].ptr<float>();
    const float* c = outs[2].ptr<float>();
    const double sx = static_cast<double>(image.width()) / kDetectorImageSize;
    const double sy = static_cast<double>(image.height()) / kDetectorImageSize;
    std::vector<Detection> dets;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s[i]) || !std::isfinite(c[i])) throw Error(ErrorKind::BackendFailure, name_ + ": non-finite output");
      const long cls = std::lround(c[i]);
      if (cls != 0 && cls != 1) throw Error(ErrorKind::BackendFailure, name_ + ": class id " + std::to_string(cls));
      const BBox box = clip({b[4 * i] * sx, b[4 * i + 1] * sy, b[4 * i + 2] * sx, b[4 * i + 3] * sy}, image.width(),
                            image.height());
      if (!box.valid()) continue;
      dets.push_back({cls == 0 ? FieldClass::Stamp : FieldClass::Signature, box, std::clamp(static_cast<double>(s[i]), 0.0, 1.0)});
    }
    return dets;
  }

 private:
  cv::dnn::Net net_;
  std::string name_;
};

}  // namespace invoval

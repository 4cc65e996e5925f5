#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "invoval/core.hpp"

namespace invoval {

/// Non-owning CV_8UC3 view over the image buffer (RGB order).
inline cv::Mat as_mat(const DocumentImage& image) {
  return cv::Mat(image.height(), image.width(), CV_8UC3, const_cast<std::uint8_t*>(image.pixels().data()));
}

/// Copies a CV_8UC3 matrix (RGB order) into a DocumentImage.
inline DocumentImage from_mat(const cv::Mat& mat) {
  if (mat.type() != CV_8UC3) throw Error(ErrorKind::InvalidParams, "expected an 8-bit 3-channel matrix");
  cv::Mat contiguous = mat.isContinuous() ? mat : mat.clone();
  std::vector<std::uint8_t> px(contiguous.datastart, contiguous.dataend);
  return DocumentImage(mat.cols, mat.rows, std::move(px));
}

/// Decodes PNG or JPEG to 8-bit RGB.
inline DocumentImage load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorKind::ImageLoad, "cannot decode image '" + path.string() + "'");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

/// Writes the image; format follows the file extension (.png recommended).
inline void save_image(const DocumentImage& image, const std::filesystem::path& path) {
  cv::Mat bgr;
  cv::cvtColor(as_mat(image), bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), bgr, params)) throw Error(ErrorKind::Io, "cannot write image '" + path.string() + "'");
}

}  // namespace invoval

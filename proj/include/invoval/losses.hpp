#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "invoval/core.hpp"

namespace invoval::losses {

/// Loss value with its analytic gradient with respect to the inputs.
struct LossGrad {
  double value = 0;
  std::vector<double> grad;
};

/// log softmax(logits)[i] for every i, max-shifted.
inline std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorKind::InvalidParams, "logits must be nonempty");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double v : logits) z += std::exp(v - mx);
  const double lz = std::log(z) + mx;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

namespace detail {

inline void check(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw Error(ErrorKind::IndexOutOfRange,
                "target " + std::to_string(target) + " outside " + std::to_string(logits.size()) + " classes");
  }
  for (double v : logits)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidParams, "logits must be finite");
}

}  // namespace detail

/// -log softmax(logits)[target]; gradient softmax - onehot.
inline LossGrad cross_entropy(std::span<const double> logits, std::size_t target) {
  detail::check(logits, target);
  const auto ls = log_softmax(logits);
  LossGrad out{-ls[target], std::vector<double>(logits.size())};
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(ls[i]) - (i == target ? 1.0 : 0.0);
  return out;
}

struct FocalParams {
  double gamma = 2.0;
  std::vector<double> alpha;  // per class; empty means 1 for every class
};

/// alpha[t] * (1 - p_t)^gamma * -log p_t, with p_t = softmax(logits)[t].
inline LossGrad focal_loss(std::span<const double> logits, std::size_t target, const FocalParams& params = {}) {
  detail::check(logits, target);
  if (!std::isfinite(params.gamma) || params.gamma < 0) throw Error(ErrorKind::InvalidParams, "gamma must be finite and >= 0");
  double alpha = 1.0;
  if (!params.alpha.empty()) {
    if (params.alpha.size() != logits.size()) throw Error(ErrorKind::InvalidParams, "alpha needs one weight per class");
    for (double a : params.alpha)
      if (!(a > 0 && a <= 1)) throw Error(ErrorKind::InvalidParams, "alpha entries must lie in (0, 1]");
    alpha = params.alpha[target];
  }
  const auto ls = log_softmax(logits);
  const double log_pt = ls[target];
  const double pt = std::exp(log_pt);
  const double q = -std::expm1(log_pt);  // 1 - p_t without cancellation
  const double g = params.gamma;
  const double mod = g == 0 ? 1.0 : std::pow(q, g);

  LossGrad out{-alpha * mod * log_pt, std::vector<double>(logits.size())};
  // d loss / d p_t, multiplied through by p_t so that d p_t / d z_j = p_t (delta - p_j) folds in.
  double dl_dpt_times_pt = -alpha * mod;
  if (g != 0 && q > 0) dl_dpt_times_pt += alpha * g * std::pow(q, g - 1) * pt * log_pt;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double pj = std::exp(ls[j]);
    out.grad[j] = dl_dpt_times_pt * ((j == target ? 1.0 : 0.0) - pj);
  }
  return out;
}

/// Sum over coordinates of 0.5 d^2 / beta when |d| < beta, else |d| - beta / 2.
inline LossGrad smooth_l1(std::span<const double, 4> pred, std::span<const double, 4> gold, double beta = 1.0) {
  if (!(beta > 0)) throw Error(ErrorKind::InvalidParams, "beta must be positive");
  LossGrad out{0, std::vector<double>(4)};
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = pred[i] - gold[i];
    if (std::abs(d) < beta) {
      out.value += 0.5 * d * d / beta;
      out.grad[i] = d / beta;
    } else {
      out.value += std::abs(d) - 0.5 * beta;
      out.grad[i] = d > 0 ? 1.0 : -1.0;
    }
  }
  return out;
}

inline LossGrad smooth_l1(const BBox& pred, const BBox& gold, double beta = 1.0) {
  const auto p = pred.as_array(), g = gold.as_array();
  return smooth_l1(std::span<const double, 4>(p), std::span<const double, 4>(g), beta);
}

/// 1 - IoU.
inline double iou_loss(const BBox& pred, const BBox& gold) { return 1.0 - bbox_iou(pred, gold); }

struct Point {
  double x = 0;
  double y = 0;
};

/// sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b)) from the distances of the
/// location to the four sides of the gold box.
inline double centerness_target(Point location, const BBox& gold) {
  const double l = location.x - gold.x_min, r = gold.x_max - location.x;
  const double t = location.y - gold.y_min, b = gold.y_max - location.y;
  if (!(l > 0 && r > 0 && t > 0 && b > 0)) throw Error(ErrorKind::LocationOutsideBox, "location must lie strictly inside the box");
  return std::sqrt((std::min(l, r) / std::max(l, r)) * (std::min(t, b) / std::max(t, b)));
}

}  // namespace invoval::losses

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "invoval/core.hpp"
#include "invoval/inference.hpp"

namespace invoval {

// ---------------------------------------------------------------------------
// Token classification metrics
// ---------------------------------------------------------------------------

/// Harmonic mean; 0 when both inputs are 0.
inline double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0 ? 2.0 * precision * recall / s : 0.0;
}

struct PrfCounts {
  std::size_t tp = 0, fp = 0, fn = 0;

  /// With nothing predicted and nothing to find, the score is a perfect 1;
  /// an empty denominator otherwise scores 0.
  double precision() const { return tp + fp == 0 ? (fn == 0 ? 1.0 : 0.0) : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? (fp == 0 ? 1.0 : 0.0) : double(tp) / double(tp + fn); }
  double f1() const { return f1_score(precision(), recall()); }
  std::size_t support() const { return tp + fn; }
};

struct TokenEvalReport {
  std::map<FieldClass, PrfCounts> per_class;  // keyword classes only
  PrfCounts micro;
};

/// Micro-averaged precision/recall/F1 over the field classes (Other is the
/// background and never counted as a hit).
inline TokenEvalReport precision_recall_f1(const std::vector<FieldClass>& predicted, const std::vector<FieldClass>& gold) {
  if (predicted.size() != gold.size()) {
    throw Error(ErrorKind::LengthMismatch, "predicted has " + std::to_string(predicted.size()) + " labels, gold has " +
                                               std::to_string(gold.size()));
  }
  TokenEvalReport r;
  for (FieldClass c : kTextFields) r.per_class[c];
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto p = predicted[i], g = gold[i];
    if (p == g) {
      if (g != FieldClass::Other) ++r.per_class[g].tp;
      continue;
    }
    if (p != FieldClass::Other) ++r.per_class[p].fp;
    if (g != FieldClass::Other) ++r.per_class[g].fn;
  }
  for (const auto& [_, c] : r.per_class) {
    r.micro.tp += c.tp;
    r.micro.fp += c.fp;
    r.micro.fn += c.fn;
  }
  return r;
}

/// Rounds to two decimals, the precision the reports print.
inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

inline nlohmann::json to_json(const TokenEvalReport& r) {
  auto entry = [](const PrfCounts& c) {
    return nlohmann::json{{"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()},
                          {"support", c.support()},     {"tp", c.tp},           {"fp", c.fp},
                          {"fn", c.fn}};
  };
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [c, v] : r.per_class) per[std::string(to_string(c))] = entry(v);
  return {{"averaging", "micro, Other excluded"}, {"micro", entry(r.micro)}, {"per_class", per}};
}

/// Text table with the column order F1-Score, Recall, Precision.
inline std::string render_token_table(const std::string& method, const TokenEvalReport& r) {
  char buf[256];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-13s %-10s %-8s %-9s\n", "Method", "F1-Score", "Recall", "Precision");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-13s %-10.2f %-8.2f %-9.2f\n", method.c_str(), r.micro.f1(), r.micro.recall(),
                r.micro.precision());
  os << buf;
  for (const auto& [c, v] : r.per_class) {
    std::snprintf(buf, sizeof buf, "  %-11s %-10.2f %-8.2f %-9.2f support=%zu\n", std::string(display_name(c)).c_str(),
                  v.f1(), v.recall(), v.precision(), v.support());
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Detection metrics
// ---------------------------------------------------------------------------

/// Per-detection outcome of matching one image's detections of one class.
struct MatchResult {
  std::vector<Detection> ranked;  // detections in rank order
  std::vector<bool> true_positive;
  std::size_t false_negatives = 0;
};

/// Greedy one-to-one matching: detections in rank order each take the
/// unmatched gold box of highest IoU, provided IoU >= threshold.
inline MatchResult match_detections(std::vector<Detection> dets, const std::vector<BBox>& gold, double iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(), detection_rank_less);
  MatchResult m;
  std::vector<bool> taken(gold.size(), false);
  for (const auto& d : dets) {
    double best = -1;
    std::size_t best_g = gold.size();
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (taken[g]) continue;
      const double iou = bbox_iou(d.box, gold[g]);
      if (iou >= iou_threshold && iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best_g < gold.size()) taken[best_g] = true;
    m.true_positive.push_back(best_g < gold.size());
  }
  m.ranked = std::move(dets);
  m.false_negatives = static_cast<std::size_t>(std::count(taken.begin(), taken.end(), false));
  return m;
}

/// COCO 101-point interpolated average precision. `flags` are TP/FP
/// outcomes in global rank order; `n_gold` the number of gold boxes.
inline double average_precision(const std::vector<bool>& flags, std::size_t n_gold) {
  if (n_gold == 0) throw Error(ErrorKind::ZeroGold, "average precision is undefined without gold boxes");
  const std::size_t n = flags.size();
  std::vector<std::size_t> tp(n);
  std::vector<double> precision(n);
  std::size_t cum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += flags[i] ? 1 : 0;
    tp[i] = cum;
    precision[i] = static_cast<double>(cum) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0;
  std::size_t idx = 0;
  for (std::size_t k = 0; k <= 100; ++k) {
    // recall >= k/100, compared exactly in integers
    while (idx < n && tp[idx] * 100 < k * n_gold) ++idx;
    if (idx < n) sum += precision[idx];
  }
  return sum / 101.0;
}

/// Detections and gold boxes of one image.
struct ImageEvalInput {
  std::string image_id;
  std::vector<Detection> detections;
  std::vector<Annotation> gold;  // only Stamp/Signature entries are used
};

inline std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = (50.0 + 5.0 * i) / 100.0;
  return t;
}

struct DetectionEvalReport {
  std::array<double, 10> thresholds = coco_iou_thresholds();
  /// AP per class per threshold; classes without gold boxes are absent.
  std::map<FieldClass, std::array<double, 10>> ap;
  std::vector<FieldClass> excluded;  // classes skipped for lack of gold boxes
  double map50 = 0;
  double map50_95 = 0;
};

/// Dataset-level AP per class and IoU threshold, and the two means.
/// Detections are ranked globally by score, then image id, then box.
inline DetectionEvalReport mean_ap(const std::vector<ImageEvalInput>& images,
                                   const std::vector<FieldClass>& classes = {FieldClass::Stamp, FieldClass::Signature}) {
  DetectionEvalReport rep;
  for (FieldClass c : classes) {
    std::size_t n_gold = 0;
    for (const auto& im : images)
      for (const auto& g : im.gold) n_gold += g.field_class == c ? 1 : 0;
    if (n_gold == 0) {
      rep.excluded.push_back(c);
      continue;
    }
    std::array<double, 10> aps{};
    for (std::size_t t = 0; t < rep.thresholds.size(); ++t) {
      struct Ranked {
        double score;
        const std::string* image;
        std::array<double, 4> box;
        bool tp;
      };
      std::vector<Ranked> all;
      for (const auto& im : images) {
        std::vector<Detection> dets;
        for (const auto& d : im.detections)
          if (d.field_class == c) dets.push_back(d);
        std::vector<BBox> gold;
        for (const auto& g : im.gold)
          if (g.field_class == c) gold.push_back(g.box);
        auto m = match_detections(std::move(dets), gold, rep.thresholds[t]);
        for (std::size_t i = 0; i < m.ranked.size(); ++i)
          all.push_back({m.ranked[i].score, &im.image_id, m.ranked[i].box.as_array(), m.true_positive[i]});
      }
      std::stable_sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (*a.image != *b.image) return *a.image < *b.image;
        return a.box < b.box;
      });
      std::vector<bool> flags;
      flags.reserve(all.size());
      for (const auto& r : all) flags.push_back(r.tp);
      aps[t] = average_precision(flags, n_gold);
    }
    rep.ap[c] = aps;
  }
  if (!rep.ap.empty()) {
    double s50 = 0, sall = 0;
    for (const auto& [_, aps] : rep.ap) {
      s50 += aps[0];
      for (double v : aps) sall += v;
    }
    rep.map50 = s50 / static_cast<double>(rep.ap.size());
    rep.map50_95 = sall / static_cast<double>(rep.ap.size() * rep.thresholds.size());
  }
  return rep;
}

inline nlohmann::json to_json(const DetectionEvalReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [c, aps] : r.ap) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t t = 0; t < aps.size(); ++t) {
      char key[16];
      std::snprintf(key, sizeof key, "%.2f", r.thresholds[t]);
      row[key] = round2(aps[t] * 100.0);
    }
    per[std::string(to_string(c))] = row;
  }
  nlohmann::json excluded = nlohmann::json::array();
  for (auto c : r.excluded) excluded.push_back(std::string(to_string(c)));
  return {{"interpolation", "coco-101"},
          {"scale", "percent"},
          {"mAP@0.50", round2(r.map50 * 100.0)},
          {"mAP@50:95", round2(r.map50_95 * 100.0)},
          {"ap", per},
          {"excluded_classes", excluded}};
}

inline std::string render_detection_table(const std::string& model, const DetectionEvalReport& r) {
  char buf[256];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-14s %-9s %-9s\n", "Model", "mAP@0.50", "mAP@50:95");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-14s %-9.2f %-9.2f\n", model.c_str(), r.map50 * 100.0, r.map50_95 * 100.0);
  os << buf;
  return os.str();
}

}  // namespace invoval

#pragma once

// Synthetic invoice-like pages with exact annotations, for pipeline tests.
// Every random draw comes from a per-document seed stream, so a fixture is
// a pure function of (seed, n_docs, options).

#include <array>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "invoval/augment.hpp"
#include "invoval/manifest.hpp"
#include "invoval/ocr.hpp"
#include "invoval/seed.hpp"
#include "invoval/validator.hpp"

namespace invoval {

struct SynthOptions {
  int width = 600;
  int height = 800;
  std::map<std::size_t, std::set<FieldClass>> omit;  // document index -> classes left out
  std::set<std::size_t> handwritten;
  double max_skew_deg = 0;  // skew drawn uniformly from [-max, max]
  double blur_probability = 0;
  int blur_kernel = 3;
};

/// Omission cycle over document indices: i % 5 == 1 drops the stamp, 2 the
/// signature, 3 the Date field; i % 10 == 9 is handwritten.
inline SynthOptions standard_plan_options(std::size_t n_docs) {
  SynthOptions o;
  for (std::size_t i = 0; i < n_docs; ++i) {
    if (i % 5 == 1) o.omit[i] = {FieldClass::Stamp};
    if (i % 5 == 2) o.omit[i] = {FieldClass::Signature};
    if (i % 5 == 3) o.omit[i] = {FieldClass::Date};
    if (i % 10 == 9) o.handwritten.insert(i);
  }
  return o;
}

struct SynthDocPlan {
  std::string id;
  std::set<FieldClass> present;
  std::set<FieldClass> omitted;
  bool handwritten = false;
  double skew_deg = 0;
  bool blurred = false;
  Verdict expected_verdict = Verdict::Valid;  // under default criteria
};

struct SynthFixture {
  std::uint64_t seed = 0;
  DatasetManifest manifest;
  std::vector<SynthDocPlan> plan;
};

namespace detail {

inline constexpr std::array<const char*, 6> kClients = {"ACME Trading Ltd", "Northwind Supplies", "Globex Corp",
                                                        "Initech Services", "Umbrella Foods", "Stark Logistics"};
inline constexpr std::array<const char*, 3> kTitles = {"INVOICE", "TAX INVOICE", "FACTURE"};
inline constexpr std::array<const char*, 4> kFiller = {"Item        Qty   Unit price", "Consulting services   1",
                                                       "Delivery and handling", "Payment due within 30 days"};

inline std::string fmt_amount(int cents) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%d,%03d.%02d", cents / 100000, (cents / 100) % 1000, cents % 100);
  std::string s = buf;
  return s.starts_with("0,") ? s.substr(2) : s;
}

struct Canvas {
  cv::Mat mat;
  int font;
  std::vector<Annotation> anns;

  /// Draws `text` with its top-left corner at (x, y) and records the tight
  /// box when `cls` is given.
  void text(const std::string& s, int x, int y, double scale, int thickness, std::optional<FieldClass> cls) {
    int baseline = 0;
    const cv::Size sz = cv::getTextSize(s, font, scale, thickness, &baseline);
    cv::putText(mat, s, cv::Point(x, y + sz.height), font, scale, cv::Scalar(20, 20, 20), thickness, cv::LINE_AA);
    if (cls) {
      const BBox b = clip({double(x - 2), double(y - 2), double(x + sz.width + 2), double(y + sz.height + baseline + 2)},
                          mat.cols, mat.rows);
      anns.push_back({*cls, b, s});
    }
  }
};

}  // namespace detail

/// Renders one page per document. Omitted classes are not drawn; the plan
/// records what each page contains and the verdict default criteria give.
inline SynthFixture synth_fixture(std::uint64_t seed, std::size_t n_docs, const SynthOptions& opt = {}) {
  if (opt.width < 300 || opt.height < 400) throw Error(ErrorKind::InvalidParams, "synthetic pages need at least 300 x 400 px");
  if (opt.blur_kernel < 1 || opt.blur_kernel % 2 == 0) throw Error(ErrorKind::InvalidParams, "blur kernel must be odd");
  if (!(opt.max_skew_deg >= 0 && opt.max_skew_deg <= 45)) throw Error(ErrorKind::InvalidParams, "skew must lie in [0, 45]");
  detail::check_probability(opt.blur_probability, "blur probability");

  SynthFixture fx;
  fx.seed = seed;
  fx.manifest.split = Split::Test;
  const int W = opt.width, H = opt.height;
  for (std::size_t i = 0; i < n_docs; ++i) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "doc-%04zu", i);
    const std::string id = idbuf;
    SeedStream rng = SeedStream::derive(seed, id, 100);
    SynthDocPlan plan;
    plan.id = id;
    if (auto it = opt.omit.find(i); it != opt.omit.end()) plan.omitted = it->second;
    plan.handwritten = opt.handwritten.contains(i);
    auto draws = [&](FieldClass c) { return !plan.omitted.contains(c); };

    detail::Canvas cv_{cv::Mat(H, W, CV_8UC3, cv::Scalar(255, 255, 255)),
                       plan.handwritten ? cv::FONT_HERSHEY_SCRIPT_SIMPLEX : cv::FONT_HERSHEY_SIMPLEX,
                       {}};
    const double s = W / 600.0;
    auto px = [&](double v) { return static_cast<int>(v * s); };
    auto py = [&](double v) { return static_cast<int>(v * H / 800.0); };

    // Draws are sequenced one per statement; argument order is unspecified.
    auto pick = [&](int lo, int hi) { return rng.uniform_int(lo, hi); };
    if (draws(FieldClass::Title)) {
      const int t = pick(0, 2), x = pick(30, 200), y = pick(30, 60);
      cv_.text(detail::kTitles[std::size_t(t)], px(x), py(y), 1.1 * s, 2, FieldClass::Title);
    }
    if (draws(FieldClass::Client)) {
      const int t = pick(0, 5), x = pick(30, 90), y = pick(130, 170);
      cv_.text(detail::kClients[std::size_t(t)], px(x), py(y), 0.6 * s, 1, FieldClass::Client);
    }
    if (draws(FieldClass::Date)) {
      const int day = pick(1, 28), month = pick(1, 12), year = pick(2018, 2023), x = pick(400, 450), y = pick(130, 170);
      char date[16];
      std::snprintf(date, sizeof date, "%02d/%02d/%04d", day, month, year);
      cv_.text(date, px(x), py(y), 0.6 * s, 1, FieldClass::Date);
    }
    for (std::size_t k = 0; k < detail::kFiller.size(); ++k)
      cv_.text(detail::kFiller[k], px(40), py(260 + 50 * double(k)), 0.5 * s, 1, std::nullopt);
    const int ty = py(pick(500, 540));
    if (draws(FieldClass::Total)) cv_.text("Total", px(pick(300, 340)), ty, 0.7 * s, 2, FieldClass::Total);
    if (draws(FieldClass::TotalValue)) {
      const int cents = pick(1000, 9999999), x = pick(430, 460);
      cv_.text(detail::fmt_amount(cents), px(x), ty, 0.7 * s, 2, FieldClass::TotalValue);
    }

    if (draws(FieldClass::Stamp)) {
      const int cx = pick(120, 200), cy = pick(650, 700), ax_w = pick(60, 80), ax_h = pick(35, 50);
      const cv::Point c(px(cx), py(cy));
      const cv::Size ax(px(ax_w), py(ax_h));
      cv::ellipse(cv_.mat, c, ax, 0, 0, 360, cv::Scalar(40, 60, 170), 3, cv::LINE_AA);
      cv::putText(cv_.mat, "PAID", cv::Point(c.x - px(25), c.y + py(8)), cv::FONT_HERSHEY_SIMPLEX, 0.6 * s,
                  cv::Scalar(40, 60, 170), 2, cv::LINE_AA);
      cv_.anns.push_back({FieldClass::Stamp,
                          clip({double(c.x - ax.width - 3), double(c.y - ax.height - 3), double(c.x + ax.width + 3),
                                double(c.y + ax.height + 3)},
                               W, H),
                          std::nullopt});
    }
    if (draws(FieldClass::Signature)) {
      std::vector<cv::Point> pts;
      double x = px(rng.uniform_int(360, 400)), y = py(rng.uniform_int(660, 700));
      for (int k = 0; k < 14; ++k) {
        pts.emplace_back(static_cast<int>(x), static_cast<int>(y));
        x += rng.uniform(6, 14) * s;
        y += rng.uniform(-18, 18) * H / 800.0;
        y = std::clamp(y, double(py(630)), double(py(740)));
      }
      cv::polylines(cv_.mat, pts, false, cv::Scalar(10, 10, 90), 2, cv::LINE_AA);
      const cv::Rect r = cv::boundingRect(pts);
      cv_.anns.push_back(
          {FieldClass::Signature, clip({double(r.x - 3), double(r.y - 3), double(r.x + r.width + 3), double(r.y + r.height + 3)}, W, H),
           std::nullopt});
    }

    DocumentImage page = from_mat(cv_.mat);
    std::vector<Annotation> anns = std::move(cv_.anns);
    if (opt.max_skew_deg > 0) {
      plan.skew_deg = std::round(rng.uniform(-opt.max_skew_deg, opt.max_skew_deg) * 100.0) / 100.0;
      std::vector<BBox> boxes;
      for (const auto& a : anns) boxes.push_back(a.box);
      auto rot = rotate_with_boxes(page, boxes, plan.skew_deg, Interpolation::Bilinear, 0.0, opt.max_skew_deg);
      page = std::move(rot.image);
      for (std::size_t k = 0; k < anns.size(); ++k) anns[k].box = clip(rot.boxes[k], page.width(), page.height());
    }
    if (rng.bernoulli(opt.blur_probability)) {
      plan.blurred = true;
      page = detail::median_blur(page, {opt.blur_kernel}).image;
    }

    for (const auto& a : anns) plan.present.insert(a.field_class);
    if (plan.handwritten) {
      plan.expected_verdict = Verdict::Unsupported;
    } else {
      bool all = true;
      for (FieldClass c : kTextFields) all = all && plan.present.contains(c);
      for (FieldClass c : kObjectClasses) all = all && plan.present.contains(c);
      plan.expected_verdict = all ? Verdict::Valid : Verdict::Invalid;
    }

    DocumentRecord rec;
    rec.id = id;
    rec.image_path = "images/" + id + ".png";
    rec.image = std::make_shared<const DocumentImage>(std::move(page));
    rec.annotations = std::move(anns);
    rec.handwritten = plan.handwritten;
    fx.manifest.records.push_back(std::move(rec));
    fx.plan.push_back(std::move(plan));
  }
  return fx;
}

inline nlohmann::json plan_to_json(const SynthFixture& fx) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& p : fx.plan) {
    nlohmann::json present = nlohmann::json::array(), omitted = nlohmann::json::array();
    for (auto c : p.present) present.push_back(std::string(to_string(c)));
    for (auto c : p.omitted) omitted.push_back(std::string(to_string(c)));
    docs.push_back({{"id", p.id},
                    {"present", present},
                    {"omitted", omitted},
                    {"handwritten", p.handwritten},
                    {"skew_deg", p.skew_deg},
                    {"blurred", p.blurred},
                    {"expected_verdict", std::string(to_string(p.expected_verdict))}});
  }
  return {{"seed", fx.seed}, {"documents", docs}};
}

/// Options file: {"width", "height", "omit": {"<index>": [class, ...]},
/// "handwritten": [index, ...], "max_skew_deg", "blur_probability",
/// "blur_kernel", "standard_plan": bool}. "standard_plan" seeds the omission
/// cycle; explicit entries are applied on top.
inline SynthOptions synth_options_from_json(const nlohmann::json& j, std::size_t n_docs) {
  SynthOptions o;
  try {
    if (j.value("standard_plan", false)) o = standard_plan_options(n_docs);
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k == "standard_plan") continue;
      if (k == "width") o.width = it->get<int>();
      else if (k == "height") o.height = it->get<int>();
      else if (k == "max_skew_deg") o.max_skew_deg = it->get<double>();
      else if (k == "blur_probability") o.blur_probability = it->get<double>();
      else if (k == "blur_kernel") o.blur_kernel = it->get<int>();
      else if (k == "handwritten") {
        for (const auto& v : *it) o.handwritten.insert(v.get<std::size_t>());
      } else if (k == "omit") {
        for (auto d = it->begin(); d != it->end(); ++d) {
          auto& set = o.omit[std::stoul(d.key())];
          for (const auto& c : *d) {
            auto fc = parse_field_class(c.get<std::string>());
            if (!fc) throw Error(ErrorKind::Config, "omit: unknown class '" + c.get<std::string>() + "'");
            set.insert(*fc);
          }
        }
      } else {
        throw Error(ErrorKind::Config, "synth options: unknown key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("synth options: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorKind::Config, std::string("synth options: ") + e.what());
  }
  return o;
}

/// Writes manifest.json, plan.json, images/ and ocr/<id>.tsv (mock OCR
/// output in the local-engine format) under `dir`.
inline void write_fixture(const SynthFixture& fx, const std::filesystem::path& dir) {
  write_manifest(fx.manifest, dir);
  write_file(dir / "plan.json", plan_to_json(fx).dump(2) + "\n");
  MockOcrEngine ocr(fx.manifest);
  for (const auto& r : fx.manifest.records)
    write_file(dir / "ocr" / (r.id + ".tsv"), format_local_engine_output(ocr.analyze(*r.image, r.id)));
}

}  // namespace invoval

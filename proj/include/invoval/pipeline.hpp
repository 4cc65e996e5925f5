#pragma once

// End-to-end inference: OCR -> labeling -> token classification, and
// detection -> score filter -> NMS; both feed the validator.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core/version.hpp>

#include "invoval/config.hpp"
#include "invoval/inference.hpp"
#include "invoval/labeling.hpp"
#include "invoval/metrics.hpp"
#include "invoval/ocr.hpp"
#include "invoval/ocr_remote.hpp"
#include "invoval/onnx_backend.hpp"
#include "invoval/validator.hpp"

namespace invoval {

inline constexpr std::string_view kVersion = "0.1.0";

struct Backends {
  std::shared_ptr<OcrEngine> ocr;
  std::shared_ptr<LayoutBackend> layout;
  std::shared_ptr<DetectorBackend> detector;
};

namespace detail {

inline std::shared_ptr<LayoutBackend> make_layout(const std::string& d) {
  if (d == "mock") return std::make_shared<MockLayoutBackend>();
  if (d.starts_with("onnx:")) return std::make_shared<OnnxLayoutBackend>(d.substr(5));
  throw Error(ErrorKind::Config, "unknown layout backend '" + d + "'");
}

inline std::shared_ptr<DetectorBackend> make_detector(const std::string& d, const DatasetManifest& m) {
  if (d == "mock") return std::make_shared<MockDetectorBackend>(m);
  if (d.starts_with("onnx:")) return std::make_shared<OnnxDetectorBackend>(d.substr(5));
  throw Error(ErrorKind::Config, "unknown detector backend '" + d + "'");
}

}  // namespace detail

inline std::shared_ptr<OcrEngine> make_ocr_engine(const PipelineConfig& cfg, const DatasetManifest& m) {
  const auto& d = cfg.ocr;
  if (d == "mock") return std::make_shared<MockOcrEngine>(m);
  if (d.starts_with("recorded-tsv:")) return std::make_shared<RecordedOcrEngine>(d.substr(13), RecordedOcrEngine::Format::TesseractTsv);
  if (d.starts_with("recorded-read:")) return std::make_shared<RecordedOcrEngine>(d.substr(14), RecordedOcrEngine::Format::ReadJson);
  if (d == "tesseract") {
    if (!TesseractCliEngine::available()) throw Error(ErrorKind::Config, "tesseract executable not found");
    return std::make_shared<TesseractCliEngine>();
  }
  if (d == "remote") {
    auto s = remote_ocr_settings_from_env();
    if (!s) throw Error(ErrorKind::Config, "remote OCR needs OCR_ENDPOINT and OCR_KEY");
    s->max_in_flight = cfg.max_inflight_requests;
    return std::make_shared<RemoteReadEngine>(*s);
  }
  throw Error(ErrorKind::Config, "unknown OCR engine '" + d + "'");
}

/// Resolves every descriptor; any failure is a Config error raised before a
/// single document runs.
inline Backends make_backends(const PipelineConfig& cfg, const DatasetManifest& m) {
  try {
    return {make_ocr_engine(cfg, m), make_safe(detail::make_layout(cfg.backends.layout)),
            make_safe(detail::make_detector(cfg.backends.detector, m))};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    throw Error(ErrorKind::Config, e.what());
  }
}

struct StageTimings {
  double ocr_ms = 0, labeling_ms = 0, layout_ms = 0, detection_ms = 0, validation_ms = 0;

  StageTimings& operator+=(const StageTimings& o) {
    ocr_ms += o.ocr_ms;
    labeling_ms += o.labeling_ms;
    layout_ms += o.layout_ms;
    detection_ms += o.detection_ms;
    validation_ms += o.validation_ms;
    return *this;
  }
};

struct DocumentFailure {
  std::string document_id;
  std::string kind;
  std::string message;
};

/// Everything one document contributes to a run.
struct DocumentResult {
  std::string document_id;
  std::optional<ValidationReport> report;
  std::optional<DocumentFailure> failure;
  std::vector<FieldClass> predicted_labels;  // per token, for evaluation
  std::vector<FieldClass> gold_labels;
  std::optional<SequenceExample> prediction;  // whole document, predicted labels
  std::vector<Detection> detections;
  StageTimings timings;
};

struct RunResult {
  std::vector<ValidationReport> reports;  // sorted by document id
  std::vector<DocumentFailure> failures;  // sorted by document id
  std::vector<SequenceExample> predictions;                  // one per evaluated document
  std::map<std::string, std::vector<Detection>> detections;  // post-NMS, per document
  TokenEvalReport token_eval;
  DetectionEvalReport detection_eval;
  StageTimings timings;
  std::string fingerprint;
  double wall_ms = 0;

  int exit_code() const { return failures.empty() ? 0 : 1; }
};

namespace detail {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - start_).count();
    start_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Runs one document. Handwritten pages are Unsupported and skip inference.
inline DocumentResult process_document(const DocumentRecord& rec, const PipelineConfig& cfg, const Backends& be,
                                       const std::string& fingerprint) {
  DocumentResult out;
  out.document_id = rec.id;
  if (rec.handwritten) {
    out.report = validate(rec.id, {}, {}, true, cfg.validation, fingerprint);
    return out;
  }
  if (!rec.image) throw Error(ErrorKind::ImageLoad, "document '" + rec.id + "' has no image");
  const DocumentImage& image = *rec.image;
  detail::Stopwatch sw;

  auto tokens = sort_reading_order(be.ocr->analyze(image, rec.id));
  out.timings.ocr_ms = sw.lap();

  const auto labeled = assign_labels(tokens, rec.annotations, cfg.label_overlap);
  out.timings.labeling_ms = sw.lap();

  std::vector<ClassifiedToken> classified(labeled.size());
  std::vector<bool> seen(labeled.size(), false);
  if (!labeled.empty()) {
    const auto windows = build_sequence_examples(rec.id, labeled, image.width(), image.height(),
                                                 static_cast<std::size_t>(cfg.max_sequence_length),
                                                 static_cast<std::size_t>(cfg.window_overlap));
    for (const auto& w : windows) {
      const auto preds = classify_tokens(*be.layout, w, image);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::size_t k = w.offset + i;
        if (seen[k]) continue;  // overlapping windows: first prediction wins
        seen[k] = true;
        classified[k] = {labeled[k].token, preds[i].label, preds[i].confidence};
      }
    }
  }
  SequenceExample pred{rec.id, 0, 0, {}, {}, {}};
  for (std::size_t k = 0; k < labeled.size(); ++k) {
    out.predicted_labels.push_back(classified[k].label);
    out.gold_labels.push_back(labeled[k].label);
    pred.words.push_back(labeled[k].token.text);
    pred.boxes.push_back(normalize_box(labeled[k].token.box, image.width(), image.height()));
    pred.labels.push_back(classified[k].label);
  }
  out.prediction = std::move(pred);
  out.timings.layout_ms = sw.lap();

  std::vector<Detection> raw;
  try {
    raw = be.detector->predict(image, rec.id);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::BackendFailure) throw;
    throw Error(ErrorKind::BackendFailure, be.detector->name() + " on '" + rec.id + "': " + e.what());
  }
  out.detections = nms(filter_detections(raw, cfg.score_threshold), cfg.nms_iou);
  out.timings.detection_ms = sw.lap();

  out.report = validate(rec.id, classified, out.detections, false, cfg.validation, fingerprint);
  out.timings.validation_ms = sw.lap();
  return out;
}

/// Processes every record on a pool of `cfg.effective_jobs()` workers. A
/// failing document is recorded and never stops the others.
inline RunResult run_pipeline(const PipelineConfig& cfg, const DatasetManifest& manifest, const Backends& backends) {
  validate(cfg);
  detail::Stopwatch wall;
  RunResult run;
  run.fingerprint = config_fingerprint(cfg);

  const std::size_t n = manifest.records.size();
  std::vector<DocumentResult> results(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto& rec = manifest.records[i];
      try {
        results[i] = process_document(rec, cfg, backends, run.fingerprint);
      } catch (const Error& e) {
        results[i] = DocumentResult{};
        results[i].document_id = rec.id;
        results[i].failure = DocumentFailure{rec.id, std::string(to_string(e.kind())), e.what()};
      } catch (const std::exception& e) {
        results[i] = DocumentResult{};
        results[i].document_id = rec.id;
        results[i].failure = DocumentFailure{rec.id, "Internal", e.what()};
      }
    }
  };
  const auto jobs = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(cfg.effective_jobs()), std::max<std::size_t>(n, 1)));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
  }

  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.document_id < b.document_id; });
  std::vector<FieldClass> pred, gold;
  std::vector<ImageEvalInput> det_inputs;
  for (auto& r : results) {
    run.timings += r.timings;
    if (r.failure) {
      run.failures.push_back(*r.failure);
      continue;
    }
    pred.insert(pred.end(), r.predicted_labels.begin(), r.predicted_labels.end());
    gold.insert(gold.end(), r.gold_labels.begin(), r.gold_labels.end());
    if (const auto* rec = manifest.find(r.document_id); rec && !rec->handwritten) {
      det_inputs.push_back({r.document_id, r.detections, rec->annotations});
      run.detections[r.document_id] = r.detections;
    }
    if (r.prediction) run.predictions.push_back(std::move(*r.prediction));
    run.reports.push_back(std::move(*r.report));
  }
  run.token_eval = precision_recall_f1(pred, gold);
  run.detection_eval = mean_ap(det_inputs);
  run.wall_ms = wall.lap();
  return run;
}

inline RunResult run_pipeline(const PipelineConfig& cfg, const DatasetManifest& manifest) {
  validate(cfg);
  return run_pipeline(cfg, manifest, make_backends(cfg, manifest));
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::json summary_json(const RunResult& run) {
  std::map<std::string, std::size_t> verdicts{{"Valid", 0}, {"Invalid", 0}, {"Unsupported", 0}};
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& r : run.reports) {
    ++verdicts[std::string(to_string(r.verdict))];
    docs.push_back({{"id", r.document_id}, {"verdict", std::string(to_string(r.verdict))}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : run.failures) failures.push_back({{"id", f.document_id}, {"kind", f.kind}, {"message", f.message}});
  return {{"config_fingerprint", run.fingerprint},
          {"documents", docs},
          {"verdict_counts", verdicts},
          {"failures", failures},
          {"token_eval", to_json(run.token_eval)},
          {"detection_eval", to_json(run.detection_eval)}};
}

inline nlohmann::json run_manifest_json(const RunResult& run, const PipelineConfig& cfg) {
  auto ms = [](double v) { return std::round(v * 1000.0) / 1000.0; };
  return {{"version", std::string(kVersion)},
          {"opencv_version", CV_VERSION},
          {"json_version", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                               std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"config_fingerprint", run.fingerprint},
          {"seed", cfg.seed},
          {"jobs", cfg.effective_jobs()},
          {"config", to_json(cfg)},
          {"documents", run.reports.size() + run.failures.size()},
          {"failures", run.failures.size()},
          {"wall_ms", ms(run.wall_ms)},
          {"stage_ms",
           {{"ocr", ms(run.timings.ocr_ms)},
            {"labeling", ms(run.timings.labeling_ms)},
            {"layout", ms(run.timings.layout_ms)},
            {"detection", ms(run.timings.detection_ms)},
            {"validation", ms(run.timings.validation_ms)}}}};
}

inline nlohmann::json detections_to_json(const std::map<std::string, std::vector<Detection>>& dets) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, v] : dets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : v) arr.push_back(to_json(d));
    j[id] = arr;
  }
  return j;
}

inline std::map<std::string, std::vector<Detection>> detections_from_json(const nlohmann::json& j) {
  std::map<std::string, std::vector<Detection>> out;
  if (!j.is_object()) throw Error(ErrorKind::MalformedManifest, "detections: expected an object keyed by document id");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto& v = out[it.key()];
    for (const auto& d : *it) v.push_back(detection_from_json(d));
  }
  return out;
}

/// Writes reports/<id>.json, summary.json, predictions.jsonl,
/// detections.json and run.json. Only run.json holds timings, so everything
/// else is reproducible byte for byte.
inline void write_run(const RunResult& run, const PipelineConfig& cfg, const std::filesystem::path& dir) {
  for (const auto& r : run.reports) write_file(dir / "reports" / (r.document_id + ".json"), to_json(r).dump(2) + "\n");
  write_file(dir / "predictions.jsonl", to_jsonl(run.predictions));
  write_file(dir / "detections.json", detections_to_json(run.detections).dump(2) + "\n");
  write_file(dir / "summary.json", summary_json(run).dump(2) + "\n");
  write_file(dir / "run.json", run_manifest_json(run, cfg).dump(2) + "\n");
}

}  // namespace invoval

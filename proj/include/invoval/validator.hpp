#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "invoval/core.hpp"
#include "invoval/inference.hpp"
#include "invoval/ocr.hpp"

namespace invoval {

/// Which elements make a machine-written invoice valid.
struct ValidationCriteria {
  std::set<FieldClass> required_fields = {kTextFields.begin(), kTextFields.end()};
  bool require_stamp = true;
  bool require_signature = true;
  double min_detection_score = 0.5;
  double min_field_confidence = 0.5;

  void validate() const {
    if (!(min_detection_score >= 0 && min_detection_score <= 1) || !(min_field_confidence >= 0 && min_field_confidence <= 1))
      throw Error(ErrorKind::Config, "validation thresholds must lie in [0, 1]");
    for (auto f : required_fields)
      if (!is_text_field(f)) throw Error(ErrorKind::Config, "required fields must be keyword classes");
  }

  friend bool operator==(const ValidationCriteria&, const ValidationCriteria&) = default;
};

/// A token with the label and confidence assigned by the layout model.
struct ClassifiedToken {
  OcrToken token;
  FieldClass label = FieldClass::Other;
  double confidence = 0;
};

enum class Verdict { Valid, Invalid, Unsupported };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Valid: return "Valid";
    case Verdict::Invalid: return "Invalid";
    case Verdict::Unsupported: return "Unsupported";
  }
  return "Invalid";
}

inline std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "Valid") return Verdict::Valid;
  if (s == "Invalid") return Verdict::Invalid;
  if (s == "Unsupported") return Verdict::Unsupported;
  return std::nullopt;
}

struct Evidence {
  enum class Kind { Token, Detection } kind = Kind::Token;
  std::string text;  // token text; empty for detections
  BBox box;
  double score = 0;  // token confidence or detection score

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct CriterionResult {
  FieldClass field_class = FieldClass::Title;
  bool satisfied = false;
  std::optional<Evidence> evidence;  // best supporting item when satisfied

  friend bool operator==(const CriterionResult&, const CriterionResult&) = default;
};

struct ValidationReport {
  static constexpr int kSchemaVersion = 1;

  std::string document_id;
  Verdict verdict = Verdict::Invalid;
  std::vector<CriterionResult> criteria;  // enabled criteria in canonical order; empty when Unsupported
  ValidationCriteria criteria_snapshot;
  std::string config_fingerprint;

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

inline std::string criterion_name(FieldClass c) {
  switch (c) {
    case FieldClass::Stamp: return "stamp";
    case FieldClass::Signature: return "signature";
    default: return "field:" + std::string(to_string(c));
  }
}

/// Applies the validity rule. Handwritten documents are Unsupported and no
/// criterion is evaluated; otherwise every enabled criterion must hold.
inline ValidationReport validate(std::string_view document_id, const std::vector<ClassifiedToken>& tokens,
                                 const std::vector<Detection>& detections, bool handwritten,
                                 const ValidationCriteria& criteria, std::string config_fingerprint = {}) {
  ValidationReport rep{std::string(document_id), Verdict::Unsupported, {}, criteria, std::move(config_fingerprint)};
  if (handwritten) return rep;

  for (FieldClass f : kTextFields) {
    if (!criteria.required_fields.contains(f)) continue;
    CriterionResult cr{f, false, std::nullopt};
    for (const auto& t : tokens) {
      if (t.label != f || t.confidence < criteria.min_field_confidence) continue;
      if (!cr.evidence || t.confidence > cr.evidence->score) {
        cr.evidence = Evidence{Evidence::Kind::Token, t.token.text, t.token.box, t.confidence};
      }
    }
    cr.satisfied = cr.evidence.has_value();
    rep.criteria.push_back(std::move(cr));
  }
  for (FieldClass f : kObjectClasses) {
    if ((f == FieldClass::Stamp && !criteria.require_stamp) || (f == FieldClass::Signature && !criteria.require_signature))
      continue;
    CriterionResult cr{f, false, std::nullopt};
    for (const auto& d : detections) {
      if (d.field_class != f || d.score < criteria.min_detection_score) continue;
      if (!cr.evidence || d.score > cr.evidence->score) cr.evidence = Evidence{Evidence::Kind::Detection, {}, d.box, d.score};
    }
    cr.satisfied = cr.evidence.has_value();
    rep.criteria.push_back(std::move(cr));
  }
  const bool all = std::all_of(rep.criteria.begin(), rep.criteria.end(), [](const auto& c) { return c.satisfied; });
  rep.verdict = all ? Verdict::Valid : Verdict::Invalid;
  return rep;
}

/// One line per criterion, failed criteria first; a single line for
/// Unsupported documents.
inline std::vector<std::string> explain(const ValidationReport& report) {
  std::vector<std::string> lines;
  if (report.verdict == Verdict::Unsupported) {
    lines.push_back(report.document_id + ": unsupported (handwritten document), criteria not evaluated");
    return lines;
  }
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& c : report.criteria) {
      if (c.satisfied != (pass == 1)) continue;
      std::string line = report.document_id + ": " + criterion_name(c.field_class) + (c.satisfied ? " satisfied" : " FAILED");
      if (c.evidence) {
        char buf[160];
        std::snprintf(buf, sizeof buf, " (score %.3f at [%.1f, %.1f, %.1f, %.1f])", c.evidence->score, c.evidence->box.x_min,
                      c.evidence->box.y_min, c.evidence->box.x_max, c.evidence->box.y_max);
        if (!c.evidence->text.empty()) line += " \"" + c.evidence->text + "\"";
        line += buf;
      } else {
        line += " (no qualifying evidence)";
      }
      lines.push_back(std::move(line));
    }
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Report JSON (schema_version 1)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ValidationCriteria& c) {
  nlohmann::json fields = nlohmann::json::array();
  for (FieldClass f : kTextFields)
    if (c.required_fields.contains(f)) fields.push_back(std::string(to_string(f)));
  return {{"required_fields", fields},
          {"require_stamp", c.require_stamp},
          {"require_signature", c.require_signature},
          {"min_detection_score", c.min_detection_score},
          {"min_field_confidence", c.min_field_confidence}};
}

inline ValidationCriteria criteria_from_json(const nlohmann::json& j) {
  ValidationCriteria c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "required_fields") {
      c.required_fields.clear();
      for (const auto& f : *it) {
        auto fc = parse_field_class(f.get<std::string>());
        if (!fc) throw Error(ErrorKind::UnknownClass, "required_fields: '" + f.get<std::string>() + "'");
        c.required_fields.insert(*fc);
      }
    } else if (k == "require_stamp") {
      c.require_stamp = it->get<bool>();
    } else if (k == "require_signature") {
      c.require_signature = it->get<bool>();
    } else if (k == "min_detection_score") {
      c.min_detection_score = it->get<double>();
    } else if (k == "min_field_confidence") {
      c.min_field_confidence = it->get<double>();
    } else {
      throw Error(ErrorKind::Config, "validation: unknown key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json crit = nlohmann::json::array();
  for (const auto& c : r.criteria) {
    nlohmann::json e = nullptr;
    if (c.evidence) {
      e = {{"kind", c.evidence->kind == Evidence::Kind::Token ? "token" : "detection"},
           {"text", c.evidence->text},
           {"box", c.evidence->box.as_array()},
           {"score", c.evidence->score}};
    }
    crit.push_back({{"criterion", criterion_name(c.field_class)},
                    {"class", std::string(to_string(c.field_class))},
                    {"satisfied", c.satisfied},
                    {"evidence", e}});
  }
  return {{"schema_version", ValidationReport::kSchemaVersion},
          {"document_id", r.document_id},
          {"verdict", std::string(to_string(r.verdict))},
          {"criteria", crit},
          {"criteria_snapshot", to_json(r.criteria_snapshot)},
          {"config_fingerprint", r.config_fingerprint}};
}

inline ValidationReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != ValidationReport::kSchemaVersion)
      throw Error(ErrorKind::MalformedManifest, "unsupported report schema_version");
    ValidationReport r;
    r.document_id = j.at("document_id").get<std::string>();
    auto v = parse_verdict(j.at("verdict").get<std::string>());
    if (!v) throw Error(ErrorKind::MalformedManifest, "unknown verdict");
    r.verdict = *v;
    for (const auto& jc : j.at("criteria")) {
      CriterionResult c;
      auto fc = parse_field_class(jc.at("class").get<std::string>());
      if (!fc) throw Error(ErrorKind::UnknownClass, "criterion class");
      c.field_class = *fc;
      c.satisfied = jc.at("satisfied").get<bool>();
      if (const auto& je = jc.at("evidence"); !je.is_null()) {
        const auto b = je.at("box").get<std::array<double, 4>>();
        c.evidence = Evidence{je.at("kind").get<std::string>() == "token" ? Evidence::Kind::Token : Evidence::Kind::Detection,
                              je.at("text").get<std::string>(),
                              {b[0], b[1], b[2], b[3]},
                              je.at("score").get<double>()};
      }
      r.criteria.push_back(std::move(c));
    }
    r.criteria_snapshot = criteria_from_json(j.at("criteria_snapshot"));
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedManifest, std::string("report: ") + e.what());
  }
}

}  // namespace invoval

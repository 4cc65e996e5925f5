#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "invoval/core.hpp"
#include "invoval/ocr.hpp"

namespace invoval {

/// A token with its reference label. `source_annotation` is set exactly when
/// the label is a field class.
struct LabeledToken {
  OcrToken token;
  FieldClass label = FieldClass::Other;
  std::optional<std::size_t> source_annotation;
};

/// Labels each token with the text-field annotation covering the largest
/// share of the token's own area, provided that share reaches
/// `overlap_threshold`. Ties prefer the smaller annotation, then the lower
/// index. Stamp and Signature regions never label tokens.
inline std::vector<LabeledToken> assign_labels(const std::vector<OcrToken>& tokens,
                                               const std::vector<Annotation>& annotations,
                                               double overlap_threshold = 0.5) {
  std::vector<LabeledToken> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    LabeledToken lt{t, FieldClass::Other, std::nullopt};
    const double area = t.box.area();
    double best_ratio = -1;
    double best_area = 0;
    for (std::size_t k = 0; k < annotations.size(); ++k) {
      const auto& a = annotations[k];
      if (!is_text_field(a.field_class) || area <= 0) continue;
      const double ratio = intersection_area(t.box, a.box) / area;
      if (ratio < overlap_threshold || ratio <= 0) continue;
      const double a_area = a.box.area();
      if (ratio > best_ratio || (ratio == best_ratio && a_area < best_area)) {
        best_ratio = ratio;
        best_area = a_area;
        lt.label = a.field_class;
        lt.source_annotation = k;
      }
    }
    out.push_back(std::move(lt));
  }
  return out;
}

inline ClassCounts count_label_instances(const std::vector<std::vector<LabeledToken>>& documents) {
  ClassCounts out;
  for (const auto& doc : documents)
    for (const auto& t : doc) ++out[t.label];
  return out;
}

inline ClassCounts count_labels(const std::vector<FieldClass>& labels) {
  ClassCounts out;
  for (auto l : labels) ++out[l];
  return out;
}

/// Column order of the instance-count table: O, then the five keyword fields.
inline constexpr std::array<FieldClass, 6> kInstanceTableColumns = {
    FieldClass::Other, FieldClass::Title, FieldClass::Date, FieldClass::Client, FieldClass::Total, FieldClass::TotalValue};

inline std::string_view display_name(FieldClass c) {
  if (c == FieldClass::TotalValue) return "Total Value";
  return to_string(c);
}

struct InstanceCountRow {
  std::string source;  // e.g. the OCR engine that produced the tokens
  ClassCounts counts;
};

/// Renders per-source class instance counts as an aligned text table.
inline std::string render_instance_table(const std::vector<InstanceCountRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"Class"};
  for (auto c : kInstanceTableColumns) header.emplace_back(display_name(c));
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.source};
    for (auto c : kInstanceTableColumns) line.push_back(std::to_string(r.counts[c]));
    cells.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i + 1 == line.size()) {
        os << line[i];
      } else {
        os << std::left << std::setw(static_cast<int>(width[i] + 2)) << line[i];
      }
    }
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json instance_counts_to_json(const InstanceCountRow& row) {
  nlohmann::json counts = nlohmann::json::object();
  for (auto c : kInstanceTableColumns) counts[std::string(to_string(c))] = row.counts[c];
  return {{"source", row.source}, {"counts", counts}};
}

inline InstanceCountRow instance_counts_from_json(const nlohmann::json& j) {
  InstanceCountRow row;
  try {
    row.source = j.at("source").get<std::string>();
    for (const auto& [key, value] : j.at("counts").items()) {
      auto c = parse_field_class(key, true);
      if (!c) throw Error(ErrorKind::UnknownClass, "counts: '" + key + "'");
      row.counts[*c] = value.get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedManifest, std::string("instance counts: ") + e.what());
  }
  return row;
}

// ---------------------------------------------------------------------------
// Sequence encoding for layout models
// ---------------------------------------------------------------------------

/// One window of a document's tokens in reading order, with boxes on the
/// 0-1000 grid.
struct SequenceExample {
  std::string document_id;
  std::size_t window = 0;
  std::size_t offset = 0;  // index of the first token in the document
  std::vector<std::string> words;
  std::vector<std::array<int, 4>> boxes;
  std::vector<FieldClass> labels;

  std::size_t size() const noexcept { return words.size(); }

  friend bool operator==(const SequenceExample&, const SequenceExample&) = default;
};

inline std::array<int, 4> normalize_box(const BBox& b, int width, int height) {
  auto n = [](double v, int dim) {
    const double scaled = std::floor(v * 1000.0 / dim);
    return static_cast<int>(std::clamp(scaled, 0.0, 1000.0));
  };
  return {n(b.x_min, width), n(b.y_min, height), n(b.x_max, width), n(b.y_max, height)};
}

/// Splits a document into windows of at most `max_sequence_length` tokens;
/// consecutive windows share `overlap` tokens.
inline std::vector<SequenceExample> build_sequence_examples(std::string_view document_id,
                                                            const std::vector<LabeledToken>& tokens, int width,
                                                            int height, std::size_t max_sequence_length = 512,
                                                            std::size_t overlap = 0) {
  if (tokens.empty()) throw Error(ErrorKind::EmptyDocument, "document '" + std::string(document_id) + "' has no tokens");
  if (max_sequence_length == 0 || overlap >= max_sequence_length)
    throw Error(ErrorKind::InvalidParams, "window overlap must be smaller than the sequence length");
  if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidParams, "image dimensions must be positive");

  std::vector<SequenceExample> out;
  const std::size_t step = max_sequence_length - overlap;
  for (std::size_t start = 0;; start += step) {
    const std::size_t end = std::min(tokens.size(), start + max_sequence_length);
    SequenceExample ex;
    ex.document_id = std::string(document_id);
    ex.window = out.size();
    ex.offset = start;
    for (std::size_t i = start; i < end; ++i) {
      ex.words.push_back(tokens[i].token.text);
      ex.boxes.push_back(normalize_box(tokens[i].token.box, width, height));
      ex.labels.push_back(tokens[i].label);
    }
    out.push_back(std::move(ex));
    if (end == tokens.size()) break;
  }
  return out;
}

inline nlohmann::json to_json(const SequenceExample& ex) {
  nlohmann::json labels = nlohmann::json::array();
  for (auto l : ex.labels) labels.push_back(std::string(to_string(l)));
  return {{"id", ex.document_id}, {"window", ex.window}, {"offset", ex.offset},
          {"words", ex.words},    {"boxes", ex.boxes},   {"labels", labels}};
}

inline SequenceExample sequence_example_from_json(const nlohmann::json& j) {
  SequenceExample ex;
  try {
    ex.document_id = j.at("id").get<std::string>();
    ex.window = j.at("window").get<std::size_t>();
    ex.offset = j.at("offset").get<std::size_t>();
    ex.words = j.at("words").get<std::vector<std::string>>();
    ex.boxes = j.at("boxes").get<std::vector<std::array<int, 4>>>();
    for (const auto& l : j.at("labels")) {
      auto c = parse_field_class(l.get<std::string>(), true);
      if (!c) throw Error(ErrorKind::UnknownClass, "label '" + l.get<std::string>() + "'");
      ex.labels.push_back(*c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedManifest, std::string("sequence example: ") + e.what());
  }
  if (ex.words.size() != ex.boxes.size() || ex.words.size() != ex.labels.size())
    throw Error(ErrorKind::LengthMismatch, "sequence example '" + ex.document_id + "': ragged arrays");
  for (const auto& b : ex.boxes)
    for (int v : b)
      if (v < 0 || v > 1000) throw Error(ErrorKind::MalformedManifest, "sequence example: box outside the 0-1000 grid");
  return ex;
}

/// Reassembles per-document label sequences from windows; where windows
/// overlap, the earliest window's label wins.
inline std::map<std::string, std::vector<FieldClass>> flatten_labels(const std::vector<SequenceExample>& examples) {
  std::map<std::string, std::vector<std::optional<FieldClass>>> slots;
  for (const auto& ex : examples) {
    auto& v = slots[ex.document_id];
    if (v.size() < ex.offset + ex.size()) v.resize(ex.offset + ex.size());
    for (std::size_t i = 0; i < ex.size(); ++i)
      if (!v[ex.offset + i]) v[ex.offset + i] = ex.labels[i];
  }
  std::map<std::string, std::vector<FieldClass>> out;
  for (const auto& [id, v] : slots) {
    auto& o = out[id];
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i]) throw Error(ErrorKind::MalformedManifest, "document '" + id + "' has a gap at token " + std::to_string(i));
      o.push_back(*v[i]);
    }
  }
  return out;
}

/// JSON-lines: one example per line.
inline std::string to_jsonl(const std::vector<SequenceExample>& examples) {
  std::string out;
  for (const auto& ex : examples) out += to_json(ex).dump() + "\n";
  return out;
}

inline std::vector<SequenceExample> parse_jsonl(std::string_view text) {
  std::vector<SequenceExample> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(sequence_example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::MalformedManifest, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace invoval

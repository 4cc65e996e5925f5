#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "invoval/core.hpp"
#include "invoval/image.hpp"
#include "invoval/manifest.hpp"
#include "invoval/seed.hpp"
#include "invoval/text.hpp"

namespace invoval {

/// A recognized word with its pixel box and a confidence in [0, 1].
struct OcrToken {
  std::string text;
  BBox box;
  double confidence = 1.0;

  friend bool operator==(const OcrToken&, const OcrToken&) = default;
};

inline nlohmann::json to_json(const OcrToken& t) {
  return {{"text", t.text}, {"box", t.box.as_array()}, {"confidence", t.confidence}};
}

inline OcrToken token_from_json(const nlohmann::json& j) {
  try {
    const auto b = j.at("box").get<std::array<double, 4>>();
    OcrToken t{j.at("text").get<std::string>(), {b[0], b[1], b[2], b[3]}, j.at("confidence").get<double>()};
    if (!t.box.valid() || !(t.confidence >= 0 && t.confidence <= 1) || trim(t.text).empty()) {
      throw Error(ErrorKind::MalformedResponse, "token violates its invariants");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedResponse, std::string("token: ") + e.what());
  }
}

/// Clips tokens to the image and drops any whose box collapses.
inline std::vector<OcrToken> clip_tokens(std::vector<OcrToken> tokens, int width, int height) {
  std::vector<OcrToken> out;
  out.reserve(tokens.size());
  for (auto& t : tokens) {
    t.box = clip(t.box, width, height);
    if (t.box.valid()) out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Local engine: Tesseract TSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    // std::from_chars for double is unavailable in some toolchains; strtod on a copy.
    std::string tmp(s);
    char* end = nullptr;
    out = std::strtod(tmp.c_str(), &end);
    return end == tmp.c_str() + tmp.size() && std::isfinite(out);
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
  }
}

}  // namespace detail

/// Parses `tesseract ... tsv` output. Word rows (level 5) with conf >= 0
/// become tokens; structural rows (conf -1) and blank words are dropped.
inline std::vector<OcrToken> parse_local_engine_output(std::string_view tsv) {
  std::vector<OcrToken> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= tsv.size()) {
    auto nl = tsv.find('\n', pos);
    if (nl == std::string_view::npos) nl = tsv.size();
    std::string_view line = tsv.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (nl == tsv.size()) break;
      continue;
    }
    if (line_no == 1 && line.starts_with("level")) continue;

    const auto f = detail::split_tabs(line);
    if (f.size() != 12 && f.size() != 11) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": expected 12 tab-separated columns, got " +
                                               std::to_string(f.size()));
    }
    int level = 0;
    std::array<long, 4> ltwh{};
    double conf = 0;
    bool ok = detail::parse_number(f[0], level);
    for (std::size_t k = 0; k < 4; ++k) ok = ok && detail::parse_number(f[6 + k], ltwh[k]);
    ok = ok && detail::parse_number(f[10], conf);
    if (!ok) throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": non-numeric field");
    if (level != 5 || conf < 0) continue;
    if (conf > 100) throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": confidence above 100");
    const std::string_view text = f.size() == 12 ? trim(f[11]) : std::string_view{};
    if (text.empty()) continue;
    OcrToken t{std::string(text),
               {static_cast<double>(ltwh[0]), static_cast<double>(ltwh[1]), static_cast<double>(ltwh[0] + ltwh[2]),
                static_cast<double>(ltwh[1] + ltwh[3])},
               conf / 100.0};
    if (!t.box.valid()) continue;  // zero-size word boxes carry no geometry
    out.push_back(std::move(t));
  }
  return out;
}

/// Renders tokens as Tesseract TSV (one word row per token, one line per token).
inline std::string format_local_engine_output(const std::vector<OcrToken>& tokens) {
  std::ostringstream os;
  os << "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext\n";
  os << std::setprecision(15);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const auto l = std::lround(t.box.x_min), tp = std::lround(t.box.y_min);
    os << "5\t1\t1\t1\t" << (i + 1) << "\t1\t" << l << '\t' << tp << '\t' << (std::lround(t.box.x_max) - l) << '\t'
       << (std::lround(t.box.y_max) - tp) << '\t' << t.confidence * 100.0 << '\t' << t.text << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Remote engine: Read API v3.2 result JSON
// ---------------------------------------------------------------------------

namespace detail {

inline BBox polygon_envelope(const nlohmann::json& poly, const std::string& path) {
  if (!poly.is_array() || poly.size() != 8) throw Error(ErrorKind::MalformedResponse, path + ": boundingBox must have 8 numbers");
  BBox b{1e300, 1e300, -1e300, -1e300};
  for (std::size_t i = 0; i < 8; ++i) {
    if (!poly[i].is_number()) throw Error(ErrorKind::MalformedResponse, path + ": boundingBox must be numeric");
    const double v = std::max(0.0, poly[i].get<double>());
    if (i % 2 == 0) {
      b.x_min = std::min(b.x_min, v);
      b.x_max = std::max(b.x_max, v);
    } else {
      b.y_min = std::min(b.y_min, v);
      b.y_max = std::max(b.y_max, v);
    }
  }
  return b;
}

}  // namespace detail

/// Parses a Read result document into word tokens; each 8-number polygon
/// becomes its axis-aligned envelope.
inline std::vector<OcrToken> parse_cloud_read_response(std::string_view json_text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::MalformedResponse, std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorKind::MalformedResponse, "response must be an object");
  if (auto st = root.find("status"); st != root.end() && st->is_string() && *st != "succeeded") {
    throw Error(ErrorKind::EmptyAnalysis, "analysis status is '" + st->get<std::string>() + "'");
  }
  auto ar = root.find("analyzeResult");
  if (ar == root.end() || !ar->is_object()) throw Error(ErrorKind::EmptyAnalysis, "missing analyzeResult");
  auto pages = ar->find("readResults");
  if (pages == ar->end() || !pages->is_array() || pages->empty()) throw Error(ErrorKind::EmptyAnalysis, "no readResults");

  std::vector<OcrToken> out;
  for (std::size_t p = 0; p < pages->size(); ++p) {
    const auto& page = (*pages)[p];
    const std::string ppath = "analyzeResult.readResults[" + std::to_string(p) + "]";
    if (!page.is_object()) throw Error(ErrorKind::MalformedResponse, ppath + ": expected an object");
    auto lines = page.find("lines");
    if (lines == page.end()) continue;
    if (!lines->is_array()) throw Error(ErrorKind::MalformedResponse, ppath + ".lines: expected an array");
    for (std::size_t l = 0; l < lines->size(); ++l) {
      const auto& line = (*lines)[l];
      const std::string lpath = ppath + ".lines[" + std::to_string(l) + "]";
      auto words = line.find("words");
      if (words == line.end() || !words->is_array()) throw Error(ErrorKind::MalformedResponse, lpath + ": missing words");
      for (std::size_t w = 0; w < words->size(); ++w) {
        const auto& word = (*words)[w];
        const std::string wpath = lpath + ".words[" + std::to_string(w) + "]";
        if (!word.is_object() || !word.contains("text") || !word["text"].is_string() || !word.contains("boundingBox")) {
          throw Error(ErrorKind::MalformedResponse, wpath + ": word needs text and boundingBox");
        }
        double conf = 1.0;
        if (auto c = word.find("confidence"); c != word.end()) {
          if (!c->is_number()) throw Error(ErrorKind::MalformedResponse, wpath + ".confidence: expected a number");
          conf = std::clamp(c->get<double>(), 0.0, 1.0);
        }
        const std::string_view text = trim(word["text"].get_ref<const std::string&>());
        BBox box = detail::polygon_envelope(word["boundingBox"], wpath + ".boundingBox");
        if (text.empty() || !box.valid()) continue;
        out.push_back({std::string(text), box, conf});
      }
    }
  }
  return out;
}

/// Renders tokens as a single-page Read result, one line per token.
inline std::string format_cloud_read_response(const std::vector<OcrToken>& tokens, int width, int height) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& t : tokens) {
    const auto& b = t.box;
    const std::array<double, 8> poly = {b.x_min, b.y_min, b.x_max, b.y_min, b.x_max, b.y_max, b.x_min, b.y_max};
    lines.push_back({{"boundingBox", poly},
                     {"text", t.text},
                     {"words", nlohmann::json::array({{{"boundingBox", poly}, {"text", t.text}, {"confidence", t.confidence}}})}});
  }
  nlohmann::json root = {
      {"status", "succeeded"},
      {"analyzeResult",
       {{"version", "3.2.0"},
        {"readResults",
         nlohmann::json::array({{{"page", 1}, {"angle", 0}, {"width", width}, {"height", height}, {"unit", "pixel"},
                                 {"lines", lines}}})}}}};
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Reading order
// ---------------------------------------------------------------------------

namespace detail {

inline bool same_line(const BBox& a, const BBox& b) {
  const double overlap = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return overlap > 0 && overlap >= 0.5 * std::min(a.height(), b.height());
}

}  // namespace detail

/// Groups tokens into lines (vertical overlap >= 50% of the smaller height,
/// closed transitively), orders lines by top edge and tokens by x_min. Ties
/// keep input order.
inline std::vector<OcrToken> sort_reading_order(std::vector<OcrToken> tokens) {
  const std::size_t n = tokens.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (detail::same_line(tokens[i].box, tokens[j].box)) {
        const auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  struct Line {
    double top = 0;
    double left = 0;
    std::size_t first = 0;
    std::vector<std::size_t> members;
  };
  std::map<std::size_t, Line> by_root;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = by_root.try_emplace(find(i));
    Line& l = it->second;
    if (inserted) {
      l.top = tokens[i].box.y_min;
      l.left = tokens[i].box.x_min;
      l.first = i;
    }
    l.top = std::min(l.top, tokens[i].box.y_min);
    l.left = std::min(l.left, tokens[i].box.x_min);
    l.members.push_back(i);
  }
  std::vector<Line> lines;
  lines.reserve(by_root.size());
  for (auto& [_, l] : by_root) lines.push_back(std::move(l));
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    if (a.top != b.top) return a.top < b.top;
    if (a.left != b.left) return a.left < b.left;
    return a.first < b.first;
  });

  std::vector<OcrToken> out;
  out.reserve(n);
  for (auto& l : lines) {
    std::stable_sort(l.members.begin(), l.members.end(),
                     [&](std::size_t a, std::size_t b) { return tokens[a].box.x_min < tokens[b].box.x_min; });
    for (auto i : l.members) out.push_back(std::move(tokens[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// OCR comparison metrics
// ---------------------------------------------------------------------------

struct Word {
  std::string text;
  std::optional<BBox> box;
};

inline std::vector<Word> words_of(const std::vector<OcrToken>& tokens) {
  std::vector<Word> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back({t.text, t.box});
  return out;
}

/// One aligned pair; an absent side means the word went unmatched.
struct WordPair {
  std::optional<std::size_t> predicted;
  std::optional<std::size_t> reference;
};

/// Greedy alignment by box IoU (pairs with IoU >= threshold, best first) when
/// every word carries a box; otherwise positional.
inline std::vector<WordPair> align_words(const std::vector<Word>& predicted, const std::vector<Word>& reference,
                                         double iou_threshold = 0.5) {
  std::vector<WordPair> pairs;
  const bool boxed = std::all_of(predicted.begin(), predicted.end(), [](const Word& w) { return w.box.has_value(); }) &&
                     std::all_of(reference.begin(), reference.end(), [](const Word& w) { return w.box.has_value(); });
  std::vector<bool> pred_used(predicted.size()), ref_used(reference.size());
  if (boxed) {
    struct Cand {
      double iou;
      std::size_t p, r;
    };
    std::vector<Cand> cands;
    for (std::size_t p = 0; p < predicted.size(); ++p)
      for (std::size_t r = 0; r < reference.size(); ++r) {
        const double iou = bbox_iou(*predicted[p].box, *reference[r].box);
        if (iou >= iou_threshold && iou > 0) cands.push_back({iou, p, r});
      }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.iou > b.iou; });
    for (const auto& c : cands) {
      if (pred_used[c.p] || ref_used[c.r]) continue;
      pred_used[c.p] = ref_used[c.r] = true;
      pairs.push_back({c.p, c.r});
    }
  } else {
    const std::size_t m = std::min(predicted.size(), reference.size());
    for (std::size_t i = 0; i < m; ++i) {
      pred_used[i] = ref_used[i] = true;
      pairs.push_back({i, i});
    }
  }
  for (std::size_t r = 0; r < reference.size(); ++r)
    if (!ref_used[r]) pairs.push_back({std::nullopt, r});
  for (std::size_t p = 0; p < predicted.size(); ++p)
    if (!pred_used[p]) pairs.push_back({p, std::nullopt});
  return pairs;
}

/// Mean normalized Levenshtein similarity over aligned pairs; unmatched
/// words pair with the empty string. Two empty lists score 1.
inline double text_similarity(const std::vector<Word>& predicted, const std::vector<Word>& reference,
                              double iou_threshold = 0.5) {
  const auto pairs = align_words(predicted, reference, iou_threshold);
  if (pairs.empty()) return 1.0;
  double sum = 0;
  for (const auto& p : pairs) {
    const std::string_view a = p.predicted ? std::string_view(predicted[*p.predicted].text) : std::string_view{};
    const std::string_view b = p.reference ? std::string_view(reference[*p.reference].text) : std::string_view{};
    sum += normalized_similarity(a, b);
  }
  return sum / static_cast<double>(pairs.size());
}

/// Fraction of reference words whose aligned prediction matches exactly after
/// case folding and punctuation trimming. An empty reference scores 1.
inline double word_accuracy(const std::vector<Word>& predicted, const std::vector<Word>& reference,
                            double iou_threshold = 0.5) {
  if (reference.empty()) return 1.0;
  std::size_t hits = 0;
  for (const auto& p : align_words(predicted, reference, iou_threshold)) {
    if (p.predicted && p.reference &&
        normalize_word(predicted[*p.predicted].text) == normalize_word(reference[*p.reference].text)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(reference.size());
}

// ---------------------------------------------------------------------------
// Engines
// ---------------------------------------------------------------------------

enum class EngineCapability { Local, Remote };

class OcrEngine {
 public:
  virtual ~OcrEngine() = default;
  virtual EngineCapability capability() const = 0;
  virtual std::string name() const = 0;
  /// Recognizes words; tokens are clipped to the image bounds. The document
  /// id lets replaying engines locate recorded output.
  virtual std::vector<OcrToken> analyze(const DocumentImage& image, std::string_view document_id) = 0;
};

/// Rule-driven engine for fixtures: emits the words of every text-field
/// annotation, splitting the annotation box proportionally to word length.
class MockOcrEngine final : public OcrEngine {
 public:
  explicit MockOcrEngine(const DatasetManifest& manifest) {
    for (const auto& r : manifest.records) annotations_[r.id] = r.annotations;
  }

  EngineCapability capability() const override { return EngineCapability::Local; }
  std::string name() const override { return "mock"; }

  std::vector<OcrToken> analyze(const DocumentImage& image, std::string_view document_id) override {
    std::vector<OcrToken> out;
    auto it = annotations_.find(std::string(document_id));
    if (it == annotations_.end()) return out;
    for (const auto& a : it->second) {
      if (!is_text_field(a.field_class)) continue;
      auto words = split_words(a.text ? *a.text : std::string(to_string(a.field_class)));
      if (words.empty()) continue;
      std::size_t total = words.size() - 1;
      for (const auto& w : words) total += decode_utf8(w).size();
      const double cw = a.box.width() / static_cast<double>(total);
      std::size_t offset = 0;
      for (auto& w : words) {
        const std::size_t len = decode_utf8(w).size();
        BBox b{a.box.x_min + offset * cw, a.box.y_min, a.box.x_min + (offset + len) * cw, a.box.y_max};
        out.push_back({std::move(w), b, 0.99});
        offset += len + 1;
      }
    }
    return clip_tokens(std::move(out), image.width(), image.height());
  }

 private:
  std::map<std::string, std::vector<Annotation>> annotations_;
};

/// Replays recorded engine output from `<dir>/<document id>.<ext>`.
class RecordedOcrEngine final : public OcrEngine {
 public:
  enum class Format { TesseractTsv, ReadJson };

  RecordedOcrEngine(std::filesystem::path dir, Format format) : dir_(std::move(dir)), format_(format) {
    if (!std::filesystem::is_directory(dir_)) throw Error(ErrorKind::Config, "recorded OCR directory '" + dir_.string() + "' not found");
  }

  EngineCapability capability() const override {
    return format_ == Format::TesseractTsv ? EngineCapability::Local : EngineCapability::Remote;
  }
  std::string name() const override { return format_ == Format::TesseractTsv ? "tesseract-tsv" : "azure-read"; }

  std::vector<OcrToken> analyze(const DocumentImage& image, std::string_view document_id) override {
    const auto path = dir_ / (std::string(document_id) + (format_ == Format::TesseractTsv ? ".tsv" : ".json"));
    const std::string bytes = read_file(path);
    auto tokens = format_ == Format::TesseractTsv ? parse_local_engine_output(bytes) : parse_cloud_read_response(bytes);
    return clip_tokens(std::move(tokens), image.width(), image.height());
  }

 private:
  std::filesystem::path dir_;
  Format format_;
};

/// Runs a local `tesseract` executable and parses its TSV output.
class TesseractCliEngine final : public OcrEngine {
 public:
  explicit TesseractCliEngine(std::string executable = "tesseract", std::string language = "eng")
      : exe_(std::move(executable)), lang_(std::move(language)) {}

  static bool available(const std::string& executable = "tesseract") {
    const std::string cmd = executable + " --version > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  }

  EngineCapability capability() const override { return EngineCapability::Local; }
  std::string name() const override { return "tesseract"; }

  std::vector<OcrToken> analyze(const DocumentImage& image, std::string_view document_id) override {
    const auto tmp = std::filesystem::temp_directory_path() /
                     ("invoval-" + std::to_string(fnv1a64(document_id)) + "-" + std::to_string(counter_++) + ".png");
    save_image(image, tmp);
    const std::string cmd = exe_ + " '" + tmp.string() + "' stdout -l " + lang_ + " tsv 2>/dev/null";
    std::string output;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
      char buf[4096];
      std::size_t n = 0;
      while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
      const int rc = pclose(pipe);
      std::filesystem::remove(tmp);
      if (rc != 0) throw Error(ErrorKind::BackendFailure, "tesseract exited with status " + std::to_string(rc));
    } else {
      std::filesystem::remove(tmp);
      throw Error(ErrorKind::BackendFailure, "cannot start tesseract");
    }
    return clip_tokens(parse_local_engine_output(output), image.width(), image.height());
  }

 private:
  std::string exe_;
  std::string lang_;
  std::atomic<std::uint64_t> counter_{0};
};

}  // namespace invoval

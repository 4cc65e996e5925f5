#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "invoval/labeling.hpp"

using namespace invoval;

namespace {

OcrToken tok(const std::string& text, BBox b) { return {text, b, 0.9}; }

std::vector<LabeledToken> other_tokens(std::size_t n) {
  std::vector<LabeledToken> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({tok("w" + std::to_string(i), {double(i % 90), 1, double(i % 90) + 5, 6}), FieldClass::Other, {}});
  return out;
}

}  // namespace

TEST(AssignLabels, FullyInsideTitle) {
  const auto out = assign_labels({tok("INVOICE", {20, 20, 60, 30})}, {{FieldClass::Title, {10, 10, 100, 40}, {}}});
  EXPECT_EQ(out[0].label, FieldClass::Title);
  EXPECT_EQ(out[0].source_annotation, 0u);
}

TEST(AssignLabels, SixtyPercentInsideDate) {
  // token [0,0,10,10]; Date box covers x in [4,20] -> 60 of 100 px^2
  const auto out = assign_labels({tok("2024", {0, 0, 10, 10})}, {{FieldClass::Date, {4, 0, 20, 10}, {}}});
  EXPECT_EQ(out[0].label, FieldClass::Date);
}

TEST(AssignLabels, NoOverlapIsOther) {
  const auto out = assign_labels({tok("x", {0, 0, 10, 10})}, {{FieldClass::Date, {50, 50, 60, 60}, {}}});
  EXPECT_EQ(out[0].label, FieldClass::Other);
  EXPECT_FALSE(out[0].source_annotation.has_value());
}

TEST(AssignLabels, BelowThresholdIsOther) {
  const auto out = assign_labels({tok("x", {0, 0, 10, 10})}, {{FieldClass::Date, {6, 0, 20, 10}, {}}});
  EXPECT_EQ(out[0].label, FieldClass::Other);
}

TEST(AssignLabels, StampAndSignatureNeverLabelTokens) {
  const auto out = assign_labels({tok("x", {10, 10, 20, 20})},
                                 {{FieldClass::Stamp, {0, 0, 50, 50}, {}}, {FieldClass::Signature, {0, 0, 50, 50}, {}}});
  EXPECT_EQ(out[0].label, FieldClass::Other);
}

TEST(AssignLabels, TiesPreferSmallerAnnotationThenIndex) {
  const std::vector<Annotation> anns = {{FieldClass::Total, {0, 0, 100, 100}, {}},
                                        {FieldClass::TotalValue, {0, 0, 30, 30}, {}},
                                        {FieldClass::Client, {0, 0, 30, 30}, {}}};
  const auto out = assign_labels({tok("9", {5, 5, 15, 15})}, anns);
  EXPECT_EQ(out[0].label, FieldClass::TotalValue);
  EXPECT_EQ(out[0].source_annotation, 1u);
}

TEST(AssignLabels, LargerRatioWins) {
  const std::vector<Annotation> anns = {{FieldClass::Total, {0, 0, 6, 10}, {}}, {FieldClass::Date, {3, 0, 10, 10}, {}}};
  EXPECT_EQ(assign_labels({tok("x", {0, 0, 10, 10})}, anns)[0].label, FieldClass::Date);
}

TEST(AssignLabels, TotalDeterministicAndMonotoneInThreshold) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 100);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<OcrToken> toks;
    std::vector<Annotation> anns;
    for (int i = 0; i < 10; ++i) {
      const double x = u(rng), y = u(rng);
      toks.push_back(tok("t", {x, y, x + 1 + u(rng) / 10, y + 1 + u(rng) / 20}));
    }
    for (int i = 0; i < 4; ++i) {
      const double x = u(rng), y = u(rng);
      anns.push_back({kTextFields[rng() % 5], {x, y, x + 1 + u(rng) / 2, y + 1 + u(rng) / 4}, {}});
    }
    const double lo = 0.05 + 0.9 * u(rng) / 100, hi = lo + (1 - lo) * u(rng) / 100;
    const auto a = assign_labels(toks, anns, lo);
    const auto b = assign_labels(toks, anns, hi);
    ASSERT_EQ(a.size(), toks.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].label == FieldClass::Other, !a[i].source_annotation.has_value());
      if (a[i].label == FieldClass::Other) EXPECT_EQ(b[i].label, FieldClass::Other);
    }
    const auto again = assign_labels(toks, anns, lo);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].label, again[i].label);
  }
}

TEST(CountLabels, ZeroDocuments) { EXPECT_EQ(count_label_instances({}).total(), 0u); }

TEST(CountLabels, TotalsEqualTokenCounts) {
  std::vector<std::vector<LabeledToken>> docs = {other_tokens(3), other_tokens(5)};
  docs[0][1].label = FieldClass::Date;
  docs[1][4].label = FieldClass::Date;
  docs[1][0].label = FieldClass::Title;
  const auto c = count_label_instances(docs);
  EXPECT_EQ(c.total(), 8u);
  EXPECT_EQ(c[FieldClass::Date], 2u);
  EXPECT_EQ(c[FieldClass::Title], 1u);
  EXPECT_EQ(c[FieldClass::Other], 5u);
}

TEST(InstanceTable, RemoteEngineGoldenRow) {
  std::ifstream in(INVOVAL_TEST_DATA "/instance_counts_azure.json");
  ASSERT_TRUE(in.good());
  const auto row = instance_counts_from_json(nlohmann::json::parse(in));
  EXPECT_EQ(row.counts[FieldClass::Other], 31715u);
  EXPECT_EQ(row.counts[FieldClass::Title], 217u);
  EXPECT_EQ(row.counts[FieldClass::Date], 242u);
  EXPECT_EQ(row.counts[FieldClass::Client], 553u);
  EXPECT_EQ(row.counts[FieldClass::Total], 315u);
  EXPECT_EQ(row.counts[FieldClass::TotalValue], 221u);

  std::ifstream exp(INVOVAL_TEST_DATA "/instance_counts_azure.txt");
  const std::string expected((std::istreambuf_iterator<char>(exp)), std::istreambuf_iterator<char>());
  EXPECT_EQ(render_instance_table({row}), expected);
  EXPECT_EQ(instance_counts_from_json(instance_counts_to_json(row)).counts, row.counts);
}

TEST(InstanceTable, RejectsUnknownClass) {
  EXPECT_THROW(instance_counts_from_json({{"source", "x"}, {"counts", {{"Logo", 1}}}}), Error);
}

TEST(NormalizeBox, FullFrameAndUnitScale) {
  EXPECT_EQ(normalize_box({0, 0, 640, 480}, 640, 480), (std::array<int, 4>{0, 0, 1000, 1000}));
  EXPECT_EQ(normalize_box({250, 100, 500, 200}, 1000, 1000), (std::array<int, 4>{250, 100, 500, 200}));
  EXPECT_EQ(normalize_box({1, 1, 3, 3}, 3, 3), (std::array<int, 4>{333, 333, 1000, 1000}));
}

TEST(SequenceExamples, WindowingSplits600Into512And88) {
  const auto ex = build_sequence_examples("d", other_tokens(600), 100, 100, 512, 0);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].size(), 512u);
  EXPECT_EQ(ex[1].size(), 88u);
  EXPECT_EQ(ex[1].offset, 512u);
}

TEST(SequenceExamples, WindowsConcatenateBack) {
  for (std::size_t n : {1u, 7u, 33u, 100u}) {
    for (std::size_t len : {1u, 5u, 16u}) {
      for (std::size_t ov = 0; ov < len; ov += 2) {
        const auto toks = other_tokens(n);
        const auto ex = build_sequence_examples("d", toks, 100, 100, len, ov);
        std::vector<std::string> joined;
        for (const auto& e : ex) {
          EXPECT_LE(e.size(), len);
          const std::size_t skip = joined.size() - e.offset;  // tokens shared with the previous window
          for (std::size_t i = 0; i < e.size(); ++i) {
            EXPECT_EQ(e.words[i], toks[e.offset + i].token.text);
            if (i >= skip) joined.push_back(e.words[i]);
          }
        }
        ASSERT_EQ(joined.size(), n);
      }
    }
  }
}

TEST(SequenceExamples, EmptyDocumentFails) {
  try {
    build_sequence_examples("d", {}, 10, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDocument);
  }
}

TEST(SequenceExamples, JsonlRoundTrip) {
  auto toks = other_tokens(20);
  toks[3].label = FieldClass::TotalValue;
  const auto ex = build_sequence_examples("doc \"7\"", toks, 100, 50, 8, 2);
  EXPECT_EQ(parse_jsonl(to_jsonl(ex)), ex);
  EXPECT_THROW(parse_jsonl("{\"id\":1}\n"), Error);
}

#include <gtest/gtest.h>

#include <random>

#include "invoval/core.hpp"
#include "invoval/manifest.hpp"

using namespace invoval;

namespace {

ImageResolver fixed_size_resolver(int w, int h) {
  return [w, h](const std::string&) { return std::make_shared<const DocumentImage>(w, h); };
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

BBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 100);
  double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
  if (a > b) std::swap(a, b);
  if (c > d) std::swap(c, d);
  return {a, c, b + 0.01, d + 0.01};
}

}  // namespace

TEST(BBoxIou, Identity) { EXPECT_DOUBLE_EQ(bbox_iou({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0); }

TEST(BBoxIou, Disjoint) { EXPECT_DOUBLE_EQ(bbox_iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0); }

TEST(BBoxIou, PartialOverlapIsOneSeventh) {
  // intersection [1,1,2,2] has area 1; union 4 + 4 - 1 = 7
  EXPECT_NEAR(bbox_iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-15);
}

TEST(BBoxIou, TouchingEdgesDoNotOverlap) { EXPECT_DOUBLE_EQ(bbox_iou({0, 0, 1, 1}, {1, 0, 2, 1}), 0.0); }

TEST(BBoxIou, SymmetricBoundedAndReflexive) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const BBox a = random_box(rng), b = random_box(rng);
    const double ab = bbox_iou(a, b);
    EXPECT_EQ(ab, bbox_iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_DOUBLE_EQ(bbox_iou(a, a), 1.0);
  }
}

TEST(BBox, Validity) {
  EXPECT_TRUE((BBox{0, 0, 1, 1}.valid()));
  EXPECT_FALSE((BBox{1, 0, 1, 1}.valid()));  // zero width
  EXPECT_FALSE((BBox{-1, 0, 1, 1}.valid()));
  EXPECT_FALSE((BBox{0, 0, std::nan(""), 1}.valid()));
}

TEST(FieldClassNames, RoundTripAndOtherRestriction) {
  for (FieldClass c : kAllClasses) {
    if (c == FieldClass::Other) continue;
    EXPECT_EQ(parse_field_class(to_string(c)), c);
  }
  EXPECT_FALSE(parse_field_class("O").has_value());
  EXPECT_EQ(parse_field_class("O", true), FieldClass::Other);
  EXPECT_FALSE(parse_field_class("Handwritten").has_value());
}

TEST(ParseManifest, EmptyRecords) {
  auto m = parse_manifest(R"({"split":"test","records":[]})", fixed_size_resolver(10, 10));
  EXPECT_EQ(m.split, Split::Test);
  EXPECT_TRUE(m.records.empty());
}

TEST(ParseManifest, SingleStampRecord) {
  auto m = parse_manifest(
      R"({"split":"train","records":[{"id":"a","image":"a.png","handwritten":false,
          "annotations":[{"class":"Stamp","box":[10,10,50,50],"text":null}]}]})",
      fixed_size_resolver(100, 100));
  ASSERT_EQ(m.records.size(), 1u);
  ASSERT_EQ(m.records[0].annotations.size(), 1u);
  EXPECT_EQ(m.records[0].annotations[0].field_class, FieldClass::Stamp);
  EXPECT_EQ(m.records[0].annotations[0].box, (BBox{10, 10, 50, 50}));
  EXPECT_FALSE(m.records[0].annotations[0].text.has_value());
}

TEST(ParseManifest, InvertedBoxIsRejected) {
  const auto text = R"({"split":"train","records":[{"id":"a","image":"a.png","handwritten":false,
          "annotations":[{"class":"Date","box":[60,10,50,20],"text":"x"}]}]})";
  EXPECT_EQ(kind_of([&] { parse_manifest(text, fixed_size_resolver(100, 100)); }), ErrorKind::BoxOutOfBounds);
}

TEST(ParseManifest, ZeroAreaAndOutOfImageBoxesAreRejected) {
  auto doc = [](const char* box) {
    return std::string(R"({"split":"train","records":[{"id":"a","image":"a.png","handwritten":false,"annotations":[{"class":"Date","box":)") +
           box + R"(,"text":null}]}]})";
  };
  EXPECT_EQ(kind_of([&] { parse_manifest(doc("[10,10,10,20]"), fixed_size_resolver(100, 100)); }), ErrorKind::BoxOutOfBounds);
  EXPECT_EQ(kind_of([&] { parse_manifest(doc("[10,10,120,20]"), fixed_size_resolver(100, 100)); }), ErrorKind::BoxOutOfBounds);
}

TEST(ParseManifest, SchemaErrorsCarryPaths) {
  try {
    parse_manifest(R"({"split":"train","records":[{"id":"a","image":"a.png","handwritten":"no","annotations":[]}]})",
                   fixed_size_resolver(10, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedManifest);
    EXPECT_NE(std::string(e.what()).find("$.records[0].handwritten"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { parse_manifest("{", fixed_size_resolver(10, 10)); }), ErrorKind::MalformedManifest);
  EXPECT_EQ(kind_of([] { parse_manifest(R"({"split":"dev","records":[]})", fixed_size_resolver(10, 10)); }),
            ErrorKind::MalformedManifest);
  EXPECT_EQ(kind_of([] { parse_manifest(R"({"split":"train","records":[],"extra":1})", fixed_size_resolver(10, 10)); }),
            ErrorKind::MalformedManifest);
}

TEST(ParseManifest, UnknownAndOtherClassesAreRejected) {
  for (const char* cls : {"Logo", "O", "Other"}) {
    const auto text = std::string(R"({"split":"train","records":[{"id":"a","image":"a.png","handwritten":false,"annotations":[{"class":")") +
                      cls + R"(","box":[1,1,2,2],"text":null}]}]})";
    EXPECT_EQ(kind_of([&] { parse_manifest(text, fixed_size_resolver(10, 10)); }), ErrorKind::UnknownClass) << cls;
  }
}

TEST(ParseManifest, DuplicateIdsAreRejected) {
  const auto text = R"({"split":"train","records":[
      {"id":"a","image":"a.png","handwritten":false,"annotations":[]},
      {"id":"a","image":"b.png","handwritten":false,"annotations":[]}]})";
  EXPECT_EQ(kind_of([&] { parse_manifest(text, fixed_size_resolver(10, 10)); }), ErrorKind::MalformedManifest);
}

TEST(ParseManifest, MissingImageFailsLoading) {
  const auto text = R"({"split":"train","records":[{"id":"a","image":"missing.png","handwritten":false,"annotations":[]}]})";
  EXPECT_EQ(kind_of([&] { parse_manifest(text, directory_resolver("/nonexistent-dir")); }), ErrorKind::ImageLoad);
}

TEST(ParseManifest, SerializeRoundTripOnRandomManifests) {
  std::mt19937_64 rng(11);
  const std::array<FieldClass, 7> classes = {FieldClass::Title, FieldClass::Client, FieldClass::Stamp, FieldClass::Signature,
                                             FieldClass::Date,  FieldClass::Total,  FieldClass::TotalValue};
  for (int trial = 0; trial < 50; ++trial) {
    DatasetManifest m;
    m.split = static_cast<Split>(trial % 3);
    const int n = static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      DocumentRecord r;
      r.id = "doc-" + std::to_string(i);
      r.image_path = "images/" + r.id + ".png";
      r.handwritten = rng() % 2;
      const int k = static_cast<int>(rng() % 6);
      for (int j = 0; j < k; ++j) {
        Annotation a{classes[rng() % classes.size()], random_box(rng), std::nullopt};
        if (rng() % 2) a.text = "w\"ord " + std::to_string(j) + " \xc3\xa9";
        r.annotations.push_back(a);
      }
      m.records.push_back(r);
    }
    const auto text = serialize_manifest(m);
    const auto back = parse_manifest(text, fixed_size_resolver(200, 200));
    ASSERT_EQ(back.split, m.split);
    ASSERT_EQ(back.records.size(), m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      EXPECT_EQ(back.records[i].id, m.records[i].id);
      EXPECT_EQ(back.records[i].image_path, m.records[i].image_path);
      EXPECT_EQ(back.records[i].handwritten, m.records[i].handwritten);
      EXPECT_EQ(back.records[i].annotations, m.records[i].annotations);
    }
    EXPECT_EQ(serialize_manifest(back), text);
  }
}

TEST(ClassDistribution, EmptyManifest) { EXPECT_EQ(class_distribution(DatasetManifest{}).total(), 0u); }

TEST(ClassDistribution, StampAndSignature) {
  DatasetManifest m;
  DocumentRecord r;
  r.id = "a";
  r.annotations = {{FieldClass::Stamp, {1, 1, 2, 2}, {}}, {FieldClass::Signature, {1, 1, 3, 3}, {}}};
  m.records.push_back(r);
  const auto c = class_distribution(m);
  EXPECT_EQ(c[FieldClass::Stamp], 1u);
  EXPECT_EQ(c[FieldClass::Signature], 1u);
  EXPECT_EQ(c.total(), 2u);
}

TEST(ClassDistribution, AdditiveUnderConcatenation) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    DatasetManifest a, b;
    for (auto* m : {&a, &b}) {
      const int n = static_cast<int>(rng() % 4);
      for (int i = 0; i < n; ++i) {
        DocumentRecord r;
        r.id = std::to_string(rng());
        const int k = static_cast<int>(rng() % 5);
        for (int j = 0; j < k; ++j) r.annotations.push_back({kAllClasses[rng() % 7], {0, 0, 1, 1}, {}});
        m->records.push_back(r);
      }
    }
    DatasetManifest both = a;
    both.records.insert(both.records.end(), b.records.begin(), b.records.end());
    EXPECT_EQ(class_distribution(both), class_distribution(a) + class_distribution(b));
    EXPECT_EQ(class_distribution(both)[FieldClass::Other], 0u);
  }
}

TEST(DocumentImage, BufferInvariant) {
  EXPECT_THROW(DocumentImage(2, 2, std::vector<std::uint8_t>(11)), Error);
  EXPECT_THROW(DocumentImage(0, 2), Error);
  DocumentImage img(3, 2, 7);
  EXPECT_EQ(img.pixels().size(), 18u);
  img.at(2, 1, 2) = 9;
  EXPECT_EQ(img.pixels().back(), 9);
}

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "invoval/onnx_backend.hpp"

using namespace invoval;

namespace {

const std::string kModels = std::string(INVOVAL_TEST_DATA) + "/models";

nlohmann::json weights() {
  std::ifstream in(kModels + "/weights.json");
  return nlohmann::json::parse(in);
}

// Uniform colour, so the mean pixel survives any resize exactly.
DocumentImage solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  DocumentImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  return img;
}

}  // namespace

TEST(OnnxLayout, LogitsMatchWeightOracle) {
  OnnxLayoutBackend be(kModels + "/layout.onnx");
  EXPECT_FALSE(be.concurrent());
  SequenceExample ex;
  ex.words = {"Invoice", "Total", "1,250.00"};
  ex.boxes = {{{10, 20, 200, 60}}, {{600, 800, 700, 830}}, {{720, 800, 900, 830}}};
  ex.labels.assign(3, FieldClass::Other);
  const auto img = solid(300, 400, 51, 102, 204);
  const auto out = be.predict(ex, img);
  ASSERT_EQ(out.size(), 3u);

  const auto w = weights().at("layout");
  const double rgb[3] = {0.2, 0.4, 0.8};
  for (std::size_t i = 0; i < 3; ++i) {
    const double id = token_id(ex.words[i]);
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      double v = w["box_bias"][k].get<double>() + id * w["ids_weight"][k].get<double>();
      for (std::size_t j = 0; j < 4; ++j) v += ex.boxes[i][j] / 1000.0 * w["box_weight"][k][j].get<double>();
      for (std::size_t c = 0; c < 3; ++c) v += rgb[c] * w["pix_weight"][k][c].get<double>();
      // float32 global pooling over 224 x 224 pixels drifts by ~1e-4
      EXPECT_NEAR(out[i][k], v, 1e-3) << "token " << i << " class " << k;
    }
  }
}

TEST(OnnxLayout, TokenIdsAreStableAndNonzero) {
  EXPECT_EQ(token_id("Total"), token_id("total"));
  EXPECT_GE(token_id(""), 1.0f);
  EXPECT_LE(token_id("anything"), static_cast<float>(kVocabularySize));
}

TEST(OnnxLayout, OverlongWindowRejected) {
  OnnxLayoutBackend be(kModels + "/layout.onnx");
  SequenceExample ex;
  ex.words.assign(kLayoutSequenceLength + 1, "x");
  ex.boxes.assign(kLayoutSequenceLength + 1, {0, 0, 1, 1});
  try {
    be.predict(ex, DocumentImage(8, 8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidParams);
  }
}

TEST(OnnxDetector, OutputsScaledFromModelFrame) {
  OnnxDetectorBackend be(kModels + "/detector.onnx");
  const int W = 640, H = 960;
  const auto img = solid(W, H, 51, 102, 204);
  const auto dets = be.predict(img, "doc");
  const auto w = weights().at("detector");
  ASSERT_EQ(dets.size(), w["boxes"].size());
  const double mean = (0.2 + 0.4 + 0.8) / 3.0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto b = w["boxes"][i];
    EXPECT_NEAR(dets[i].box.x_min, b[0].get<double>() * W / 320.0, 1e-3);
    EXPECT_NEAR(dets[i].box.y_min, b[1].get<double>() * H / 320.0, 1e-3);
    EXPECT_NEAR(dets[i].box.x_max, b[2].get<double>() * W / 320.0, 1e-3);
    EXPECT_NEAR(dets[i].box.y_max, b[3].get<double>() * H / 320.0, 1e-3);
    const double z = w["a"][i].get<double>() * mean + w["s0"][i].get<double>();
    EXPECT_NEAR(dets[i].score, 1.0 / (1.0 + std::exp(-z)), 2e-4);
    EXPECT_EQ(dets[i].field_class, w["classes"][i].get<int>() == 0 ? FieldClass::Stamp : FieldClass::Signature);
  }
}

TEST(OnnxDetector, BoxesClippedToSmallImage) {
  OnnxDetectorBackend be(kModels + "/detector.onnx");
  for (const auto& d : be.predict(solid(100, 100, 0, 0, 0), "doc")) {
    EXPECT_TRUE(d.box.valid());
    EXPECT_LE(d.box.x_max, 100.0);
    EXPECT_LE(d.box.y_max, 100.0);
  }
}

TEST(OnnxBackends, MissingFileIsConfigError) {
  try {
    OnnxDetectorBackend be(kModels + "/absent.onnx");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  try {
    OnnxLayoutBackend be(std::string(INVOVAL_TEST_DATA) + "/instance_counts_azure.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

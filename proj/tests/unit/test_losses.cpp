#include <gtest/gtest.h>

#include <random>

#include "invoval/losses.hpp"
#include "oracles/finite_diff.hpp"

using namespace invoval;
using namespace invoval::losses;

namespace {

std::vector<double> random_logits(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(cross_entropy(std::vector<double>{0, 0}, 0).value, std::log(2.0), 1e-15);
  const auto big = cross_entropy(std::vector<double>{1000, 0}, 0);
  EXPECT_TRUE(std::isfinite(big.value));
  EXPECT_NEAR(big.value, 0.0, 1e-300);
  const double e2 = std::exp(2.0), e1 = std::exp(1.0);
  EXPECT_NEAR(cross_entropy(std::vector<double>{2, 1, 0}, 0).value, -std::log(e2 / (e2 + e1 + 1)), 1e-15);
  EXPECT_NEAR(cross_entropy(std::vector<double>{2, 1, 0}, 0).value, 0.4076, 5e-5);
}

TEST(CrossEntropy, Errors) {
  try {
    cross_entropy(std::vector<double>{0, 0}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IndexOutOfRange);
  }
  EXPECT_THROW(cross_entropy(std::vector<double>{INFINITY, 0}, 0), Error);
}

TEST(Focal, Examples) {
  // logits (ln 9, 0): p_t = 0.9
  const std::vector<double> z = {std::log(9.0), 0};
  EXPECT_NEAR(focal_loss(z, 0).value, 0.01 * -std::log(0.9), 1e-15);
  EXPECT_NEAR(focal_loss(z, 0).value, 0.0010536, 5e-8);
  EXPECT_NEAR(focal_loss(std::vector<double>{50, 0}, 0).value, 0.0, 1e-40);
  EXPECT_NEAR(focal_loss(z, 1, {0.0, {}}).value, cross_entropy(z, 1).value, 1e-12);
}

TEST(Focal, AlphaWeighting) {
  const std::vector<double> z = {0.3, -1.2, 2.0};
  const FocalParams p{2.0, {0.25, 0.5, 1.0}};
  EXPECT_NEAR(focal_loss(z, 0, p).value, 0.25 * focal_loss(z, 0).value, 1e-15);
  EXPECT_THROW(focal_loss(z, 0, {2.0, {0.5, 0.5}}), Error);
  EXPECT_THROW(focal_loss(z, 0, {2.0, {0.5, 0.0, 1.0}}), Error);
  EXPECT_THROW(focal_loss(z, 0, {-1.0, {}}), Error);
}

TEST(Focal, ReducesToCrossEntropyAndNeverExceedsIt) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto z = random_logits(rng, 2 + rng() % 7, 3.0);
    const std::size_t t = rng() % z.size();
    const double ce = cross_entropy(z, t).value;
    EXPECT_NEAR(focal_loss(z, t, {0.0, {}}).value, ce, 1e-12);
    const double gamma = std::uniform_real_distribution<double>(0, 5)(rng);
    EXPECT_LE(focal_loss(z, t, {gamma, {}}).value, ce + 1e-15);
  }
}

TEST(Gradients, MatchCentralDifferences) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto z = random_logits(rng, 2 + rng() % 7, 2.0);
    const std::size_t t = rng() % z.size();
    const FocalParams fp{std::uniform_real_distribution<double>(0.5, 4)(rng), {}};
    const auto ce = oracle::central_gradient([&](const std::vector<double>& x) { return cross_entropy(x, t).value; }, z);
    EXPECT_LT(oracle::relative_error(cross_entropy(z, t).grad, ce), 1e-5);
    const auto fl = oracle::central_gradient([&](const std::vector<double>& x) { return focal_loss(x, t, fp).value; }, z);
    EXPECT_LT(oracle::relative_error(focal_loss(z, t, fp).grad, fl), 1e-5);

    std::vector<double> p(4), g(4);
    for (std::size_t k = 0; k < 4; ++k) {
      g[k] = std::uniform_real_distribution<double>(0, 100)(rng);
      // keep |d| away from beta where the second derivative jumps
      double d;
      do d = std::uniform_real_distribution<double>(-3, 3)(rng);
      while (std::abs(std::abs(d) - 1.0) < 1e-3);
      p[k] = g[k] + d;
    }
    auto sl = [&](const std::vector<double>& x) {
      return smooth_l1(std::span<const double, 4>(x.data(), 4), std::span<const double, 4>(g.data(), 4)).value;
    };
    const auto num = oracle::central_gradient(sl, p);
    const auto ana = smooth_l1(std::span<const double, 4>(p.data(), 4), std::span<const double, 4>(g.data(), 4)).grad;
    EXPECT_LT(oracle::relative_error(ana, num), 1e-5);
  }
}

TEST(SmoothL1, Examples) {
  EXPECT_DOUBLE_EQ(smooth_l1(BBox{1, 2, 3, 4}, BBox{1, 2, 3, 4}).value, 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(BBox{1.5, 2, 3, 4}, BBox{1, 2, 3, 4}).value, 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(BBox{3, 2, 3, 4}, BBox{1, 2, 3, 4}).value, 1.5);
  EXPECT_THROW(smooth_l1(BBox{1, 2, 3, 4}, BBox{1, 2, 3, 4}, 0.0), Error);
}

TEST(SmoothL1, ContinuousAtBeta) {
  for (double beta : {0.25, 1.0, 3.0}) {
    const std::array<double, 4> g = {10, 10, 10, 10};
    auto at = [&](double d) {
      const std::array<double, 4> p = {10 + d, 10, 10, 10};
      return smooth_l1(std::span<const double, 4>(p), std::span<const double, 4>(g), beta);
    };
    const auto below = at(beta - 1e-9), above = at(beta + 1e-9);
    EXPECT_NEAR(below.value, above.value, 1e-8);
    EXPECT_NEAR(below.grad[0], above.grad[0], 1e-8);
  }
}

TEST(IouLoss, Examples) {
  EXPECT_DOUBLE_EQ(iou_loss({0, 0, 1, 1}, {0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(iou_loss({0, 0, 1, 1}, {2, 2, 3, 3}), 1.0);
  EXPECT_NEAR(iou_loss({0, 0, 2, 2}, {1, 1, 3, 3}), 6.0 / 7.0, 1e-15);
}

TEST(Centerness, Examples) {
  EXPECT_DOUBLE_EQ(centerness_target({5, 5}, {0, 0, 10, 10}), 1.0);
  EXPECT_NEAR(centerness_target({1, 1}, {0, 0, 4, 4}), 1.0 / 3.0, 1e-15);
  EXPECT_LT(centerness_target({1e-9, 5}, {0, 0, 10, 10}), 1e-4);
  try {
    centerness_target({0, 5}, {0, 0, 10, 10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LocationOutsideBox);
  }
}

TEST(Bounds, IouLossAndCenternessInUnitInterval) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 50);
  for (int i = 0; i < 500; ++i) {
    const BBox a{u(rng), u(rng), 60 + u(rng), 60 + u(rng)}, b{u(rng), u(rng), 60 + u(rng), 60 + u(rng)};
    const double l = iou_loss(a, b);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
    const Point p{a.x_min + (a.width()) * (0.01 + 0.98 * u(rng) / 50), a.y_min + a.height() * (0.01 + 0.98 * u(rng) / 50)};
    const double c = centerness_target(p, a);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

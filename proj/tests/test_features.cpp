#include <gtest/gtest.h>

#include <random>

#include "hypad/features.hpp"

using namespace hypad;

namespace {

Tensor random_map(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t({h, w, c}, DType::F64);
  for (double& v : t.values()) v = n(rng);
  return t;
}

// Mean over the p x p window with replicated borders, summed directly.
double window_mean(const Tensor& t, long y, long x, std::size_t c, std::size_t p) {
  const long lo = -static_cast<long>((p - 1) / 2), hi = static_cast<long>(p / 2);
  const long h = static_cast<long>(t.dim(0)), w = static_cast<long>(t.dim(1));
  double s = 0.0;
  for (long dy = lo; dy <= hi; ++dy) {
    for (long dx = lo; dx <= hi; ++dx) {
      const long yy = std::clamp(y + dy, 0L, h - 1), xx = std::clamp(x + dx, 0L, w - 1);
      s += t.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
    }
  }
  return s / static_cast<double>(p * p);
}

}  // namespace

TEST(Patchify, IdentityForOne) {
  const Tensor t = random_map(4, 5, 3, 1);
  EXPECT_EQ(patchify(t, 1), t);
}

TEST(Patchify, ConstantStaysConstant) {
  Tensor t({5, 4, 2}, DType::F64);
  for (double& v : t.values()) v = 0.7;
  for (std::size_t p : {2, 3, 4}) {
    const Tensor pooled = patchify(t, p);
    for (double v : pooled.values()) EXPECT_NEAR(v, 0.7, 1e-15);
  }
}

TEST(Patchify, RampInteriorMatchesWindowSum) {
  Tensor ramp({5, 5, 1}, DType::F64);
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 5; ++x) ramp.at(y, x, 0) = static_cast<double>(5 * y + x);
  }
  const Tensor out = patchify(ramp, 3);
  double s = 0.0;
  for (std::size_t y = 1; y <= 3; ++y) {
    for (std::size_t x = 1; x <= 3; ++x) s += ramp.at(y, x, 0);
  }
  EXPECT_DOUBLE_EQ(out.at(2, 2, 0), s / 9.0);
  EXPECT_DOUBLE_EQ(out.at(2, 2, 0), 12.0);
}

TEST(Patchify, MatchesBruteForceEverywhere) {
  const Tensor t = random_map(6, 7, 2, 2);
  for (std::size_t p = 1; p <= 6; ++p) {
    const Tensor out = patchify(t, p);
    for (std::size_t y = 0; y < 6; ++y) {
      for (std::size_t x = 0; x < 7; ++x) {
        for (std::size_t c = 0; c < 2; ++c) {
          ASSERT_NEAR(out.at(y, x, c), window_mean(t, static_cast<long>(y), static_cast<long>(x), c, p), 1e-12);
        }
      }
    }
  }
}

TEST(Patchify, InteriorMeanPreserved) {
  // The interior of the output averages interior windows; on a map whose
  // values are periodic with the window size the means agree exactly.
  Tensor t({9, 9, 1}, DType::F64);
  for (std::size_t y = 0; y < 9; ++y) {
    for (std::size_t x = 0; x < 9; ++x) t.at(y, x, 0) = static_cast<double>((y % 3) * 3 + x % 3);
  }
  const Tensor out = patchify(t, 3);
  for (std::size_t y = 1; y < 8; ++y) {
    for (std::size_t x = 1; x < 8; ++x) EXPECT_NEAR(out.at(y, x, 0), 4.0, 1e-12);
  }
}

TEST(Patchify, Errors) {
  const Tensor t = random_map(3, 4, 1, 3);
  EXPECT_THROW(patchify(t, 4), ParameterError);
  EXPECT_THROW(patchify(t, 0), ParameterError);
  EXPECT_THROW(patchify(Tensor({3, 3}), 1), ParameterError);
}

TEST(Upsample, IdentityAndConstant) {
  const Tensor t = random_map(3, 4, 2, 4);
  EXPECT_EQ(upsample_bilinear(t, 3, 4), t);
  Tensor c({2, 3, 1}, DType::F64);
  for (double& v : c.values()) v = -1.25;
  const Tensor up = upsample_bilinear(c, 7, 11);
  for (double v : up.values()) EXPECT_NEAR(v, -1.25, 1e-15);
}

TEST(Upsample, TwoByTwoToFourByFourHandWeights) {
  Tensor t({2, 2, 1}, DType::F64);
  t.at(0, 0, 0) = 1.0;  // a
  t.at(0, 1, 0) = 2.0;  // b
  t.at(1, 0, 0) = 3.0;  // c
  t.at(1, 1, 0) = 4.0;  // d
  const Tensor out = upsample_bilinear(t, 4, 4);
  // align_corners=false: output i samples (i + 0.5) / 2 - 0.5 -> -0.25, 0.25,
  // 0.75, 1.25, clamped to [0, 1]: weights along an axis are 0, .25, .75, 1.
  const double f[4] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      const double top = 1.0 * (1 - f[x]) + 2.0 * f[x];
      const double bottom = 3.0 * (1 - f[x]) + 4.0 * f[x];
      EXPECT_NEAR(out.at(y, x, 0), top * (1 - f[y]) + bottom * f[y], 1e-15) << y << "," << x;
    }
  }
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out.at(1, 1, 0), 1.0 + 0.25 * 1 + 0.25 * 2);
}

TEST(Upsample, Linear) {
  const Tensor x = random_map(3, 2, 2, 5), y = random_map(3, 2, 2, 6);
  Tensor combo = x;
  for (std::size_t i = 0; i < combo.numel(); ++i) combo.values()[i] = 2.0 * x.values()[i] - 0.5 * y.values()[i];
  const Tensor ux = upsample_bilinear(x, 7, 5), uy = upsample_bilinear(y, 7, 5), uc = upsample_bilinear(combo, 7, 5);
  for (std::size_t i = 0; i < uc.numel(); ++i) {
    EXPECT_NEAR(uc.values()[i], 2.0 * ux.values()[i] - 0.5 * uy.values()[i], 1e-6);
  }
}

TEST(Upsample, RejectsDownscale) {
  EXPECT_THROW(upsample_bilinear(random_map(4, 4, 1, 7), 2, 4), ParameterError);
}

TEST(AlignMask, Examples) {
  Tensor zero({4, 4}, DType::U8), one({4, 4}, DType::U8), quad({4, 4}, DType::U8);
  for (double& v : one.values()) v = 1.0;
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 2; x < 4; ++x) quad.at(y, x) = 1.0;
  }
  const Tensor z = align_mask(zero, 2, 2), o = align_mask(one, 2, 2);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
  for (double v : o.values()) EXPECT_EQ(v, 1.0);
  const Tensor q = align_mask(quad, 2, 2);
  EXPECT_EQ(q.values(), (std::vector<double>{0, 1, 0, 0}));
}

TEST(AlignMask, MajorityThreshold) {
  Tensor m({4, 4}, DType::U8);
  m.at(0, 0) = m.at(0, 1) = 1.0;  // half of the top-left cell
  EXPECT_EQ(align_mask(m, 2, 2).at(0, 0), 1.0);
  m.at(0, 1) = 0.0;  // a quarter
  EXPECT_EQ(align_mask(m, 2, 2).at(0, 0), 0.0);
  // Non-integer footprints: 3 -> 2 gives cells covering 1.5 source pixels.
  Tensor r({3, 1}, DType::U8);
  r.at(1, 0) = 1.0;
  const Tensor a = align_mask(r, 2, 1);
  EXPECT_EQ(a.at(0, 0), 0.0);  // 0.5 of 1.5 covered
  EXPECT_EQ(a.at(1, 0), 0.0);
  r.at(0, 0) = 1.0;
  EXPECT_EQ(align_mask(r, 2, 1).at(0, 0), 1.0);
  EXPECT_THROW(align_mask(r, 4, 1), ParameterError);
}

TEST(AlignFeatures, SharedResolutionAndLabels) {
  FeatureStack s;
  s.levels = {random_map(8, 8, 3, 8), random_map(4, 4, 5, 9)};
  Tensor mask({16, 16}, DType::U8);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 16; ++x) mask.at(y, x) = 1.0;
  }
  const AlignedFeatures a = align_features(s, 3, mask);
  EXPECT_EQ(a.height, 8u);
  EXPECT_EQ(a.width, 8u);
  EXPECT_EQ(a.levels[1].shape(), (std::vector<std::size_t>{8, 8, 5}));
  ASSERT_TRUE(a.labels);
  EXPECT_EQ(a.labels->at(3, 5), 1.0);
  EXPECT_EQ(a.labels->at(4, 5), 0.0);
  EXPECT_FALSE(align_features(s, 3).labels.has_value());
}

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "isd/augment.hpp"
#include "isd/data.hpp"
#include "isd/errors.hpp"

using namespace isd;

TEST(Augment, NonePolicyIsBitwiseIdentity) {
  Rng rng(3);
  const std::vector<double> x{1.5, -0.0, 3.25e-300, 7.0};
  const auto before = rng;
  const auto y = augment(x, AugmentPolicy::none(), rng);
  ASSERT_EQ(y.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(std::signbit(y[i]), std::signbit(x[i]));
  EXPECT_EQ(y, x);
  EXPECT_EQ(rng, before);
}

TEST(Augment, NoiseStddevMatchesPolicy) {
  AugmentPolicy p;
  p.name = "noise";
  p.noise_std = 0.3;
  Rng rng(11);
  const std::vector<double> zero(4, 0.0);
  constexpr int kDraws = 100000;
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  for (int d = 0; d < kDraws; ++d) {
    const auto v = augment(zero, p, rng);
    for (std::size_t j = 0; j < 4; ++j) {
      sum[j] += v[j];
      sq[j] += v[j] * v[j];
    }
  }
  for (std::size_t j = 0; j < 4; ++j) {
    const double mean = sum[j] / kDraws;
    const double sd = std::sqrt(sq[j] / kDraws - mean * mean);
    EXPECT_NEAR(sd, 0.3, 0.02 * 0.3) << "coordinate " << j;
  }
}

TEST(Augment, SameStateGivesSameView) {
  const std::vector<double> x{0.2, 0.4, -1.0, 2.0, 0.0, 1.0, 0.5, 0.25, -0.5};
  for (const auto* name : {"mild", "aggressive"}) {
    const auto p = AugmentPolicy::preset(name);
    Rng a(42), b(42);
    EXPECT_EQ(augment(x, p, a, ImageDims{3, 3}), augment(x, p, b, ImageDims{3, 3})) << name;
    EXPECT_EQ(augment(x, p, a), augment(x, p, b)) << name;
  }
}

TEST(Augment, IndependentStreamsGiveDifferentViews) {
  const std::vector<double> x{0.2, 0.4, -1.0, 2.0};
  for (const auto* name : {"mild", "aggressive"}) {
    const auto p = AugmentPolicy::preset(name);
    int equal = 0;
    for (std::uint64_t s = 0; s < 500; ++s) {
      Rng a(derive_seed(s, 0)), b(derive_seed(s, 1));
      if (augment(x, p, a) == augment(x, p, b)) ++equal;
    }
    EXPECT_EQ(equal, 0) << name;
  }
}

TEST(Augment, FlipMirrorsImageRows) {
  AugmentPolicy p;
  p.name = "flip";
  p.flip_prob = 1.0;
  Rng rng(0);
  const std::vector<double> img{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(augment(img, p, rng, ImageDims{2, 3}), (std::vector<double>{3, 2, 1, 6, 5, 4}));
  EXPECT_EQ(augment(img, p, rng), img);
}

TEST(Augment, FullCropIsIdentityResample) {
  AugmentPolicy p;
  p.name = "crop";
  // crop window equal to the whole image: the bilinear sampler hits pixel centres exactly
  p.crop_min = 0.999999999;
  Rng rng(5);
  const std::vector<double> img{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto out = augment(img, p, rng, ImageDims{3, 3});
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-8);
}

TEST(Augment, RotationPreservesNorm) {
  AugmentPolicy p;
  p.name = "rotate";
  p.rotation_max = 1.0;
  Rng rng(8);
  const std::vector<double> x{3.0, -4.0, 1.0, 2.0};
  for (int i = 0; i < 100; ++i) {
    const auto y = augment(x, p, rng);
    double nx = 0, ny = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      nx += x[j] * x[j];
      ny += y[j] * y[j];
    }
    EXPECT_NEAR(nx, ny, 1e-12);
  }
}

TEST(Augment, AggressiveDistortsMoreThanMild) {
  const auto feats = gen_gaussian_mixture({3, 50, 16, 4.0}, 1);
  Rng a(2), b(2);
  const double mild = mean_distortion(feats.samples, feats.dim, AugmentPolicy::mild(), a, 5);
  const double aggressive = mean_distortion(feats.samples, feats.dim, AugmentPolicy::aggressive(), b, 5);
  EXPECT_GT(aggressive, mild);

  std::vector<double> images(20 * 16);
  Rng fill(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& v : images) v = unit(fill);
  Rng c(6), d(6);
  const double mild_img = mean_distortion(images, 16, AugmentPolicy::mild(), c, 5, ImageDims{4, 4});
  const double aggr_img = mean_distortion(images, 16, AugmentPolicy::aggressive(), d, 5, ImageDims{4, 4});
  EXPECT_GT(aggr_img, mild_img);
}

TEST(Augment, PolicyValidation) {
  EXPECT_NO_THROW(AugmentPolicy::mild().validate());
  EXPECT_NO_THROW(AugmentPolicy::aggressive().validate());
  EXPECT_TRUE(AugmentPolicy::none().is_identity());
  EXPECT_FALSE(AugmentPolicy::mild().is_identity());
  auto bad = AugmentPolicy::mild();
  bad.flip_prob = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = AugmentPolicy::mild();
  bad.noise_std = -0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(AugmentPolicy::preset("wild"), ConfigError);
  Rng rng(1);
  EXPECT_THROW(augment(std::vector<double>(5, 0.0), AugmentPolicy::mild(), rng, ImageDims{2, 2}), DimensionError);
}

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <unistd.h>

#include "isd/data.hpp"
#include "isd/errors.hpp"

using namespace isd;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ISD_FIXTURE_DIR;

// Brute-force 1-NN on raw features.
double raw_nn_accuracy(const LabeledDataset& train, const LabeledDataset& test) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto q = test.row(i);
    double best = INFINITY;
    int label = -1;
    for (std::size_t j = 0; j < train.size(); ++j) {
      const auto r = train.row(j);
      double d = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) d += (q[k] - r[k]) * (q[k] - r[k]);
      if (d < best) {
        best = d;
        label = train.labels[j];
      }
    }
    hits += label == test.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("isd_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(GaussianMixture, ShapesAndCounts) {
  const auto ds = gen_gaussian_mixture({3, 200, 32, 6.0}, 9);
  EXPECT_EQ(ds.size(), 600u);
  EXPECT_EQ(ds.dim, 32u);
  EXPECT_EQ(ds.samples.size(), 600u * 32u);
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{200, 200, 200}));
  EXPECT_NO_THROW(ds.validate());
}

TEST(GaussianMixture, ExtremeSeparationIsPerfectlyClassified) {
  const MixtureParams p{2, 100, 2, 100.0};
  const auto train = gen_gaussian_mixture(p, 5, Split::train);
  const auto test = gen_gaussian_mixture(p, 5, Split::eval);
  EXPECT_DOUBLE_EQ(raw_nn_accuracy(train, test), 1.0);
}

TEST(GaussianMixture, ZeroSeparationIsChance) {
  const MixtureParams p{2, 500, 8, 0.0};
  const auto train = gen_gaussian_mixture(p, 12, Split::train);
  const auto test = gen_gaussian_mixture(p, 12, Split::eval);
  EXPECT_NEAR(raw_nn_accuracy(train, test), 0.5, 0.05);
}

TEST(GaussianMixture, DeterministicPerSeed) {
  const MixtureParams p{4, 30, 6, 3.0};
  EXPECT_EQ(gen_gaussian_mixture(p, 77).samples, gen_gaussian_mixture(p, 77).samples);
  EXPECT_NE(gen_gaussian_mixture(p, 77).samples, gen_gaussian_mixture(p, 78).samples);
  EXPECT_NE(gen_gaussian_mixture(p, 77, Split::train).samples, gen_gaussian_mixture(p, 77, Split::eval).samples);
}

TEST(GaussianMixture, ClassMeansSitAtRadiusSep) {
  const auto ds = gen_gaussian_mixture({2, 4000, 4, 5.0}, 3);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> mean(4, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] != c) continue;
      for (std::size_t j = 0; j < 4; ++j) mean[j] += ds.row(i)[j] / 4000.0;
    }
    double norm = 0.0;
    for (double m : mean) norm += m * m;
    EXPECT_NEAR(std::sqrt(norm), 5.0, 0.1);
  }
}

TEST(GaussianMixture, RejectsBadParameters) {
  EXPECT_THROW(gen_gaussian_mixture({1, 10, 4, 1.0}, 0), DataError);
  EXPECT_THROW(gen_gaussian_mixture({2, 10, 1, 1.0}, 0), DataError);
  EXPECT_THROW(gen_gaussian_mixture({2, 10, 4, -1.0}, 0), DataError);
}

TEST(Idx, LoadsHandBuiltFixture) {
  const auto ds = load_idx(kFixtures / "tiny-images.idx", kFixtures / "tiny-labels.idx");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim, 4u);
  ASSERT_TRUE(ds.image.has_value());
  EXPECT_EQ(*ds.image, (ImageDims{2, 2}));
  const std::vector<double> expected{0.0, 51.0 / 255, 102.0 / 255, 1.0, 1.0, 204.0 / 255, 153.0 / 255, 0.0};
  EXPECT_EQ(ds.samples, expected);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 1}));
  EXPECT_EQ(ds.num_classes, 4);
}

TEST(Idx, EmptyFileIsFormatError) {
  const auto empty = temp_path("empty.idx");
  std::ofstream(empty).close();
  EXPECT_THROW(load_idx(empty, kFixtures / "tiny-labels.idx"), FormatError);
  fs::remove(empty);
}

TEST(Idx, BadMagicReportsOffset) {
  const auto bad = temp_path("bad.idx");
  {
    std::ofstream out(bad, std::ios::binary);
    const char bytes[] = {0, 0, 0x0D, 1, 0, 0, 0, 0};
    out.write(bytes, sizeof bytes);
  }
  try {
    load_idx(bad, kFixtures / "tiny-labels.idx");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
  fs::remove(bad);
}

TEST(Idx, PayloadMismatchIsLengthError) {
  EXPECT_THROW(load_idx(kFixtures / "short-images.idx", kFixtures / "tiny-labels.idx"), LengthError);
}

TEST(Unbalanced, HistogramArithmetic) {
  const auto ds = gen_gaussian_mixture({8, 500, 4, 2.0}, 1);
  const std::vector<int> large{0, 1};
  const auto ub = make_unbalanced(ds, large, 50, 4);
  EXPECT_EQ(ub.size(), 1300u);
  EXPECT_EQ(ub.class_counts(), (std::vector<std::size_t>{500, 500, 50, 50, 50, 50, 50, 50}));
}

TEST(Unbalanced, MatchesShuffleTruncateOracle) {
  const auto ds = gen_gaussian_mixture({5, 40, 3, 2.0}, 2);
  const std::vector<int> large{3};
  const std::uint64_t seed = 99;
  // oracle: per non-large class in id order, shuffle member indices with one
  // shared mt19937_64 stream and keep the first small_count
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> expected;
  for (int c = 0; c < 5; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == c) members.push_back(i);
    }
    if (c == 3) {
      expected.insert(expected.end(), members.begin(), members.end());
    } else {
      std::shuffle(members.begin(), members.end(), rng);
      expected.insert(expected.end(), members.begin(), members.begin() + 7);
    }
  }
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(unbalanced_indices(ds, large, 7, seed), expected);
}

TEST(Unbalanced, RetainedSamplesAreBitwiseUnchanged) {
  const auto ds = gen_gaussian_mixture({4, 30, 5, 2.0}, 8);
  const std::vector<int> large{0};
  const auto keep = unbalanced_indices(ds, large, 10, 3);
  const auto ub = make_unbalanced(ds, large, 10, 3);
  ASSERT_EQ(ub.size(), keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    EXPECT_EQ(ub.labels[k], ds.labels[keep[k]]);
    EXPECT_TRUE(std::ranges::equal(ub.row(k), ds.row(keep[k])));
  }
}

TEST(Unbalanced, AllLargeIsIdentity) {
  const auto ds = gen_gaussian_mixture({3, 20, 4, 2.0}, 6);
  const std::vector<int> all{0, 1, 2};
  const auto ub = make_unbalanced(ds, all, 5, 1);
  EXPECT_EQ(ub.samples, ds.samples);
  EXPECT_EQ(ub.labels, ds.labels);
}

TEST(Unbalanced, Errors) {
  const auto ds = gen_gaussian_mixture({3, 20, 4, 2.0}, 6);
  const std::vector<int> unknown{5};
  EXPECT_THROW(make_unbalanced(ds, unknown, 5, 1), DataError);
  const std::vector<int> none;
  EXPECT_THROW(make_unbalanced(ds, none, 21, 1), DataError);
}

TEST(Container, RoundTrip) {
  auto ds = gen_gaussian_mixture({3, 7, 4, 2.0}, 6, Split::eval);
  ds.image = ImageDims{2, 2};
  const auto path = temp_path("round.bin");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  EXPECT_EQ(back.samples, ds.samples);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.dim, ds.dim);
  EXPECT_EQ(back.num_classes, ds.num_classes);
  EXPECT_EQ(back.image, ds.image);
  EXPECT_EQ(back.split, Split::eval);

  const auto bytes = fs::file_size(path);
  fs::resize_file(path, bytes - 3);
  EXPECT_THROW(load_dataset(path), LengthError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTADSET";
  }
  EXPECT_THROW(load_dataset(path), FormatError);
  fs::remove(path);
}

TEST(Dataset, GatherAndValidate) {
  const auto ds = gen_gaussian_mixture({2, 3, 2, 1.0}, 0);
  const std::vector<std::size_t> idx{4, 1};
  const auto t = ds.gather(idx);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.at(0, 1), ds.row(4)[1]);
  EXPECT_EQ(t.at(1, 0), ds.row(1)[0]);
  auto broken = ds;
  broken.labels[0] = 7;
  EXPECT_THROW(broken.validate(), DataError);
}

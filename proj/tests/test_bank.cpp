#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "isd/bank.hpp"
#include "isd/errors.hpp"
#include "test_util.hpp"

using namespace isd;

namespace {

Tensor unit_rows(std::initializer_list<std::vector<double>> rows) {
  std::vector<std::vector<double>> normalized;
  for (auto row : rows) {
    double sq = 0.0;
    for (double v : row) sq += v * v;
    for (double& v : row) v /= std::sqrt(sq);
    normalized.push_back(row);
  }
  return Tensor::matrix(normalized);
}

// Reference queue: a deque of rows trimmed from the front.
struct ListBank {
  std::size_t capacity;
  std::deque<std::vector<double>> rows;

  void enqueue(const Tensor& batch) {
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      const auto v = batch.values().subspan(r * batch.cols(), batch.cols());
      rows.emplace_back(v.begin(), v.end());
      if (rows.size() > capacity) rows.pop_front();
    }
  }
  std::vector<double> flat() const {
    std::vector<double> out;
    for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
};

}  // namespace

TEST(AnchorBank, TwoInsertsFillInOrder) {
  AnchorBank bank(4, 2);
  const auto a = unit_rows({{1, 0}, {0, 1}});
  const auto b = unit_rows({{1, 1}, {-1, 1}});
  bank.enqueue(a);
  bank.enqueue(b);
  EXPECT_EQ(bank.count(), 4u);
  const auto snap = bank.snapshot();
  std::vector<double> expected = isd::testing::to_vector(a.values());
  expected.insert(expected.end(), b.values().begin(), b.values().end());
  EXPECT_EQ(isd::testing::to_vector(snap.values()), expected);
}

TEST(AnchorBank, EvictsOldestRowsFirst) {
  AnchorBank bank(4, 2);
  std::vector<Tensor> rows;
  for (int i = 1; i <= 6; ++i) {
    const double angle = 0.3 * i;
    rows.push_back(Tensor::matrix({{std::cos(angle), std::sin(angle)}}));
    bank.enqueue(rows.back());
  }
  EXPECT_EQ(bank.count(), 4u);
  const auto snap = bank.snapshot();
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(snap.at(i, 0), rows[i + 2].at(0));
    EXPECT_EQ(snap.at(i, 1), rows[i + 2].at(1));
  }
}

TEST(AnchorBank, PartialSnapshotShape) {
  AnchorBank bank(10, 3);
  bank.enqueue(unit_rows({{1, 2, 3}, {3, 2, 1}, {0, 0, 1}}));
  EXPECT_EQ(bank.snapshot().shape(), (Shape{3, 3}));
}

TEST(AnchorBank, SnapshotIsACopy) {
  AnchorBank bank(2, 2);
  bank.enqueue(unit_rows({{1, 0}, {0, 1}}));
  const auto snap = bank.snapshot();
  const auto before = isd::testing::to_vector(snap.values());
  bank.enqueue(unit_rows({{1, 1}, {1, -1}}));
  EXPECT_EQ(isd::testing::to_vector(snap.values()), before);
  EXPECT_FALSE(snap.requires_grad());
  EXPECT_FALSE(snap.has_graph());
}

TEST(AnchorBank, Errors) {
  AnchorBank bank(3, 2);
  EXPECT_THROW(bank.snapshot(), EmptyBankError);
  EXPECT_THROW(bank.enqueue(unit_rows({{1, 0, 0}})), DimensionError);
  EXPECT_THROW(bank.enqueue(Tensor::matrix({{2.0, 0.0}})), ContractError);
  EXPECT_THROW(bank.enqueue(unit_rows({{1, 0}, {0, 1}, {1, 1}, {1, 2}})), ContractError);
  AnchorBank lax(3, 2, false);
  EXPECT_NO_THROW(lax.enqueue(Tensor::matrix({{2.0, 0.0}})));
}

TEST(AnchorBank, StoredRowsCarryNoGraph) {
  AnchorBank bank(4, 2);
  auto x = Tensor::matrix({{3, 4}}, true);
  const auto y = l2_normalize(x);
  bank.enqueue(y);
  const auto snap = bank.snapshot();
  EXPECT_FALSE(snap.requires_grad());
  auto q = Tensor::vector({1, 0}, true);
  sum(matmul(reshape(q, {1, 2}), transpose(snap))).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
  for (double g : snap.grad()) EXPECT_EQ(g, 0.0);
}

TEST(AnchorBank, MatchesListOracleOverRandomScripts) {
  std::mt19937_64 rng(2024);
  for (int script = 0; script < 1000; ++script) {
    const std::size_t capacity = 1 + rng() % 12;
    const std::size_t dim = 2 + rng() % 4;
    AnchorBank bank(capacity, dim);
    ListBank oracle{capacity, {}};
    const int ops = 1 + static_cast<int>(rng() % 25);
    for (int op = 0; op < ops; ++op) {
      if (rng() % 3 != 0) {
        const std::size_t rows = 1 + rng() % capacity;
        const auto batch = isd::testing::random_unit_rows(rng, rows, dim);
        bank.enqueue(batch);
        oracle.enqueue(batch);
      } else if (oracle.rows.empty()) {
        EXPECT_THROW(bank.snapshot(), EmptyBankError);
      } else {
        const auto snap = bank.snapshot();
        ASSERT_EQ(snap.rows(), oracle.rows.size());
        ASSERT_EQ(isd::testing::to_vector(snap.values()), oracle.flat());
      }
      ASSERT_EQ(bank.count(), oracle.rows.size());
    }
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "isd/errors.hpp"
#include "isd/eval.hpp"

using namespace isd;

namespace {

EmbeddingTable random_table(std::mt19937_64& rng, std::size_t n, std::size_t dim, int classes) {
  std::normal_distribution<double> gauss;
  std::vector<double> rows(n * dim);
  for (auto& v : rows) v = gauss(rng);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng() % static_cast<unsigned>(classes));
  return EmbeddingTable::from_rows(rows, dim, labels);
}

// Full stable sort by cosine similarity, then a counted vote.
int oracle_knn(const EmbeddingTable& train, std::span<const double> q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t j = 0; j < train.size(); ++j) {
    const auto r = train.row(j);
    scored.emplace_back(-std::inner_product(q.begin(), q.end(), r.begin(), 0.0), j);
  }
  std::sort(scored.begin(), scored.end());
  std::map<int, int> votes;
  for (std::size_t i = 0; i < k; ++i) ++votes[train.labels[scored[i].second]];
  int best = 0;
  for (auto [label, v] : votes) best = std::max(best, v);
  for (std::size_t i = 0; i < k; ++i) {
    const int label = train.labels[scored[i].second];
    if (votes[label] == best) return label;
  }
  return -1;
}

std::vector<double> oracle_recall(const EmbeddingTable& t, const std::vector<std::size_t>& ks) {
  std::vector<double> out;
  for (auto k : ks) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::vector<std::pair<double, std::size_t>> scored;
      for (std::size_t j = 0; j < t.size(); ++j) {
        if (j == i) continue;
        const auto a = t.row(i), b = t.row(j);
        scored.emplace_back(-std::inner_product(a.begin(), a.end(), b.begin(), 0.0), j);
      }
      std::sort(scored.begin(), scored.end());
      bool hit = false;
      for (std::size_t r = 0; r < k; ++r) hit = hit || t.labels[scored[r].second] == t.labels[i];
      hits += hit;
    }
    out.push_back(static_cast<double>(hits) / static_cast<double>(t.size()));
  }
  return out;
}

}  // namespace

TEST(Knn, SelfMatchIsPerfect) {
  std::mt19937_64 rng(1);
  const auto t = random_table(rng, 40, 6, 4);
  EXPECT_DOUBLE_EQ(knn_eval(t, t, 1), 1.0);
}

TEST(Knn, OrthogonalPrototypes) {
  const auto train = EmbeddingTable::from_rows(std::vector<double>{1, 0, 0, 1}, 2, {0, 1});
  const auto test = EmbeddingTable::from_rows(std::vector<double>{0, 1}, 2, {1});
  EXPECT_EQ(knn_predict(train, test, 1), std::vector<int>{1});
}

TEST(Knn, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  const auto train = random_table(rng, 50, 5, 3);
  const auto test = random_table(rng, 50, 5, 3);
  for (std::size_t k : {1u, 2u, 4u, 5u, 9u}) {
    const auto got = knn_predict(train, test, k);
    for (std::size_t i = 0; i < test.size(); ++i) EXPECT_EQ(got[i], oracle_knn(train, test.row(i), k)) << k;
  }
}

TEST(Knn, TieGoesToNearestTiedClass) {
  // neighbours in order: class 1, class 0 -> 1:1 vote, nearest is class 1
  const auto train = EmbeddingTable::from_rows(std::vector<double>{0.6, 0.8, 1.0, 0.0}, 2, {0, 1});
  const auto test = EmbeddingTable::from_rows(std::vector<double>{0.99, 0.1}, 2, {0});
  EXPECT_EQ(knn_predict(train, test, 2), std::vector<int>{1});
}

TEST(Knn, InvariantUnderRescaling) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  std::vector<double> rows(60 * 4);
  for (auto& v : rows) v = gauss(rng);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = static_cast<int>(i % 3);
  auto scaled = rows;
  for (auto& v : scaled) v *= 37.5;
  const auto a = EmbeddingTable::from_rows(std::span(rows).first(120), 4, {labels.begin(), labels.begin() + 30});
  const auto b = EmbeddingTable::from_rows(std::span(rows).last(120), 4, {labels.begin() + 30, labels.end()});
  const auto as = EmbeddingTable::from_rows(std::span(scaled).first(120), 4, {labels.begin(), labels.begin() + 30});
  const auto bs = EmbeddingTable::from_rows(std::span(scaled).last(120), 4, {labels.begin() + 30, labels.end()});
  EXPECT_EQ(knn_predict(a, b, 5), knn_predict(as, bs, 5));
}

TEST(Knn, Errors) {
  std::mt19937_64 rng(4);
  const auto t = random_table(rng, 5, 3, 2);
  EXPECT_THROW(knn_eval(t, t, 6), ContractError);
  EXPECT_THROW(knn_eval(t, t, 0), ContractError);
  const auto other = random_table(rng, 5, 4, 2);
  EXPECT_THROW(knn_eval(t, other, 1), DimensionError);
  auto broken = t;
  broken.embeddings[0] += 1e-6;
  EXPECT_THROW(knn_eval(broken, t, 1), ContractError);
}

TEST(LinearProbe, SeparableTwoClass) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(0.2, 1.3);
  std::vector<double> rows;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    const double a = angle(rng) * (i % 2 ? 1.0 : -1.0);
    rows.push_back(std::cos(a));
    rows.push_back(std::sin(a));
    labels.push_back(i % 2);
  }
  const auto t = EmbeddingTable::from_rows(rows, 2, labels);
  EXPECT_DOUBLE_EQ(linear_probe(t, t), 1.0);
}

TEST(LinearProbe, ShuffledLabelsAreChance) {
  std::mt19937_64 rng(6);
  const std::size_t n = 2000;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 4);
  auto rows = random_table(rng, n, 8, 4).embeddings;
  std::vector<int> test_labels = labels;
  std::shuffle(labels.begin(), labels.end(), rng);
  std::shuffle(test_labels.begin(), test_labels.end(), rng);
  const auto train = EmbeddingTable::from_rows(std::span(rows).first(n / 2 * 8), 8, {labels.begin(), labels.begin() + n / 2});
  const auto test = EmbeddingTable::from_rows(std::span(rows).last(n / 2 * 8), 8, {test_labels.begin() + n / 2, test_labels.end()});
  EXPECT_NEAR(linear_probe(train, test, {100, 0.5}), 0.25, 0.05);
}

TEST(LinearProbe, ZeroEpochsPredictsLowestClass) {
  std::mt19937_64 rng(7);
  std::vector<int> labels(90);
  for (std::size_t i = 0; i < 90; ++i) labels[i] = static_cast<int>(i % 3);
  const auto t = EmbeddingTable::from_rows(random_table(rng, 90, 4, 3).embeddings, 4, labels);
  EXPECT_NEAR(linear_probe(t, t, {0, 1.0}), 1.0 / 3.0, 1e-15);
}

TEST(LinearProbe, SingleClassIsError) {
  const auto t = EmbeddingTable::from_rows(std::vector<double>{1, 0, 0, 1}, 2, {2, 2});
  EXPECT_THROW(linear_probe(t, t), ContractError);
}

TEST(LinearProbe, IsPure) {
  std::mt19937_64 rng(8);
  const auto a = random_table(rng, 60, 4, 3);
  const auto b = random_table(rng, 30, 4, 3);
  EXPECT_EQ(linear_probe(a, b), linear_probe(a, b));
  EXPECT_EQ(knn_eval(a, b), knn_eval(a, b));
}

TEST(Recall, DuplicatedPointsGivePerfectR1) {
  std::mt19937_64 rng(9);
  auto base = random_table(rng, 10, 3, 10);
  std::vector<double> rows = base.embeddings;
  rows.insert(rows.end(), base.embeddings.begin(), base.embeddings.end());
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[static_cast<std::size_t>(i)] = i % 10;
  const auto t = EmbeddingTable::from_rows(rows, 3, labels);
  const std::vector<std::size_t> ks{1};
  EXPECT_DOUBLE_EQ(recall_at_k(t, ks)[0], 1.0);
}

TEST(Recall, ExhaustiveNeighbourhoodIsOne) {
  std::mt19937_64 rng(10);
  std::vector<int> labels(12);
  for (int i = 0; i < 12; ++i) labels[static_cast<std::size_t>(i)] = i % 4;
  const auto t = EmbeddingTable::from_rows(random_table(rng, 12, 5, 4).embeddings, 5, labels);
  const std::vector<std::size_t> ks{11};
  EXPECT_DOUBLE_EQ(recall_at_k(t, ks)[0], 1.0);
}

TEST(Recall, MatchesOracleAndIsMonotone) {
  std::mt19937_64 rng(11);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = i % 5;
  const auto t = EmbeddingTable::from_rows(random_table(rng, 30, 4, 5).embeddings, 4, labels);
  const std::vector<std::size_t> ks{1, 2, 4, 8, 16, 29};
  const auto got = recall_at_k(t, ks);
  EXPECT_EQ(got, oracle_recall(t, ks));
  EXPECT_TRUE(std::ranges::is_sorted(got));
}

TEST(Recall, SingletonClassIsNamed) {
  const auto t = EmbeddingTable::from_rows(std::vector<double>{1, 0, 0, 1, 1, 1}, 2, {0, 0, 3});
  const std::vector<std::size_t> ks{1};
  try {
    recall_at_k(t, ks);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("class 3"), std::string::npos);
  }
}

TEST(Embed, RowsAreUnitNorm) {
  const auto ds = gen_gaussian_mixture({3, 10, 6, 2.0}, 1);
  const auto enc = init_params({{6, 8, 4}, false}, 3);
  const auto t = embed(enc, ds, "student", 7);
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.dim, 4u);
  EXPECT_EQ(t.labels, ds.labels);
  EXPECT_EQ(t.source, "student");
}

TEST(MetricsCsv, Format) {
  std::ostringstream out;
  const std::vector<MetricRecord> rows{{"knn", 5, 0.875, "teacher", 10}, {"recall", 1, 0.5, "student", -1}};
  write_metrics_csv(out, rows);
  EXPECT_EQ(out.str(), "metric,k,value,source,epoch\nknn,5,0.875,teacher,10\nrecall,1,0.5,student,-1\n");
}

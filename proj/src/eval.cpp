#include "isd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "isd/errors.hpp"

namespace isd {

void EmbeddingTable::validate() const {
  if (labels.empty()) throw ContractError("embedding table is empty");
  if (embeddings.size() != labels.size() * dim) throw DimensionError("embedding buffer does not match N x dim");
  for (std::size_t i = 0; i < size(); ++i) {
    double sq = 0.0;
    for (double v : row(i)) sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-10) {
      throw ContractError("embedding row " + std::to_string(i) + " is not unit-norm");
    }
  }
}

EmbeddingTable EmbeddingTable::from_rows(std::span<const double> rows, std::size_t dim, std::vector<int> labels,
                                         std::string source, long epoch) {
  if (dim == 0 || rows.size() != labels.size() * dim) throw DimensionError("embedding rows do not match labels");
  EmbeddingTable t;
  t.embeddings.assign(rows.begin(), rows.end());
  t.dim = dim;
  t.labels = std::move(labels);
  t.source = std::move(source);
  t.epoch = epoch;
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto* r = &t.embeddings[i * dim];
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) sq += r[j] * r[j];
    const double norm = std::max(std::sqrt(sq), 1e-12);
    for (std::size_t j = 0; j < dim; ++j) r[j] /= norm;
  }
  return t;
}

EmbeddingTable embed(const Mlp& encoder, const LabeledDataset& ds, std::string source, long epoch) {
  const auto out = mlp_forward(encoder, ds.all_rows());
  return EmbeddingTable::from_rows(out.values(), out.cols(), ds.labels, std::move(source), epoch);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Indices of `table` by descending similarity to `q`, equal similarities by
// ascending index, first `k` only. `skip` is excluded.
std::vector<std::size_t> nearest(const EmbeddingTable& table, std::span<const double> q, std::size_t k,
                                 std::size_t skip = static_cast<std::size_t>(-1)) {
  std::vector<double> sim(table.size());
  std::vector<std::size_t> order;
  order.reserve(table.size());
  for (std::size_t j = 0; j < table.size(); ++j) {
    if (j == skip) continue;
    sim[j] = dot(q, table.row(j));
    order.push_back(j);
  }
  auto before = [&](std::size_t a, std::size_t b) { return sim[a] > sim[b] || (sim[a] == sim[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  order.resize(k);
  return order;
}

int max_label(std::span<const int> labels) { return labels.empty() ? -1 : *std::ranges::max_element(labels); }

void check_dims(const EmbeddingTable& a, const EmbeddingTable& b) {
  a.validate();
  b.validate();
  if (a.dim != b.dim) {
    throw DimensionError("embedding widths differ: " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  }
}

}  // namespace

std::vector<int> knn_predict(const EmbeddingTable& train, const EmbeddingTable& test, std::size_t k) {
  check_dims(train, test);
  if (k == 0) throw ContractError("k must be at least 1");
  if (k > train.size()) {
    throw ContractError("k = " + std::to_string(k) + " exceeds the " + std::to_string(train.size()) + " train rows");
  }
  const auto classes = static_cast<std::size_t>(max_label(train.labels) + 1);
  std::vector<int> predictions;
  predictions.reserve(test.size());
  std::vector<std::size_t> votes(classes);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto nn = nearest(train, test.row(i), k);
    std::ranges::fill(votes, 0);
    for (auto j : nn) ++votes[static_cast<std::size_t>(train.labels[j])];
    const auto top = *std::ranges::max_element(votes);
    for (auto j : nn) {
      if (votes[static_cast<std::size_t>(train.labels[j])] == top) {
        predictions.push_back(train.labels[j]);
        break;
      }
    }
  }
  return predictions;
}

double knn_eval(const EmbeddingTable& train, const EmbeddingTable& test, std::size_t k) {
  const auto predictions = knn_predict(train, test, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += predictions[i] == test.labels[i];
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double linear_probe(const EmbeddingTable& train, const EmbeddingTable& test, const ProbeConfig& config) {
  check_dims(train, test);
  const auto first = train.labels.front();
  if (std::ranges::all_of(train.labels, [&](int l) { return l == first; })) {
    throw ContractError("linear probe needs at least 2 classes in the train set");
  }
  if (!(config.lr > 0.0)) throw ContractError("linear probe learning rate must be positive");
  const auto classes = static_cast<std::size_t>(std::max(max_label(train.labels), max_label(test.labels)) + 1);

  const auto x = Tensor::from({train.size(), train.dim}, train.embeddings);
  std::vector<double> onehot(train.size() * classes, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) onehot[i * classes + static_cast<std::size_t>(train.labels[i])] = 1.0;
  const auto target = Tensor::from({train.size(), classes}, std::move(onehot));
  auto w = Tensor::zeros({train.dim, classes}, true);
  auto b = Tensor::zeros({classes}, true);
  const double n = static_cast<double>(train.size());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto logits = add_row(matmul(x, w), b);
    const auto loss = scale(sum(mul(target, log_softmax(logits))), -1.0 / n);
    loss.backward();
    for (auto* p : {&w, &b}) {
      auto v = p->mutable_values();
      const auto g = p->grad();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= config.lr * g[i];
    }
  }

  const auto logits = add_row(matmul(Tensor::from({test.size(), test.dim}, test.embeddings), w.detach()), b.detach());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (logits.at(i, c) > logits.at(i, best)) best = c;
    }
    hits += static_cast<int>(best) == test.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::vector<double> recall_at_k(const EmbeddingTable& table, std::span<const std::size_t> ks) {
  table.validate();
  std::vector<std::size_t> counts(static_cast<std::size_t>(max_label(table.labels) + 1), 0);
  for (int l : table.labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 1) throw ContractError("class " + std::to_string(c) + " has a single member");
  }
  std::size_t kmax = 0;
  for (auto k : ks) {
    if (k == 0 || k >= table.size()) {
      throw ContractError("recall k = " + std::to_string(k) + " must lie in [1, N-1]");
    }
    kmax = std::max(kmax, k);
  }
  // first_hit[i]: 1-based rank of the nearest same-class neighbour (kmax+1 if beyond).
  std::vector<std::size_t> first_hit(table.size(), kmax + 1);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto nn = nearest(table, table.row(i), kmax, i);
    for (std::size_t r = 0; r < nn.size(); ++r) {
      if (table.labels[nn[r]] == table.labels[i]) {
        first_hit[i] = r + 1;
        break;
      }
    }
  }
  std::vector<double> recalls;
  for (auto k : ks) {
    const auto hits = std::ranges::count_if(first_hit, [&](std::size_t r) { return r <= k; });
    recalls.push_back(static_cast<double>(hits) / static_cast<double>(table.size()));
  }
  return recalls;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records, bool header) {
  if (header) out << "metric,k,value,source,epoch\n";
  char value[32];
  for (const auto& r : records) {
    std::snprintf(value, sizeof value, "%.10g", r.value);
    out << r.metric << ',' << r.k << ',' << value << ',' << r.source << ',' << r.epoch << '\n';
  }
}

}  // namespace isd

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "isd/data.hpp"
#include "isd/nn.hpp"

namespace isd {

/// Unit-norm embeddings with their labels, tagged by the model that made
/// them (e.g. "teacher" or "student") and the epoch (-1 when not applicable).
struct EmbeddingTable {
  std::vector<double> embeddings;
  std::size_t dim = 0;
  std::vector<int> labels;
  std::string source;
  long epoch = -1;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(embeddings).subspan(i * dim, dim);
  }
  /// Throws ContractError on empty tables or rows off the unit sphere (1e-10).
  void validate() const;

  /// Rows are L2-normalized on the way in.
  static EmbeddingTable from_rows(std::span<const double> rows, std::size_t dim, std::vector<int> labels,
                                  std::string source = {}, long epoch = -1);
};

/// Encodes every sample of `ds` (no augmentation) and normalizes the rows.
EmbeddingTable embed(const Mlp& encoder, const LabeledDataset& ds, std::string source = {}, long epoch = -1);

inline constexpr std::size_t kDefaultKnnK = 5;

/// Cosine k-NN majority vote. A tied vote goes to the tied class whose
/// member ranks nearest.
std::vector<int> knn_predict(const EmbeddingTable& train, const EmbeddingTable& test, std::size_t k = kDefaultKnnK);
double knn_eval(const EmbeddingTable& train, const EmbeddingTable& test, std::size_t k = kDefaultKnnK);

struct ProbeConfig {
  std::size_t epochs = 300;
  double lr = 1.0;
};

/// Affine layer + softmax cross-entropy trained by full-batch gradient
/// descent from zero init. Argmax ties go to the lowest class id.
double linear_probe(const EmbeddingTable& train, const EmbeddingTable& test, const ProbeConfig& config = {});

/// R@k: fraction of rows with a same-class row among their k cosine-nearest
/// other rows. One value per entry of `ks`.
std::vector<double> recall_at_k(const EmbeddingTable& table, std::span<const std::size_t> ks);

struct MetricRecord {
  std::string metric;
  std::size_t k = 0;
  double value = 0.0;
  std::string source;
  long epoch = -1;
};

/// CSV with header metric,k,value,source,epoch.
void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records, bool header = true);

}  // namespace isd

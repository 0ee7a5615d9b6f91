#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "isd/config.hpp"

namespace isd {

struct DatasetPair {
  LabeledDataset train;
  std::optional<LabeledDataset> eval;
};

/// Builds or reads the datasets named by `data`. Throws DataError,
/// FormatError or LengthError.
DatasetPair load_datasets(const DataConfig& data);

struct AblationRow {
  double temperature = 0.0;
  double teacher_knn = 0.0;
  double student_knn = 0.0;
};

/// One ISD run per temperature; everything else fixed.
std::vector<AblationRow> ablate_temperature(const TrainConfig& base, std::span<const double> temperatures,
                                            const LabeledDataset& train_ds, const LabeledDataset& eval_ds);

struct UnbalancedRow {
  std::size_t rep = 0;
  double isd_all = 0.0;
  double moco_all = 0.0;
  double isd_rare = 0.0;
  double moco_rare = 0.0;
  double diff_all() const { return isd_all - moco_all; }
  double diff_rare() const { return isd_rare - moco_rare; }
};

/// Per repetition: a fresh mixture (seeded from data.seed), a random choice of large classes, the
/// rest subsampled to `small_count`; ISD and MoCo trained with identical
/// budgets; student k-NN of the balanced eval split against the balanced
/// train split, over all classes and over the rare ones.
UnbalancedRow unbalanced_repetition(const TrainConfig& base, const DataConfig& data, const UnbalancedConfig& protocol,
                                    std::size_t rep);
std::vector<UnbalancedRow> run_unbalanced(const TrainConfig& base, const DataConfig& data,
                                          const UnbalancedConfig& protocol,
                                          const std::function<void(const UnbalancedRow&)>& progress = {});

/// k-NN accuracy restricted to query rows whose label is in `classes`.
double knn_on_classes(const Mlp& encoder, const LabeledDataset& memory, const LabeledDataset& queries,
                      std::span<const int> classes, std::size_t k);

void write_step_metrics_csv(std::ostream& out, std::span<const StepMetrics> metrics, bool header = true);
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);
void write_unbalanced_csv(std::ostream& out, std::span<const UnbalancedRow> rows);

/// Shortest text that parses back to the same double.
std::string format_value(double v);

}  // namespace isd

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "isd/augment.hpp"
#include "isd/bank.hpp"
#include "isd/data.hpp"
#include "isd/losses.hpp"
#include "isd/nn.hpp"
#include "isd/rng.hpp"

namespace isd {

struct TrainConfig {
  LossConfig loss;
  /// Teacher EMA momentum m.
  double momentum = 0.999;
  std::size_t bank_capacity = 1024;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;

  double lr = 0.01;
  LrSchedule::Kind lr_schedule = LrSchedule::Kind::step;
  double lr_factor = 0.2;
  /// Empty means 70% and 90% of `epochs`.
  std::vector<std::size_t> lr_milestones;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;

  /// Encoder is [input, hidden..., embedding_dim] with a normalized output.
  std::vector<std::size_t> encoder_hidden{256, 128};
  std::size_t embedding_dim = 64;
  /// Predictor is [embedding_dim, predictor_hidden, embedding_dim]; 0 drops it.
  std::size_t predictor_hidden = 64;

  AugmentPolicy teacher_aug = AugmentPolicy::aggressive();
  AugmentPolicy student_aug = AugmentPolicy::aggressive();

  std::uint64_t init_seed = 0;
  std::uint64_t order_seed = 1;
  std::uint64_t aug_seed = 2;

  /// Teacher frozen (m == 1) and loaded from a checkpoint.
  bool distill_mode = false;
  /// k-NN of teacher and student every `eval_every` epochs and at the end; 0 disables.
  std::size_t eval_every = 10;
  std::size_t knn_k = 5;

  /// Throws ConfigError on contradictions or out-of-range values.
  void validate() const;
  MlpSpec encoder_spec(std::size_t input_dim) const;
  MlpSpec predictor_spec() const;
  LrSchedule schedule() const;
  bool uses_bank() const { return loss.objective != Objective::byol; }
  bool operator==(const TrainConfig&) const = default;
};

struct StepMetrics {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  /// Mean teacher entropy H(p_t); zero for objectives without a teacher distribution.
  double h_pt = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
  std::optional<double> teacher_knn;
  std::optional<double> student_knn;
};

/// Everything a checkpoint holds. `epoch` counts completed epochs.
struct TrainState {
  TrainConfig config;
  std::size_t input_dim = 0;
  ModelPair model;
  SgdState sgd;
  AnchorBank bank;
  Rng order_rng;
  Rng aug_rng;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
};

/// Fresh student from config.init_seed, teacher an exact copy, empty bank.
TrainState init_train_state(const TrainConfig& config, std::size_t input_dim);

/// Teacher embeddings of the first ceil(capacity / batch) batches of a
/// seeded pass over `ds`, enqueued before any optimization step.
void prefill_bank(TrainState& state, const LabeledDataset& ds);

/// One optimization step on a raw batch: two views per row, teacher and
/// student forward, loss over the current bank snapshot, student SGD, EMA,
/// then enqueue of the teacher embeddings.
StepMetrics train_step(TrainState& state, const Tensor& batch, std::optional<ImageDims> image = std::nullopt);

struct TrainResult {
  TrainState state;
  std::vector<StepMetrics> metrics;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

/// Runs the remaining epochs of `state` over `train_ds` in seeded order.
/// k-NN uses `train_ds` as the labelled memory and `eval_ds` as queries;
/// without `eval_ds` no k-NN is recorded.
TrainResult continue_training(TrainState state, const LabeledDataset& train_ds,
                              const LabeledDataset* eval_ds = nullptr, const MetricsSink& sink = {});

TrainResult train(const TrainConfig& config, const LabeledDataset& train_ds, const LabeledDataset* eval_ds = nullptr,
                  const MetricsSink& sink = {});

/// The distillation setting: m = 1 and mild augmentation on both sides.
/// A config that already has distill_mode set is returned unchanged.
TrainConfig distill_config(const TrainConfig& config);

/// Frozen-teacher distillation under distill_config(config): teacher encoder
/// taken from `teacher`, fresh student from config.init_seed. Throws
/// CheckpointError when the teacher architecture does not match the config.
TrainResult distill(const TrainConfig& config, const Mlp& teacher, const LabeledDataset& train_ds,
                    const LabeledDataset* eval_ds = nullptr, const MetricsSink& sink = {});

/// Encoder k-NN accuracy with `memory` as the labelled set and `queries` as the test set.
double encoder_knn(const Mlp& encoder, const LabeledDataset& memory, const LabeledDataset& queries, std::size_t k);

}  // namespace isd

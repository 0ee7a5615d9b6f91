#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "isd/tensor.hpp"

namespace isd {

/// Widths from input through hidden layers to the output. ReLU between
/// layers, nothing after the last one; optional row-wise L2 normalization
/// of the output.
struct MlpSpec {
  std::vector<std::size_t> layer_widths;
  bool final_normalize = false;

  void validate() const;
  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  bool operator==(const MlpSpec&) const = default;
};

/// Parameter set of one MLP: weights[i] is [in x out], biases[i] is [out].
struct Mlp {
  MlpSpec spec;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  /// Weights and biases interleaved layer by layer.
  std::vector<Tensor> parameters() const;
  /// Deep copy with every parameter's trainable flag set to `trainable`.
  Mlp clone(bool trainable) const;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, trainable.
Mlp init_params(const MlpSpec& spec, std::uint64_t seed);

/// x is [batch x input_width] (or a single row of length input_width).
Tensor mlp_forward(const Mlp& params, const Tensor& x);

struct SgdState {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::vector<double>> velocity;
};

/// Fresh state with zero velocity buffers shaped like `params`.
SgdState make_sgd_state(std::span<const Tensor> params, double lr, double momentum = 0.9,
                        double weight_decay = 1e-4);

/// v <- momentum * v + (grad + weight_decay * theta); theta <- theta - lr * v.
/// Non-trainable tensors are rejected with ContractError.
void sgd_step(std::span<Tensor> params, SgdState& state);

/// Piecewise-constant (step) or cosine learning-rate schedule over epochs.
struct LrSchedule {
  enum class Kind { step, cosine };
  Kind kind = Kind::step;
  double base_lr = 0.01;
  double factor = 0.2;
  std::vector<std::size_t> milestones;
  std::size_t total_epochs = 0;

  double lr_at(std::size_t epoch) const;
  /// Milestones at 70% and 90% of the run, the 140/180-of-200 proportions.
  static std::vector<std::size_t> default_milestones(std::size_t total_epochs);
};

/// Student (encoder + predictor) and its EMA teacher (encoder only).
struct ModelPair {
  Mlp student_encoder;
  Mlp student_predictor;
  Mlp teacher_encoder;
  double momentum = 0.999;

  bool has_predictor() const { return !student_predictor.weights.empty(); }
  std::vector<Tensor> student_parameters() const;
};

/// Student from `seed`, teacher an exact non-trainable copy of the student
/// encoder. An empty predictor spec builds a student without a head.
ModelPair make_model_pair(const MlpSpec& encoder, const MlpSpec& predictor, std::uint64_t seed,
                          double momentum);

/// Student encoder followed by the prediction head, when there is one.
Tensor student_forward(const ModelPair& pair, const Tensor& x);

/// theta_t <- m * theta_t + (1 - m) * theta_s for every teacher entry.
void ema_update(ModelPair& pair);

}  // namespace isd

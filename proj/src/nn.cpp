#include "isd/nn.hpp"

#include <cmath>
#include <numbers>

#include "isd/errors.hpp"
#include "isd/rng.hpp"

namespace isd {

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) throw ContractError("MLP needs at least input and output widths");
  for (auto w : layer_widths) {
    if (w == 0) throw ContractError("MLP widths must be positive");
  }
  if (output_width() < 2) throw ContractError("MLP output dimension must be at least 2");
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

Mlp Mlp::clone(bool trainable) const {
  Mlp copy{spec, {}, {}};
  for (const auto& w : weights) copy.weights.push_back(w.clone(trainable));
  for (const auto& b : biases) copy.biases.push_back(b.clone(trainable));
  return copy;
}

Mlp init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Mlp mlp{spec, {}, {}};
  for (std::size_t layer = 0; layer + 1 < spec.layer_widths.size(); ++layer) {
    const auto fan_in = spec.layer_widths[layer];
    const auto fan_out = spec.layer_widths[layer + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = dist(rng);
    mlp.weights.push_back(Tensor::from({fan_in, fan_out}, std::move(w), true));
    mlp.biases.push_back(Tensor::zeros({fan_out}, true));
  }
  return mlp;
}

Tensor mlp_forward(const Mlp& params, const Tensor& x) {
  if (x.cols() != params.spec.input_width()) {
    throw DimensionError("mlp_forward: input width " + std::to_string(x.cols()) + " but network expects " +
                         std::to_string(params.spec.input_width()));
  }
  Tensor h = x.rank() == 1 ? reshape(x, {1, x.cols()}) : x;
  const auto layers = params.weights.size();
  for (std::size_t i = 0; i < layers; ++i) {
    h = add_row(matmul(h, params.weights[i]), params.biases[i]);
    if (i + 1 < layers) h = relu(h);
  }
  if (params.spec.final_normalize) h = l2_normalize(h);
  return h;
}

SgdState make_sgd_state(std::span<const Tensor> params, double lr, double momentum, double weight_decay) {
  SgdState state{lr, momentum, weight_decay, {}};
  for (const auto& p : params) state.velocity.emplace_back(p.size(), 0.0);
  return state;
}

void sgd_step(std::span<Tensor> params, SgdState& state) {
  if (params.size() != state.velocity.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(state.velocity.size()) + " velocity buffers");
  }
  for (const auto& p : params) {
    if (!p.requires_grad()) throw ContractError("sgd_step: non-trainable (teacher) parameter passed");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].mutable_values();
    auto grad = params[k].grad();
    auto& v = state.velocity[k];
    if (v.size() != theta.size()) throw DimensionError("sgd_step: velocity shape does not match parameter");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = state.momentum * v[i] + (grad[i] + state.weight_decay * theta[i]);
      theta[i] -= state.lr * v[i];
    }
  }
}

double LrSchedule::lr_at(std::size_t epoch) const {
  if (kind == Kind::cosine) {
    if (total_epochs == 0) return base_lr;
    const double progress = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  double lr = base_lr;
  for (auto m : milestones) {
    if (epoch >= m) lr *= factor;
  }
  return lr;
}

std::vector<std::size_t> LrSchedule::default_milestones(std::size_t total_epochs) {
  return {total_epochs * 7 / 10, total_epochs * 9 / 10};
}

std::vector<Tensor> ModelPair::student_parameters() const {
  auto params = student_encoder.parameters();
  auto head = student_predictor.parameters();
  params.insert(params.end(), head.begin(), head.end());
  return params;
}

ModelPair make_model_pair(const MlpSpec& encoder, const MlpSpec& predictor, std::uint64_t seed,
                          double momentum) {
  if (!predictor.layer_widths.empty() && predictor.input_width() != encoder.output_width()) {
    throw DimensionError("predictor input width must equal the embedding dimension");
  }
  ModelPair pair;
  pair.student_encoder = init_params(encoder, derive_seed(seed, 0));
  if (!predictor.layer_widths.empty()) pair.student_predictor = init_params(predictor, derive_seed(seed, 1));
  pair.teacher_encoder = pair.student_encoder.clone(false);
  pair.momentum = momentum;
  return pair;
}

Tensor student_forward(const ModelPair& pair, const Tensor& x) {
  Tensor embedding = mlp_forward(pair.student_encoder, x);
  if (!pair.has_predictor()) return embedding;
  return mlp_forward(pair.student_predictor, embedding);
}

void ema_update(ModelPair& pair) {
  const double m = pair.momentum;
  if (m == 1.0) return;
  auto teacher = pair.teacher_encoder.parameters();
  const auto student = pair.student_encoder.parameters();
  if (teacher.size() != student.size()) throw DimensionError("ema_update: teacher/student layer count differs");
  for (std::size_t k = 0; k < teacher.size(); ++k) {
    auto t = teacher[k].mutable_values();
    const auto s = student[k].values();
    if (t.size() != s.size()) throw DimensionError("ema_update: teacher/student shapes differ");
    if (m == 0.0) {
      std::copy(s.begin(), s.end(), t.begin());
      continue;
    }
    // equal entries are left alone: m * x + (1 - m) * x need not round back to x
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != s[i]) t[i] = m * t[i] + (1.0 - m) * s[i];
    }
  }
}

}  // namespace isd

#include "isd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "isd/errors.hpp"
#include "isd/eval.hpp"

namespace isd {

void TrainConfig::validate() const {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("momentum must lie in [0, 1]");
  if (distill_mode && momentum != 1.0) throw ConfigError("distill_mode requires momentum = 1");
  if (!(loss.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (uses_bank()) {
    if (bank_capacity < 2) throw ConfigError("bank_capacity must be at least 2");
    if (batch_size > bank_capacity) throw ConfigError("batch_size must not exceed bank_capacity");
  }
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(lr_factor > 0.0)) throw ConfigError("lr_factor must be positive");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw ConfigError("sgd_momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (embedding_dim < 2) throw ConfigError("embedding_dim must be at least 2");
  for (auto w : encoder_hidden) {
    if (w == 0) throw ConfigError("encoder hidden widths must be positive");
  }
  if (knn_k == 0) throw ConfigError("knn_k must be positive");
  teacher_aug.validate();
  student_aug.validate();
}

MlpSpec TrainConfig::encoder_spec(std::size_t input_dim) const {
  MlpSpec spec;
  spec.layer_widths.push_back(input_dim);
  spec.layer_widths.insert(spec.layer_widths.end(), encoder_hidden.begin(), encoder_hidden.end());
  spec.layer_widths.push_back(embedding_dim);
  spec.final_normalize = true;
  return spec;
}

MlpSpec TrainConfig::predictor_spec() const {
  if (predictor_hidden == 0) return {};
  return {{embedding_dim, predictor_hidden, embedding_dim}, false};
}

LrSchedule TrainConfig::schedule() const {
  LrSchedule s;
  s.kind = lr_schedule;
  s.base_lr = lr;
  s.factor = lr_factor;
  s.milestones = lr_milestones.empty() ? LrSchedule::default_milestones(epochs) : lr_milestones;
  s.total_epochs = epochs;
  return s;
}

TrainState init_train_state(const TrainConfig& config, std::size_t input_dim) {
  config.validate();
  auto model = make_model_pair(config.encoder_spec(input_dim), config.predictor_spec(), config.init_seed,
                               config.momentum);
  auto sgd = make_sgd_state(model.student_parameters(), config.lr, config.sgd_momentum, config.weight_decay);
  return TrainState{config,
                    input_dim,
                    std::move(model),
                    std::move(sgd),
                    AnchorBank(std::max<std::size_t>(config.bank_capacity, 1), config.embedding_dim),
                    Rng(config.order_seed),
                    Rng(config.aug_seed),
                    0,
                    0};
}

namespace {

constexpr std::uint64_t kPrefillStream = 0x70726566;

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

Tensor teacher_embed(const ModelPair& model, const Tensor& x) { return mlp_forward(model.teacher_encoder, x).detach(); }

Tensor augmented(const Tensor& batch, const AugmentPolicy& policy, Rng& rng, std::optional<ImageDims> image,
                 std::vector<double>& scratch) {
  const auto d = batch.cols();
  scratch.clear();
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto view = augment(batch.values().subspan(r * d, d), policy, rng, image);
    scratch.insert(scratch.end(), view.begin(), view.end());
  }
  return Tensor::from({batch.rows(), d}, scratch);
}

void check_teacher_has_no_gradient(const ModelPair& model) {
  for (const auto& p : model.teacher_encoder.parameters()) {
    if (p.requires_grad()) throw ContractError("teacher parameter is trainable");
    for (double g : p.grad()) {
      if (g != 0.0) throw ContractError("teacher parameter received gradient");
    }
  }
}

}  // namespace

void prefill_bank(TrainState& state, const LabeledDataset& ds) {
  if (!state.config.uses_bank()) return;
  if (ds.size() == 0) throw DataError("cannot pre-fill the bank from an empty dataset");
  const auto b = state.config.batch_size;
  const auto batches = (state.bank.capacity() + b - 1) / b;
  Rng order_rng(derive_seed(state.config.order_seed, kPrefillStream));
  auto order = shuffled(ds.size(), order_rng);
  std::size_t cursor = 0;
  std::vector<double> scratch;
  for (std::size_t k = 0; k < batches; ++k) {
    std::vector<std::size_t> idx;
    while (idx.size() < b) {
      if (cursor == order.size()) {
        order = shuffled(ds.size(), order_rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const auto view = augmented(ds.gather(idx), state.config.teacher_aug, state.aug_rng, ds.image, scratch);
    state.bank.enqueue(teacher_embed(state.model, view));
  }
}

StepMetrics train_step(TrainState& state, const Tensor& batch, std::optional<ImageDims> image) {
  const auto start = std::chrono::steady_clock::now();
  const auto& cfg = state.config;
  if (batch.rank() != 2 || batch.rows() == 0) throw ContractError("train_step needs a non-empty [b x d] batch");
  if (batch.cols() != state.input_dim) throw DimensionError("batch width does not match the encoder input");

  StepMetrics m;
  m.epoch = state.epoch;
  m.lr = cfg.schedule().lr_at(state.epoch);
  state.sgd.lr = m.lr;

  std::vector<double> scratch;
  const auto view_t = augmented(batch, cfg.teacher_aug, state.aug_rng, image, scratch);
  const auto view_s = augmented(batch, cfg.student_aug, state.aug_rng, image, scratch);
  const auto t = teacher_embed(state.model, view_t);
  const auto s = student_forward(state.model, view_s);

  Tensor loss;
  const auto enqueued_before = state.bank.total_enqueued();
  if (cfg.uses_bank()) {
    if (state.bank.count() < 2) {
      throw EmptyBankError("anchor bank holds " + std::to_string(state.bank.count()) +
                           " rows; pre-fill it with prefill_bank before training");
    }
    const auto anchors = state.bank.snapshot();
    if (cfg.loss.objective == Objective::isd) {
      loss = isd_loss(t, s, anchors, cfg.loss.temperature);
      m.h_pt = mean_entropy(anchor_distribution(t, anchors, cfg.loss.temperature));
    } else {
      loss = moco_loss(s, t, anchors, cfg.loss.temperature);
    }
  } else {
    loss = byol_loss(s, t);
  }
  m.loss = loss.item();
  if (!std::isfinite(m.loss)) throw NumericDomainError("non-finite loss at step " + std::to_string(state.step));

  loss.backward();
  check_teacher_has_no_gradient(state.model);
  auto params = state.model.student_parameters();
  sgd_step(params, state.sgd);
  ema_update(state.model);
  // the anchors used above were taken before this batch's own embeddings went in
  if (state.bank.total_enqueued() != enqueued_before) throw ContractError("bank changed between snapshot and loss");
  if (cfg.uses_bank()) state.bank.enqueue(t);

  m.step = ++state.step;
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return m;
}

double encoder_knn(const Mlp& encoder, const LabeledDataset& memory, const LabeledDataset& queries, std::size_t k) {
  return knn_eval(embed(encoder, memory), embed(encoder, queries), k);
}

TrainResult continue_training(TrainState state, const LabeledDataset& train_ds, const LabeledDataset* eval_ds,
                              const MetricsSink& sink) {
  state.config.validate();
  train_ds.validate();
  if (train_ds.size() == 0) throw DataError("training set is empty");
  if (train_ds.dim != state.input_dim) throw DimensionError("dataset width does not match the encoder input");
  if (state.config.uses_bank() && state.bank.count() == 0) prefill_bank(state, train_ds);

  TrainResult result{std::move(state), {}};
  auto& st = result.state;
  const auto b = st.config.batch_size;
  while (st.epoch < st.config.epochs) {
    const auto order = shuffled(train_ds.size(), st.order_rng);
    for (std::size_t lo = 0; lo < order.size(); lo += b) {
      const std::span<const std::size_t> idx(order.data() + lo, std::min(b, order.size() - lo));
      result.metrics.push_back(train_step(st, train_ds.gather(idx), train_ds.image));
    }
    ++st.epoch;
    const auto every = st.config.eval_every;
    if (eval_ds && every > 0 && (st.epoch % every == 0 || st.epoch == st.config.epochs)) {
      auto& last = result.metrics.back();
      last.teacher_knn = encoder_knn(st.model.teacher_encoder, train_ds, *eval_ds, st.config.knn_k);
      last.student_knn = encoder_knn(st.model.student_encoder, train_ds, *eval_ds, st.config.knn_k);
    }
    if (sink) {
      const auto epoch_steps = (order.size() + b - 1) / b;
      for (auto it = result.metrics.end() - static_cast<std::ptrdiff_t>(epoch_steps); it != result.metrics.end(); ++it) {
        sink(*it);
      }
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config, const LabeledDataset& train_ds, const LabeledDataset* eval_ds,
                  const MetricsSink& sink) {
  if (config.distill_mode) throw ConfigError("distill_mode runs need a teacher checkpoint; use distill");
  return continue_training(init_train_state(config, train_ds.dim), train_ds, eval_ds, sink);
}

TrainConfig distill_config(const TrainConfig& config) {
  if (config.distill_mode) return config;
  auto cfg = config;
  cfg.distill_mode = true;
  cfg.momentum = 1.0;
  cfg.teacher_aug = AugmentPolicy::mild();
  cfg.student_aug = AugmentPolicy::mild();
  return cfg;
}

TrainResult distill(const TrainConfig& config, const Mlp& teacher, const LabeledDataset& train_ds,
                    const LabeledDataset* eval_ds, const MetricsSink& sink) {
  const auto cfg = distill_config(config);
  auto state = init_train_state(cfg, train_ds.dim);
  if (!(teacher.spec == state.model.teacher_encoder.spec)) {
    throw CheckpointError("teacher architecture does not match the configured encoder");
  }
  state.model.teacher_encoder = teacher.clone(false);
  return continue_training(std::move(state), train_ds, eval_ds, sink);
}

}  // namespace isd

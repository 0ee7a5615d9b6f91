#include "isd/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "isd/errors.hpp"
#include "isd/eval.hpp"

namespace isd {

DatasetPair load_datasets(const DataConfig& data) {
  if (data.source == "mixture") {
    auto eval_params = data.mixture;
    eval_params.per_class = data.eval_per_class;
    return {gen_gaussian_mixture(data.mixture, data.seed, Split::train),
            gen_gaussian_mixture(eval_params, data.seed, Split::eval)};
  }
  if (data.source == "container") {
    if (data.train_path.empty()) throw DataError("data.train_path is required for container data");
    DatasetPair out{load_dataset(data.train_path), std::nullopt};
    if (!data.eval_path.empty()) out.eval = load_dataset(data.eval_path);
    return out;
  }
  if (data.source == "idx") {
    if (data.train_images.empty() || data.train_labels.empty()) {
      throw DataError("data.train_images and data.train_labels are required for idx data");
    }
    DatasetPair out{load_idx(data.train_images, data.train_labels), std::nullopt};
    if (!data.eval_images.empty()) {
      out.eval = load_idx(data.eval_images, data.eval_labels);
      out.eval->split = Split::eval;
    }
    return out;
  }
  throw ConfigError("data.source must be mixture, container or idx, not '" + data.source + "'");
}

std::vector<AblationRow> ablate_temperature(const TrainConfig& base, std::span<const double> temperatures,
                                            const LabeledDataset& train_ds, const LabeledDataset& eval_ds) {
  if (base.loss.objective != Objective::isd) throw ConfigError("temperature ablation runs the isd objective");
  std::vector<AblationRow> rows;
  for (double tau : temperatures) {
    auto cfg = base;
    cfg.loss.temperature = tau;
    cfg.eval_every = 0;
    const auto result = train(cfg, train_ds);
    rows.push_back({tau, encoder_knn(result.state.model.teacher_encoder, train_ds, eval_ds, cfg.knn_k),
                    encoder_knn(result.state.model.student_encoder, train_ds, eval_ds, cfg.knn_k)});
  }
  return rows;
}

double knn_on_classes(const Mlp& encoder, const LabeledDataset& memory, const LabeledDataset& queries,
                      std::span<const int> classes, std::size_t k) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (std::ranges::find(classes, queries.labels[i]) != classes.end()) keep.push_back(i);
  }
  if (keep.empty()) throw DataError("no query rows belong to the requested classes");
  return knn_eval(embed(encoder, memory), embed(encoder, queries.subset(keep)), k);
}

UnbalancedRow unbalanced_repetition(const TrainConfig& base, const DataConfig& data, const UnbalancedConfig& protocol,
                                    std::size_t rep) {
  if (protocol.large < 1 || protocol.large >= protocol.classes) {
    throw ConfigError("unbalanced.large must lie in [1, classes)");
  }
  const auto seed = derive_seed(data.seed, 1000 + rep);
  MixtureParams params{protocol.classes, protocol.large_count, protocol.dim, protocol.sep};
  const auto full = gen_gaussian_mixture(params, seed, Split::train);
  params.per_class = protocol.eval_per_class;
  const auto eval_ds = gen_gaussian_mixture(params, seed, Split::eval);

  std::vector<int> ids(static_cast<std::size_t>(protocol.classes));
  std::iota(ids.begin(), ids.end(), 0);
  Rng pick(derive_seed(seed, 1));
  std::shuffle(ids.begin(), ids.end(), pick);
  const std::vector<int> large(ids.begin(), ids.begin() + protocol.large);
  std::vector<int> rare(ids.begin() + protocol.large, ids.end());
  std::ranges::sort(rare);
  const auto train_ds = make_unbalanced(full, large, protocol.small_count, derive_seed(seed, 2));

  UnbalancedRow row;
  row.rep = rep;
  for (auto objective : {Objective::isd, Objective::moco}) {
    auto cfg = base;
    cfg.loss.objective = objective;
    cfg.epochs = protocol.epochs;
    cfg.bank_capacity = protocol.bank_capacity;
    if (objective == Objective::moco) cfg.loss.temperature = protocol.moco_temperature;
    cfg.eval_every = 0;
    cfg.init_seed = derive_seed(base.init_seed, rep);
    cfg.order_seed = derive_seed(base.order_seed, rep);
    cfg.aug_seed = derive_seed(base.aug_seed, rep);
    const auto& enc = train(cfg, train_ds).state.model.student_encoder;
    // the k-NN memory is the balanced set, so only the SSL data is unbalanced
    const double all = knn_eval(embed(enc, full), embed(enc, eval_ds), cfg.knn_k);
    const double rare_acc = knn_on_classes(enc, full, eval_ds, rare, cfg.knn_k);
    (objective == Objective::isd ? row.isd_all : row.moco_all) = all;
    (objective == Objective::isd ? row.isd_rare : row.moco_rare) = rare_acc;
  }
  return row;
}

std::vector<UnbalancedRow> run_unbalanced(const TrainConfig& base, const DataConfig& data,
                                          const UnbalancedConfig& protocol,
                                          const std::function<void(const UnbalancedRow&)>& progress) {
  std::vector<UnbalancedRow> rows;
  for (std::size_t r = 0; r < protocol.reps; ++r) {
    rows.push_back(unbalanced_repetition(base, data, protocol, r));
    if (progress) progress(rows.back());
  }
  return rows;
}

std::string format_value(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_step_metrics_csv(std::ostream& out, std::span<const StepMetrics> metrics, bool header) {
  if (header) out << "epoch,step,loss,H_pt,lr,teacher_knn,student_knn\n";
  for (const auto& m : metrics) {
    out << m.epoch << ',' << m.step << ',' << format_value(m.loss) << ',' << format_value(m.h_pt) << ','
        << format_value(m.lr) << ',' << (m.teacher_knn ? format_value(*m.teacher_knn) : "") << ','
        << (m.student_knn ? format_value(*m.student_knn) : "") << '\n';
  }
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "temperature,teacher_knn,student_knn\n";
  for (const auto& r : rows) {
    out << format_value(r.temperature) << ',' << format_value(r.teacher_knn) << ',' << format_value(r.student_knn)
        << '\n';
  }
}

void write_unbalanced_csv(std::ostream& out, std::span<const UnbalancedRow> rows) {
  out << "rep,isd_all,moco_all,isd_rare,moco_rare,diff_all,diff_rare\n";
  for (const auto& r : rows) {
    out << r.rep << ',' << format_value(r.isd_all) << ',' << format_value(r.moco_all) << ','
        << format_value(r.isd_rare) << ',' << format_value(r.moco_rare) << ',' << format_value(r.diff_all()) << ','
        << format_value(r.diff_rare()) << '\n';
  }
}

}  // namespace isd

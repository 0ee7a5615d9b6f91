#include "isd/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>

#include "isd/checkpoint.hpp"
#include "isd/errors.hpp"
#include "isd/eval.hpp"
#include "isd/experiments.hpp"

namespace isd {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "isd-run";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "Run config file (key = value lines)");
  sub->add_option("--set", o.sets, "Override one config key, key=value; repeatable")->allow_extra_args(false);
  sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--seed", o.seed, "Seed for model init, data order, augmentation and data");
}

RunConfig resolve(const CommonOptions& o) {
  auto config = o.config_path.empty() ? parse_run_config("", o.sets) : load_run_config(o.config_path, o.sets);
  if (o.seed) apply_seed(config, *o.seed);
  config.train.validate();
  return config;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

fs::path prepare(const CommonOptions& o, const RunConfig& config) {
  const fs::path dir = o.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  open_out(dir / "config.cfg") << serialize_run_config(config);
  return dir;
}

const LabeledDataset* eval_of(const DatasetPair& data) { return data.eval ? &*data.eval : nullptr; }

void report_final(std::ostream& out, const TrainResult& result) {
  out << "epochs " << result.state.epoch << ", steps " << result.state.step;
  if (!result.metrics.empty()) out << ", final loss " << format_value(result.metrics.back().loss);
  for (auto it = result.metrics.rbegin(); it != result.metrics.rend(); ++it) {
    if (it->teacher_knn) {
      out << ", teacher knn " << format_value(*it->teacher_knn) << ", student knn " << format_value(*it->student_knn);
      break;
    }
  }
  out << '\n';
}

template <typename Runner>
int train_like(const CommonOptions& o, std::ostream& out, bool distilling, Runner runner) {
  auto config = resolve(o);
  if (distilling) config.train = distill_config(config.train);
  const auto dir = prepare(o, config);
  const auto data = load_datasets(config.data);
  auto metrics = open_out(dir / "metrics.csv");
  write_step_metrics_csv(metrics, {}, true);
  const auto result = runner(config, data, [&](const StepMetrics& m) {
    write_step_metrics_csv(metrics, std::span(&m, 1), false);
  });
  metrics.flush();
  save_checkpoint(result.state, dir / "checkpoint.bin");
  report_final(out, result);
  return kExitOk;
}

int cmd_train(const CommonOptions& o, std::ostream& out) {
  return train_like(o, out, false, [](const RunConfig& c, const DatasetPair& d, const MetricsSink& sink) {
    return train(c.train, d.train, eval_of(d), sink);
  });
}

int cmd_distill(const CommonOptions& o, const std::string& teacher_path, std::ostream& out) {
  const auto teacher = load_checkpoint(teacher_path).model.teacher_encoder;
  return train_like(o, out, true, [&](const RunConfig& c, const DatasetPair& d, const MetricsSink& sink) {
    return distill(c.train, teacher, d.train, eval_of(d), sink);
  });
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint_path, std::ostream& out) {
  const auto config = resolve(o);
  const auto state = load_checkpoint(checkpoint_path);
  const auto dir = prepare(o, config);
  const auto data = load_datasets(config.data);
  if (!data.eval) throw DataError("eval needs an eval split (data.eval_path or data.eval_images)");
  if (data.train.dim != state.input_dim) throw CheckpointError("checkpoint input width does not match the dataset");
  const auto k = config.train.knn_k;
  std::vector<MetricRecord> records;
  const auto epoch = static_cast<long>(state.epoch);
  for (const auto& [name, encoder] : {std::pair{"teacher", &state.model.teacher_encoder},
                                      std::pair{"student", &state.model.student_encoder}}) {
    const auto memory = embed(*encoder, data.train, name, epoch);
    const auto queries = embed(*encoder, *data.eval, name, epoch);
    records.push_back({"knn", k, knn_eval(memory, queries, k), name, epoch});
    records.push_back({"linear", 0, linear_probe(memory, queries, config.probe), name, epoch});
    const auto recalls = recall_at_k(queries, config.recall_ks);
    for (std::size_t i = 0; i < recalls.size(); ++i) {
      records.push_back({"recall", config.recall_ks[i], recalls[i], name, epoch});
    }
  }
  auto csv = open_out(dir / "eval.csv");
  write_metrics_csv(csv, records);
  write_metrics_csv(out, records);
  return kExitOk;
}

int cmd_ablate(const CommonOptions& o, std::ostream& out) {
  const auto config = resolve(o);
  const auto dir = prepare(o, config);
  const auto data = load_datasets(config.data);
  if (!data.eval) throw DataError("ablate-temperature needs an eval split");
  const auto rows = ablate_temperature(config.train, config.temperatures, data.train, *data.eval);
  auto csv = open_out(dir / "ablation.csv");
  write_ablation_csv(csv, rows);
  write_ablation_csv(out, rows);
  return kExitOk;
}

int cmd_unbalanced(const CommonOptions& o, std::optional<std::size_t> reps, std::ostream& out) {
  auto config = resolve(o);
  if (reps) config.unbalanced.reps = *reps;
  const auto dir = prepare(o, config);
  auto csv = open_out(dir / "unbalanced.csv");
  const auto rows = run_unbalanced(config.train, config.data, config.unbalanced, [&](const UnbalancedRow& r) {
    out << "rep " << r.rep << ": diff_all " << format_value(r.diff_all()) << ", diff_rare "
        << format_value(r.diff_rare()) << '\n';
  });
  write_unbalanced_csv(csv, rows);
  return kExitOk;
}

struct GenOptions {
  int classes = 3;
  std::size_t per_class = 200;
  std::size_t eval_per_class = 100;
  std::size_t dim = 32;
  double sep = 6.0;
};

int cmd_gen_data(const CommonOptions& o, const GenOptions& g, std::ostream& out) {
  auto config = resolve(o);
  config.data.source = "mixture";
  config.data.mixture = {g.classes, g.per_class, g.dim, g.sep};
  config.data.eval_per_class = g.eval_per_class;
  const auto dir = prepare(o, config);
  const auto data = load_datasets(config.data);
  save_dataset(data.train, dir / "train.bin");
  save_dataset(*data.eval, dir / "eval.bin");
  out << "wrote " << (dir / "train.bin").string() << " (" << data.train.size() << " rows) and "
      << (dir / "eval.bin").string() << " (" << data.eval->size() << " rows)\n";
  return kExitOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const CheckpointError*>(&e)) return kExitCheckpoint;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const LengthError*>(&e) || dynamic_cast<const DimensionError*>(&e)) {
    return kExitData;
  }
  return kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative similarity distillation lab", "isd"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string teacher_path, checkpoint_path;
  std::optional<std::size_t> reps;
  GenOptions gen;

  auto* train_cmd = app.add_subcommand("train", "Self-supervised training (isd, moco or byol)");
  add_common(train_cmd, common);
  auto* distill_cmd = app.add_subcommand("distill", "Frozen-teacher distillation into a fresh student");
  add_common(distill_cmd, common);
  distill_cmd->add_option("--teacher", teacher_path, "Checkpoint providing the teacher encoder")->required();
  auto* eval_cmd = app.add_subcommand("eval", "k-NN, linear probe and recall@k of a checkpoint");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint to evaluate")->required();
  auto* ablate_cmd = app.add_subcommand("ablate-temperature", "ISD k-NN across a temperature grid");
  add_common(ablate_cmd, common);
  auto* unbalanced_cmd = app.add_subcommand("unbalanced", "ISD vs MoCo on unbalanced data, repeated");
  add_common(unbalanced_cmd, common);
  unbalanced_cmd->add_option("--reps", reps, "Repetitions");
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a gaussian mixture train/eval pair");
  add_common(gen_cmd, common);
  gen_cmd->add_option("--classes", gen.classes)->capture_default_str();
  gen_cmd->add_option("--per-class", gen.per_class)->capture_default_str();
  gen_cmd->add_option("--eval-per-class", gen.eval_per_class)->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim)->capture_default_str();
  gen_cmd->add_option("--sep", gen.sep)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(common, out);
    if (distill_cmd->parsed()) return cmd_distill(common, teacher_path, out);
    if (eval_cmd->parsed()) return cmd_eval(common, checkpoint_path, out);
    if (ablate_cmd->parsed()) return cmd_ablate(common, out);
    if (unbalanced_cmd->parsed()) return cmd_unbalanced(common, reps, out);
    if (gen_cmd->parsed()) {
      if (gen.classes < 2) throw ConfigError("--classes must be at least 2");
      return cmd_gen_data(common, gen, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << "usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace isd

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "isd/data.hpp"
#include "isd/eval.hpp"
#include "isd/train.hpp"

namespace isd {

struct DataConfig {
  /// mixture, container (dataset files from gen-data) or idx.
  std::string source = "mixture";
  MixtureParams mixture;
  std::size_t eval_per_class = 100;
  std::uint64_t seed = 0;
  std::string train_path;
  std::string eval_path;
  std::string train_images;
  std::string train_labels;
  std::string eval_images;
  std::string eval_labels;
  bool operator==(const DataConfig&) const = default;
};

/// Two large and six rare classes (13:1), balanced evaluation.
struct UnbalancedConfig {
  int classes = 8;
  int large = 2;
  std::size_t large_count = 260;
  std::size_t small_count = 20;
  std::size_t eval_per_class = 40;
  std::size_t reps = 10;
  std::size_t dim = 32;
  double sep = 4.0;
  /// Shared by both methods.
  std::size_t epochs = 40;
  std::size_t bank_capacity = 512;
  /// ISD keeps the train temperature; by default MoCo uses the same value.
  double moco_temperature = 0.02;
  bool operator==(const UnbalancedConfig&) const = default;
};

struct RunConfig {
  TrainConfig train;
  DataConfig data;
  ProbeConfig probe;
  std::vector<std::size_t> recall_ks{1, 2, 4, 8};
  std::vector<double> temperatures{0.003, 0.007, 0.01, 0.02, 0.04, 0.06};
  UnbalancedConfig unbalanced;
  bool operator==(const RunConfig&) const;
};

/// Parses `key = value` lines ('#' starts a comment), then applies
/// `overrides` ("key=value") in order. Unknown keys and malformed values
/// raise ConfigError. When the objective is byol and momentum was never
/// given, momentum defaults to 0.99.
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {});

/// Every key, one per line; parse_run_config(serialize_run_config(c)) == c.
std::string serialize_run_config(const RunConfig& config);

/// Only the training keys; used inside checkpoints.
std::string serialize_train_config(const TrainConfig& config);
TrainConfig parse_train_config(const std::string& text);

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Seeds every stream from one number: init N, order N+1, augmentation N+2, data N.
void apply_seed(RunConfig& config, std::uint64_t seed);

}  // namespace isd

#pragma once

// Meta-training: fit the PFN to a stream of prior datasets by minimising the
// held-out cross-entropy, one Adam step per batch of datasets.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tabpfn/model/transformer.hpp"
#include "tabpfn/prior/dataset.hpp"

namespace tabpfn::train {

struct TrainingConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;  // datasets per step
  std::size_t n = 100;  // rows per dataset, train and held-out together
  std::size_t k_min = 2;
  std::size_t k_max = 10;
  double lr = 1e-4;
  double warmup_fraction = 0.05;
  double clip_norm = 1.0;
  std::size_t nan_patience = 10;

  std::size_t eval_every = 100;  // 0 disables the frozen evaluation stream
  std::size_t eval_datasets = 32;
  std::uint64_t eval_seed = 20220701;

  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;  // periodic saves go to <path>.step<N>
  std::filesystem::path log_path;  // JSONL, empty for none

  std::size_t workers = 1;  // prior sampling threads

  // Prior: "paper", "desk", "gp_ablation", "toy_linear" or a space JSON file.
  std::string prior = "desk";
  bool use_gp = true;
  bool use_scm = true;
  bool use_bnn = true;
  bool median_split = false;
  bool conditional = false;  // attach psi through a style token

  std::vector<double> lr_candidates;  // non-empty: pick lr by pilot runs first
  std::size_t pilot_steps = 200;

  model::ModelConfig model;

  /// "key = value" lines; '#' starts a comment. Unknown keys are errors.
  static TrainingConfig parse(const std::string& text);
  static TrainingConfig load(const std::filesystem::path& path);
  void validate() const;
};

prior::SpacePtr load_space(const std::string& name);
std::unique_ptr<prior::PriorSource> make_source(const TrainingConfig& config);

struct LogRecord {
  std::size_t step = 0;
  double loss = 0.0;  // batch mean, NaN for a skipped step
  double lr = 0.0;
  double elapsed_ms = 0.0;
  std::optional<double> eval_loss;

  std::string to_json(bool with_time = true) const;
};

struct TrainingResult {
  model::Checkpoint checkpoint;
  std::vector<LogRecord> log;
  double smoothed_loss = 0.0;  // EMA of batch losses, what lr selection compares
  std::optional<double> initial_eval_loss;
  std::optional<double> final_eval_loss;
  std::size_t skipped_steps = 0;
};

struct TrainHooks {
  std::function<void(const LogRecord&)> on_step;
  /// Skip wall-clock fields in the JSONL log so reruns are byte-identical.
  bool deterministic_log = false;
};

/// Learning rate after warmup and cosine decay.
double scheduled_lr(const TrainingConfig& config, std::size_t step);

/// Mean held-out CE of `model` over `datasets`, at temperature 1.
double evaluate(const model::Transformer& model, const std::vector<prior::SyntheticDataset>& datasets);

/// The fixed evaluation datasets for this config and source.
std::vector<prior::SyntheticDataset> frozen_stream(const TrainingConfig& config, const prior::DatasetSource& source);

/// Runs config.steps Adam steps from `init` (or a fresh model seeded from
/// `seed`). Throws NumericalError after nan_patience consecutive non-finite
/// steps.
TrainingResult meta_train(const TrainingConfig& config, const prior::DatasetSource& source, std::uint64_t seed,
                          std::optional<model::Checkpoint> init = std::nullopt, const TrainHooks& hooks = {});

struct LrSelection {
  double lr = 0.0;
  std::vector<std::pair<double, std::optional<double>>> pilots;  // lr, smoothed loss (empty if diverged)
};

/// Pilot-trains config.pilot_steps per candidate and returns the lowest final
/// smoothed loss. A single candidate is returned without training; throws
/// NumericalError if every pilot diverges.
LrSelection learning_rate_selection(const std::vector<double>& candidates, const TrainingConfig& config,
                                    const prior::DatasetSource& source, std::uint64_t seed);

}  // namespace tabpfn::train

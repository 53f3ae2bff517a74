#pragma once

// Benchmark runs with JSONL persistence and rank/win aggregation, the GP
// hyperparameter recovery study, and the context-length extrapolation study.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tabpfn/eval/io.hpp"
#include "tabpfn/infer/predict.hpp"
#include "tabpfn/model/transformer.hpp"
#include "tabpfn/prior/dataset.hpp"
#include "tabpfn/tune/tuner.hpp"

namespace tabpfn::eval {

struct ResultRecord {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  std::string metric;  // roc_auc, cross_entropy, accuracy, or error
  double value = 0.0;
  double wall_ms = 0.0;
  std::string config_hash;
  std::string error;  // set for failed cells

  std::string to_json(bool with_time = true) const;
  static ResultRecord from_json(const std::string& line);
};

std::vector<ResultRecord> read_results(const std::filesystem::path& jsonl);

struct BenchmarkConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double test_fraction = 0.5;
  infer::EnsembleConfig ensemble;
  std::string method = "tabpfn";
  bool deterministic = false;  // wall_ms recorded as 0
};

struct DatasetEntry {
  std::string name;
  std::filesystem::path csv;
  std::filesystem::path schema;
};

/// Every <name>.csv in `dir` with a sibling <name>.schema.json, by name.
std::vector<DatasetEntry> discover_datasets(const std::filesystem::path& dir);

/// Hex FNV-1a over the parameters, tuning record and ensemble settings.
std::string config_hash(const model::Checkpoint& checkpoint, const infer::EnsembleConfig& ensemble);

/// Per (dataset, seed): split, predict, and one record per metric. A failing
/// cell yields one "error" record and the run continues. Appends to `out`
/// when it is non-empty.
std::vector<ResultRecord> run_benchmark(const model::Checkpoint& checkpoint, const std::vector<DatasetEntry>& datasets,
                                        const BenchmarkConfig& config, const std::filesystem::path& out = {});

struct CellSummary {
  double mean = 0.0;
  double ci95 = 0.0;  // normal-approximation half width over seeds
  std::size_t count = 0;
};

struct MethodSummary {
  double mean_rank = 0.0;
  std::map<std::string, std::array<std::size_t, 3>> versus;  // other method -> wins, ties, losses
};

struct Summary {
  std::string metric;
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  std::map<std::string, std::map<std::string, CellSummary>> cells;  // dataset -> method -> cell
  std::map<std::string, MethodSummary> per_method;
};

bool higher_is_better(const std::string& metric);

/// Means with confidence intervals, average ranks per dataset (ties share the
/// mean rank) and pairwise wins/ties/losses on the per-dataset means.
Summary aggregate(const std::vector<ResultRecord>& records, const std::string& metric = "roc_auc");

std::string summary_table(const Summary& s);
std::string summary_svg(const Summary& s);

struct GpRecoveryConfig {
  std::array<double, 3> truth{5.0, 2.0, 0.1};  // outputscale, lengthscale, noise
  std::size_t num_datasets = 150;
  std::size_t n = 100;
  std::size_t k_min = 1;
  std::size_t k_max = 5;
  std::size_t sweep_points = 21;
  tune::TuneConfig tune;
  std::uint64_t seed = 0;
};

struct SweepCurve {
  std::string name;
  std::vector<double> values;
  std::vector<double> losses;
  double argmin = 0.0;
};

struct GpRecoveryReport {
  std::array<SweepCurve, 3> curves;
  std::array<double, 3> truth{};
  std::array<double, 3> recovered{};
  std::array<double, 3> range_width{};
  tune::TuningRun run;

  bool curve_within(std::size_t i, double fraction) const;
  bool tuned_within(std::size_t i, double fraction) const;
  std::string curves_csv() const;
  std::string curves_svg() const;
};

/// Validation sets drawn at `truth` from the checkpoint's (GP ablation)
/// space, a loss sweep of each hyperparameter with the others at their true
/// values, and a tune() run on a 60/40 split of the same sets.
GpRecoveryReport run_gp_recovery(const model::Checkpoint& checkpoint, const GpRecoveryConfig& config);

struct ExtrapolationPoint {
  std::size_t n_train = 0;
  double mean_auc = 0.0;
  double ci95 = 0.0;
  std::size_t tasks = 0;
};

/// For each task from `source` (which must yield max(lengths) + n_test rows),
/// the first L rows are context for each L and the last n_test rows are the
/// shared test set. Tasks whose test rows hold a single class are skipped.
std::vector<ExtrapolationPoint> run_extrapolation(const model::Checkpoint& checkpoint,
                                                  const prior::DatasetSource& source,
                                                  const std::vector<std::size_t>& lengths, std::size_t tasks,
                                                  std::size_t n_test, std::uint64_t seed,
                                                  const infer::EnsembleConfig& ensemble);

std::string extrapolation_svg(const std::vector<ExtrapolationPoint>& points, std::size_t train_length);

/// The train part of `ds` as context and its held-out rows as queries.
infer::PredictTask task_from(const prior::SyntheticDataset& ds);

}  // namespace tabpfn::eval

#pragma once

// The classifier users call: preprocess a real task and average the
// predictions of an ensemble of feature- and label-permuted forward passes.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tabpfn/model/transformer.hpp"

namespace tabpfn::infer {

struct PredictTask {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t k = 0;
  std::vector<float> x_train;  // row-major n_train x k; value ignored where masked
  std::vector<float> x_test;
  std::vector<std::uint8_t> mask_train;  // 1 = missing; empty means none
  std::vector<std::uint8_t> mask_test;
  std::vector<std::uint16_t> y_train;  // codes 0..N_c-1
  std::vector<std::string> class_names;  // code -> original label
  std::vector<std::string> feature_names;  // may be empty
  std::vector<bool> categorical;  // may be empty

  std::size_t num_classes() const { return class_names.size(); }
  /// Shapes and label range; throws ContractError.
  void validate() const;
};

/// Maps arbitrary labels to 0..N_c-1. Classes are ordered numerically when
/// every label parses as a number, lexicographically otherwise.
struct LabelMap {
  std::vector<std::string> names;
  std::vector<std::uint16_t> codes;
};
LabelMap remap_labels(const std::vector<std::string>& labels);

enum class Preprocessing { z_norm, robust, power };
std::string preprocessing_name(Preprocessing p);

struct ColumnStats {
  bool dropped = false;
  double center = 0.0;  // robust: median
  double scale = 1.0;  // robust: interquartile range
  double lambda = 1.0;  // power: Yeo-Johnson exponent
  double mean = 0.0;  // final z-normalisation
  double std = 1.0;
};

struct Preprocessed {
  PredictTask task;  // normalised, dropped columns removed, masks filled in
  std::vector<ColumnStats> stats;  // one per original column
  std::vector<std::string> warnings;
};

/// Statistics come from train rows only; z-normalisation is applied last and
/// missing cells become 0 with the mask set. Columns with no observed train
/// value are dropped with a warning.
Preprocessed preprocess(const PredictTask& task, Preprocessing variant);

/// Yeo-Johnson transform and its maximum-likelihood exponent.
double yeo_johnson(double y, double lambda);
double fit_yeo_johnson(const std::vector<double>& values);

struct EnsembleConfig {
  std::size_t members = 10;
  std::uint64_t seed = 0;
  std::vector<Preprocessing> variants{Preprocessing::z_norm, Preprocessing::robust, Preprocessing::power};
  bool permute_features = true;
  bool permute_labels = true;
  std::size_t query_chunk = 512;  // test rows per forward pass
};

struct PredictionResult {
  std::size_t rows = 0;
  std::size_t num_classes = 0;
  std::vector<float> probabilities;  // rows x num_classes, original label order
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;
  double elapsed_ms = 0.0;

  /// Ties go to the lowest class index.
  std::vector<std::uint16_t> argmax() const;
};

/// Default ceiling on the estimated working memory of one forward pass.
inline constexpr std::size_t kDefaultMemoryLimit = std::size_t(2) << 30;

/// Bytes one forward pass over n_train context rows and `queries` query rows
/// is expected to need.
std::size_t estimated_forward_bytes(const model::ModelConfig& config, std::size_t n_train, std::size_t queries);

/// Throws CapacityError beyond the model's feature or class limits, and
/// ContractError when a conditioned model has no tuning record.
PredictionResult predict(const model::Checkpoint& checkpoint, const PredictTask& task,
                         const EnsembleConfig& ensemble = {});

/// The same pipeline with no length limit tied to training; only the memory
/// ceiling applies (CapacityError when exceeded).
PredictionResult predict_long(const model::Checkpoint& checkpoint, const PredictTask& task,
                              const EnsembleConfig& ensemble = {}, std::size_t memory_limit = kDefaultMemoryLimit);

}  // namespace tabpfn::infer

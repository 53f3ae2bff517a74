#pragma once

// Gradient-based tuning of the prior hyperparameters psi (and a softmax
// temperature) on validation datasets, through a frozen conditional PFN.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tabpfn/model/transformer.hpp"
#include "tabpfn/prior/dataset.hpp"

namespace tabpfn::tune {

using prior::SyntheticDataset;

struct TuneConfig {
  std::size_t num_draws = 4;
  std::size_t num_steps = 40;
  double lr = 0.05;  // Adam step size in encoded-psi units
  std::size_t patience = 10;  // steps without a V2 improvement before a draw stops
  bool tune_temperature = true;
  std::uint64_t seed = 0;
};

struct TrajectoryPoint {
  std::size_t draw = 0;
  std::size_t step = 0;
  std::vector<float> psi;  // encoded
  float temperature = 1.0f;
  double v1_loss = 0.0;
  double v2_loss = 0.0;

  std::string to_json() const;
};

struct TuningRun {
  std::vector<TrajectoryPoint> trajectory;
  std::vector<std::vector<float>> initial_psi;  // one per draw
  std::vector<float> psi_star;
  float t_star = 1.0f;
  double best_v2_loss = 0.0;
  std::size_t best_draw = 0;
  std::size_t best_step = 0;
  std::size_t clamp_count = 0;  // coordinates projected back into [0, 1]
};

/// Mean held-out CE over `datasets` at temperature t; differentiable in the
/// 1 x P psi tensor and the 1 x 1 temperature tensor.
numerics::Tensor eval_psi(const model::Transformer& model, const numerics::Tensor& psi,
                          const numerics::Tensor& temperature, const std::vector<SyntheticDataset>& datasets);
double eval_psi(const model::Transformer& model, std::span<const float> psi, float temperature,
                const std::vector<SyntheticDataset>& datasets);

/// Runs num_draws Adam descents on V1 from psi ~ p(psi), t = 1; returns the
/// trajectory point with the lowest V2 loss. The checkpoint is not modified.
TuningRun tune(const model::Checkpoint& checkpoint, const std::vector<SyntheticDataset>& v1,
               const std::vector<SyntheticDataset>& v2, const TuneConfig& config);

/// Seeded 60/40 split into (V1, V2).
std::pair<std::vector<SyntheticDataset>, std::vector<SyntheticDataset>> split_validation(
    const std::vector<SyntheticDataset>& datasets, std::uint64_t seed);

}  // namespace tabpfn::tune

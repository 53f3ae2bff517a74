#pragma once

// The three function families of the prior. Each generator returns raw
// features (row-major n x k) and one raw scalar target per row; labels come
// later from labelize().

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tabpfn/prior/hyperparameters.hpp"

namespace tabpfn::prior {

struct RawData {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> x;  // n * k
  std::vector<double> y;  // n
};

// Concrete per-dataset values of the MLP-style hyperparameters.
struct MlpSettings {
  std::size_t layers = 2;
  std::size_t hidden = 4;
  std::size_t causes = 4;
  Activation activation = Activation::tanh;
  double dropout = 0.0;
  bool blockwise_dropout = false;
  double weight_std = 1.0;
  double noise_std = 0.1;
  bool share_noise_mean = false;
  bool y_from_last_layer = true;
  bool blockwise_features = false;
  bool keep_feature_order = false;

  static MlpSettings draw(const PriorHyperparameters& psi, Rng& rng);
};

struct GpSettings {
  double outputscale = 1.0;
  double lengthscale = 1.0;
  double noise = 0.01;  // variance on the diagonal

  static GpSettings draw(const PriorHyperparameters& psi, Rng& rng);
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;
};

struct ScmInstance {
  std::vector<std::size_t> layer_sizes;
  std::vector<Edge> edges;  // sorted by target node
  std::vector<double> noise_mean;
  std::vector<double> noise_std;
  Activation activation = Activation::tanh;
  std::vector<std::size_t> feature_nodes;
  std::size_t label_node = 0;

  std::size_t node_count() const;
  std::size_t layer_of(std::size_t node) const;
  /// Throws ContractError when the layered-DAG or node-choice invariants fail.
  void validate() const;
};

/// Edge mask of a dense out x in weight matrix after dropout, row-major.
/// Blockwise dropout keeps about 1/(1-p) diagonal blocks.
std::vector<std::uint8_t> dropout_mask(std::size_t out, std::size_t in, double p, bool blockwise, Rng& rng);

/// Builds the layered graph. Retries up to `max_retries` times when the label
/// is disconnected from every feature, then throws DegenerateGraphError.
ScmInstance sample_scm(const MlpSettings& settings, std::size_t k, Rng& rng, int max_retries = 16);
ScmInstance sample_scm(const PriorHyperparameters& psi, std::size_t k, Rng& rng);

/// Rows whose values overflow are redrawn up to `max_retries` times.
RawData scm_forward(const ScmInstance& scm, std::size_t n, Rng& rng, int max_retries = 16);

struct BnnInstance {
  std::vector<std::size_t> sizes;  // k, hidden..., 1
  std::vector<std::vector<double>> weights;  // out x in per layer
  std::vector<std::vector<double>> biases;
  std::vector<double> noise_std;  // per layer
  Activation activation = Activation::tanh;
};

BnnInstance sample_bnn(const MlpSettings& settings, std::size_t k, Rng& rng);
RawData bnn_forward(const BnnInstance& net, std::size_t n, Rng& rng, int max_retries = 16);
RawData sample_bnn_dataset(const PriorHyperparameters& psi, std::size_t n, std::size_t k, Rng& rng);

/// Joint draw from N(0, K) with an RBF kernel; throws NumericalError when K
/// stays indefinite after jitter escalation.
RawData sample_gp(const GpSettings& settings, std::size_t n, std::size_t k, Rng& rng);
/// Targets only, at given inputs (row-major n x k).
std::vector<double> sample_gp_targets(const GpSettings& settings, std::span<const double> x, std::size_t n,
                                      std::size_t k, Rng& rng);
RawData sample_gp_dataset(const PriorHyperparameters& psi, std::size_t n, std::size_t k, Rng& rng);

}  // namespace tabpfn::prior

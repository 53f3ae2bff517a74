#pragma once

// A finite hypothesis space whose posterior predictive can be enumerated
// exactly: the reference a PFN trained on its samples should converge to.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tabpfn/model/transformer.hpp"
#include "tabpfn/prior/dataset.hpp"

namespace tabpfn::eval {

struct Hypothesis {
  std::string name;
  /// p(y | x) over classes 0..num_classes-1.
  std::function<std::vector<double>(std::span<const float> x)> likelihood;
};

struct DiscretePrior {
  std::size_t k = 1;
  std::size_t num_classes = 2;
  std::vector<Hypothesis> hypotheses;
  std::vector<double> weights;

  /// Weights non-negative and summing to 1; throws ContractError.
  void validate() const;

  /// {y = sign(x), y = -sign(x)} on one feature with label-flip noise; class
  /// 1 stands for +1.
  static DiscretePrior sign_pair(double flip);
  /// Two features, y = [x_j > 0] or [x_j < 0] for j in {0, 1}, label-flip noise.
  static DiscretePrior four_half_planes(double flip = 0.1);
};

/// Posterior over hypotheses given row-major train rows.
std::vector<double> posterior(const DiscretePrior& prior, std::span<const float> x_train,
                              std::span<const std::uint16_t> y_train);

/// sum_h posterior(h) p(y | x, h). Throws ContractError when the data has zero
/// probability under every hypothesis.
std::vector<double> exact_ppd(const DiscretePrior& prior, std::span<const float> x_train,
                              std::span<const std::uint16_t> y_train, std::span<const float> x);

/// Draws h from the prior, then n in [n_min, n_max] rows with x ~ N(0, I)
/// and y ~ p(y | x, h); the train part has at least one row.
class DiscretePriorSource : public prior::DatasetSource {
 public:
  DiscretePriorSource(DiscretePrior prior, std::size_t n_min, std::size_t n_max);
  prior::SyntheticDataset sample(prior::Rng& rng) const override;
  std::size_t psi_size() const override { return 0; }
  const DiscretePrior& prior() const { return prior_; }

 private:
  DiscretePrior prior_;
  std::size_t n_min_;
  std::size_t n_max_;
};

struct OracleReport {
  std::size_t probes = 0;
  double mean_tv = 0.0;
  double max_tv = 0.0;
  double uniform_tv = 0.0;  // the same probes scored against a uniform prediction
};

/// Mean total-variation distance between the model and exact_ppd over
/// `probes` (D_train, x) pairs drawn from `source`.
OracleReport oracle_check(const model::Transformer& model, const DiscretePriorSource& source, std::size_t probes,
                          std::uint64_t seed);

}  // namespace tabpfn::eval

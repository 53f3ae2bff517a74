#pragma once

// The prior's hyperparameters psi.
//
// Each hyperparameter is described by a MetaDistribution. Drawing psi fixes
// that distribution's underlying parameters (bounds, alpha/beta, mean/std,
// choice weights); every dataset then draws its concrete value (layer count,
// dropout rate, ...) from the distribution psi pins down. The style token sees
// psi as a flat vector in the fixed Hp order below, each underlying parameter
// min-max scaled to [0, 1] over its search-space bounds (log scale where the
// distribution is log-scaled).

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabpfn/prior/random.hpp"

namespace tabpfn::prior {

enum class Hp : std::size_t {
  gp_sampling_weight,  // weight w of the MLP family; P(GP) = 1 / (1 + w)
  weight_dropout,
  sample_scm,  // 1 = SCM, 0 = BNN
  share_noise_mean,
  y_from_last_layer,
  activation,  // index into Activation
  blockwise_dropout,
  keep_feature_order,
  blockwise_features,
  gp_noise,  // noise variance
  mlp_layers,
  mlp_hidden,
  noise_std,
  weight_std,
  scm_causes,
  gp_outputscale,
  gp_lengthscale,
  max_classes,  // N_c ~ U{2..max_classes}
  class_shuffle,  // p_s
  nan_probability,  // P(M)
  nan_fraction,  // f_m
  categorical_fraction,  // p_cat
  categorical_shuffle,  // p_scat
};

inline constexpr std::size_t kHpCount = 23;

std::string_view hp_name(Hp hp);

enum class Activation : int { tanh = 0, relu = 1, elu = 2, identity = 3, threshold = 4 };

double apply_activation(Activation a, double x);

enum class DistKind { uniform, beta, truncated_normal, log_scaled_truncated_normal, choice };

struct ParamBounds {
  double lo = 0.0;
  double hi = 0.0;
  bool log_scale = false;
};

struct MetaDistribution {
  DistKind kind = DistKind::uniform;
  /// uniform: value bounds. beta: bounds of alpha and beta.
  /// truncated normals: min_mean and max_mean.
  double lo = 0.0;
  double hi = 0.0;
  double scale = 1.0;  // beta only
  bool round = false;
  double lower_bound = 0.0;  // added to truncated-normal draws
  std::vector<double> choices;
  std::vector<double> max_weights;  // one per choice after the first

  static MetaDistribution uniform(double lo, double hi, bool round = false);
  static MetaDistribution beta(double min_ab, double max_ab, double scale);
  static MetaDistribution truncated_normal(double min_mean, double max_mean, bool round, double lower_bound);
  static MetaDistribution log_truncated_normal(double min_mean, double max_mean, bool round, double lower_bound);
  static MetaDistribution choice(std::vector<double> choices, std::vector<double> max_weights);
  static MetaDistribution boolean(double max_false_weight = 3.0);
  static MetaDistribution fixed(double value);

  std::size_t param_count() const;
  ParamBounds param_bounds(std::size_t i) const;
  /// Smallest and largest value a dataset-level draw can take.
  std::pair<double, double> support() const;

  std::vector<double> sample_params(Rng& rng) const;
  double sample_value(std::span<const double> params, Rng& rng) const;
};

class HyperparameterSpace {
 public:
  explicit HyperparameterSpace(std::array<MetaDistribution, kHpCount> entries);

  /// Table-style defaults at full scale.
  static HyperparameterSpace paper();
  /// Same structure with smaller graphs for single-core training.
  static HyperparameterSpace desk();
  /// GP-only ablation: outputscale and lengthscale in [0, 10], noise in [0.01, 0.5].
  static HyperparameterSpace gp_ablation();
  /// Linear BNN without noise: linearly separable binary tasks.
  static HyperparameterSpace toy_linear();

  static HyperparameterSpace from_json(std::string_view text);
  std::string to_json() const;

  const MetaDistribution& operator[](Hp hp) const { return entries_[static_cast<std::size_t>(hp)]; }
  /// Replaces one entry and recomputes the psi layout (not validated).
  void set(Hp hp, MetaDistribution d);

  std::size_t encoded_size() const { return encoded_size_; }
  std::size_t offset(Hp hp) const { return offsets_[static_cast<std::size_t>(hp)]; }
  ParamBounds bounds_at(std::size_t flat_index) const;
  /// Encoded dimensions with a non-degenerate search range.
  std::vector<bool> free_dimensions() const;

  /// Throws ConfigError for inverted bounds, invalid kinds or out-of-range
  /// probability/count fields.
  void validate() const;

 private:
  void reindex();

  std::array<MetaDistribution, kHpCount> entries_;
  std::array<std::size_t, kHpCount> offsets_{};
  std::size_t encoded_size_ = 0;
};

using SpacePtr = std::shared_ptr<const HyperparameterSpace>;

class PriorHyperparameters {
 public:
  PriorHyperparameters(SpacePtr space, std::vector<double> params);

  const HyperparameterSpace& space() const { return *space_; }
  const SpacePtr& space_ptr() const { return space_; }
  std::span<const double> params() const { return params_; }
  std::span<const double> params(Hp hp) const;
  void set_params(Hp hp, std::span<const double> values);

  /// A fresh dataset-level draw of hyperparameter `hp`.
  double draw(Hp hp, Rng& rng) const;

  std::vector<float> encode() const;
  static PriorHyperparameters decode(SpacePtr space, std::span<const float> encoded);

 private:
  SpacePtr space_;
  std::vector<double> params_;
};

PriorHyperparameters sample_hyperparameters(SpacePtr space, Rng& rng);

}  // namespace tabpfn::prior

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tabpfn/numerics/tensor.hpp"

namespace tabpfn::numerics {

struct AdamOptions {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  /// Global gradient-norm ceiling; <= 0 disables clipping.
  float clip_norm = 0.0f;
};

struct AdamState {
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
  std::size_t step = 0;
  std::size_t skipped_steps = 0;
};

AdamState make_adam_state(std::span<const Tensor> params);

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient (a missing gradient counts as zero). Returns false, leaving
/// parameters and moments untouched, when any gradient is non-finite.
bool adam_step(std::span<Tensor> params, AdamState& state, float lr, const AdamOptions& options = {});

/// L2 norm of all gradients taken together.
double global_grad_norm(std::span<const Tensor> params);

}  // namespace tabpfn::numerics

#include "tabpfn/numerics/adam.hpp"

#include <cmath>

#include "tabpfn/errors.hpp"

namespace tabpfn::numerics {

AdamState make_adam_state(std::span<const Tensor> params) {
  AdamState state;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.size(), 0.0f);
    state.second_moment.emplace_back(p.size(), 0.0f);
  }
  return state;
}

double global_grad_norm(std::span<const Tensor> params) {
  double total = 0.0;
  for (const Tensor& p : params)
    for (float g : p.grad()) total += double(g) * g;
  return std::sqrt(total);
}

bool adam_step(std::span<Tensor> params, AdamState& state, float lr, const AdamOptions& options) {
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.first_moment.size()) + " tensors, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].size()) {
      throw ContractError("adam_step: state shape differs for parameter " + std::to_string(i));
    }
  }
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) {
    ++state.skipped_steps;
    return false;
  }
  const double clip = (options.clip_norm > 0.0f && norm > options.clip_norm) ? options.clip_norm / norm : 1.0;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(double(options.beta1), t);
  const double c2 = 1.0 - std::pow(double(options.beta2), t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_data();
    auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j] * clip;
      m[j] = static_cast<float>(options.beta1 * m[j] + (1.0 - options.beta1) * g);
      v[j] = static_cast<float>(options.beta2 * v[j] + (1.0 - options.beta2) * g * g);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      value[j] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + options.eps));
    }
  }
  return true;
}

}  // namespace tabpfn::numerics

#include "tabpfn/tune/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "tabpfn/errors.hpp"
#include "tabpfn/numerics/adam.hpp"
#include "tabpfn/numerics/ops.hpp"

namespace tabpfn::tune {

namespace ops = numerics;
using numerics::Tensor;

namespace {

Tensor dataset_loss(const model::Transformer& m, const Tensor& psi, const Tensor& temperature,
                    const SyntheticDataset& ds) {
  auto batch = model::tokenize(model::view_of(ds), psi.defined() ? psi.data() : std::span<const float>{}, m.config());
  if (psi.defined()) batch.psi = psi;
  const auto targets = std::span<const std::uint16_t>(ds.y).subspan(ds.split_point);
  return model::loss_with_temperature(m.forward(batch), targets, ds.num_classes, temperature);
}

void require_datasets(const std::vector<SyntheticDataset>& d, const char* name) {
  if (d.empty()) throw ContractError(std::string("tune: ") + name + " is empty");
}

}  // namespace

std::string TrajectoryPoint::to_json() const {
  nlohmann::ordered_json j;
  j["draw"] = draw;
  j["step"] = step;
  j["psi"] = psi;
  j["temperature"] = temperature;
  j["v1_loss"] = v1_loss;
  j["v2_loss"] = v2_loss;
  return j.dump();
}

Tensor eval_psi(const model::Transformer& model, const Tensor& psi, const Tensor& temperature,
                const std::vector<SyntheticDataset>& datasets) {
  require_datasets(datasets, "dataset list");
  Tensor total;
  for (const auto& ds : datasets) {
    const Tensor l = dataset_loss(model, psi, temperature, ds);
    total = total.defined() ? ops::add(total, l) : l;
  }
  return ops::scale(total, 1.0f / float(datasets.size()));
}

double eval_psi(const model::Transformer& model, std::span<const float> psi, float temperature,
                const std::vector<SyntheticDataset>& datasets) {
  require_datasets(datasets, "dataset list");
  numerics::NoGradGuard guard;
  const Tensor p = psi.empty() ? Tensor() : Tensor::from({1, psi.size()}, {psi.begin(), psi.end()});
  const Tensor t = Tensor::full({1, 1}, temperature);
  double total = 0.0;
  for (const auto& ds : datasets) total += dataset_loss(model, p, t, ds).item();
  return total / double(datasets.size());
}

TuningRun tune(const model::Checkpoint& checkpoint, const std::vector<SyntheticDataset>& v1,
               const std::vector<SyntheticDataset>& v2, const TuneConfig& config) {
  require_datasets(v1, "V1");
  require_datasets(v2, "V2");
  const std::size_t p = checkpoint.model.config().psi_size;
  if (p == 0) throw ContractError("tune: the model was trained without style tokens");
  if (checkpoint.space_json.empty()) throw ContractError("tune: checkpoint carries no hyperparameter space");
  if (config.num_draws == 0) throw ContractError("tune: num_draws must be positive");
  const auto space = std::make_shared<const prior::HyperparameterSpace>(
      prior::HyperparameterSpace::from_json(checkpoint.space_json));
  if (space->encoded_size() != p) throw ContractError("tune: space and model disagree on the psi length");
  const std::vector<bool> free = space->free_dimensions();

  // A private copy without gradients: the caller's parameters are never
  // touched, and backward stops at psi and tau.
  model::Transformer frozen = checkpoint.model.clone();
  frozen.set_requires_grad(false);

  TuningRun run;
  run.best_v2_loss = std::numeric_limits<double>::infinity();
  const float inv_v1 = 1.0f / float(v1.size());

  for (std::size_t d = 0; d < config.num_draws; ++d) {
    prior::Rng rng(prior::derive_seed(config.seed, d));
    const auto init = prior::sample_hyperparameters(space, rng).encode();
    run.initial_psi.push_back(init);
    Tensor psi = Tensor::from({1, p}, init, true);
    Tensor tau = Tensor::zeros({1, 1}, true);
    std::vector<Tensor> params{psi, tau};
    auto state = numerics::make_adam_state(params);
    double draw_best = std::numeric_limits<double>::infinity();
    std::size_t since_improvement = 0;

    for (std::size_t step = 0;; ++step) {
      const float t = static_cast<float>(std::exp(double(tau.item())));
      TrajectoryPoint point{d, step, {psi.data().begin(), psi.data().end()}, t, 0.0, 0.0};
      point.v2_loss = eval_psi(frozen, point.psi, t, v2);

      const bool last = step == config.num_steps;
      psi.zero_grad();
      tau.zero_grad();
      double v1_total = 0.0;
      for (const auto& ds : v1) {
        const Tensor l = dataset_loss(frozen, psi, ops::exp(tau), ds);
        v1_total += l.item();
        if (!last) numerics::backward(ops::scale(l, inv_v1));
      }
      point.v1_loss = v1_total / double(v1.size());
      run.trajectory.push_back(point);

      if (point.v2_loss < run.best_v2_loss) {
        run.best_v2_loss = point.v2_loss;
        run.psi_star = point.psi;
        run.t_star = point.temperature;
        run.best_draw = d;
        run.best_step = step;
      }
      if (point.v2_loss < draw_best) {
        draw_best = point.v2_loss;
        since_improvement = 0;
      } else if (++since_improvement >= config.patience) {
        break;
      }
      if (last) break;

      auto g = psi.mutable_grad();
      for (std::size_t i = 0; i < p && !g.empty(); ++i)
        if (!free[i]) g[i] = 0.0f;
      if (!config.tune_temperature) tau.zero_grad();
      if (!numerics::adam_step(params, state, static_cast<float>(config.lr))) {
        throw NumericalError("tune: non-finite gradient in draw " + std::to_string(d) + " at step " +
                             std::to_string(step));
      }
      for (float& v : psi.mutable_data()) {
        if (v < 0.0f || v > 1.0f) {
          v = std::clamp(v, 0.0f, 1.0f);
          ++run.clamp_count;
        }
      }
    }
  }
  return run;
}

std::pair<std::vector<SyntheticDataset>, std::vector<SyntheticDataset>> split_validation(
    const std::vector<SyntheticDataset>& datasets, std::uint64_t seed) {
  if (datasets.size() < 2) throw ContractError("split_validation: need at least two datasets");
  prior::Rng rng(seed);
  const auto order = prior::permutation(rng, datasets.size());
  const auto n1 = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(0.6 * double(datasets.size()))), 1,
                                          datasets.size() - 1);
  std::pair<std::vector<SyntheticDataset>, std::vector<SyntheticDataset>> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n1 ? out.first : out.second).push_back(datasets[order[i]]);
  return out;
}

}  // namespace tabpfn::tune

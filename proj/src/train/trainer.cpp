#include "tabpfn/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "tabpfn/errors.hpp"
#include "tabpfn/numerics/adam.hpp"
#include "tabpfn/numerics/ops.hpp"

namespace tabpfn::train {

namespace {

using prior::SyntheticDataset;

constexpr double kEmaWeight = 0.05;

std::span<const std::uint16_t> held_out_labels(const SyntheticDataset& ds) {
  return std::span<const std::uint16_t>(ds.y).subspan(ds.split_point);
}

numerics::Tensor dataset_loss(const model::Transformer& m, const SyntheticDataset& ds) {
  const auto batch = model::tokenize(model::view_of(ds), ds.psi, m.config());
  return model::loss(m.forward(batch), held_out_labels(ds), ds.num_classes);
}

// Every dataset has its own seed, so the batch is the same whichever worker
// draws it.
std::vector<SyntheticDataset> sample_batch(const prior::DatasetSource& source, std::uint64_t seed, std::size_t step,
                                           std::size_t batch_size, std::size_t workers) {
  std::vector<SyntheticDataset> out(batch_size);
  const std::uint64_t step_seed = prior::derive_seed(seed, 1 + step);
  auto draw = [&](std::size_t first, std::size_t stride) {
    for (std::size_t b = first; b < batch_size; b += stride) {
      prior::Rng rng(prior::derive_seed(step_seed, b));
      out[b] = source.sample(rng);
    }
  };
  if (workers <= 1 || batch_size == 1) {
    draw(0, 1);
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        draw(w, workers);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace

prior::SpacePtr load_space(const std::string& name) {
  using prior::HyperparameterSpace;
  if (name == "paper") return std::make_shared<const HyperparameterSpace>(HyperparameterSpace::paper());
  if (name == "desk") return std::make_shared<const HyperparameterSpace>(HyperparameterSpace::desk());
  if (name == "gp_ablation") return std::make_shared<const HyperparameterSpace>(HyperparameterSpace::gp_ablation());
  if (name == "toy_linear") return std::make_shared<const HyperparameterSpace>(HyperparameterSpace::toy_linear());
  std::ifstream in(name);
  if (!in) throw ConfigError("prior '" + name + "' is neither a built-in space nor a readable file");
  std::stringstream ss;
  ss << in.rdbuf();
  auto space = std::make_shared<const HyperparameterSpace>(HyperparameterSpace::from_json(ss.str()));
  space->validate();
  return space;
}

std::unique_ptr<prior::PriorSource> make_source(const TrainingConfig& config) {
  prior::PriorConfig pc;
  pc.use_gp = config.use_gp;
  pc.use_scm = config.use_scm;
  pc.use_bnn = config.use_bnn;
  pc.median_split = config.median_split;
  return std::make_unique<prior::PriorSource>(load_space(config.prior), pc, config.n, config.k_min, config.k_max,
                                              config.conditional);
}

std::string LogRecord::to_json(bool with_time) const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss"] = std::isfinite(loss) ? nlohmann::ordered_json(loss) : nlohmann::ordered_json(nullptr);
  j["lr"] = lr;
  if (with_time) j["elapsed_ms"] = std::llround(elapsed_ms);
  if (eval_loss) j["eval_loss"] = *eval_loss;
  return j.dump();
}

double scheduled_lr(const TrainingConfig& config, std::size_t step) {
  const double total = double(config.steps);
  const double warm = std::ceil(config.warmup_fraction * total);
  const double s = double(step);
  if (s < warm) return config.lr * (s + 1.0) / warm;
  const double span = std::max(1.0, total - warm);
  const double progress = std::min(1.0, (s - warm) / span);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double evaluate(const model::Transformer& model, const std::vector<SyntheticDataset>& datasets) {
  if (datasets.empty()) throw ContractError("evaluate: no datasets");
  numerics::NoGradGuard guard;
  double total = 0.0;
  for (const auto& ds : datasets) total += dataset_loss(model, ds).item();
  return total / double(datasets.size());
}

std::vector<SyntheticDataset> frozen_stream(const TrainingConfig& config, const prior::DatasetSource& source) {
  std::vector<SyntheticDataset> out;
  for (std::size_t i = 0; i < config.eval_datasets; ++i) {
    prior::Rng rng(prior::derive_seed(config.eval_seed, i));
    out.push_back(source.sample(rng));
  }
  return out;
}

TrainingResult meta_train(const TrainingConfig& config, const prior::DatasetSource& source, std::uint64_t seed,
                          std::optional<model::Checkpoint> init, const TrainHooks& hooks) {
  config.validate();
  TrainingResult result{init ? model::Checkpoint{init->model.clone(), init->space_json, init->tuning}
                             : model::Checkpoint{model::Transformer(config.model, prior::derive_seed(seed, 0)), {}, {}},
                        {}, std::numeric_limits<double>::quiet_NaN(), {}, {}, 0};
  model::Transformer& m = result.checkpoint.model;
  if (m.config().psi_size != source.psi_size()) {
    throw ContractError("meta_train: model expects psi of length " + std::to_string(m.config().psi_size) +
                        ", source provides " + std::to_string(source.psi_size()));
  }
  if (config.steps == 0) return result;

  std::vector<SyntheticDataset> eval_sets;
  if (config.eval_every > 0 && config.eval_datasets > 0) {
    eval_sets = frozen_stream(config, source);
    result.initial_eval_loss = evaluate(m, eval_sets);
  }
  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path);
    if (!log) throw ConfigError("cannot open log " + config.log_path.string());
  }

  m.set_requires_grad(true);
  auto params = m.parameters();
  auto state = numerics::make_adam_state(params);
  numerics::AdamOptions adam;
  adam.clip_norm = static_cast<float>(config.clip_norm);
  const auto start = std::chrono::steady_clock::now();
  std::size_t consecutive_bad = 0;
  double ema = std::numeric_limits<double>::quiet_NaN();
  const float inv_batch = 1.0f / float(config.batch_size);

  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = sample_batch(source, seed, step, config.batch_size, config.workers);
    for (auto& p : params) p.zero_grad();
    const double lr = scheduled_lr(config, step);

    double total = 0.0;
    bool bad = false;
    std::string reason;
    try {
      for (const auto& ds : batch) {
        const auto l = dataset_loss(m, ds);
        const double v = l.item();
        if (!std::isfinite(v)) {
          bad = true;
          reason = "non-finite loss";
          break;
        }
        numerics::backward(numerics::scale(l, inv_batch));
        total += v;
      }
    } catch (const NumericalError& e) {
      bad = true;
      reason = e.what();
    }
    if (!bad && !numerics::adam_step(params, state, static_cast<float>(lr), adam)) {
      bad = true;
      reason = "non-finite gradient";
    }

    LogRecord rec;
    rec.step = step + 1;
    rec.lr = lr;
    if (bad) {
      rec.loss = std::numeric_limits<double>::quiet_NaN();
      ++result.skipped_steps;
      if (++consecutive_bad >= config.nan_patience) {
        throw NumericalError("training aborted at step " + std::to_string(step + 1) + ": " +
                             std::to_string(consecutive_bad) + " consecutive non-finite steps (last: " + reason +
                             ", lr " + std::to_string(lr) + ")");
      }
    } else {
      consecutive_bad = 0;
      rec.loss = total / double(config.batch_size);
      ema = std::isnan(ema) ? rec.loss : (1.0 - kEmaWeight) * ema + kEmaWeight * rec.loss;
    }
    if (!eval_sets.empty() && ((step + 1) % config.eval_every == 0 || step + 1 == config.steps)) {
      rec.eval_loss = evaluate(m, eval_sets);
      result.final_eval_loss = rec.eval_loss;
    }
    rec.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (log) log << rec.to_json(!hooks.deterministic_log) << '\n' << std::flush;
    if (hooks.on_step) hooks.on_step(rec);
    result.log.push_back(rec);

    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() && (step + 1) % config.checkpoint_every == 0) {
      auto path = config.checkpoint_path;
      path += ".step" + std::to_string(step + 1);
      model::save_checkpoint(path, result.checkpoint);
    }
  }
  result.smoothed_loss = ema;
  return result;
}

LrSelection learning_rate_selection(const std::vector<double>& candidates, const TrainingConfig& config,
                                    const prior::DatasetSource& source, std::uint64_t seed) {
  if (candidates.empty()) throw ContractError("learning_rate_selection: no candidates");
  LrSelection out;
  if (candidates.size() == 1) {
    out.lr = candidates.front();
    return out;
  }
  TrainingConfig pilot = config;
  pilot.steps = config.pilot_steps;
  pilot.eval_every = 0;
  pilot.checkpoint_every = 0;
  pilot.log_path.clear();
  double best = std::numeric_limits<double>::infinity();
  for (double lr : candidates) {
    pilot.lr = lr;
    std::optional<double> smoothed;
    try {
      const auto r = meta_train(pilot, source, seed);
      if (std::isfinite(r.smoothed_loss)) smoothed = r.smoothed_loss;
    } catch (const NumericalError& e) {
      std::cerr << "pilot at lr " << lr << " diverged: " << e.what() << '\n';
    }
    out.pilots.emplace_back(lr, smoothed);
    if (smoothed && *smoothed < best) {
      best = *smoothed;
      out.lr = lr;
    }
  }
  if (!std::isfinite(best)) throw NumericalError("learning_rate_selection: every pilot run diverged");
  return out;
}

}  // namespace tabpfn::train

#include "tabpfn/infer/predict.hpp"

#include <chrono>
#include <numeric>
#include <optional>

#include "tabpfn/errors.hpp"
#include "tabpfn/prior/random.hpp"

namespace tabpfn::infer {

std::vector<std::uint16_t> PredictionResult::argmax() const {
  std::vector<std::uint16_t> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* p = probabilities.data() + r * num_classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (p[c] > p[best]) best = c;
    out[r] = static_cast<std::uint16_t>(best);
  }
  return out;
}

std::size_t estimated_forward_bytes(const model::ModelConfig& c, std::size_t n_train, std::size_t queries) {
  const std::size_t s = n_train + queries + 1;
  // attention scores and weights per head, plus the widest per-token activations
  const std::size_t attention = 2 * c.heads * s * s;
  const std::size_t tokens = s * (c.input_size() + 8 * c.embedding + 2 * c.hidden);
  return (attention + tokens) * sizeof(float);
}

PredictionResult predict(const model::Checkpoint& checkpoint, const PredictTask& task, const EnsembleConfig& ensemble) {
  return predict_long(checkpoint, task, ensemble, kDefaultMemoryLimit);
}

PredictionResult predict_long(const model::Checkpoint& checkpoint, const PredictTask& task,
                              const EnsembleConfig& ensemble, std::size_t memory_limit) {
  const auto start = std::chrono::steady_clock::now();
  task.validate();
  const model::Transformer& m = checkpoint.model;
  const model::ModelConfig& config = m.config();
  const std::size_t nc = task.num_classes();
  if (ensemble.members == 0) throw ContractError("predict: ensemble needs at least one member");
  if (ensemble.variants.empty()) throw ContractError("predict: no preprocessing variants");
  if (ensemble.query_chunk == 0) throw ContractError("predict: query_chunk must be positive");
  if (nc > config.max_classes) {
    throw CapacityError(std::to_string(nc) + " classes exceed the model limit of " + std::to_string(config.max_classes));
  }
  if (task.k > config.max_features) {
    throw CapacityError(std::to_string(task.k) + " features exceed the model limit of " +
                        std::to_string(config.max_features));
  }
  std::vector<float> psi;
  if (config.psi_size > 0) {
    if (!checkpoint.tuning) throw ContractError("predict: conditioned model has no tuned psi; run tune first");
    psi = checkpoint.tuning->psi;
  }
  const float temperature = checkpoint.tuning ? checkpoint.tuning->temperature : 1.0f;
  const std::size_t chunk = std::min(ensemble.query_chunk, std::max<std::size_t>(task.n_test, 1));
  const std::size_t need = estimated_forward_bytes(config, task.n_train, chunk);
  if (need > memory_limit) {
    throw CapacityError("forward pass over " + std::to_string(task.n_train) + " train rows needs about " +
                        std::to_string(need >> 20) + " MiB, above the " + std::to_string(memory_limit >> 20) +
                        " MiB ceiling (attention is quadratic in the row count)");
  }

  PredictionResult result;
  result.rows = task.n_test;
  result.num_classes = nc;
  result.class_names = task.class_names;
  result.probabilities.assign(task.n_test * nc, 0.0f);
  std::vector<double> sum(task.n_test * nc, 0.0);

  std::vector<std::size_t> appearance(nc, nc);
  std::size_t seen = 0;
  for (auto y : task.y_train)
    if (appearance[y] == nc) appearance[y] = seen++;
  for (auto& a : appearance)
    if (a == nc) a = seen++;

  std::vector<std::optional<Preprocessed>> cache(3);
  numerics::NoGradGuard guard;
  for (std::size_t member = 0; member < ensemble.members; ++member) {
    prior::Rng rng(prior::derive_seed(ensemble.seed, member));
    const Preprocessing variant = ensemble.variants[member % ensemble.variants.size()];
    auto& slot = cache[static_cast<std::size_t>(variant)];
    if (!slot) {
      slot = preprocess(task, variant);
      if (result.warnings.empty()) result.warnings = slot->warnings;
    }
    const PredictTask& t = slot->task;
    const std::size_t k = t.k;

    std::vector<std::size_t> fperm(k);
    std::iota(fperm.begin(), fperm.end(), std::size_t{0});
    if (ensemble.permute_features) fperm = prior::permutation(rng, k);
    std::vector<std::size_t> lperm(nc);  // class c is shown to the model as lperm[c]
    std::iota(lperm.begin(), lperm.end(), std::size_t{0});
    if (ensemble.permute_labels) {
      // Permute relative to first-appearance order, so renaming the classes
      // cannot change what the model sees.
      const auto draw = prior::permutation(rng, nc);
      for (std::size_t c = 0; c < nc; ++c) lperm[c] = draw[appearance[c]];
    }

    auto permute_rows = [&](const std::vector<float>& x, const std::vector<std::uint8_t>& mask, std::size_t first,
                            std::size_t count, std::vector<float>& xo, std::vector<std::uint8_t>& mo) {
      for (std::size_t r = first; r < first + count; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          xo.push_back(x[r * k + fperm[j]]);
          mo.push_back(mask[r * k + fperm[j]]);
        }
      }
    };
    std::vector<float> train_x;
    std::vector<std::uint8_t> train_mask;
    permute_rows(t.x_train, t.mask_train, 0, t.n_train, train_x, train_mask);
    std::vector<std::uint16_t> labels(t.n_train);
    for (std::size_t r = 0; r < t.n_train; ++r) labels[r] = static_cast<std::uint16_t>(lperm[t.y_train[r]]);

    for (std::size_t first = 0; first < t.n_test; first += chunk) {
      const std::size_t count = std::min(chunk, t.n_test - first);
      std::vector<float> x = train_x;
      std::vector<std::uint8_t> mask = train_mask;
      permute_rows(t.x_test, t.mask_test, first, count, x, mask);
      model::TaskView view{t.n_train, count, k, nc, x, mask, labels};
      const auto logits = m.forward(model::tokenize(view, psi, config));
      const auto probs = model::apply_temperature(logits, temperature, nc);
      const std::size_t width = probs.size() / count;
      for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < nc; ++c) sum[(first + r) * nc + c] += probs[r * width + lperm[c]];
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) result.probabilities[i] = static_cast<float>(sum[i] / double(ensemble.members));
  result.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace tabpfn::infer

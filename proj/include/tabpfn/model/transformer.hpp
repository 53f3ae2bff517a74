#pragma once

// The PFN: every training row and every query row becomes one token, an
// optional leading style token carries psi, and a masked transformer encoder
// maps each query token to C_max class logits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabpfn/numerics/tensor.hpp"

namespace tabpfn::prior {
struct SyntheticDataset;
}

namespace tabpfn::model {

using numerics::Tensor;

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t embedding = 128;
  std::size_t hidden = 256;
  std::size_t heads = 4;
  std::size_t max_features = 100;
  std::size_t max_classes = 10;
  std::size_t max_train_length = 256;
  std::size_t psi_size = 0;  // 0: no style token

  static ModelConfig desk(std::size_t psi_size = 0);
  static ModelConfig paper(std::size_t psi_size = 0);

  /// Per-token input width: features, missing mask, one-hot label.
  std::size_t input_size() const { return 2 * max_features + max_classes; }
  void validate() const;
};

/// Train rows first, then query rows; row-major features.
struct TaskView {
  std::size_t n_train = 0;
  std::size_t n_query = 0;
  std::size_t k = 0;
  std::size_t num_classes = 0;
  std::span<const float> x;
  std::span<const std::uint8_t> mask;  // may be empty
  std::span<const std::uint16_t> y_train;
};

TaskView view_of(const prior::SyntheticDataset& ds);

struct TokenizedBatch {
  Tensor tokens;  // (n_train + n_query) x input_size
  Tensor psi;  // 1 x psi_size, undefined without a style token
  std::size_t n_train = 0;
  std::size_t n_query = 0;
  std::size_t num_classes = 0;

  bool has_style() const { return psi.defined(); }
  std::size_t sequence_length() const { return n_train + n_query + (has_style() ? 1 : 0); }
};

/// Throws CapacityError when k or the class count exceed the config limits.
TokenizedBatch tokenize(const TaskView& task, std::span<const float> psi, const ModelConfig& config);

/// Row-major S x S, 1 where attention is blocked. Position order: style,
/// train rows, query rows.
std::vector<std::uint8_t> build_attention_mask(std::size_t n_train, std::size_t n_query, bool has_style);

struct Layer {
  Tensor norm1_gain, norm1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor norm2_gain, norm2_bias;
  Tensor w1, b1, w2, b2;
};

class Transformer {
 public:
  explicit Transformer(const ModelConfig& config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  /// Every trainable tensor in a fixed order.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  /// n_query x max_classes logits.
  Tensor forward(const TokenizedBatch& batch) const;

  void set_requires_grad(bool flag);

  /// Deep copy; copies share no parameter storage.
  Transformer clone() const;

 private:
  ModelConfig config_;
  Tensor input_w_, input_b_;
  Tensor style_w_, style_b_;
  std::vector<Layer> layers_;
  Tensor final_gain_, final_bias_;
  Tensor head_w_, head_b_;
};

/// Mean cross-entropy over query rows with classes >= num_classes masked out.
Tensor loss(const Tensor& logits, std::span<const std::uint16_t> targets, std::size_t num_classes);
/// Same, with logits divided by a 1x1 temperature tensor first.
Tensor loss_with_temperature(const Tensor& logits, std::span<const std::uint16_t> targets, std::size_t num_classes,
                             const Tensor& temperature);

/// Row-wise softmax(logits / t) over the first num_classes columns; later
/// columns get probability 0.
Tensor apply_temperature(const Tensor& logits, const Tensor& temperature, std::size_t num_classes);
std::vector<float> apply_temperature(const Tensor& logits, float temperature, std::size_t num_classes);

struct TuningRecord {
  std::vector<float> psi;  // encoded
  float temperature = 1.0f;
};

struct Checkpoint {
  Transformer model;
  std::string space_json;  // empty for unconditioned models
  std::optional<TuningRecord> tuning;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tabpfn::model

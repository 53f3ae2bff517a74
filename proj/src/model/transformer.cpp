#include "tabpfn/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tabpfn/errors.hpp"
#include "tabpfn/numerics/ops.hpp"
#include "tabpfn/prior/dataset.hpp"

namespace tabpfn::model {

namespace ops = numerics;

ModelConfig ModelConfig::desk(std::size_t psi_size) {
  ModelConfig c;
  c.psi_size = psi_size;
  return c;
}

ModelConfig ModelConfig::paper(std::size_t psi_size) {
  ModelConfig c;
  c.layers = 12;
  c.embedding = 512;
  c.hidden = 1024;
  c.heads = 4;
  c.max_train_length = 1024;
  c.psi_size = psi_size;
  return c;
}

void ModelConfig::validate() const {
  if (layers == 0 || embedding == 0 || hidden == 0 || heads == 0) throw ConfigError("model: zero-sized dimension");
  if (embedding % heads != 0) {
    throw ConfigError("model: embedding " + std::to_string(embedding) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (max_features == 0 || max_classes < 2) throw ConfigError("model: invalid feature/class limits");
}

TaskView view_of(const prior::SyntheticDataset& ds) {
  TaskView v;
  v.n_train = ds.split_point;
  v.n_query = ds.n - ds.split_point;
  v.k = ds.k;
  v.num_classes = ds.num_classes;
  v.x = ds.x;
  v.mask = ds.mask;
  v.y_train = std::span<const std::uint16_t>(ds.y).first(ds.split_point);
  return v;
}

TokenizedBatch tokenize(const TaskView& task, std::span<const float> psi, const ModelConfig& config) {
  const std::size_t fmax = config.max_features;
  const std::size_t cmax = config.max_classes;
  if (task.k > fmax) {
    throw CapacityError(std::to_string(task.k) + " features exceed the model limit of " + std::to_string(fmax));
  }
  if (task.num_classes > cmax) {
    throw CapacityError(std::to_string(task.num_classes) + " classes exceed the model limit of " + std::to_string(cmax));
  }
  if (task.k == 0) throw ContractError("tokenize: no features");
  const std::size_t rows = task.n_train + task.n_query;
  if (task.x.size() != rows * task.k) throw ContractError("tokenize: feature buffer does not match row count");
  if (!task.mask.empty() && task.mask.size() != rows * task.k) throw ContractError("tokenize: mask size mismatch");
  if (task.y_train.size() != task.n_train) throw ContractError("tokenize: label count does not match train rows");
  if (config.psi_size != psi.size()) {
    throw ContractError("tokenize: psi of length " + std::to_string(psi.size()) + ", model expects " +
                        std::to_string(config.psi_size));
  }

  const std::size_t width = config.input_size();
  const float rescale = float(fmax) / float(task.k);
  std::vector<float> tokens(rows * width, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) {
    float* t = tokens.data() + r * width;
    for (std::size_t c = 0; c < task.k; ++c) {
      const bool missing = !task.mask.empty() && task.mask[r * task.k + c];
      t[c] = missing ? 0.0f : task.x[r * task.k + c] * rescale;
      t[fmax + c] = missing ? 1.0f : 0.0f;
    }
    if (r < task.n_train) {
      const auto y = task.y_train[r];
      if (y >= task.num_classes) throw ContractError("tokenize: train label " + std::to_string(y) + " out of range");
      t[2 * fmax + y] = 1.0f;
    }
  }
  TokenizedBatch batch;
  batch.tokens = Tensor::from({rows, width}, std::move(tokens));
  if (!psi.empty()) batch.psi = Tensor::from({1, psi.size()}, std::vector<float>(psi.begin(), psi.end()));
  batch.n_train = task.n_train;
  batch.n_query = task.n_query;
  batch.num_classes = task.num_classes;
  return batch;
}

std::vector<std::uint8_t> build_attention_mask(std::size_t n_train, std::size_t n_query, bool has_style) {
  if (n_train == 0) throw ContractError("attention mask: need at least one train row");
  const std::size_t offset = has_style ? 1 : 0;
  const std::size_t s = offset + n_train + n_query;
  std::vector<std::uint8_t> blocked(s * s, 1);
  const std::size_t context = offset + n_train;  // style and train positions
  for (std::size_t i = 0; i < s; ++i) {
    // Every position sees the style token and all train rows...
    for (std::size_t j = 0; j < context; ++j) blocked[i * s + j] = 0;
    // ...and itself; queries see no other query.
    blocked[i * s + i] = 0;
  }
  return blocked;
}

namespace {

Tensor init_normal(std::size_t rows, std::size_t cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, std);
  std::vector<float> v(rows * cols);
  for (float& x : v) x = static_cast<float>(std > 0.0 ? d(rng) : 0.0);
  return Tensor::from({rows, cols}, std::move(v), true);
}

Tensor zeros_param(std::size_t rows, std::size_t cols) { return Tensor::zeros({rows, cols}, true); }
Tensor ones_param(std::size_t cols) { return Tensor::full({1, cols}, 1.0f, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ops::add_row(ops::matmul(x, w), b); }

void check_finite(const Tensor& t, std::size_t layer) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericalError("non-finite activations after layer " + std::to_string(layer));
  }
}

}  // namespace

Transformer::Transformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.embedding;
  const std::size_t f = config_.max_features;
  const std::size_t c = config_.max_classes;

  // Feature inputs arrive scaled by F_max / k, so their rows start small.
  input_w_ = init_normal(config_.input_size(), d, 1.0, rng);
  {
    auto w = input_w_.mutable_data();
    for (std::size_t r = 0; r < config_.input_size(); ++r) {
      const double scale = r < f ? 1.0 / double(f) : (r < 2 * f ? 1.0 / std::sqrt(double(f)) : 1.0 / std::sqrt(double(c)));
      for (std::size_t j = 0; j < d; ++j) w[r * d + j] = static_cast<float>(w[r * d + j] * scale);
    }
  }
  input_b_ = zeros_param(1, d);
  if (config_.psi_size > 0) {
    style_w_ = init_normal(config_.psi_size, d, 1.0 / std::sqrt(double(config_.psi_size)), rng);
    style_b_ = zeros_param(1, d);
  }
  const double proj = 1.0 / std::sqrt(double(d));
  const double residual = proj / std::sqrt(2.0 * double(config_.layers));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.norm1_gain = ones_param(d);
    layer.norm1_bias = zeros_param(1, d);
    layer.wq = init_normal(d, d, proj, rng);
    layer.bq = zeros_param(1, d);
    layer.wk = init_normal(d, d, proj, rng);
    layer.bk = zeros_param(1, d);
    layer.wv = init_normal(d, d, proj, rng);
    layer.bv = zeros_param(1, d);
    layer.wo = init_normal(d, d, residual, rng);
    layer.bo = zeros_param(1, d);
    layer.norm2_gain = ones_param(d);
    layer.norm2_bias = zeros_param(1, d);
    layer.w1 = init_normal(d, config_.hidden, proj, rng);
    layer.b1 = zeros_param(1, config_.hidden);
    layer.w2 = init_normal(config_.hidden, d, 1.0 / std::sqrt(double(config_.hidden) * 2.0 * double(config_.layers)), rng);
    layer.b2 = zeros_param(1, d);
    layers_.push_back(std::move(layer));
  }
  final_gain_ = ones_param(d);
  final_bias_ = zeros_param(1, d);
  head_w_ = zeros_param(d, c);
  head_b_ = zeros_param(1, c);
}

std::vector<Tensor> Transformer::parameters() const {
  std::vector<Tensor> p{input_w_, input_b_};
  if (style_w_.defined()) {
    p.push_back(style_w_);
    p.push_back(style_b_);
  }
  for (const Layer& l : layers_) {
    for (const Tensor& t : {l.norm1_gain, l.norm1_bias, l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.norm2_gain,
                            l.norm2_bias, l.w1, l.b1, l.w2, l.b2})
      p.push_back(t);
  }
  for (const Tensor& t : {final_gain_, final_bias_, head_w_, head_b_}) p.push_back(t);
  return p;
}

std::size_t Transformer::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.size();
  return n;
}

void Transformer::set_requires_grad(bool flag) {
  for (Tensor& t : parameters()) t.set_requires_grad(flag);
}

Transformer Transformer::clone() const {
  Transformer copy(config_, 0);
  const auto src = parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
    dst[i].set_requires_grad(src[i].requires_grad());
  }
  return copy;
}

Tensor Transformer::forward(const TokenizedBatch& batch) const {
  if (batch.tokens.cols() != config_.input_size()) throw ContractError("forward: token width does not match the model");
  if (batch.has_style() != (config_.psi_size > 0)) {
    throw ContractError(batch.has_style() ? "forward: style token given to an unconditioned model"
                                          : "forward: conditioned model needs a style token");
  }
  const std::size_t d = config_.embedding;
  const std::size_t heads = config_.heads;
  const std::size_t dh = d / heads;
  const std::size_t s = batch.sequence_length();
  const std::size_t offset = batch.has_style() ? 1 : 0;

  Tensor h = linear(batch.tokens, input_w_, input_b_);
  if (batch.has_style()) {
    const Tensor style = linear(batch.psi, style_w_, style_b_);
    const std::array<Tensor, 2> parts{style, h};
    h = ops::concat_rows(parts);
  }
  const auto blocked = build_attention_mask(batch.n_train, batch.n_query, batch.has_style());
  const float inv_sqrt = 1.0f / std::sqrt(float(dh));

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const Tensor x = ops::layer_norm_rows(h, l.norm1_gain, l.norm1_bias);
    const Tensor q = linear(x, l.wq, l.bq);
    const Tensor k = linear(x, l.wk, l.bk);
    const Tensor v = linear(x, l.wv, l.bv);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const Tensor qh = ops::slice_cols(q, hd * dh, (hd + 1) * dh);
      const Tensor kh = ops::slice_cols(k, hd * dh, (hd + 1) * dh);
      const Tensor vh = ops::slice_cols(v, hd * dh, (hd + 1) * dh);
      Tensor scores = ops::scale(ops::matmul_nt(qh, kh), inv_sqrt);
      scores = ops::masked_fill(scores, blocked, -std::numeric_limits<float>::infinity());
      outs.push_back(ops::matmul(ops::softmax_rows(scores), vh));
    }
    const Tensor attended = heads == 1 ? outs[0] : ops::concat_cols(outs);
    h = ops::add(h, linear(attended, l.wo, l.bo));
    const Tensor y = ops::layer_norm_rows(h, l.norm2_gain, l.norm2_bias);
    h = ops::add(h, linear(ops::gelu(linear(y, l.w1, l.b1)), l.w2, l.b2));
    check_finite(h, li);
  }
  const Tensor queries = ops::slice_rows(h, offset + batch.n_train, s);
  const Tensor normed = ops::layer_norm_rows(queries, final_gain_, final_bias_);
  return linear(normed, head_w_, head_b_);
}

namespace {

std::vector<std::uint8_t> class_mask(std::size_t rows, std::size_t cols, std::size_t num_classes) {
  std::vector<std::uint8_t> m(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = num_classes; c < cols; ++c) m[r * cols + c] = 1;
  return m;
}

Tensor masked_logits(const Tensor& logits, std::size_t num_classes) {
  if (num_classes < 1 || num_classes > logits.cols()) {
    throw ContractError("class count " + std::to_string(num_classes) + " outside 1.." + std::to_string(logits.cols()));
  }
  if (num_classes == logits.cols()) return logits;
  return ops::masked_fill(logits, class_mask(logits.rows(), logits.cols(), num_classes),
                          -std::numeric_limits<float>::infinity());
}

Tensor cross_entropy(const Tensor& masked, std::span<const std::uint16_t> targets, std::size_t num_classes) {
  if (targets.size() != masked.rows()) {
    throw ContractError("loss: " + std::to_string(targets.size()) + " targets for " + std::to_string(masked.rows()) +
                        " query rows");
  }
  if (targets.empty()) throw ContractError("loss: no query rows");
  std::vector<std::uint32_t> idx(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= num_classes) {
      throw ContractError("loss: target " + std::to_string(targets[i]) + " >= class count " + std::to_string(num_classes));
    }
    idx[i] = targets[i];
  }
  return ops::scale(ops::mean(ops::pick(ops::log_softmax_rows(masked), idx)), -1.0f);
}

}  // namespace

Tensor loss(const Tensor& logits, std::span<const std::uint16_t> targets, std::size_t num_classes) {
  return cross_entropy(masked_logits(logits, num_classes), targets, num_classes);
}

Tensor loss_with_temperature(const Tensor& logits, std::span<const std::uint16_t> targets, std::size_t num_classes,
                             const Tensor& temperature) {
  const Tensor scaled = ops::scale_by(logits, ops::reciprocal(temperature));
  return cross_entropy(masked_logits(scaled, num_classes), targets, num_classes);
}

Tensor apply_temperature(const Tensor& logits, const Tensor& temperature, std::size_t num_classes) {
  if (temperature.size() != 1 || !(temperature.item() > 0.0f)) throw ContractError("temperature must be positive");
  const Tensor scaled = ops::scale_by(logits, ops::reciprocal(temperature));
  return ops::softmax_rows(masked_logits(scaled, num_classes));
}

std::vector<float> apply_temperature(const Tensor& logits, float temperature, std::size_t num_classes) {
  if (!(temperature > 0.0f)) throw ContractError("temperature must be positive");
  ops::NoGradGuard guard;
  const Tensor p = apply_temperature(logits, Tensor::scalar(temperature), num_classes);
  return std::vector<float>(p.data().begin(), p.data().end());
}

}  // namespace tabpfn::model

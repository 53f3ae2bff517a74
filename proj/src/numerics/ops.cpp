#include "tabpfn/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tabpfn/errors.hpp"

namespace tabpfn::numerics {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using NodePtr = std::shared_ptr<detail::Node>;

ConstMap as_matrix(const detail::Node& n) { return ConstMap(n.value.data(), n.rows(), n.cols()); }
ConstMap as_matrix(const std::vector<float>& v, std::size_t r, std::size_t c) { return ConstMap(v.data(), r, c); }
MutMap grad_matrix(detail::Node& n) { return MutMap(n.ensure_grad().data(), n.rows(), n.cols()); }

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ContractError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

void check_values([[maybe_unused]] const std::vector<float>& v, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  // -inf is a legal masking sentinel; NaN and +inf are not.
  for (float x : v) {
    if (std::isnan(x) || x == std::numeric_limits<float>::infinity()) {
      throw NumericalError(std::string(op) + " produced a non-finite value");
    }
  }
#endif
}

// Builds the output node and records the backward rule when any input needs it.
Tensor make_result(const char* op, Shape shape, std::vector<float> values, std::initializer_list<Tensor> inputs,
                   std::function<void(detail::Node&)> rule) {
  check_values(values, op);
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const Tensor& t : inputs) node.parents.push_back(t.node());
  node.backward = std::move(rule);
  return out;
}

Tensor make_result_many(const char* op, Shape shape, std::vector<float> values, std::span<const Tensor> inputs,
                        std::function<void(detail::Node&)> rule) {
  check_values(values, op);
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const Tensor& t : inputs) node.parents.push_back(t.node());
  node.backward = std::move(rule);
  return out;
}

template <typename F, typename D>
Tensor unary(const char* op, const Tensor& a, F f, D dfdx) {
  require_defined(a, op);
  const auto& in = a.node()->value;
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  NodePtr an = a.node();
  return make_result(op, a.shape(), std::move(out), {a}, [an, dfdx](detail::Node& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(an->value[i], self.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  const std::size_t m = a.rows(), n = b.cols();
  std::vector<float> out(m * n);
  MutMap(out.data(), m, n).noalias() = as_matrix(*a.node()) * as_matrix(*b.node());
  NodePtr an = a.node(), bn = b.node();
  return make_result("matmul", matrix_shape(m, n), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    ConstMap g = as_matrix(self.grad, self.rows(), self.cols());
    if (an->requires_grad) grad_matrix(*an).noalias() += g * as_matrix(*bn).transpose();
    if (bn->requires_grad) grad_matrix(*bn).noalias() += as_matrix(*an).transpose() * g;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul_nt");
  require_defined(b, "matmul_nt");
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  const std::size_t m = a.rows(), n = b.rows();
  std::vector<float> out(m * n);
  MutMap(out.data(), m, n).noalias() = as_matrix(*a.node()) * as_matrix(*b.node()).transpose();
  NodePtr an = a.node(), bn = b.node();
  return make_result("matmul_nt", matrix_shape(m, n), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    ConstMap g = as_matrix(self.grad, self.rows(), self.cols());
    if (an->requires_grad) grad_matrix(*an).noalias() += g * as_matrix(*bn);
    if (bn->requires_grad) grad_matrix(*bn).noalias() += g.transpose() * as_matrix(*an);
  });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<float> out(r * c);
  MutMap(out.data(), c, r) = as_matrix(*a.node()).transpose();
  NodePtr an = a.node();
  return make_result("transpose", matrix_shape(c, r), std::move(out), {a}, [an](detail::Node& self) {
    if (!an->requires_grad) return;
    grad_matrix(*an) += as_matrix(self.grad, self.rows(), self.cols()).transpose();
  });
}

namespace {

template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols()) mismatch(op, a, b);
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  NodePtr an = a.node(), bn = b.node();
  return make_result(op, a.shape(), std::move(out), {a, b}, [an, bn, da, db](detail::Node& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * da(an->value[i], bn->value[i]);
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * db(an->value[i], bn->value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
      [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
      [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](float x, float y) { return x * y; }, [](float, float y) { return y; },
      [](float x, float) { return x; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_defined(a, "add_row");
  require_defined(row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) mismatch("add_row", a, row);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto& b = row.node()->value;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b[j];
  NodePtr an = a.node(), bn = row.node();
  return make_result("add_row", a.shape(), std::move(out), {a, row}, [an, bn, r, c](detail::Node& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  return unary(
      "scale", a, [factor](float x) { return x * factor; }, [factor](float, float) { return factor; });
}

Tensor scale_by(const Tensor& a, const Tensor& factor) {
  require_defined(a, "scale_by");
  require_defined(factor, "scale_by");
  if (factor.size() != 1) mismatch("scale_by", a, factor);
  const float s = factor.item();
  std::vector<float> out(a.data().begin(), a.data().end());
  for (float& v : out) v *= s;
  NodePtr an = a.node(), sn = factor.node();
  return make_result("scale_by", a.shape(), std::move(out), {a, factor}, [an, sn](detail::Node& self) {
    const float s = sn->value[0];
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    }
    if (sn->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += double(self.grad[i]) * an->value[i];
      sn->ensure_grad()[0] += static_cast<float>(acc);
    }
  });
}

Tensor reciprocal(const Tensor& a) {
  for (float x : a.data()) {
    if (x == 0.0f) throw ContractError("reciprocal of zero");
  }
  return unary(
      "reciprocal", a, [](float x) { return 1.0f / x; }, [](float x, float) { return -1.0f / (x * x); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const Tensor& t : parts) {
    require_defined(t, "concat_rows");
    if (t.cols() != c) mismatch("concat_rows", parts[0], t);
    r += t.rows();
  }
  std::vector<float> out;
  out.reserve(r * c);
  for (const Tensor& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
  std::vector<NodePtr> nodes;
  for (const Tensor& t : parts) nodes.push_back(t.node());
  return make_result_many("concat_rows", matrix_shape(r, c), std::move(out), parts, [nodes](detail::Node& self) {
    std::size_t offset = 0;
    for (const NodePtr& n : nodes) {
      if (n->requires_grad) {
        auto& g = n->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
      }
      offset += n->value.size();
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const Tensor& t : parts) {
    require_defined(t, "concat_cols");
    if (t.rows() != r) mismatch("concat_cols", parts[0], t);
    c += t.cols();
  }
  std::vector<float> out(r * c);
  std::size_t col = 0;
  for (const Tensor& t : parts) {
    MutMap(out.data(), r, c).block(0, col, r, t.cols()) = as_matrix(*t.node());
    col += t.cols();
  }
  std::vector<NodePtr> nodes;
  for (const Tensor& t : parts) nodes.push_back(t.node());
  return make_result_many("concat_cols", matrix_shape(r, c), std::move(out), parts,
                          [nodes, r, c](detail::Node& self) {
                            ConstMap g = as_matrix(self.grad, r, c);
                            std::size_t col = 0;
                            for (const NodePtr& n : nodes) {
                              if (n->requires_grad) grad_matrix(*n) += g.block(0, col, r, n->cols());
                              col += n->cols();
                            }
                          });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice_rows");
  if (begin > end || end > a.rows()) {
    throw ContractError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") outside shape " + shape_string(a.shape()));
  }
  const std::size_t c = a.cols();
  std::vector<float> out(a.data().begin() + begin * c, a.data().begin() + end * c);
  NodePtr an = a.node();
  return make_result("slice_rows", matrix_shape(end - begin, c), std::move(out), {a},
                     [an, begin, c](detail::Node& self) {
                       if (!an->requires_grad) return;
                       auto& g = an->ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice_cols");
  if (begin > end || end > a.cols()) {
    throw ContractError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") outside shape " + shape_string(a.shape()));
  }
  const std::size_t r = a.rows(), w = end - begin;
  std::vector<float> out(r * w);
  MutMap(out.data(), r, w) = as_matrix(*a.node()).block(0, begin, r, w);
  NodePtr an = a.node();
  return make_result("slice_cols", matrix_shape(r, w), std::move(out), {a}, [an, begin, r, w](detail::Node& self) {
    if (!an->requires_grad) return;
    grad_matrix(*an).block(0, begin, r, w) += as_matrix(self.grad, r, w);
  });
}

Tensor softmax_rows(const Tensor& a) {
  require_defined(a, "softmax_rows");
  const std::size_t r = a.rows(), c = a.cols();
  const auto& x = a.node()->value;
  std::vector<float> out(r * c, 0.0f);
  for (std::size_t i = 0; i < r; ++i) {
    const float* row = x.data() + i * c;
    const float mx = *std::max_element(row, row + c);
    if (mx == -std::numeric_limits<float>::infinity()) continue;  // fully masked row
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(double(row[j]) - mx);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<float>(std::exp(double(row[j]) - mx) / total);
  }
  NodePtr an = a.node();
  return make_result("softmax_rows", a.shape(), std::move(out), {a}, [an, r, c](detail::Node& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const float* y = self.value.data() + i * c;
      const float* dy = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += double(dy[j]) * y[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += static_cast<float>(y[j] * (dy[j] - dot));
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  require_defined(a, "log_softmax_rows");
  const std::size_t r = a.rows(), c = a.cols();
  const auto& x = a.node()->value;
  std::vector<float> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const float* row = x.data() + i * c;
    const float mx = *std::max_element(row, row + c);
    if (mx == -std::numeric_limits<float>::infinity()) {
      throw NumericalError("log_softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(double(row[j]) - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<float>(row[j] - lse);
  }
  NodePtr an = a.node();
  return make_result("log_softmax_rows", a.shape(), std::move(out), {a}, [an, r, c](detail::Node& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const float* y = self.value.data() + i * c;
      const float* dy = self.grad.data() + i * c;
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += dy[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += static_cast<float>(dy[j] - std::exp(double(y[j])) * total);
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  require_defined(x, "layer_norm_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.size() != c) mismatch("layer_norm_rows", x, gamma);
  if (beta.size() != c) mismatch("layer_norm_rows", x, beta);
  const auto& in = x.node()->value;
  const auto& gm = gamma.node()->value;
  const auto& bt = beta.node()->value;
  std::vector<float> normalized(r * c), out(r * c), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const float* row = in.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= double(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= double(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = static_cast<float>(is);
    for (std::size_t j = 0; j < c; ++j) {
      const float xh = static_cast<float>((row[j] - mu) * is);
      normalized[i * c + j] = xh;
      out[i * c + j] = xh * gm[j] + bt[j];
    }
  }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result("layer_norm_rows", x.shape(), std::move(out), {x, gamma, beta},
                     [xn, gn, bn, normalized = std::move(normalized), inv_std = std::move(inv_std), r,
                      c](detail::Node& self) {
                       const auto& dy = self.grad;
                       if (gn->requires_grad) {
                         auto& g = gn->ensure_grad();
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) g[j] += dy[i * c + j] * normalized[i * c + j];
                       }
                       if (bn->requires_grad) {
                         auto& g = bn->ensure_grad();
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) g[j] += dy[i * c + j];
                       }
                       if (!xn->requires_grad) return;
                       auto& g = xn->ensure_grad();
                       const auto& gm = gn->value;
                       for (std::size_t i = 0; i < r; ++i) {
                         double mean_d = 0.0, mean_dx = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           const double d = double(dy[i * c + j]) * gm[j];
                           mean_d += d;
                           mean_dx += d * normalized[i * c + j];
                         }
                         mean_d /= double(c);
                         mean_dx /= double(c);
                         for (std::size_t j = 0; j < c; ++j) {
                           const double d = double(dy[i * c + j]) * gm[j];
                           g[i * c + j] += static_cast<float>(inv_std[i] * (d - mean_d - normalized[i * c + j] * mean_dx));
                         }
                       }
                     });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](float x) { return x > 0.0f ? x : 0.0f; }, [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      "gelu", a, [](float x) { return static_cast<float>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2))); },
      [](float x, float) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * double(x) * x);
        return static_cast<float>(cdf + x * pdf);
      });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](float x) { return std::tanh(x); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor embedding(const Tensor& table, std::span<const std::uint32_t> indices) {
  require_defined(table, "embedding");
  const std::size_t vocab = table.rows(), c = table.cols();
  std::vector<float> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw ContractError("embedding: index " + std::to_string(indices[i]) + " outside table of shape " +
                          shape_string(table.shape()));
    }
    std::copy_n(table.data().begin() + indices[i] * c, c, out.begin() + i * c);
  }
  NodePtr tn = table.node();
  std::vector<std::uint32_t> idx(indices.begin(), indices.end());
  return make_result("embedding", matrix_shape(indices.size(), c), std::move(out), {table},
                     [tn, idx = std::move(idx), c](detail::Node& self) {
                       if (!tn->requires_grad) return;
                       auto& g = tn->ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
                     });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, float value) {
  require_defined(a, "masked_fill");
  if (mask.size() != a.size()) {
    throw ContractError("masked_fill: mask of length " + std::to_string(mask.size()) + " for shape " +
                        shape_string(a.shape()));
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  NodePtr an = a.node();
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return make_result("masked_fill", a.shape(), std::move(out), {a}, [an, m = std::move(m)](detail::Node& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!m[i]) g[i] += self.grad[i];
  });
}

Tensor pick(const Tensor& a, std::span<const std::uint32_t> index) {
  require_defined(a, "pick");
  const std::size_t r = a.rows(), c = a.cols();
  if (index.size() != r) {
    throw ContractError("pick: " + std::to_string(index.size()) + " indices for shape " + shape_string(a.shape()));
  }
  std::vector<float> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (index[i] >= c) throw ContractError("pick: index " + std::to_string(index[i]) + " out of range");
    out[i] = a.data()[i * c + index[i]];
  }
  NodePtr an = a.node();
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return make_result("pick", matrix_shape(r, 1), std::move(out), {a}, [an, idx = std::move(idx), c](detail::Node& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) g[i * c + idx[i]] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (float x : a.data()) total += x;
  NodePtr an = a.node();
  return make_result("sum", matrix_shape(1, 1), {static_cast<float>(total)}, {a}, [an](detail::Node& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (float& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), 1.0f / static_cast<float>(a.size()));
}

}  // namespace tabpfn::numerics

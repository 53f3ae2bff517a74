#pragma once

// Differentiable primitives. Shape mismatches throw ContractError naming both
// shapes. Broadcasting is limited to add_row (a row vector over every row).

#include <cstdint>
#include <span>
#include <vector>

#include "tabpfn/numerics/tensor.hpp"

namespace tabpfn::numerics {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, float factor);
/// Multiplies every element by a 1x1 tensor.
Tensor scale_by(const Tensor& a, const Tensor& factor);
Tensor reciprocal(const Tensor& a);
Tensor exp(const Tensor& a);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);

/// Gathers rows of `table` by index.
Tensor embedding(const Tensor& table, std::span<const std::uint32_t> indices);
/// Replaces entries where mask != 0 by `value` (which may be -inf).
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, float value);
/// Picks a[i, index[i]] for every row, giving an n x 1 tensor.
Tensor pick(const Tensor& a, std::span<const std::uint32_t> index);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace tabpfn::numerics

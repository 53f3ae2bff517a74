#pragma once

// Turning raw generator output into a classification dataset: quantile
// labels, categorical columns, missing values and column normalization.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tabpfn/prior/random.hpp"

namespace tabpfn::prior {

/// 1-based ascending rank of every value, ties broken by index.
std::vector<std::size_t> ranks(std::span<const double> values);

/// y_i = number of bounds b with b < rank_i / n. Bounds need not be sorted.
std::vector<std::uint16_t> labels_from_bounds(std::span<const double> values, std::span<const double> bounds);

/// Draws num_classes - 1 uniform bounds until every class is non-empty, then
/// permutes the class ids with probability shuffle_probability. Throws
/// UnlabelableError when fewer than num_classes distinct values exist.
std::vector<std::uint16_t> labelize(std::span<const double> values, std::size_t num_classes, Rng& rng,
                                    double shuffle_probability, int max_retries = 1000);

/// With probability nan_probability, masks each cell independently with
/// probability fraction and zeroes it. Returns the mask (row-major).
std::vector<std::uint8_t> inject_missing(std::span<double> x, double nan_probability, double fraction, Rng& rng);

/// Replaces a random fraction of columns by quantile-binned category ids;
/// each binned column's ids are permuted with probability shuffle_fraction.
/// Returns the indices of the converted columns.
std::vector<std::size_t> categorize_features(std::span<double> x, std::size_t n, std::size_t k, double fraction,
                                             double shuffle_fraction, std::size_t max_categories, Rng& rng);

/// Z-normalizes each column over its unmasked cells (population std).
/// Constant columns become 0; masked cells are set to exactly 0.
void normalize_columns(std::span<double> x, std::span<const std::uint8_t> mask, std::size_t n, std::size_t k);

}  // namespace tabpfn::prior

#include "tabpfn/prior/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabpfn/errors.hpp"

namespace tabpfn::prior {

std::vector<std::size_t> ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<std::size_t> rank(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  return rank;
}

std::vector<std::uint16_t> labels_from_bounds(std::span<const double> values, std::span<const double> bounds) {
  const auto rank = ranks(values);
  const double n = static_cast<double>(values.size());
  std::vector<std::uint16_t> y(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double q = static_cast<double>(rank[i]) / n;
    y[i] = static_cast<std::uint16_t>(std::count_if(bounds.begin(), bounds.end(), [&](double b) { return b < q; }));
  }
  return y;
}

std::vector<std::uint16_t> labelize(std::span<const double> values, std::size_t num_classes, Rng& rng,
                                    double shuffle_probability, int max_retries) {
  if (num_classes < 2) throw ContractError("labelize: need at least 2 classes");
  if (values.size() < num_classes) {
    throw ContractError("labelize: " + std::to_string(values.size()) + " rows cannot fill " +
                        std::to_string(num_classes) + " classes");
  }
  for (double v : values)
    if (!std::isfinite(v)) throw ContractError("labelize: non-finite target");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < num_classes) {
    throw UnlabelableError("only " + std::to_string(distinct) + " distinct targets for " +
                           std::to_string(num_classes) + " classes");
  }

  std::vector<double> bounds(num_classes - 1);
  std::vector<std::size_t> counts(num_classes);
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    for (double& b : bounds) b = uniform(rng);
    std::sort(bounds.begin(), bounds.end());
    auto y = labels_from_bounds(values, bounds);
    std::fill(counts.begin(), counts.end(), 0);
    for (auto c : y) ++counts[c];
    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) continue;
    if (bernoulli(rng, shuffle_probability)) {
      const auto perm = permutation(rng, num_classes);
      for (auto& c : y) c = static_cast<std::uint16_t>(perm[c]);
    }
    return y;
  }
  throw UnlabelableError("no bound draw filled all " + std::to_string(num_classes) + " classes in " +
                         std::to_string(max_retries) + " attempts");
}

std::vector<std::uint8_t> inject_missing(std::span<double> x, double nan_probability, double fraction, Rng& rng) {
  std::vector<std::uint8_t> mask(x.size(), 0);
  if (!bernoulli(rng, nan_probability)) return mask;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (bernoulli(rng, fraction)) {
      mask[i] = 1;
      x[i] = 0.0;
    }
  }
  return mask;
}

std::vector<std::size_t> categorize_features(std::span<double> x, std::size_t n, std::size_t k, double fraction,
                                             double shuffle_fraction, std::size_t max_categories, Rng& rng) {
  std::vector<std::size_t> converted;
  if (n < 2) return converted;
  std::vector<double> column(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (!bernoulli(rng, fraction)) continue;
    for (std::size_t r = 0; r < n; ++r) column[r] = x[r * k + c];
    const auto categories = static_cast<std::size_t>(uniform_int(rng, 2, std::int64_t(std::max<std::size_t>(2, max_categories))));
    const double shuffle = bernoulli(rng, shuffle_fraction) ? 1.0 : 0.0;
    std::vector<std::uint16_t> ids;
    try {
      ids = labelize(column, std::min(categories, n), rng, shuffle);
    } catch (const UnlabelableError&) {
      continue;  // too few distinct values to bin; leave the column numeric
    }
    for (std::size_t r = 0; r < n; ++r) x[r * k + c] = ids[r];
    converted.push_back(c);
  }
  return converted;
}

void normalize_columns(std::span<double> x, std::span<const std::uint8_t> mask, std::size_t n, std::size_t k) {
  for (std::size_t c = 0; c < k; ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (mask.empty() || !mask[r * k + c]) {
        sum += x[r * k + c];
        ++count;
      }
    }
    const double mean = count ? sum / double(count) : 0.0;
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (mask.empty() || !mask[r * k + c]) {
        const double d = x[r * k + c] - mean;
        ss += d * d;
      }
    }
    const double std = count ? std::sqrt(ss / double(count)) : 0.0;
    const bool constant = std < 1e-8;
    for (std::size_t r = 0; r < n; ++r) {
      double& v = x[r * k + c];
      if ((!mask.empty() && mask[r * k + c]) || constant) {
        v = 0.0;
      } else {
        v = (v - mean) / std;
      }
    }
  }
}

}  // namespace tabpfn::prior

#include "tabpfn/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tabpfn/errors.hpp"

namespace tabpfn::eval {

namespace {

void check_shape(std::span<const std::uint16_t> y, std::span<const float> p, std::size_t nc, const char* who) {
  if (nc == 0 || p.size() != y.size() * nc) {
    throw ContractError(std::string(who) + ": " + std::to_string(p.size()) + " probabilities for " +
                        std::to_string(y.size()) + " rows of " + std::to_string(nc) + " classes");
  }
  for (auto v : y)
    if (v >= nc) throw ContractError(std::string(who) + ": label outside the class range");
}

}  // namespace

double roc_auc_binary(std::span<const std::uint8_t> positive, std::span<const double> score) {
  if (positive.size() != score.size()) throw ContractError("roc_auc: size mismatch");
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
  // average ranks over tied blocks
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && score[order[j]] == score[order[i]]) ++j;
    const double avg = 0.5 * double(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) rank_sum += avg, ++pos;
    i = j;
  }
  const std::size_t neg = score.size() - pos;
  if (pos == 0 || neg == 0) throw ContractError("roc_auc: need both positive and negative rows");
  return (rank_sum - double(pos) * double(pos + 1) / 2.0) / (double(pos) * double(neg));
}

double roc_auc_ovo(std::span<const std::uint16_t> y, std::span<const float> p, std::size_t nc) {
  check_shape(y, p, nc, "roc_auc_ovo");
  std::vector<std::size_t> count(nc, 0);
  for (auto v : y) ++count[v];
  if (nc == 2) {
    if (!count[0] || !count[1]) throw ContractError("roc_auc_ovo: fewer than two classes present");
    std::vector<std::uint8_t> pos(y.size());
    std::vector<double> s(y.size());
    for (std::size_t r = 0; r < y.size(); ++r) pos[r] = y[r] == 1, s[r] = p[r * 2 + 1];
    return roc_auc_binary(pos, s);
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < nc; ++a) {
    for (std::size_t b = a + 1; b < nc; ++b) {
      if (!count[a] || !count[b]) continue;
      std::vector<std::uint8_t> is_a, is_b;
      std::vector<double> sa, sb;
      for (std::size_t r = 0; r < y.size(); ++r) {
        if (y[r] != a && y[r] != b) continue;
        is_a.push_back(y[r] == a);
        is_b.push_back(y[r] == b);
        sa.push_back(p[r * nc + a]);
        sb.push_back(p[r * nc + b]);
      }
      total += 0.5 * (roc_auc_binary(is_a, sa) + roc_auc_binary(is_b, sb));
      ++pairs;
    }
  }
  if (pairs == 0) throw ContractError("roc_auc_ovo: fewer than two classes present");
  return total / double(pairs);
}

double cross_entropy(std::span<const std::uint16_t> y, std::span<const float> p, std::size_t nc) {
  check_shape(y, p, nc, "cross_entropy");
  if (y.empty()) throw ContractError("cross_entropy: no rows");
  double total = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) total -= std::log(std::max(double(p[r * nc + y[r]]), 1e-12));
  return total / double(y.size());
}

double accuracy(std::span<const std::uint16_t> y, std::span<const float> p, std::size_t nc) {
  check_shape(y, p, nc, "accuracy");
  if (y.empty()) throw ContractError("accuracy: no rows");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < nc; ++c)
      if (p[r * nc + c] > p[r * nc + best]) best = c;
    hits += best == y[r];
  }
  return double(hits) / double(y.size());
}

}  // namespace tabpfn::eval

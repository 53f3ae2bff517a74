#include "tabpfn/eval/oracle.hpp"

#include <cmath>

#include "tabpfn/errors.hpp"
#include "tabpfn/prior/random.hpp"

namespace tabpfn::eval {

void DiscretePrior::validate() const {
  if (hypotheses.empty() || hypotheses.size() != weights.size())
    throw ContractError("discrete prior: need one weight per hypothesis");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("discrete prior: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("discrete prior: weights sum to " + std::to_string(total));
  if (k == 0 || num_classes < 2) throw ContractError("discrete prior: bad shape");
}

DiscretePrior DiscretePrior::sign_pair(double flip) {
  DiscretePrior p;
  p.k = 1;
  p.num_classes = 2;
  for (double s : {1.0, -1.0}) {
    p.hypotheses.push_back({s > 0 ? "sign" : "-sign", [s, flip](std::span<const float> x) {
                              const bool up = s * x[0] > 0.0;
                              return std::vector<double>{up ? flip : 1.0 - flip, up ? 1.0 - flip : flip};
                            }});
  }
  p.weights = {0.5, 0.5};
  return p;
}

DiscretePrior DiscretePrior::four_half_planes(double flip) {
  DiscretePrior p;
  p.k = 2;
  p.num_classes = 2;
  for (std::size_t j : {0, 1}) {
    for (double s : {1.0, -1.0}) {
      p.hypotheses.push_back({(s > 0 ? "x" : "-x") + std::to_string(j), [j, s, flip](std::span<const float> x) {
                                const bool up = s * x[j] > 0.0;
                                return std::vector<double>{up ? flip : 1.0 - flip, up ? 1.0 - flip : flip};
                              }});
    }
  }
  p.weights.assign(4, 0.25);
  return p;
}

std::vector<double> posterior(const DiscretePrior& prior, std::span<const float> x_train,
                              std::span<const std::uint16_t> y_train) {
  prior.validate();
  if (x_train.size() != y_train.size() * prior.k) throw ContractError("posterior: train shape mismatch");
  // log domain so long datasets do not underflow
  std::vector<double> log_w(prior.hypotheses.size());
  for (std::size_t h = 0; h < log_w.size(); ++h) {
    double lw = std::log(prior.weights[h]);
    for (std::size_t r = 0; r < y_train.size() && std::isfinite(lw); ++r)
      lw += std::log(prior.hypotheses[h].likelihood(x_train.subspan(r * prior.k, prior.k)).at(y_train[r]));
    log_w[h] = lw;
  }
  double top = -INFINITY;
  for (double v : log_w) top = std::max(top, v);
  if (!std::isfinite(top)) throw ContractError("posterior: the data has zero probability under every hypothesis");
  double z = 0.0;
  for (double& v : log_w) z += (v = std::exp(v - top));
  for (double& v : log_w) v /= z;
  return log_w;
}

std::vector<double> exact_ppd(const DiscretePrior& prior, std::span<const float> x_train,
                              std::span<const std::uint16_t> y_train, std::span<const float> x) {
  if (x.size() != prior.k) throw ContractError("exact_ppd: query has the wrong width");
  const auto post = posterior(prior, x_train, y_train);
  std::vector<double> out(prior.num_classes, 0.0);
  for (std::size_t h = 0; h < post.size(); ++h) {
    const auto p = prior.hypotheses[h].likelihood(x);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += post[h] * p[c];
  }
  return out;
}

DiscretePriorSource::DiscretePriorSource(DiscretePrior prior, std::size_t n_min, std::size_t n_max)
    : prior_(std::move(prior)), n_min_(n_min), n_max_(n_max) {
  prior_.validate();
  if (n_min_ < 2 || n_min_ > n_max_) throw ContractError("DiscretePriorSource: need 2 <= n_min <= n_max");
}

prior::SyntheticDataset DiscretePriorSource::sample(prior::Rng& rng) const {
  prior::SyntheticDataset ds;
  const std::size_t h = prior::categorical(rng, prior_.weights);
  ds.n = static_cast<std::size_t>(prior::uniform_int(rng, std::int64_t(n_min_), std::int64_t(n_max_)));
  ds.k = prior_.k;
  ds.num_classes = prior_.num_classes;
  ds.x.resize(ds.n * ds.k);
  for (float& v : ds.x) v = static_cast<float>(prior::normal(rng));
  ds.mask.assign(ds.x.size(), 0);
  for (std::size_t r = 0; r < ds.n; ++r) {
    const auto p = prior_.hypotheses[h].likelihood(std::span<const float>(ds.x).subspan(r * ds.k, ds.k));
    ds.y.push_back(static_cast<std::uint16_t>(prior::categorical(rng, p)));
  }
  ds.split_point = static_cast<std::size_t>(prior::uniform_int(rng, 1, std::int64_t(ds.n) - 1));
  return ds;
}

OracleReport oracle_check(const model::Transformer& model, const DiscretePriorSource& source, std::size_t probes,
                          std::uint64_t seed) {
  if (probes == 0) throw ContractError("oracle_check: no probes");
  const DiscretePrior& prior = source.prior();
  OracleReport report;
  report.probes = probes;
  numerics::NoGradGuard guard;
  for (std::size_t i = 0; i < probes; ++i) {
    prior::Rng rng(prior::derive_seed(seed, i));
    auto ds = source.sample(rng);
    // keep the train part and a single query row
    const std::size_t n_train = ds.split_point;
    ds.n = n_train + 1;
    ds.x.resize(ds.n * ds.k);
    ds.mask.resize(ds.n * ds.k);
    ds.y.resize(ds.n);
    const auto xs = std::span<const float>(ds.x);
    const auto truth = exact_ppd(prior, xs.first(n_train * ds.k), std::span<const std::uint16_t>(ds.y).first(n_train),
                                 xs.subspan(n_train * ds.k, ds.k));
    const auto logits = model.forward(model::tokenize(model::view_of(ds), {}, model.config()));
    const auto p = model::apply_temperature(logits, 1.0f, ds.num_classes);
    double tv = 0.0, uniform = 0.0;
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
      tv += std::abs(double(p[c]) - truth[c]);
      uniform += std::abs(1.0 / double(ds.num_classes) - truth[c]);
    }
    report.mean_tv += 0.5 * tv;
    report.max_tv = std::max(report.max_tv, 0.5 * tv);
    report.uniform_tv += 0.5 * uniform;
  }
  report.mean_tv /= double(probes);
  report.uniform_tv /= double(probes);
  return report;
}

}  // namespace tabpfn::eval

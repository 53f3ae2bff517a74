#include "tabpfn/prior/generators.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabpfn/errors.hpp"

namespace tabpfn::prior {

namespace {

std::size_t draw_count(const PriorHyperparameters& psi, Hp hp, Rng& rng, std::size_t minimum) {
  const double v = std::round(psi.draw(hp, rng));
  return std::max<std::size_t>(minimum, static_cast<std::size_t>(std::max(0.0, v)));
}

bool draw_flag(const PriorHyperparameters& psi, Hp hp, Rng& rng) { return psi.draw(hp, rng) > 0.5; }

// Union-find over nodes, for the label/feature connectivity check.
struct Components {
  std::vector<std::size_t> parent;
  explicit Components(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void join(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

MlpSettings MlpSettings::draw(const PriorHyperparameters& psi, Rng& rng) {
  MlpSettings s;
  s.layers = draw_count(psi, Hp::mlp_layers, rng, 1);
  s.hidden = draw_count(psi, Hp::mlp_hidden, rng, 1);
  s.causes = draw_count(psi, Hp::scm_causes, rng, 1);
  s.activation = static_cast<Activation>(static_cast<int>(std::round(psi.draw(Hp::activation, rng))));
  s.dropout = std::clamp(psi.draw(Hp::weight_dropout, rng), 0.0, 1.0);
  s.blockwise_dropout = draw_flag(psi, Hp::blockwise_dropout, rng);
  s.weight_std = std::max(0.0, psi.draw(Hp::weight_std, rng));
  s.noise_std = std::max(0.0, psi.draw(Hp::noise_std, rng));
  s.share_noise_mean = draw_flag(psi, Hp::share_noise_mean, rng);
  s.y_from_last_layer = draw_flag(psi, Hp::y_from_last_layer, rng);
  s.blockwise_features = draw_flag(psi, Hp::blockwise_features, rng);
  s.keep_feature_order = draw_flag(psi, Hp::keep_feature_order, rng);
  return s;
}

GpSettings GpSettings::draw(const PriorHyperparameters& psi, Rng& rng) {
  GpSettings s;
  s.outputscale = std::max(0.0, psi.draw(Hp::gp_outputscale, rng));
  s.lengthscale = std::max(0.0, psi.draw(Hp::gp_lengthscale, rng));
  s.noise = std::max(0.0, psi.draw(Hp::gp_noise, rng));
  return s;
}

std::size_t ScmInstance::node_count() const { return std::accumulate(layer_sizes.begin(), layer_sizes.end(), std::size_t{0}); }

std::size_t ScmInstance::layer_of(std::size_t node) const {
  for (std::size_t l = 0; l < layer_sizes.size(); ++l) {
    if (node < layer_sizes[l]) return l;
    node -= layer_sizes[l];
  }
  throw ContractError("node " + std::to_string(node) + " outside the graph");
}

void ScmInstance::validate() const {
  const std::size_t nodes = node_count();
  if (noise_mean.size() != nodes || noise_std.size() != nodes) throw ContractError("scm: noise table size mismatch");
  std::size_t previous_target = 0;
  for (const Edge& e : edges) {
    if (e.from >= nodes || e.to >= nodes) throw ContractError("scm: edge endpoint out of range");
    if (layer_of(e.from) + 1 != layer_of(e.to)) throw ContractError("scm: edge does not join consecutive layers");
    if (!std::isfinite(e.weight)) throw ContractError("scm: non-finite edge weight");
    if (e.to < previous_target) throw ContractError("scm: edges not sorted by target");
    previous_target = e.to;
  }
  if (label_node >= nodes) throw ContractError("scm: label node out of range");
  std::vector<std::size_t> sorted = feature_nodes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ContractError("scm: repeated feature node");
  for (std::size_t f : sorted) {
    if (f >= nodes) throw ContractError("scm: feature node out of range");
    if (f == label_node) throw ContractError("scm: label node is also a feature");
  }
}

std::vector<std::uint8_t> dropout_mask(std::size_t out, std::size_t in, double p, bool blockwise, Rng& rng) {
  std::vector<std::uint8_t> keep(out * in, 0);
  if (p >= 1.0) return keep;
  if (blockwise) {
    const double wanted = std::round(1.0 / (1.0 - p));
    const std::size_t blocks =
        std::clamp<std::size_t>(static_cast<std::size_t>(wanted), 1, std::max<std::size_t>(1, std::min(out, in)));
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < in; ++c) keep[r * in + c] = (r * blocks / out) == (c * blocks / in);
    return keep;
  }
  for (auto& v : keep) v = bernoulli(rng, 1.0 - p);
  return keep;
}

ScmInstance sample_scm(const MlpSettings& s, std::size_t k, Rng& rng, int max_retries) {
  if (k == 0) throw ContractError("sample_scm: need at least one feature");
  const std::size_t layers = std::max<std::size_t>(2, s.layers);
  const std::size_t hidden = std::max(s.hidden, (k + 1 + layers - 2) / (layers - 1));

  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    ScmInstance scm;
    scm.activation = s.activation;
    scm.layer_sizes.assign(layers, hidden);
    scm.layer_sizes[0] = std::max<std::size_t>(1, s.causes);
    const std::size_t nodes = scm.node_count();

    std::size_t first = 0;
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      const std::size_t in = scm.layer_sizes[l];
      const std::size_t out = scm.layer_sizes[l + 1];
      const auto keep = dropout_mask(out, in, s.dropout, s.blockwise_dropout, rng);
      for (std::size_t r = 0; r < out; ++r) {
        const std::size_t fan_in = std::count(keep.begin() + r * in, keep.begin() + (r + 1) * in, 1);
        const double std = s.weight_std / std::sqrt(double(std::max<std::size_t>(1, fan_in)));
        for (std::size_t c = 0; c < in; ++c) {
          if (!keep[r * in + c]) continue;
          scm.edges.push_back({first + c, first + in + r, normal(rng, 0.0, std)});
        }
      }
      first += in;
    }

    scm.noise_mean.resize(nodes);
    scm.noise_std.resize(nodes);
    const double root_shared = normal(rng);
    const double hidden_shared = normal(rng, 0.0, s.noise_std);
    for (std::size_t i = 0; i < nodes; ++i) {
      if (i < scm.layer_sizes[0]) {
        scm.noise_mean[i] = s.share_noise_mean ? root_shared : normal(rng);
        scm.noise_std[i] = std::abs(normal(rng, 1.0, 0.5));
      } else {
        scm.noise_mean[i] = s.share_noise_mean ? hidden_shared : normal(rng, 0.0, s.noise_std);
        scm.noise_std[i] = std::abs(normal(rng, s.noise_std, 0.5 * s.noise_std));
      }
    }

    const std::size_t candidates_begin = scm.layer_sizes[0];
    const std::size_t last_begin = nodes - scm.layer_sizes.back();
    scm.label_node = s.y_from_last_layer ? static_cast<std::size_t>(uniform_int(rng, last_begin, nodes - 1))
                                         : static_cast<std::size_t>(uniform_int(rng, candidates_begin, nodes - 1));
    std::vector<std::size_t> rest;
    for (std::size_t i = candidates_begin; i < nodes; ++i)
      if (i != scm.label_node) rest.push_back(i);
    if (s.blockwise_features) {
      const auto start = static_cast<std::size_t>(uniform_int(rng, 0, std::int64_t(rest.size() - k)));
      scm.feature_nodes.assign(rest.begin() + start, rest.begin() + start + k);
    } else {
      std::shuffle(rest.begin(), rest.end(), rng);
      scm.feature_nodes.assign(rest.begin(), rest.begin() + k);
      std::sort(scm.feature_nodes.begin(), scm.feature_nodes.end());
    }
    if (!s.keep_feature_order) std::shuffle(scm.feature_nodes.begin(), scm.feature_nodes.end(), rng);

    Components comp(nodes);
    for (const Edge& e : scm.edges) comp.join(e.from, e.to);
    const std::size_t label_root = comp.find(scm.label_node);
    const bool connected = std::any_of(scm.feature_nodes.begin(), scm.feature_nodes.end(),
                                       [&](std::size_t f) { return comp.find(f) == label_root; });
    if (connected) return scm;
  }
  throw DegenerateGraphError("label node disconnected from every feature after " + std::to_string(max_retries) +
                             " retries (dropout " + std::to_string(s.dropout) + ")");
}

ScmInstance sample_scm(const PriorHyperparameters& psi, std::size_t k, Rng& rng) {
  return sample_scm(MlpSettings::draw(psi, rng), k, rng);
}

RawData scm_forward(const ScmInstance& scm, std::size_t n, Rng& rng, int max_retries) {
  scm.validate();
  const std::size_t nodes = scm.node_count();
  const std::size_t k = scm.feature_nodes.size();
  RawData out{n, k, std::vector<double>(n * k), std::vector<double>(n)};

  std::vector<double> z(nodes);
  std::vector<double> picked(k + 1);
  for (std::size_t row = 0; row < n; ++row) {
    int attempt = 0;
    for (;; ++attempt) {
      // Edges are sorted by target and only join consecutive layers, so every
      // parent is final before its child is read.
      std::size_t e = 0;
      for (std::size_t i = 0; i < nodes; ++i) {
        double s = 0.0;
        for (; e < scm.edges.size() && scm.edges[e].to == i; ++e) s += scm.edges[e].weight * z[scm.edges[e].from];
        const double eps = scm.noise_std[i] > 0.0 ? normal(rng, scm.noise_mean[i], scm.noise_std[i]) : scm.noise_mean[i];
        z[i] = apply_activation(scm.activation, s + eps);
      }
      for (std::size_t j = 0; j < k; ++j) picked[j] = z[scm.feature_nodes[j]];
      picked[k] = z[scm.label_node];
      if (all_finite(picked)) break;
      if (attempt >= max_retries) throw NumericalError("scm_forward: row overflowed " + std::to_string(attempt + 1) + " times");
    }
    std::copy(picked.begin(), picked.begin() + k, out.x.begin() + row * k);
    out.y[row] = picked[k];
  }
  return out;
}

BnnInstance sample_bnn(const MlpSettings& s, std::size_t k, Rng& rng) {
  if (k == 0) throw ContractError("sample_bnn: need at least one feature");
  BnnInstance net;
  net.activation = s.activation;
  net.sizes.push_back(k);
  for (std::size_t l = 1; l < std::max<std::size_t>(1, s.layers); ++l) net.sizes.push_back(s.hidden);
  net.sizes.push_back(1);
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    const std::size_t in = net.sizes[l];
    const std::size_t out = net.sizes[l + 1];
    const auto keep = dropout_mask(out, in, s.dropout, s.blockwise_dropout, rng);
    std::vector<double> w(out * in, 0.0);
    std::vector<double> b(out);
    for (std::size_t r = 0; r < out; ++r) {
      const std::size_t fan_in = std::count(keep.begin() + r * in, keep.begin() + (r + 1) * in, 1);
      const double std = s.weight_std / std::sqrt(double(std::max<std::size_t>(1, fan_in)));
      for (std::size_t c = 0; c < in; ++c)
        if (keep[r * in + c]) w[r * in + c] = normal(rng, 0.0, std);
      b[r] = normal(rng, 0.0, std);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    net.noise_std.push_back(s.noise_std);
  }
  return net;
}

RawData bnn_forward(const BnnInstance& net, std::size_t n, Rng& rng, int max_retries) {
  const std::size_t k = net.sizes.front();
  RawData out{n, k, std::vector<double>(n * k), std::vector<double>(n)};
  std::vector<double> act;
  std::vector<double> next;
  for (std::size_t row = 0; row < n; ++row) {
    for (int attempt = 0;; ++attempt) {
      act.resize(k);
      for (double& v : act) v = normal(rng);
      std::copy(act.begin(), act.end(), out.x.begin() + row * k);
      for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
        const std::size_t in = net.sizes[l];
        const std::size_t width = net.sizes[l + 1];
        const bool output = l + 2 == net.sizes.size();
        next.assign(width, 0.0);
        for (std::size_t r = 0; r < width; ++r) {
          double s = net.biases[l][r];
          for (std::size_t c = 0; c < in; ++c) s += net.weights[l][r * in + c] * act[c];
          if (net.noise_std[l] > 0.0) s += normal(rng, 0.0, net.noise_std[l]);
          next[r] = output ? s : apply_activation(net.activation, s);
        }
        act.swap(next);
      }
      out.y[row] = act[0];
      if (std::isfinite(act[0])) break;
      if (attempt >= max_retries) throw NumericalError("bnn_forward: row overflowed " + std::to_string(attempt + 1) + " times");
    }
  }
  return out;
}

RawData sample_bnn_dataset(const PriorHyperparameters& psi, std::size_t n, std::size_t k, Rng& rng) {
  const BnnInstance net = sample_bnn(MlpSettings::draw(psi, rng), k, rng);
  return bnn_forward(net, n, rng);
}

RawData sample_gp(const GpSettings& s, std::size_t n, std::size_t k, Rng& rng) {
  RawData out{n, k, std::vector<double>(n * k), std::vector<double>(n)};
  for (double& v : out.x) v = normal(rng);
  out.y = sample_gp_targets(s, out.x, n, k, rng);
  return out;
}

std::vector<double> sample_gp_targets(const GpSettings& s, std::span<const double> x, std::size_t n, std::size_t k,
                                      Rng& rng) {
  if (x.size() != n * k) throw ContractError("sample_gp_targets: input size mismatch");
  const double ell = std::max(s.lengthscale, 1e-3);

  Eigen::MatrixXd kernel(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = x[i * k + c] - x[j * k + c];
        d2 += d * d;
      }
      kernel(i, j) = kernel(j, i) = s.outputscale * std::exp(-d2 / (2.0 * ell * ell));
    }
    kernel(i, i) += s.noise;
  }
  const double diag = std::max(kernel.diagonal().mean(), 1e-12);

  Eigen::VectorXd z(n);
  for (std::size_t i = 0; i < n; ++i) z(i) = normal(rng);
  for (double jitter = 1e-8; jitter <= 1e-4 * 1.0001; jitter *= 10.0) {
    Eigen::MatrixXd shifted = kernel;
    shifted.diagonal().array() += jitter * diag;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd y = llt.matrixL() * z;
    return std::vector<double>(y.data(), y.data() + n);
  }
  throw NumericalError("GP kernel not positive definite after jitter 1e-4 (outputscale " +
                       std::to_string(s.outputscale) + ", lengthscale " + std::to_string(s.lengthscale) + ")");
}

RawData sample_gp_dataset(const PriorHyperparameters& psi, std::size_t n, std::size_t k, Rng& rng) {
  return sample_gp(GpSettings::draw(psi, rng), n, k, rng);
}

}  // namespace tabpfn::prior

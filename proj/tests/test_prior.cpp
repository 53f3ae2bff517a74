#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "tabpfn/errors.hpp"
#include "tabpfn/prior/dataset.hpp"
#include "tabpfn/prior/generators.hpp"
#include "tabpfn/prior/postprocess.hpp"

using namespace tabpfn;
using namespace tabpfn::prior;

namespace {

SpacePtr make_space(HyperparameterSpace s) { return std::make_shared<const HyperparameterSpace>(std::move(s)); }

// Independent rank oracle: count the values that sort strictly before.
std::vector<std::size_t> brute_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t before = 0;
    for (std::size_t j = 0; j < v.size(); ++j)
      if (v[j] < v[i] || (v[j] == v[i] && j < i)) ++before;
    r[i] = before + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> column(const RawData& d, std::size_t c) {
  std::vector<double> out(d.n);
  for (std::size_t r = 0; r < d.n; ++r) out[r] = d.x[r * d.k + c];
  return out;
}

}  // namespace

TEST_CASE("layer count draws are integers at or above the lower bound") {
  const auto layers = MetaDistribution::log_truncated_normal(1.0, 6.0, true, 2.0);
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto params = layers.sample_params(rng);
    const double v = layers.sample_value(params, rng);
    CHECK(v == std::round(v));
    CHECK(v >= 2.0);
    const auto [lo, hi] = layers.support();
    CHECK(v <= hi);
    CHECK(v >= lo);
  }
}

TEST_CASE("every meta-distribution stays inside its support") {
  auto space = make_space(HyperparameterSpace::paper());
  Rng rng(7);
  for (int draw = 0; draw < 200; ++draw) {
    const auto psi = sample_hyperparameters(space, rng);
    for (std::size_t i = 0; i < kHpCount; ++i) {
      const Hp hp = static_cast<Hp>(i);
      const double v = psi.draw(hp, rng);
      const auto [lo, hi] = (*space)[hp].support();
      INFO(std::string(hp_name(hp)));
      CHECK(v >= lo);
      CHECK(v <= hi);
    }
  }
}

TEST_CASE("degenerate uniform is a point mass") {
  const auto d = MetaDistribution::uniform(3.0, 3.0);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) CHECK(d.sample_value(d.sample_params(rng), rng) == 3.0);
}

TEST_CASE("same seed gives identical psi") {
  auto space = make_space(HyperparameterSpace::paper());
  Rng a(42), b(42);
  const auto pa = sample_hyperparameters(space, a);
  const auto pb = sample_hyperparameters(space, b);
  CHECK(std::equal(pa.params().begin(), pa.params().end(), pb.params().begin()));
}

TEST_CASE("psi encoding round-trips and stays in the unit box") {
  auto space = make_space(HyperparameterSpace::paper());
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto psi = sample_hyperparameters(space, rng);
    const auto enc = psi.encode();
    REQUIRE(enc.size() == space->encoded_size());
    for (float v : enc) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    const auto back = PriorHyperparameters::decode(space, enc);
    for (std::size_t i = 0; i < enc.size(); ++i) {
      const double a = psi.params()[i];
      CHECK(back.params()[i] == doctest::Approx(a).epsilon(1e-5));
    }
    const auto again = back.encode();
    for (std::size_t i = 0; i < enc.size(); ++i) CHECK(std::abs(again[i] - enc[i]) < 1e-6f);
  }
}

TEST_CASE("space JSON round-trip and malformed spaces") {
  const auto paper = HyperparameterSpace::paper();
  const auto back = HyperparameterSpace::from_json(paper.to_json());
  CHECK(back.to_json() == paper.to_json());
  CHECK(back.encoded_size() == paper.encoded_size());

  auto text = paper.to_json();
  const auto pos = text.find("\"mlp_hidden\"");
  REQUIRE(pos != std::string::npos);
  std::string missing = text;
  missing.replace(pos, std::string("\"mlp_hidden\"").size(), "\"mlp_hiddenX\"");
  CHECK_THROWS_AS(HyperparameterSpace::from_json(missing), ConfigError);
  CHECK_THROWS_AS(HyperparameterSpace::from_json("{not json"), ConfigError);

  auto inverted = HyperparameterSpace::paper();
  inverted.set(Hp::nan_fraction, MetaDistribution::uniform(0.3, 0.1));
  CHECK_THROWS_AS(inverted.validate(), ConfigError);
  auto probability = HyperparameterSpace::paper();
  probability.set(Hp::class_shuffle, MetaDistribution::uniform(0.0, 1.5));
  CHECK_THROWS_AS(probability.validate(), ConfigError);
  auto count = HyperparameterSpace::paper();
  count.set(Hp::mlp_layers, MetaDistribution::truncated_normal(1.0, 6.0, false, 2.0));
  CHECK_THROWS_AS(count.validate(), ConfigError);
}

TEST_CASE("fully connected two-layer graph has one edge per layer pair") {
  MlpSettings s;
  s.layers = 2;
  s.hidden = 4;
  s.causes = 4;
  s.dropout = 0.0;
  Rng rng(11);
  const auto scm = sample_scm(s, 2, rng);
  // Enumerate every (parent, child) pair across consecutive layers.
  std::size_t expected = 0;
  for (std::size_t from = 0; from < scm.node_count(); ++from)
    for (std::size_t to = 0; to < scm.node_count(); ++to)
      if (scm.layer_of(to) == scm.layer_of(from) + 1) ++expected;
  CHECK(expected == 16);
  CHECK(scm.edges.size() == expected);
  scm.validate();
}

TEST_CASE("deeper graphs keep every edge between consecutive layers") {
  MlpSettings s;
  s.layers = 4;
  s.hidden = 5;
  s.causes = 3;
  s.dropout = 0.0;
  Rng rng(12);
  const auto scm = sample_scm(s, 3, rng);
  CHECK(scm.edges.size() == 3 * 5 + 5 * 5 + 5 * 5);
  for (const auto& e : scm.edges) CHECK(scm.layer_of(e.to) == scm.layer_of(e.from) + 1);
}

TEST_CASE("dropout 1 produces a degenerate-graph error") {
  MlpSettings s;
  s.dropout = 1.0;
  Rng rng(13);
  CHECK_THROWS_AS(sample_scm(s, 2, rng), DegenerateGraphError);
}

TEST_CASE("blockwise dropout keeps diagonal blocks") {
  Rng rng(1);
  const auto keep = dropout_mask(4, 4, 0.5, true, rng);
  // 1 / (1 - 0.5) = 2 blocks of 2 x 2
  const std::vector<std::uint8_t> expected{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1};
  CHECK(keep == expected);
}

TEST_CASE("sampled graphs satisfy node-choice invariants") {
  auto space = make_space(HyperparameterSpace::desk());
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto psi = sample_hyperparameters(space, rng);
    const std::size_t k = std::size_t(uniform_int(rng, 1, 30));
    try {
      const auto scm = sample_scm(psi, k, rng);
      scm.validate();
      CHECK(scm.feature_nodes.size() == k);
    } catch (const DegenerateGraphError&) {
    }
  }
}

TEST_CASE("graph sampling replays from a seed") {
  auto space = make_space(HyperparameterSpace::desk());
  Rng r0(99);
  const auto psi = sample_hyperparameters(space, r0);
  Rng a(5), b(5);
  const auto ga = sample_scm(psi, 4, a);
  const auto gb = sample_scm(psi, 4, b);
  REQUIRE(ga.edges.size() == gb.edges.size());
  for (std::size_t i = 0; i < ga.edges.size(); ++i) CHECK(ga.edges[i].weight == gb.edges[i].weight);
  CHECK(ga.feature_nodes == gb.feature_nodes);
  CHECK(ga.label_node == gb.label_node);
}

TEST_CASE("identity chains propagate values exactly") {
  ScmInstance scm;
  scm.layer_sizes = {1, 1, 1};
  scm.activation = Activation::identity;
  scm.edges = {{0, 1, 1.0}, {1, 2, 2.0}};
  scm.noise_mean = {1.5, 0.0, 0.0};
  scm.noise_std = {0.0, 0.0, 0.0};
  scm.feature_nodes = {1};
  scm.label_node = 2;
  Rng rng(1);
  const auto d = scm_forward(scm, 3, rng);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(d.x[r] == 1.5);  // weight 1: child equals parent
    CHECK(d.y[r] == 3.0);  // weight 2 on parent 1.5
  }
}

TEST_CASE("SCM features are conditionally dependent") {
  MlpSettings s;
  s.layers = 3;
  s.hidden = 6;
  s.causes = 3;
  s.activation = Activation::tanh;
  s.weight_std = 2.0;
  s.noise_std = 0.1;
  Rng rng(2024);
  const auto scm = sample_scm(s, 5, rng);
  const auto d = scm_forward(scm, 1000, rng);
  double strongest = 0.0;
  for (std::size_t a = 0; a < d.k; ++a)
    for (std::size_t b = a + 1; b < d.k; ++b) strongest = std::max(strongest, std::abs(pearson(column(d, a), column(d, b))));
  CHECK(strongest > 0.2);
}

TEST_CASE("zero-weight BNN gives a constant target") {
  MlpSettings s;
  s.layers = 3;
  s.hidden = 5;
  s.weight_std = 0.0;
  s.noise_std = 0.0;
  Rng rng(4);
  const auto net = sample_bnn(s, 3, rng);
  const auto d = bnn_forward(net, 50, rng);
  for (double v : d.y) CHECK(v == d.y[0]);
}

TEST_CASE("one-layer identity BNN is monotone in its single input") {
  MlpSettings s;
  s.layers = 1;
  s.activation = Activation::identity;
  s.noise_std = 0.0;
  s.weight_std = 1.0;
  Rng rng(8);
  const auto net = sample_bnn(s, 1, rng);
  const auto d = bnn_forward(net, 200, rng);
  const auto rx = brute_ranks(d.x);
  const auto ry = brute_ranks(d.y);
  const bool increasing = net.weights[0][0] > 0;
  for (std::size_t i = 0; i < d.n; ++i) CHECK(ry[i] == (increasing ? rx[i] : d.n + 1 - rx[i]));
}

TEST_CASE("BNN datasets replay from a seed") {
  auto space = make_space(HyperparameterSpace::desk());
  Rng r0(3);
  const auto psi = sample_hyperparameters(space, r0);
  Rng a(17), b(17);
  const auto da = sample_bnn_dataset(psi, 40, 3, a);
  const auto db = sample_bnn_dataset(psi, 40, 3, b);
  CHECK(da.x == db.x);
  CHECK(da.y == db.y);
}

TEST_CASE("very long lengthscale makes the GP nearly constant") {
  GpSettings s{2.0, 1e6, 0.0};
  Rng rng(6);
  const auto d = sample_gp(s, 100, 3, rng);
  const auto [lo, hi] = std::minmax_element(d.y.begin(), d.y.end());
  CHECK(*hi - *lo < 1e-2 * std::sqrt(2.0));
}

TEST_CASE("GP difference at identical inputs has variance twice the noise") {
  // Var(y1 - y2) = K11 + K22 - 2 K12 = 2 sigma^2 when x1 == x2.
  GpSettings s{1.0, 1.0, 0.01};
  const std::vector<double> x{0.3, -0.2, 0.3, -0.2};
  Rng rng(10);
  const int draws = 4000;
  double ss = 0.0;
  for (int i = 0; i < draws; ++i) {
    const auto y = sample_gp_targets(s, x, 2, 2, rng);
    ss += (y[0] - y[1]) * (y[0] - y[1]);
  }
  const double var = ss / draws;
  // chi-square with 4000 dof: relative sd sqrt(2/4000) ~ 2.2%
  CHECK(var == doctest::Approx(0.02).epsilon(0.1));
}

TEST_CASE("labelize matches the worked example") {
  const std::vector<double> y{0.1, 0.9, -0.5, 2.0};
  const std::vector<double> half{0.5};
  CHECK(ranks(y) == std::vector<std::size_t>{2, 3, 1, 4});
  CHECK(labels_from_bounds(y, half) == std::vector<std::uint16_t>{0, 1, 0, 1});
  const std::vector<double> two{-1.0, 1.0};
  CHECK(labels_from_bounds(two, half) == std::vector<std::uint16_t>{0, 1});
}

TEST_CASE("labels agree with a brute-force rank derivation") {
  Rng rng(77);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = std::size_t(uniform_int(rng, 2, 40));
    const std::size_t c = std::size_t(uniform_int(rng, 2, std::min<std::int64_t>(10, n)));
    std::vector<double> v(n);
    for (double& x : v) x = std::round(normal(rng) * 4.0) / 4.0;  // plenty of ties
    std::vector<double> bounds(c - 1);
    for (double& b : bounds) b = uniform(rng);
    const auto got = labels_from_bounds(v, bounds);
    const auto r = brute_ranks(v);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t expected = 0;
      for (double b : bounds)
        if (b < double(r[i]) / double(n)) ++expected;
      CHECK(got[i] == expected);
    }
  }
}

TEST_CASE("median bound splits into classes differing by at most one") {
  Rng rng(31);
  const std::vector<double> half{0.5};
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = std::size_t(uniform_int(rng, 2, 101));
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    const auto y = labels_from_bounds(v, half);
    const auto ones = std::size_t(std::count(y.begin(), y.end(), 1));
    const auto zeros = n - ones;
    CHECK((ones > zeros ? ones - zeros : zeros - ones) <= 1);
  }
}

TEST_CASE("class sizes follow the quantile widths") {
  Rng rng(32);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 97;
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    std::vector<double> bounds{uniform(rng), uniform(rng), uniform(rng)};
    std::sort(bounds.begin(), bounds.end());
    const auto y = labels_from_bounds(v, bounds);
    std::vector<double> edges{0.0};
    edges.insert(edges.end(), bounds.begin(), bounds.end());
    edges.push_back(1.0);
    for (std::size_t c = 0; c + 1 < edges.size(); ++c) {
      const double width = (edges[c + 1] - edges[c]) * double(n);
      const double size = double(std::count(y.begin(), y.end(), c));
      CHECK(std::abs(size - width) <= 1.0);
    }
  }
}

TEST_CASE("labelize without shuffling is monotone in rank") {
  Rng rng(33);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(30);
    for (double& x : v) x = normal(rng);
    const auto y = labelize(v, 4, rng, 0.0);
    const auto r = ranks(v);
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j)
        if (r[i] < r[j]) CHECK(y[i] <= y[j]);
    for (int c = 0; c < 4; ++c) CHECK(std::count(y.begin(), y.end(), c) > 0);
  }
}

TEST_CASE("label shuffling keeps the multiset of class sizes") {
  std::vector<double> v(50);
  Rng src(1);
  for (double& x : v) x = normal(src);
  Rng a(9), b(9);
  const auto plain = labelize(v, 5, a, 0.0);
  const auto shuffled = labelize(v, 5, b, 1.0);
  std::vector<long> ca, cb;
  for (int c = 0; c < 5; ++c) {
    ca.push_back(std::count(plain.begin(), plain.end(), c));
    cb.push_back(std::count(shuffled.begin(), shuffled.end(), c));
  }
  std::sort(ca.begin(), ca.end());
  std::sort(cb.begin(), cb.end());
  CHECK(ca == cb);
}

TEST_CASE("all-equal targets are unlabelable") {
  const std::vector<double> v(10, 1.0);
  Rng rng(1);
  CHECK_THROWS_AS(labelize(v, 2, rng, 0.0), UnlabelableError);
}

TEST_CASE("missing-value injection") {
  Rng rng(1);
  std::vector<double> x(400, 1.0);
  auto mask = inject_missing(x, 0.0, 0.5, rng);
  CHECK(std::count(mask.begin(), mask.end(), 1) == 0);
  CHECK(std::all_of(x.begin(), x.end(), [](double v) { return v == 1.0; }));

  mask = inject_missing(x, 1.0, 1.0, rng);
  CHECK(std::count(mask.begin(), mask.end(), 1) == 400);
  CHECK(std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; }));

  // Exact binomial mass of [60, 140] for Bin(400, 0.25).
  double mass = 0.0;
  for (int j = 60; j <= 140; ++j)
    mass += std::exp(std::lgamma(401.0) - std::lgamma(j + 1.0) - std::lgamma(401.0 - j) + j * std::log(0.25) +
                     (400 - j) * std::log(0.75));
  REQUIRE(mass >= 0.99);
  int inside = 0;
  for (int seed = 0; seed < 200; ++seed) {
    Rng r(seed);
    std::vector<double> y(400, 1.0);
    const auto m = inject_missing(y, 1.0, 0.25, r);
    const auto count = std::count(m.begin(), m.end(), 1);
    if (count >= 60 && count <= 140) ++inside;
  }
  CHECK(inside >= 198);
}

TEST_CASE("categorical features") {
  Rng src(3);
  std::vector<double> x(60 * 4);
  for (double& v : x) v = normal(src);
  const auto original = x;

  Rng r0(1);
  auto none = x;
  CHECK(categorize_features(none, 60, 4, 0.0, 0.0, 10, r0).empty());
  CHECK(none == original);

  Rng r1(2);
  auto binary = x;
  CHECK(categorize_features(binary, 60, 4, 1.0, 0.0, 2, r1).size() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    std::set<double> values;
    for (std::size_t r = 0; r < 60; ++r) values.insert(binary[r * 4 + c]);
    CHECK(values.size() == 2);
  }

  // Same seed, with and without shuffling: the bins are drawn identically and
  // only the category ids differ.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<double> col(60);
    for (std::size_t r = 0; r < 60; ++r) col[r] = x[r * 4];
    auto plain = col;
    auto shuffled = col;
    Rng ra(seed), rb(seed);
    categorize_features(plain, 60, 1, 1.0, 0.0, 6, ra);
    categorize_features(shuffled, 60, 1, 1.0, 1.0, 6, rb);
    std::map<double, int> hp, hs;
    for (std::size_t r = 0; r < 60; ++r) {
      ++hp[plain[r]];
      ++hs[shuffled[r]];
    }
    std::vector<int> cp, cs;
    for (auto [k, v] : hp) cp.push_back(v);
    for (auto [k, v] : hs) cs.push_back(v);
    std::sort(cp.begin(), cp.end());
    std::sort(cs.begin(), cs.end());
    CHECK(cp == cs);
  }
}

TEST_CASE("sampled datasets satisfy their invariants") {
  auto space = make_space(HyperparameterSpace::desk());
  Rng rng(123);
  for (int t = 0; t < 150; ++t) {
    const auto psi = sample_hyperparameters(space, rng);
    const std::size_t n = std::size_t(uniform_int(rng, 20, 120));
    const std::size_t k = std::size_t(uniform_int(rng, 1, 12));
    const auto ds = sample_dataset(psi, n, k, rng);
    REQUIRE(ds.x.size() == n * k);
    CHECK(ds.split_point >= 1);
    CHECK(ds.split_point < n);
    CHECK(ds.psi.size() == space->encoded_size());
    std::vector<int> counts(ds.num_classes);
    for (auto y : ds.y) {
      REQUIRE(y < ds.num_classes);
      ++counts[y];
    }
    for (int c : counts) CHECK(c > 0);
    for (std::size_t c = 0; c < k; ++c) {
      double sum = 0, ss = 0;
      int count = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = r * k + c;
        CHECK(std::isfinite(ds.x[i]));
        if (ds.mask[i]) {
          CHECK(ds.x[i] == 0.0f);
          continue;
        }
        sum += ds.x[i];
        ++count;
      }
      if (count == 0) continue;
      const double mean = sum / count;
      for (std::size_t r = 0; r < n; ++r)
        if (!ds.mask[r * k + c]) ss += (ds.x[r * k + c] - mean) * (ds.x[r * k + c] - mean);
      const double sd = std::sqrt(ss / count);
      CHECK(std::abs(mean) < 1e-6);
      if (sd > 0.0) CHECK(std::abs(sd - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("SCM-only prior never produces GP or BNN datasets") {
  auto space = make_space(HyperparameterSpace::desk());
  PriorConfig config;
  config.use_gp = false;
  config.use_bnn = false;
  Rng rng(8);
  for (int t = 0; t < 1000; ++t) {
    const auto psi = sample_hyperparameters(space, rng);
    CHECK(sample_dataset(psi, 16, 2, rng, config).family == Family::scm);
  }
}

TEST_CASE("family frequencies converge to the mixture weights") {
  auto base = HyperparameterSpace::desk();
  base.set(Hp::weight_dropout, MetaDistribution::fixed(0.0));
  auto space = make_space(base);
  // w = 2 and a false-weight of 1 for the SCM flag:
  // P(GP) = 1/3, P(SCM) = 2/3 * 1/2, P(BNN) = 2/3 * 1/2.
  Rng init(1);
  auto psi = sample_hyperparameters(space, init);
  const std::vector<double> w{2.0};
  const std::vector<double> flag{1.0};
  psi.set_params(Hp::gp_sampling_weight, w);
  psi.set_params(Hp::sample_scm, flag);
  const std::array<double, 3> expected{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  std::array<double, 3> observed{};
  const int draws = 10000;
  Rng rng(2);
  for (int t = 0; t < draws; ++t) ++observed[std::size_t(sample_dataset(psi, 12, 2, rng).family)];
  double chi2 = 0.0;
  for (int i = 0; i < 3; ++i) chi2 += std::pow(observed[i] - draws * expected[i], 2) / (draws * expected[i]);
  // 2 degrees of freedom: P(chi2 > 13.816) = exp(-13.816 / 2) = 1e-3
  CHECK(std::exp(-chi2 / 2.0) > 1e-3);
}

TEST_CASE("dataset sampling replays from a seed and round-trips through a shard") {
  auto space = make_space(HyperparameterSpace::desk());
  PriorSource source(space, {}, 64, 1, 8);
  std::vector<SyntheticDataset> first, second;
  for (std::uint64_t i = 0; i < 5; ++i) {
    Rng a(derive_seed(7, i)), b(derive_seed(7, i));
    first.push_back(source.sample(a));
    second.push_back(source.sample(b));
  }
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].x == second[i].x);
    CHECK(first[i].y == second[i].y);
  }
  const auto path = std::filesystem::temp_directory_path() / "tabpfn_test_shard.pfnd";
  write_shard(path, first);
  const auto loaded = read_shard(path);
  REQUIRE(loaded.size() == first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(loaded[i].n == first[i].n);
    CHECK(loaded[i].k == first[i].k);
    CHECK(loaded[i].num_classes == first[i].num_classes);
    CHECK(loaded[i].split_point == first[i].split_point);
    CHECK(loaded[i].x == first[i].x);
    CHECK(loaded[i].mask == first[i].mask);
    CHECK(loaded[i].y == first[i].y);
    CHECK(loaded[i].psi == first[i].psi);
  }
  std::filesystem::remove(path);
}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "reference_model.hpp"
#include "tabpfn/errors.hpp"
#include "tabpfn/model/transformer.hpp"
#include "tabpfn/numerics/ops.hpp"

using namespace tabpfn;
using namespace tabpfn::model;
using numerics::Tensor;

namespace {

struct Task {
  std::size_t n_train, n_query, k, classes;
  std::vector<float> x;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint16_t> y;

  TaskView view() const { return {n_train, n_query, k, classes, x, mask, y}; }
};

Task random_task(std::size_t n_train, std::size_t n_query, std::size_t k, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  Task t{n_train, n_query, k, classes, {}, {}, {}};
  t.x.resize((n_train + n_query) * k);
  for (float& v : t.x) v = nd(rng);
  t.mask.assign(t.x.size(), 0);
  t.mask[1] = 1;
  t.x[1] = 0.0f;
  for (std::size_t i = 0; i < n_train; ++i) t.y.push_back(static_cast<std::uint16_t>(i % classes));
  return t;
}

// A model with a non-zero head so that logits actually depend on the input.
Transformer random_model(const ModelConfig& c, std::uint64_t seed) {
  Transformer m(c, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<float> nd(0.0f, 0.5f);
  auto params = m.parameters();
  for (std::size_t i = params.size() - 2; i < params.size(); ++i)
    for (float& v : params[i].mutable_data()) v = nd(rng);
  return m;
}

ModelConfig small_config(std::size_t psi = 0) {
  ModelConfig c;
  c.layers = 2;
  c.embedding = 16;
  c.hidden = 32;
  c.heads = 4;
  c.psi_size = psi;
  return c;
}

std::vector<float> query_row(const Tensor& logits, std::size_t r) {
  return {logits.data().begin() + r * logits.cols(), logits.data().begin() + (r + 1) * logits.cols()};
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("tokenize layout") {
  ModelConfig c = ModelConfig::desk();
  Task t = random_task(3, 2, 100, 3, 1);
  auto b = tokenize(t.view(), {}, c);
  CHECK(b.tokens.rows() == 5);
  CHECK(b.tokens.cols() == 210);
  // k = F_max: rescale factor 1, no padding
  CHECK(b.tokens.at(0, 0) == t.x[0]);
  CHECK(b.tokens.at(0, 99) == t.x[99]);
  CHECK(b.tokens.at(0, 1) == 0.0f);  // masked cell
  CHECK(b.tokens.at(0, 101) == 1.0f);  // its mask channel
  for (std::size_t r = 3; r < 5; ++r)
    for (std::size_t j = 200; j < 210; ++j) CHECK(b.tokens.at(r, j) == 0.0f);  // query label channel
  CHECK(b.tokens.at(1, 200 + 1) == 1.0f);

  Task small = random_task(3, 2, 4, 2, 2);
  auto bs = tokenize(small.view(), {}, c);
  CHECK(bs.tokens.at(0, 0) == doctest::Approx(small.x[0] * 25.0f));
  CHECK(bs.tokens.at(0, 4) == 0.0f);

  ModelConfig styled = ModelConfig::desk(3);
  const std::vector<float> psi{0.1f, 0.2f, 0.3f};
  CHECK(tokenize(small.view(), psi, styled).sequence_length() == 1 + 3 + 2);

  Task wide = random_task(3, 2, 101, 2, 3);
  CHECK_THROWS_AS(tokenize(wide.view(), {}, c), CapacityError);
  Task many = random_task(12, 2, 2, 11, 3);
  CHECK_THROWS_AS(tokenize(many.view(), {}, c), CapacityError);
}

TEST_CASE("attention mask") {
  const auto m = build_attention_mask(3, 2, true);
  const std::size_t s = 6;
  auto visible = [&](std::size_t i) {
    std::size_t n = 0;
    for (std::size_t j = 0; j < s; ++j) n += m[i * s + j] == 0;
    return n;
  };
  CHECK(visible(0) == 4);  // style sees itself and the train rows
  for (std::size_t i = 1; i <= 3; ++i) CHECK(visible(i) == 4);
  for (std::size_t i = 4; i < 6; ++i) CHECK(visible(i) == 5);
  CHECK(m[4 * s + 5] == 1);
  CHECK(m[5 * s + 4] == 1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(m[i * s + 4] == 1);  // no position attends to a query except itself
    CHECK(m[i * s + 5] == 1);
  }
  const auto single = build_attention_mask(7, 1, false);
  std::size_t n = 0;
  for (std::size_t j = 0; j < 8; ++j) n += single[7 * 8 + j] == 0;
  CHECK(n == 8);
}

TEST_CASE("zero head gives uniform probabilities") {
  Transformer m(small_config(), 3);
  Task t = random_task(5, 3, 3, 3, 4);
  numerics::NoGradGuard g;
  const Tensor logits = m.forward(tokenize(t.view(), {}, m.config()));
  const auto p = apply_temperature(logits, 1.0f, 3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(p[r * 10 + c] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    for (std::size_t c = 3; c < 10; ++c) CHECK(p[r * 10 + c] < 1e-7f);
  }
}

TEST_CASE("query logits ignore other queries and train order") {
  const auto c = small_config(4);
  Transformer m = random_model(c, 5);
  const std::vector<float> psi{0.2f, 0.9f, 0.4f, 0.1f};
  numerics::NoGradGuard g;
  Task t = random_task(8, 4, 3, 3, 6);
  const Tensor base = m.forward(tokenize(t.view(), psi, c));

  // duplicate query rows give identical logits
  Task dup = t;
  std::copy(dup.x.begin() + 8 * 3, dup.x.begin() + 9 * 3, dup.x.begin() + 9 * 3);
  const Tensor dl = m.forward(tokenize(dup.view(), psi, c));
  CHECK(max_abs_diff(query_row(dl, 0), query_row(dl, 1)) == 0.0f);

  // drop all queries but the first
  Task one = t;
  one.n_query = 1;
  one.x.resize(9 * 3);
  one.mask.resize(9 * 3);
  const Tensor ol = m.forward(tokenize(one.view(), psi, c));
  CHECK(max_abs_diff(query_row(ol, 0), query_row(base, 0)) <= 1e-5f);

  // reverse the query order and change the other queries' values
  Task rev = t;
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t j = 0; j < 3; ++j) rev.x[(8 + q) * 3 + j] = t.x[(8 + 3 - q) * 3 + j];
  const Tensor rl = m.forward(tokenize(rev.view(), psi, c));
  for (std::size_t q = 0; q < 4; ++q) CHECK(max_abs_diff(query_row(rl, q), query_row(base, 3 - q)) <= 1e-5f);
  Task changed = t;
  for (std::size_t j = 0; j < 3; ++j) changed.x[(8 + 2) * 3 + j] += 5.0f;
  const Tensor cl = m.forward(tokenize(changed.view(), psi, c));
  CHECK(max_abs_diff(query_row(cl, 0), query_row(base, 0)) <= 1e-5f);

  // permute train rows together with their labels
  Task perm = t;
  std::vector<std::size_t> order{3, 7, 0, 5, 1, 6, 2, 4};
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      perm.x[i * 3 + j] = t.x[order[i] * 3 + j];
      perm.mask[i * 3 + j] = t.mask[order[i] * 3 + j];
    }
    perm.y[i] = t.y[order[i]];
  }
  const Tensor pl = m.forward(tokenize(perm.view(), psi, c));
  for (std::size_t q = 0; q < 4; ++q) CHECK(max_abs_diff(query_row(pl, q), query_row(base, q)) <= 1e-5f);
}

TEST_CASE("loss values") {
  std::vector<float> sharp(2 * 10, -20.0f);
  sharp[0 * 10 + 1] = 20.0f;
  sharp[1 * 10 + 0] = 20.0f;
  const std::vector<std::uint16_t> targets{1, 0};
  CHECK(loss(Tensor::from({2, 10}, sharp), targets, 2).item() < 1e-6f);
  const Tensor flat = Tensor::zeros({2, 10});
  CHECK(loss(flat, targets, 2).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(loss(flat, targets, 10).item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  const std::vector<std::uint16_t> bad{2, 0};
  CHECK_THROWS_AS(loss(flat, bad, 2), ContractError);
}

TEST_CASE("temperature") {
  const std::vector<float> v{1.0f, 2.0f, 0.5f, 0, 0, 0, 0, 0, 0, 0};
  const Tensor logits = Tensor::from({1, 10}, v);
  const auto plain = apply_temperature(logits, 1.0f, 3);
  double total = 0.0;
  for (int i = 0; i < 3; ++i) total += std::exp(double(v[i]));
  for (int i = 0; i < 3; ++i) CHECK(plain[i] == doctest::Approx(std::exp(double(v[i])) / total).epsilon(1e-6));
  const auto hot = apply_temperature(logits, 1e6f, 3);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(hot[i] - 1.0f / 3.0f) < 1e-5f);
  const auto sharp = apply_temperature(logits, 0.5f, 3);
  CHECK(sharp[1] > plain[1]);
  double s = 0.0;
  for (float p : sharp) s += p;
  CHECK(std::abs(s - 1.0) < 1e-6);
  CHECK_THROWS_AS(apply_temperature(logits, 0.0f, 3), ContractError);
  CHECK_THROWS_AS(apply_temperature(logits, -1.0f, 3), ContractError);
}

TEST_CASE("probabilities are normalized and respect the class mask") {
  Transformer m = random_model(small_config(), 9);
  Task t = random_task(10, 6, 5, 4, 10);
  numerics::NoGradGuard g;
  const auto p = apply_temperature(m.forward(tokenize(t.view(), {}, m.config())), 0.8f, 4);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 10; ++c) s += p[r * 10 + c];
    CHECK(std::abs(s - 1.0) < 1e-6);
    for (std::size_t c = 4; c < 10; ++c) CHECK(p[r * 10 + c] < 1e-7f);
  }
}

TEST_CASE("end-to-end gradients of a 2-layer model match finite differences") {
  ModelConfig c;
  c.layers = 2;
  c.embedding = 8;
  c.hidden = 12;
  c.heads = 2;
  c.max_features = 4;
  c.max_classes = 3;
  c.psi_size = 3;
  const std::vector<std::uint16_t> targets{0, 2, 1};
  const std::vector<float> psi{0.3f, 0.6f, 0.9f};

  for (std::uint64_t seed : {21u, 23u, 25u}) {
    Transformer m = random_model(c, seed);
    Task t = random_task(5, 3, 3, 3, seed + 1);
    auto batch = tokenize(t.view(), psi, c);
    batch.psi.set_requires_grad(true);
    const Tensor l = loss(m.forward(batch), targets, 3);
    numerics::backward(l);

    // the oracle forward must agree with the library before its differences mean anything
    testing::RefParams ref = testing::RefParams::from(m);
    std::vector<double> psi_d(psi.begin(), psi.end());
    auto ref_loss = [&] {
      return testing::reference_loss(testing::reference_logits(ref, c, batch, psi_d), c.max_classes, targets, 3);
    };
    REQUIRE(std::abs(ref_loss() - double(l.item())) < 1e-5);

    std::vector<std::pair<double, double>> pairs;  // analytic, numeric
    const double eps = 1e-3;
    auto probe = [&](double& slot, float analytic) {
      const double saved = slot;
      slot = saved + eps;
      const double up = ref_loss();
      slot = saved - eps;
      const double down = ref_loss();
      slot = saved;
      pairs.emplace_back(analytic, (up - down) / (2 * eps));
    };
    const auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < ref.p[i].size(); ++j) probe(ref.p[i][j], params[i].grad()[j]);
    for (std::size_t j = 0; j < psi_d.size(); ++j) probe(psi_d[j], batch.psi.grad()[j]);

    double scale = 0.0, worst = 0.0;
    for (const auto& [a, n] : pairs) scale = std::max(scale, std::abs(n));
    for (const auto& [a, n] : pairs) {
      const double denom = std::max({std::abs(a), std::abs(n), 1e-2 * scale, 1e-12});
      worst = std::max(worst, std::abs(a - n) / denom);
    }
    INFO("seed " << seed << ", " << pairs.size() << " entries");
    CHECK(worst < 1e-2);
  }
}

TEST_CASE("checkpoint round-trip gives bit-identical logits") {
  const auto c = small_config(4);
  Checkpoint ckpt{random_model(c, 31), "{\"space\":1}", TuningRecord{{0.1f, 0.2f, 0.3f, 0.4f}, 0.7f}};
  const auto path = std::filesystem::temp_directory_path() / "tabpfn_test.pfnc";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(back.space_json == ckpt.space_json);
  REQUIRE(back.tuning.has_value());
  CHECK(back.tuning->psi == ckpt.tuning->psi);
  CHECK(back.tuning->temperature == 0.7f);
  Task t = random_task(6, 3, 4, 3, 32);
  numerics::NoGradGuard g;
  const auto a = ckpt.model.forward(tokenize(t.view(), ckpt.tuning->psi, c));
  const auto b = back.model.forward(tokenize(t.view(), back.tuning->psi, c));
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("configuration and numerical errors") {
  ModelConfig bad = small_config();
  bad.heads = 3;
  CHECK_THROWS_AS(Transformer(bad, 0), ConfigError);
  Transformer m(small_config(), 1);
  m.parameters()[0].mutable_data()[0] = std::numeric_limits<float>::infinity();
  Task t = random_task(4, 2, 2, 2, 1);
  numerics::NoGradGuard g;
  CHECK_THROWS_AS(m.forward(tokenize(t.view(), {}, m.config())), NumericalError);
}

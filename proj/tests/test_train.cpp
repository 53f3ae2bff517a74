#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "json.hpp"
#include "tabpfn/errors.hpp"
#include "tabpfn/train/trainer.hpp"

using namespace tabpfn;
using namespace tabpfn::train;

namespace {

TrainingConfig tiny_config() {
  TrainingConfig c;
  c.steps = 50;
  c.batch_size = 4;
  c.n = 40;
  c.k_min = 1;
  c.k_max = 4;
  c.lr = 1e-3;
  c.eval_every = 0;
  c.prior = "toy_linear";
  c.use_gp = false;
  c.use_scm = false;
  c.model.layers = 2;
  c.model.embedding = 16;
  c.model.hidden = 32;
  c.model.heads = 2;
  c.model.max_features = 10;
  return c;
}

std::vector<float> flat_parameters(const model::Transformer& m) {
  std::vector<float> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

// Labels are sign(x) flipped by a binary psi; the train part is a single row,
// so only psi tells the model which way round the task is.
class SignSource : public prior::DatasetSource {
 public:
  explicit SignSource(std::optional<float> fixed = std::nullopt) : fixed_(fixed) {}

  prior::SyntheticDataset sample(prior::Rng& rng) const override {
    prior::SyntheticDataset ds;
    ds.n = 24;
    ds.k = 1;
    ds.num_classes = 2;
    ds.split_point = 1;
    const float psi = fixed_ ? *fixed_ : (prior::bernoulli(rng, 0.5) ? 1.0f : 0.0f);
    for (std::size_t i = 0; i < ds.n; ++i) {
      const float x = static_cast<float>(prior::normal(rng, 0.0, 1.0));
      ds.x.push_back(x);
      ds.y.push_back(static_cast<std::uint16_t>((x > 0.0f) != (psi > 0.5f)));
    }
    ds.mask.assign(ds.n, 0);
    ds.psi = {psi};
    return ds;
  }
  std::size_t psi_size() const override { return 1; }

 private:
  std::optional<float> fixed_;
};

class NanSource : public prior::DatasetSource {
 public:
  prior::SyntheticDataset sample(prior::Rng&) const override {
    prior::SyntheticDataset ds;
    ds.n = 6;
    ds.k = 1;
    ds.num_classes = 2;
    ds.split_point = 3;
    ds.x.assign(6, std::numeric_limits<float>::quiet_NaN());
    ds.mask.assign(6, 0);
    ds.y = {0, 1, 0, 1, 0, 1};
    return ds;
  }
  std::size_t psi_size() const override { return 0; }
};

}  // namespace

TEST_CASE("config file parsing") {
  const auto c = TrainingConfig::parse(
      "# pilot run\n"
      "steps = 300\n"
      "batch_size=4   # datasets per step\n"
      "lr = 3e-4\n"
      "lr_candidates = 0.001, 0.0003,0.0001\n"
      "prior = gp_ablation\n"
      "median_split = true\n"
      "conditional = yes\n"
      "layers = 3\n"
      "\n");
  CHECK(c.steps == 300);
  CHECK(c.batch_size == 4);
  CHECK(c.lr == doctest::Approx(3e-4));
  CHECK(c.lr_candidates == std::vector<double>{1e-3, 3e-4, 1e-4});
  CHECK(c.prior == "gp_ablation");
  CHECK(c.median_split);
  CHECK(c.conditional);
  CHECK(c.model.layers == 3);
  CHECK(c.model.embedding == model::ModelConfig{}.embedding);

  CHECK_THROWS_AS(TrainingConfig::parse("stepz = 3\n"), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::parse("steps = -3\n"), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::parse("lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::parse("steps\n"), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::parse("k_min = 5\nk_max = 3\n"), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::parse("heads = 3\n"), ConfigError);
  CHECK_THROWS_AS(load_space("no_such_prior"), ConfigError);
}

TEST_CASE("warmup then cosine decay") {
  TrainingConfig c;
  c.steps = 100;
  c.lr = 1.0;
  c.warmup_fraction = 0.05;
  CHECK(scheduled_lr(c, 0) == doctest::Approx(0.2));
  CHECK(scheduled_lr(c, 4) == doctest::Approx(1.0));
  CHECK(scheduled_lr(c, 5) == doctest::Approx(1.0));
  // halfway through the decay phase
  CHECK(scheduled_lr(c, 5 + 95 / 2) == doctest::Approx(0.5 * (1.0 + std::cos(std::numbers::pi * 47.0 / 95.0))));
  CHECK(scheduled_lr(c, 99) < 0.01);
}

TEST_CASE("zero steps returns the initial checkpoint unchanged") {
  auto c = tiny_config();
  auto source = make_source(c);
  model::Checkpoint init{model::Transformer(c.model, 7), "space", model::TuningRecord{{}, 1.5f}};
  const auto before = flat_parameters(init.model);
  c.steps = 0;
  const auto r = meta_train(c, *source, 1, init);
  CHECK(flat_parameters(r.checkpoint.model) == before);
  CHECK(r.checkpoint.space_json == "space");
  CHECK(r.log.empty());

  // training from an init never writes through to it
  c.steps = 3;
  const auto trained = meta_train(c, *source, 1, init);
  CHECK(flat_parameters(init.model) == before);
  CHECK(flat_parameters(trained.checkpoint.model) != before);
}

TEST_CASE("fixed seed gives bit-identical parameters, with and without sampling workers") {
  auto c = tiny_config();
  auto source = make_source(c);
  const auto a = meta_train(c, *source, 42);
  const auto b = meta_train(c, *source, 42);
  CHECK(flat_parameters(a.checkpoint.model) == flat_parameters(b.checkpoint.model));
  c.workers = 3;
  const auto d = meta_train(c, *source, 42);
  CHECK(flat_parameters(a.checkpoint.model) == flat_parameters(d.checkpoint.model));
  const auto e = meta_train(c, *source, 43);
  CHECK(flat_parameters(a.checkpoint.model) != flat_parameters(e.checkpoint.model));
}

TEST_CASE("training log records and periodic checkpoints") {
  auto c = tiny_config();
  c.steps = 6;
  c.eval_every = 3;
  c.eval_datasets = 4;
  c.checkpoint_every = 3;
  const auto dir = std::filesystem::temp_directory_path() / "tabpfn_train_test";
  std::filesystem::create_directories(dir);
  c.log_path = dir / "log.jsonl";
  c.checkpoint_path = dir / "model.pfnc";
  auto source = make_source(c);
  const auto r = meta_train(c, *source, 5);

  std::ifstream in(c.log_path);
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 6);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    CHECK(lines[i]["step"] == i + 1);
    CHECK(lines[i].contains("loss"));
    CHECK(lines[i]["lr"].get<double>() == doctest::Approx(scheduled_lr(c, i)));
    CHECK(lines[i].contains("elapsed_ms"));
  }
  CHECK(lines[2].contains("eval_loss"));
  CHECK_FALSE(lines[3].contains("eval_loss"));
  CHECK(r.final_eval_loss.has_value());
  CHECK(std::filesystem::exists(dir / "model.pfnc.step3"));
  CHECK(std::filesystem::exists(dir / "model.pfnc.step6"));
  const auto back = model::load_checkpoint(dir / "model.pfnc.step6");
  CHECK(flat_parameters(back.model) == flat_parameters(r.checkpoint.model));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sustained non-finite losses abort training") {
  auto c = tiny_config();
  c.nan_patience = 4;
  NanSource source;
  try {
    meta_train(c, source, 1);
    FAIL("expected an abort");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 4") != std::string::npos);
  }
}

TEST_CASE("learning-rate selection") {
  auto c = tiny_config();
  c.pilot_steps = 20;
  auto source = make_source(c);
  SUBCASE("a single candidate is returned without pilots") {
    const auto s = learning_rate_selection({3e-4}, c, *source, 1);
    CHECK(s.lr == 3e-4);
    CHECK(s.pilots.empty());
  }
  SUBCASE("paper candidates; the choice has the lowest smoothed pilot loss") {
    const auto s = learning_rate_selection({1e-3, 3e-4, 1e-4}, c, *source, 1);
    REQUIRE(s.pilots.size() == 3);
    double best = 1e9;
    double best_lr = 0.0;
    for (const auto& [lr, loss] : s.pilots) {
      REQUIRE(loss.has_value());
      if (*loss < best) best = *loss, best_lr = lr;
    }
    CHECK(s.lr == best_lr);
  }
  SUBCASE("every pilot diverging is an error") {
    NanSource nan;
    c.nan_patience = 2;
    CHECK_THROWS_AS(learning_rate_selection({1e-3, 1e-4}, c, nan, 1), NumericalError);
  }
}

TEST_CASE("frozen-stream loss falls on every seed") {
  auto c = tiny_config();
  c.steps = 150;
  c.eval_every = 150;
  c.eval_datasets = 16;
  auto source = make_source(c);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = meta_train(c, *source, seed);
    REQUIRE(r.initial_eval_loss.has_value());
    REQUIRE(r.final_eval_loss.has_value());
    INFO("seed " << seed << ": " << *r.initial_eval_loss << " -> " << *r.final_eval_loss);
    CHECK(*r.final_eval_loss < *r.initial_eval_loss);
  }
}

TEST_CASE("a style-conditioned model does better with the true psi") {
  auto c = tiny_config();
  c.steps = 300;
  c.model.psi_size = 1;
  SignSource source;
  const auto r = meta_train(c, source, 9);

  c.eval_datasets = 32;
  for (float truth : {0.0f, 1.0f}) {
    SignSource at(truth);
    auto stream = frozen_stream(c, at);
    const double matched = evaluate(r.checkpoint.model, stream);
    for (auto& ds : stream) ds.psi = {1.0f - truth};
    const double mismatched = evaluate(r.checkpoint.model, stream);
    INFO("psi " << truth << ": true " << matched << ", mismatched " << mismatched);
    CHECK(matched < mismatched);
  }
}

TEST_CASE("desk model on the linear toy prior gets below 0.35 held-out loss") {
  TrainingConfig c;
  c.steps = 2000;
  c.batch_size = 8;
  c.n = 60;
  c.k_min = 1;
  c.k_max = 5;
  c.lr = 3e-4;
  c.prior = "toy_linear";
  c.use_gp = false;
  c.use_scm = false;
  c.eval_every = 500;
  c.eval_datasets = 64;
  auto source = make_source(c);
  const auto r = meta_train(c, *source, 2022);
  REQUIRE(r.final_eval_loss.has_value());
  INFO("held-out loss " << *r.initial_eval_loss << " -> " << *r.final_eval_loss);
  CHECK(*r.initial_eval_loss == doctest::Approx(std::log(2.0)).epsilon(0.01));
  CHECK(*r.final_eval_loss < 0.35);
}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "tabpfn/errors.hpp"
#include "tabpfn/eval/experiments.hpp"
#include "tabpfn/eval/io.hpp"
#include "tabpfn/eval/metrics.hpp"
#include "tabpfn/eval/oracle.hpp"
#include "tabpfn/eval/plot.hpp"

using namespace tabpfn;
using namespace tabpfn::eval;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tabpfn_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kSchema = R"({"target": "label", "columns": [
  {"name": "a", "type": "numeric"}, {"name": "color", "type": "categorical"},
  {"name": "b", "type": "numeric"}, {"name": "label", "type": "categorical"}]})";

// brute-force pairwise AUC: fraction of (pos, neg) pairs ordered correctly
double brute_auc(const std::vector<std::uint8_t>& pos, const std::vector<double>& s) {
  double good = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = 0; j < pos.size(); ++j)
      if (pos[i] && !pos[j]) {
        total += 1.0;
        good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return good / total;
}

model::Checkpoint small_checkpoint() {
  model::ModelConfig c;
  c.layers = 1;
  c.embedding = 16;
  c.hidden = 32;
  c.heads = 2;
  c.max_features = 8;
  c.max_classes = 4;
  return {model::Transformer(c, 5), "", std::nullopt};
}

}  // namespace

TEST_CASE("csv with a schema round-trips through write_dataset") {
  const auto dir = temp_dir("roundtrip");
  write_file(dir / "d.schema.json", kSchema);
  write_file(dir / "d.csv", "a,color,b,label\n1.5,red,NA,yes\n-2,blue,3,no\n,red,4.25,yes\n7,\"gr,een\",5,no\n");
  const auto d = load_dataset(dir / "d.csv", dir / "d.schema.json");
  CHECK(d.n == 4);
  CHECK(d.k == 3);
  CHECK(d.class_names == std::vector<std::string>{"no", "yes"});
  CHECK(d.y == std::vector<std::uint16_t>{1, 0, 1, 0});
  CHECK(d.categorical == std::vector<bool>{false, true, false});
  CHECK(d.categories[1] == std::vector<std::string>{"red", "blue", "gr,een"});
  CHECK(d.mask[0 * 3 + 2] == 1);
  CHECK(d.mask[2 * 3 + 0] == 1);
  CHECK(d.x[3 * 3 + 1] == 2.0f);

  write_dataset(dir / "e.csv", d, "label");
  const auto e = load_dataset(dir / "e.csv", Schema::parse(kSchema));
  CHECK(e.x == d.x);
  CHECK(e.mask == d.mask);
  CHECK(e.y == d.y);
  CHECK(e.categories == d.categories);
  CHECK(Schema::parse(schema_of(d, "label").to_json()).columns.size() == 4);
}

TEST_CASE("malformed csv errors name the line") {
  const auto dir = temp_dir("errors");
  write_file(dir / "s.json", kSchema);
  write_file(dir / "ragged.csv", "a,color,b,label\n1,red,2,yes\n3,red,yes\n");
  write_file(dir / "badnum.csv", "a,color,b,label\n1,red,2,yes\n3,red,x7,no\n");
  write_file(dir / "nolabel.csv", "a,color,b,label\n1,red,2,\n");
  for (const char* f : {"ragged.csv", "badnum.csv"}) {
    try {
      load_dataset(dir / f, dir / "s.json");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(std::string(f) + ":3:") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(load_dataset(dir / "nolabel.csv", dir / "s.json"), ParseError);
  CHECK_THROWS_AS(Schema::parse(R"({"target":"y","columns":[{"name":"y","type":"text"}]})"), ParseError);
}

TEST_CASE("an all-missing column is dropped with a warning") {
  const auto dir = temp_dir("allna");
  write_file(dir / "s.json", kSchema);
  write_file(dir / "d.csv", "a,color,b,label\n1,red,NA,yes\n2,blue,,no\n");
  const auto d = load_dataset(dir / "d.csv", dir / "s.json");
  CHECK(d.k == 2);
  CHECK(d.feature_names == std::vector<std::string>{"a", "color"});
  CHECK(d.warnings.size() == 1);
}

TEST_CASE("split is seeded, halves the rows and keeps every class in train") {
  Dataset d;
  d.n = 41;
  d.k = 1;
  for (std::size_t i = 0; i < d.n; ++i) {
    d.x.push_back(float(i));
    d.y.push_back(i == 40 ? 2 : std::uint16_t(i % 2));
  }
  d.mask.assign(d.n, 0);
  d.class_names = {"a", "b", "rare"};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split(d, seed, 0.5);
    CHECK(s.task.n_train == 21);  // round(41 * 0.5) = 20.5 rounds away from zero
    CHECK(s.task.n_test == 20);
    CHECK(std::count(s.task.y_train.begin(), s.task.y_train.end(), 2) == 1);
    std::set<std::size_t> all(s.train_rows.begin(), s.train_rows.end());
    all.insert(s.test_rows.begin(), s.test_rows.end());
    CHECK(all.size() == 41);
    const auto again = split(d, seed, 0.5);
    CHECK(again.train_rows == s.train_rows);
  }
  CHECK(split(d, 1, 0.5).train_rows != split(d, 2, 0.5).train_rows);
}

TEST_CASE("roc auc") {
  const std::vector<std::uint8_t> pos{0, 0, 1, 1};
  CHECK(roc_auc_binary(pos, std::vector<double>{0.1, 0.4, 0.35, 0.8}) == doctest::Approx(0.75));
  CHECK(roc_auc_binary(pos, std::vector<double>{0.3, 0.3, 0.3, 0.3}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(roc_auc_binary(std::vector<std::uint8_t>{1, 1}, std::vector<double>{0.1, 0.2}), ContractError);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> p;
  std::vector<double> s, t;
  for (int i = 0; i < 200; ++i) {
    p.push_back(u(rng) < 0.4);
    s.push_back(std::round(u(rng) * 20.0) / 20.0 + 0.3 * p.back());  // ties included
    t.push_back(std::exp(3.0 * s.back()) - 5.0);
  }
  const double a = roc_auc_binary(p, s);
  CHECK(a == doctest::Approx(brute_auc(p, s)).epsilon(1e-12));
  CHECK(roc_auc_binary(p, t) == doctest::Approx(a).epsilon(1e-12));

  // three classes against an independent pairwise enumeration
  std::vector<std::uint16_t> y;
  std::vector<float> probs;
  for (int i = 0; i < 90; ++i) {
    y.push_back(std::uint16_t(i % 3));
    float q[3] = {float(u(rng)), float(u(rng)), float(u(rng))};
    q[y.back()] += 0.5f;
    const float z = q[0] + q[1] + q[2];
    for (float v : q) probs.push_back(v / z);
  }
  double want = 0.0;
  for (int a1 = 0; a1 < 3; ++a1)
    for (int b1 = a1 + 1; b1 < 3; ++b1) {
      double pair = 0.0;
      for (int dir = 0; dir < 2; ++dir) {
        const int c = dir ? b1 : a1, o = dir ? a1 : b1;
        std::vector<std::uint8_t> pp;
        std::vector<double> ss;
        for (std::size_t r = 0; r < y.size(); ++r)
          if (y[r] == c || y[r] == o) pp.push_back(y[r] == c), ss.push_back(probs[r * 3 + c]);
        pair += brute_auc(pp, ss) / 2.0;
      }
      want += pair / 3.0;
    }
  CHECK(roc_auc_ovo(y, probs, 3) == doctest::Approx(want).epsilon(1e-9));

  // an absent class is skipped, a single present class is an error
  const std::vector<std::uint16_t> y2{0, 0, 2, 2};
  const std::vector<float> p2{.9f, .05f, .05f, .6f, .2f, .2f, .2f, .2f, .6f, .3f, .1f, .6f};
  CHECK(roc_auc_ovo(y2, p2, 3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(roc_auc_ovo(std::vector<std::uint16_t>{1, 1}, std::vector<float>{.5f, .5f, .5f, .5f}, 2),
                  ContractError);
}

TEST_CASE("cross entropy and accuracy") {
  const std::vector<std::uint16_t> y{0, 1};
  const std::vector<float> p{0.8f, 0.2f, 0.5f, 0.5f};
  CHECK(cross_entropy(y, p, 2) == doctest::Approx(-(std::log(0.8) + std::log(0.5)) / 2).epsilon(1e-6));
  CHECK(accuracy(y, p, 2) == doctest::Approx(0.5));  // the tie goes to class 0
  CHECK(cross_entropy(std::vector<std::uint16_t>{1}, std::vector<float>{1.0f, 0.0f}, 2) ==
        doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("exact posterior predictive on a two-hypothesis prior") {
  const auto prior = DiscretePrior::sign_pair(0.1);
  const std::vector<float> x{1.0f};
  const std::vector<std::uint16_t> y{1};
  const auto post = posterior(prior, x, y);
  CHECK(post[0] == doctest::Approx(0.9));
  CHECK(post[1] == doctest::Approx(0.1));
  const std::vector<float> q{2.0f};
  CHECK(exact_ppd(prior, x, y, q)[1] == doctest::Approx(0.82));
  const auto empty = exact_ppd(prior, {}, {}, q);
  CHECK(empty[0] == doctest::Approx(0.5));
  CHECK(empty[1] == doctest::Approx(0.5));

  // noiseless hypotheses that disagree with the data leave no mass
  const auto hard = DiscretePrior::sign_pair(0.0);
  const std::vector<float> x2{1.0f, -1.0f};
  const std::vector<std::uint16_t> y2{1, 1};
  CHECK_THROWS_AS(posterior(hard, x2, y2), ContractError);
}

TEST_CASE("four half-planes against direct enumeration") {
  const auto prior = DiscretePrior::four_half_planes(0.1);
  DiscretePriorSource src(prior, 2, 12);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    prior::Rng rng(seed);
    const auto ds = src.sample(rng);
    CHECK(ds.split_point >= 1);
    CHECK(ds.split_point < ds.n);
    const std::size_t nt = ds.split_point;
    // hypotheses in order: x0 > 0, x0 < 0, x1 > 0, x1 < 0
    double w[4];
    for (int h = 0; h < 4; ++h) {
      w[h] = 0.25;
      for (std::size_t r = 0; r < nt; ++r) {
        const float v = ds.x[r * 2 + h / 2];
        const bool up = (h % 2 == 0) ? v > 0 : v < 0;
        w[h] *= (ds.y[r] == 1) == up ? 0.9 : 0.1;
      }
    }
    const double z = w[0] + w[1] + w[2] + w[3];
    double p1 = 0.0;
    for (int h = 0; h < 4; ++h) {
      const float v = ds.x[nt * 2 + h / 2];
      const bool up = (h % 2 == 0) ? v > 0 : v < 0;
      p1 += w[h] / z * (up ? 0.9 : 0.1);
    }
    const auto xs = std::span<const float>(ds.x);
    const auto got = exact_ppd(prior, xs.first(nt * 2), std::span<const std::uint16_t>(ds.y).first(nt),
                               xs.subspan(nt * 2, 2));
    CHECK(got[1] == doctest::Approx(p1).epsilon(1e-12));
    CHECK(got[0] + got[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("aggregation ranks, ties and jsonl recomputation") {
  std::vector<ResultRecord> recs;
  auto add = [&](const std::string& ds, const std::string& m, std::uint64_t seed, double v) {
    recs.push_back({ds, m, seed, "roc_auc", v, 1.0, "h", ""});
  };
  for (std::uint64_t s = 0; s < 3; ++s) {
    add("d1", "a", s, 0.9 + 0.01 * double(s));
    add("d1", "b", s, 0.9 + 0.01 * double(s));
    add("d1", "c", s, 0.7);
    add("d2", "a", s, 0.6);
    add("d2", "b", s, 0.8);
    add("d2", "c", s, 0.7);
  }
  recs.push_back({"d3", "a", 0, "error", NAN, 0.0, "h", "boom"});
  const auto s = aggregate(recs);
  CHECK(s.datasets == std::vector<std::string>{"d1", "d2"});
  CHECK(s.methods == std::vector<std::string>{"a", "b", "c"});
  CHECK(s.cells.at("d1").at("a").mean == doctest::Approx(0.91));
  CHECK(s.cells.at("d1").at("a").count == 3);
  // sample sd of {.90,.91,.92} is .01
  CHECK(s.cells.at("d1").at("a").ci95 == doctest::Approx(1.96 * 0.01 / std::sqrt(3.0)));
  CHECK(s.per_method.at("a").mean_rank == doctest::Approx((1.5 + 3.0) / 2));
  CHECK(s.per_method.at("b").mean_rank == doctest::Approx((1.5 + 1.0) / 2));
  CHECK(s.per_method.at("c").mean_rank == doctest::Approx((3.0 + 2.0) / 2));
  const auto ab = s.per_method.at("a").versus.at("b");
  CHECK(ab == std::array<std::size_t, 3>{0, 1, 1});
  CHECK(s.per_method.at("c").versus.at("a") == std::array<std::size_t, 3>{1, 0, 1});
  CHECK(aggregate(recs, "cross_entropy").datasets.empty());

  const auto dir = temp_dir("agg");
  {
    std::ofstream out(dir / "r.jsonl");
    for (const auto& r : recs) out << r.to_json() << '\n';
  }
  const auto back = read_results(dir / "r.jsonl");
  REQUIRE(back.size() == recs.size());
  CHECK(std::isnan(back.back().value));
  CHECK(back.back().error == "boom");
  CHECK(summary_table(aggregate(back)) == summary_table(s));
  CHECK(summary_svg(s).find("<svg") == 0);

  // lower is better for cross entropy
  std::vector<ResultRecord> ce{{"d", "a", 0, "cross_entropy", 0.3, 0, "", ""}, {"d", "b", 0, "cross_entropy", 0.5, 0, "", ""}};
  CHECK(aggregate(ce, "cross_entropy").per_method.at("a").mean_rank == 1.0);
}

TEST_CASE("benchmark records, failures and deterministic output") {
  const auto dir = temp_dir("bench");
  write_file(dir / "good.schema.json", R"({"target":"y","columns":[{"name":"u","type":"numeric"},{"name":"v","type":"numeric"},{"name":"y","type":"categorical"}]})");
  std::string csv = "u,v,y\n";
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 60; ++i) {
    const double u = nd(rng), v = nd(rng);
    csv += std::to_string(u) + "," + std::to_string(v) + "," + (u + 0.3 * v > 0 ? "p" : "n") + "\n";
  }
  write_file(dir / "good.csv", csv);
  write_file(dir / "bad.schema.json", R"({"target":"y","columns":[{"name":"y","type":"categorical"}]})");
  write_file(dir / "bad.csv", "y,extra\n1,2\n");
  write_file(dir / "orphan.csv", "y\n1\n");
  const auto entries = discover_datasets(dir);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].name == "bad");

  const auto ck = small_checkpoint();
  BenchmarkConfig cfg;
  cfg.seeds = {0, 1};
  cfg.ensemble.members = 2;
  cfg.deterministic = true;
  const auto recs = run_benchmark(ck, entries, cfg, dir / "a.jsonl");
  CHECK(recs.size() == 2 + 2 * 3);
  CHECK(recs[0].metric == "error");
  CHECK(!recs[0].error.empty());
  for (std::size_t i = 2; i < recs.size(); ++i) {
    CHECK(recs[i].error.empty());
    CHECK(std::isfinite(recs[i].value));
  }
  run_benchmark(ck, entries, cfg, dir / "b.jsonl");
  std::ifstream a(dir / "a.jsonl"), b(dir / "b.jsonl");
  const std::string ta((std::istreambuf_iterator<char>(a)), {}), tb((std::istreambuf_iterator<char>(b)), {});
  CHECK(!ta.empty());
  CHECK(ta == tb);

  auto other = cfg.ensemble;
  other.seed = 99;
  CHECK(config_hash(ck, cfg.ensemble) == recs[2].config_hash);
  CHECK(config_hash(ck, other) != config_hash(ck, cfg.ensemble));
}

TEST_CASE("extrapolation shares the test rows across context lengths") {
  const auto ck = small_checkpoint();
  DiscretePriorSource src(DiscretePrior::sign_pair(0.1), 80, 80);
  infer::EnsembleConfig ens;
  ens.members = 1;
  const auto pts = run_extrapolation(ck, src, {10, 40}, 4, 30, 3, ens);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].n_train == 10);
  CHECK(pts[0].tasks == pts[1].tasks);
  CHECK(pts[0].tasks > 0);
  for (const auto& p : pts) CHECK((p.mean_auc >= 0.0 && p.mean_auc <= 1.0));
  CHECK_THROWS_AS(run_extrapolation(ck, src, {60}, 1, 30, 3, ens), ContractError);
  CHECK(extrapolation_svg(pts, 20).find("</svg>") != std::string::npos);

  prior::Rng rng(4);
  const auto ds = src.sample(rng);
  const auto task = task_from(ds);
  CHECK(task.n_train + task.n_test == ds.n);
  CHECK(task.x_test.size() == task.n_test);
  task.validate();
}

TEST_CASE("plots are standalone svg") {
  const auto svg = line_plot("t", "x", "y", {{"s", {0, 1, 2}, {1, 3, 2}, {0.1, 0.1, 0.1}}}, {1.5});
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(bar_plot("b <&>", {"g1"}, "y", {{"m", {}, {0.5}, {}}}).find("&lt;&amp;&gt;") != std::string::npos);
}

#include "tabpfn/eval/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tabpfn/errors.hpp"
#include "tabpfn/eval/metrics.hpp"
#include "tabpfn/eval/plot.hpp"
#include "tabpfn/prior/random.hpp"

namespace tabpfn::eval {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ c[i]) * 1099511628211ull;
  }
  template <class T>
  void value(const T& v) {
    bytes(&v, sizeof v);
  }
};

std::pair<double, double> mean_ci(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= double(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, 1.96 * std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()))};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string ResultRecord::to_json(bool with_time) const {
  ojson j;
  j["dataset"] = dataset;
  j["method"] = method;
  j["seed"] = seed;
  j["metric"] = metric;
  if (std::isfinite(value)) j["value"] = value;
  else j["value"] = nullptr;
  j["wall_ms"] = with_time ? wall_ms : 0.0;
  j["config_hash"] = config_hash;
  if (!error.empty()) j["error"] = error;
  return j.dump();
}

ResultRecord ResultRecord::from_json(const std::string& line) {
  ResultRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.dataset = j.at("dataset").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").is_null() ? NAN : j.at("value").get<double>();
    r.wall_ms = j.value("wall_ms", 0.0);
    r.config_hash = j.value("config_hash", std::string{});
    r.error = j.value("error", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("result record: ") + e.what());
  }
  return r;
}

std::vector<ResultRecord> read_results(const fs::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw ParseError("cannot open " + jsonl.string());
  std::vector<ResultRecord> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(ResultRecord::from_json(line));
    } catch (const ParseError& e) {
      throw ParseError(jsonl.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DatasetEntry> discover_datasets(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ContractError("not a directory: " + dir.string());
  std::vector<DatasetEntry> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    const std::string name = e.path().stem().string();
    const fs::path schema = dir / (name + ".schema.json");
    if (fs::exists(schema)) out.push_back({name, e.path(), schema});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

std::string config_hash(const model::Checkpoint& checkpoint, const infer::EnsembleConfig& ensemble) {
  Fnv f;
  for (const auto& p : checkpoint.model.parameters()) {
    const auto d = p.data();
    f.bytes(d.data(), d.size() * sizeof(float));
  }
  f.bytes(checkpoint.space_json.data(), checkpoint.space_json.size());
  if (checkpoint.tuning) {
    f.bytes(checkpoint.tuning->psi.data(), checkpoint.tuning->psi.size() * sizeof(float));
    f.value(checkpoint.tuning->temperature);
  }
  f.value(ensemble.members);
  f.value(ensemble.seed);
  for (auto v : ensemble.variants) f.value(static_cast<int>(v));
  f.value(ensemble.permute_features);
  f.value(ensemble.permute_labels);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.h));
  return buf;
}

std::vector<ResultRecord> run_benchmark(const model::Checkpoint& checkpoint, const std::vector<DatasetEntry>& datasets,
                                        const BenchmarkConfig& config, const fs::path& out) {
  const std::string hash = config_hash(checkpoint, config.ensemble);
  std::vector<ResultRecord> records;
  std::ofstream sink;
  if (!out.empty()) {
    sink.open(out, std::ios::app);
    if (!sink) throw ContractError("cannot write " + out.string());
  }
  auto emit = [&](ResultRecord r) {
    r.config_hash = hash;
    if (config.deterministic) r.wall_ms = 0.0;
    if (sink.is_open()) sink << r.to_json(!config.deterministic) << '\n' << std::flush;
    records.push_back(std::move(r));
  };
  for (const auto& entry : datasets) {
    std::optional<Dataset> data;
    std::string load_error;
    try {
      data = load_dataset(entry.csv, entry.schema);
    } catch (const std::exception& e) {
      load_error = e.what();
    }
    for (std::uint64_t seed : config.seeds) {
      ResultRecord base;
      base.dataset = entry.name;
      base.method = config.method;
      base.seed = seed;
      if (!data) {
        base.metric = "error";
        base.value = NAN;
        base.error = load_error;
        emit(base);
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Split s = split(*data, seed, config.test_fraction);
        infer::EnsembleConfig ens = config.ensemble;
        ens.seed = prior::derive_seed(config.ensemble.seed, seed);
        const auto pred = infer::predict(checkpoint, s.task, ens);
        const double ms = elapsed_ms(t0);
        const std::size_t nc = pred.num_classes;
        const double auc = roc_auc_ovo(s.test_labels, pred.probabilities, nc);
        const double ce = cross_entropy(s.test_labels, pred.probabilities, nc);
        const double acc = accuracy(s.test_labels, pred.probabilities, nc);
        for (auto [metric, value] : {std::pair{"roc_auc", auc}, {"cross_entropy", ce}, {"accuracy", acc}}) {
          ResultRecord r = base;
          r.metric = metric;
          r.value = value;
          r.wall_ms = ms;
          emit(r);
        }
      } catch (const std::exception& e) {
        base.metric = "error";
        base.value = NAN;
        base.wall_ms = elapsed_ms(t0);
        base.error = e.what();
        emit(base);
      }
    }
  }
  return records;
}

bool higher_is_better(const std::string& metric) { return metric != "cross_entropy"; }

Summary aggregate(const std::vector<ResultRecord>& records, const std::string& metric) {
  Summary s;
  s.metric = metric;
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  std::set<std::string> methods;
  for (const auto& r : records) {
    if (r.metric != metric || !r.error.empty() || !std::isfinite(r.value)) continue;
    values[r.dataset][r.method].push_back(r.value);
    methods.insert(r.method);
  }
  s.methods.assign(methods.begin(), methods.end());
  for (const auto& m : s.methods) {
    auto& pm = s.per_method[m];
    for (const auto& o : s.methods)
      if (o != m) pm.versus[o] = {0, 0, 0};
  }
  const bool up = higher_is_better(metric);
  std::map<std::string, std::pair<double, std::size_t>> rank_sum;
  for (const auto& [ds, per] : values) {
    s.datasets.push_back(ds);
    std::vector<std::pair<std::string, double>> means;
    for (const auto& [m, v] : per) {
      const auto [mean, ci] = mean_ci(v);
      s.cells[ds][m] = {mean, ci, v.size()};
      means.emplace_back(m, mean);
    }
    // rank 1 is best; equal means share the average of their positions
    for (const auto& [m, v] : means) {
      std::size_t better = 0, equal = 0;
      for (const auto& [o, w] : means) {
        if (w == v) ++equal;
        else if (up ? w > v : w < v) ++better;
      }
      auto& rs = rank_sum[m];
      rs.first += double(better) + (double(equal) + 1.0) / 2.0;
      rs.second += 1;
      for (const auto& [o, w] : means) {
        if (o == m) continue;
        auto& c = s.per_method[m].versus[o];
        if (w == v) ++c[1];
        else if (up ? v > w : v < w) ++c[0];
        else ++c[2];
      }
    }
  }
  for (const auto& [m, rs] : rank_sum) s.per_method[m].mean_rank = rs.first / double(rs.second);
  return s;
}

std::string summary_table(const Summary& s) {
  std::ostringstream o;
  o << "| dataset |";
  for (const auto& m : s.methods) o << ' ' << m << " |";
  o << "\n|---|";
  for (std::size_t i = 0; i < s.methods.size(); ++i) o << "---|";
  o << '\n';
  for (const auto& ds : s.datasets) {
    o << "| " << ds << " |";
    const auto& row = s.cells.at(ds);
    for (const auto& m : s.methods) {
      auto it = row.find(m);
      if (it == row.end()) o << " - |";
      else o << ' ' << fmt("%.4f", it->second.mean) << " ± " << fmt("%.4f", it->second.ci95) << " |";
    }
    o << '\n';
  }
  o << "| mean rank |";
  for (const auto& m : s.methods) o << ' ' << fmt("%.2f", s.per_method.at(m).mean_rank) << " |";
  o << '\n';
  if (s.methods.size() > 1) {
    o << "\nwins/ties/losses (" << s.metric << ")\n\n";
    for (const auto& m : s.methods)
      for (const auto& [other, c] : s.per_method.at(m).versus)
        o << "- " << m << " vs " << other << ": " << c[0] << '/' << c[1] << '/' << c[2] << '\n';
  }
  return o.str();
}

std::string summary_svg(const Summary& s) {
  std::vector<Series> series;
  for (const auto& m : s.methods) {
    Series x{m, {}, {}, {}};
    for (const auto& ds : s.datasets) {
      auto it = s.cells.at(ds).find(m);
      x.y.push_back(it == s.cells.at(ds).end() ? 0.0 : it->second.mean);
      x.err.push_back(it == s.cells.at(ds).end() ? 0.0 : it->second.ci95);
    }
    series.push_back(std::move(x));
  }
  return bar_plot(s.metric + " by dataset", s.datasets, s.metric, series);
}

namespace {

constexpr std::array<prior::Hp, 3> kGpHps{prior::Hp::gp_outputscale, prior::Hp::gp_lengthscale, prior::Hp::gp_noise};
constexpr std::array<const char*, 3> kGpNames{"outputscale", "lengthscale", "noise"};

}  // namespace

bool GpRecoveryReport::curve_within(std::size_t i, double fraction) const {
  return std::abs(curves.at(i).argmin - truth[i]) <= fraction * range_width[i];
}

bool GpRecoveryReport::tuned_within(std::size_t i, double fraction) const {
  return std::abs(recovered.at(i) - truth[i]) <= fraction * range_width[i];
}

std::string GpRecoveryReport::curves_csv() const {
  std::ostringstream o;
  o << "hyperparameter,value,loss\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.values.size(); ++i)
      o << c.name << ',' << fmt("%.6g", c.values[i]) << ',' << fmt("%.6g", c.losses[i]) << '\n';
  return o.str();
}

std::string GpRecoveryReport::curves_svg() const {
  // one panel per hyperparameter, stacked
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"1200\">\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    Series s{curves[i].name, curves[i].values, curves[i].losses, {}};
    Series tuned{"tuned", {recovered[i], recovered[i]}, {}, {}};
    double lo = *std::min_element(s.y.begin(), s.y.end()), hi = *std::max_element(s.y.begin(), s.y.end());
    tuned.y = {lo, hi};
    o << "<g transform=\"translate(0," << 400 * i << ")\">\n"
      << line_plot("validation loss vs " + curves[i].name, curves[i].name, "loss", {s, tuned}, {truth[i]}) << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

GpRecoveryReport run_gp_recovery(const model::Checkpoint& checkpoint, const GpRecoveryConfig& config) {
  if (checkpoint.space_json.empty()) throw ContractError("gp recovery needs a conditioned checkpoint");
  if (config.sweep_points < 2 || config.num_datasets < 2) throw ContractError("gp recovery: too few points or datasets");
  auto space = std::make_shared<const prior::HyperparameterSpace>(
      prior::HyperparameterSpace::from_json(checkpoint.space_json));
  if (space->encoded_size() != checkpoint.model.config().psi_size)
    throw ContractError("gp recovery: psi size does not match the model");

  GpRecoveryReport report;
  report.truth = config.truth;
  prior::Rng rng(prior::derive_seed(config.seed, 0));
  auto truth = prior::sample_hyperparameters(space, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& d = (*space)[kGpHps[i]];
    if (d.kind != prior::DistKind::uniform) throw ContractError("gp recovery: expects uniform GP ranges");
    report.range_width[i] = d.hi - d.lo;
    truth.set_params(kGpHps[i], std::vector<double>{config.truth[i]});
  }

  prior::PriorConfig pc;
  pc.use_gp = true;
  pc.use_scm = pc.use_bnn = false;
  pc.median_split = true;
  prior::PriorSource source(space, pc, config.n, config.k_min, config.k_max, true);
  source.fix_psi(truth);
  std::vector<prior::SyntheticDataset> sets;
  for (std::size_t i = 0; i < config.num_datasets; ++i) {
    prior::Rng r(prior::derive_seed(config.seed, 1000 + i));
    sets.push_back(source.sample(r));
  }

  for (std::size_t i = 0; i < 3; ++i) {
    const auto& d = (*space)[kGpHps[i]];
    SweepCurve& c = report.curves[i];
    c.name = kGpNames[i];
    double best = INFINITY;
    for (std::size_t p = 0; p < config.sweep_points; ++p) {
      const double v = d.lo + (d.hi - d.lo) * double(p) / double(config.sweep_points - 1);
      auto psi = truth;
      psi.set_params(kGpHps[i], std::vector<double>{v});
      const double loss = tune::eval_psi(checkpoint.model, psi.encode(), 1.0f, sets);
      c.values.push_back(v);
      c.losses.push_back(loss);
      if (loss < best) best = loss, c.argmin = v;
    }
  }

  auto [v1, v2] = tune::split_validation(sets, prior::derive_seed(config.seed, 2));
  tune::TuneConfig tc = config.tune;
  report.run = tune::tune(checkpoint, v1, v2, tc);
  const auto decoded = prior::PriorHyperparameters::decode(space, report.run.psi_star);
  for (std::size_t i = 0; i < 3; ++i) report.recovered[i] = decoded.params(kGpHps[i])[0];
  return report;
}

infer::PredictTask task_from(const prior::SyntheticDataset& ds) {
  infer::PredictTask t;
  t.n_train = ds.split_point;
  t.n_test = ds.n - ds.split_point;
  t.k = ds.k;
  const std::size_t cut = ds.split_point * ds.k;
  t.x_train.assign(ds.x.begin(), ds.x.begin() + cut);
  t.x_test.assign(ds.x.begin() + cut, ds.x.end());
  if (!ds.mask.empty()) {
    t.mask_train.assign(ds.mask.begin(), ds.mask.begin() + cut);
    t.mask_test.assign(ds.mask.begin() + cut, ds.mask.end());
  }
  t.y_train.assign(ds.y.begin(), ds.y.begin() + ds.split_point);
  for (std::size_t c = 0; c < ds.num_classes; ++c) t.class_names.push_back(std::to_string(c));
  return t;
}

std::vector<ExtrapolationPoint> run_extrapolation(const model::Checkpoint& checkpoint,
                                                  const prior::DatasetSource& source,
                                                  const std::vector<std::size_t>& lengths, std::size_t tasks,
                                                  std::size_t n_test, std::uint64_t seed,
                                                  const infer::EnsembleConfig& ensemble) {
  if (lengths.empty() || tasks == 0 || n_test == 0) throw ContractError("extrapolation: nothing to run");
  const std::size_t longest = *std::max_element(lengths.begin(), lengths.end());
  std::vector<std::vector<double>> aucs(lengths.size());
  for (std::size_t t = 0; t < tasks; ++t) {
    prior::Rng rng(prior::derive_seed(seed, t));
    const auto ds = source.sample(rng);
    if (ds.n < longest + n_test)
      throw ContractError("extrapolation: source yields " + std::to_string(ds.n) + " rows, need " +
                          std::to_string(longest + n_test));
    const std::size_t test0 = ds.n - n_test;
    std::vector<std::uint16_t> y_test(ds.y.begin() + test0, ds.y.end());
    if (std::set<std::uint16_t>(y_test.begin(), y_test.end()).size() < 2) continue;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
      const std::size_t L = lengths[li];
      // classes must be present in the context; absent ones keep their slot
      infer::PredictTask task;
      task.n_train = L;
      task.n_test = n_test;
      task.k = ds.k;
      task.x_train.assign(ds.x.begin(), ds.x.begin() + L * ds.k);
      task.x_test.assign(ds.x.begin() + test0 * ds.k, ds.x.end());
      if (!ds.mask.empty()) {
        task.mask_train.assign(ds.mask.begin(), ds.mask.begin() + L * ds.k);
        task.mask_test.assign(ds.mask.begin() + test0 * ds.k, ds.mask.end());
      }
      task.y_train.assign(ds.y.begin(), ds.y.begin() + L);
      for (std::size_t c = 0; c < ds.num_classes; ++c) task.class_names.push_back(std::to_string(c));
      infer::EnsembleConfig ens = ensemble;
      ens.seed = prior::derive_seed(ensemble.seed, t);
      const auto pred = infer::predict_long(checkpoint, task, ens);
      aucs[li].push_back(roc_auc_ovo(y_test, pred.probabilities, pred.num_classes));
    }
  }
  std::vector<ExtrapolationPoint> out;
  for (std::size_t li = 0; li < lengths.size(); ++li) {
    const auto [m, ci] = mean_ci(aucs[li]);
    out.push_back({lengths[li], m, ci, aucs[li].size()});
  }
  return out;
}

std::string extrapolation_svg(const std::vector<ExtrapolationPoint>& points, std::size_t train_length) {
  Series s{"ROC AUC", {}, {}, {}};
  for (const auto& p : points) {
    s.x.push_back(double(p.n_train));
    s.y.push_back(p.mean_auc);
    s.err.push_back(p.ci95);
  }
  return line_plot("AUC vs context length", "training rows", "mean ROC AUC", {s}, {double(train_length)});
}

}  // namespace tabpfn::eval

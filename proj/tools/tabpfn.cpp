// tabpfn: sample priors, meta-train, tune, predict and run the evaluation studies.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabpfn/errors.hpp"
#include "tabpfn/eval/experiments.hpp"
#include "tabpfn/eval/io.hpp"
#include "tabpfn/eval/oracle.hpp"
#include "tabpfn/infer/predict.hpp"
#include "tabpfn/prior/random.hpp"
#include "tabpfn/train/trainer.hpp"
#include "tabpfn/tune/tuner.hpp"

using namespace tabpfn;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

bool g_deterministic = false;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << text;
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stoul(part));
  if (out.empty()) throw ConfigError("empty list: " + text);
  return out;
}

// Families of the oracle priors, usable as `prior = ...` in a training config.
std::optional<eval::DiscretePrior> discrete_prior(const std::string& name) {
  if (name == "four_half_planes") return eval::DiscretePrior::four_half_planes(0.1);
  if (name == "sign_pair") return eval::DiscretePrior::sign_pair(0.1);
  return std::nullopt;
}

struct SourceBundle {
  std::unique_ptr<prior::DatasetSource> source;
  std::string space_json;
};

SourceBundle source_for(const train::TrainingConfig& config) {
  if (auto d = discrete_prior(config.prior))
    return {std::make_unique<eval::DiscretePriorSource>(*d, config.n, config.n), ""};
  auto src = train::make_source(config);
  std::string space = config.conditional ? src->space()->to_json() : "";
  return {std::move(src), space};
}

// Real validation data: a seeded half split, z-normalised, as one prior-style dataset.
prior::SyntheticDataset as_synthetic(const eval::Dataset& d, std::uint64_t seed) {
  const auto s = eval::split(d, seed, 0.5);
  auto task = s.task;
  const auto pre = infer::preprocess(task, infer::Preprocessing::z_norm);
  const auto& t = pre.task;
  prior::SyntheticDataset out;
  out.n = t.n_train + t.n_test;
  out.k = t.k;
  out.num_classes = t.num_classes();
  out.split_point = t.n_train;
  out.x = t.x_train;
  out.x.insert(out.x.end(), t.x_test.begin(), t.x_test.end());
  out.mask = t.mask_train.empty() ? std::vector<std::uint8_t>(t.n_train * t.k, 0) : t.mask_train;
  if (t.mask_test.empty()) out.mask.resize(out.x.size(), 0);
  else out.mask.insert(out.mask.end(), t.mask_test.begin(), t.mask_test.end());
  out.y = t.y_train;
  out.y.insert(out.y.end(), s.test_labels.begin(), s.test_labels.end());
  return out;
}

std::vector<prior::SyntheticDataset> load_validation(const fs::path& dir, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw ContractError("not a directory: " + dir.string());
  std::vector<fs::path> shards;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".pfnd") shards.push_back(e.path());
  std::sort(shards.begin(), shards.end());
  std::vector<prior::SyntheticDataset> out;
  for (const auto& p : shards)
    for (auto& ds : prior::read_shard(p)) out.push_back(std::move(ds));
  const auto entries = eval::discover_datasets(dir);
  for (std::size_t i = 0; i < entries.size(); ++i)
    out.push_back(as_synthetic(eval::load_dataset(entries[i].csv, entries[i].schema), prior::derive_seed(seed, i)));
  if (out.empty()) throw ContractError(dir.string() + " holds no .pfnd shards or csv/schema pairs");
  return out;
}

int cmd_sample_prior(std::uint64_t seed, std::size_t count, std::size_t n, std::size_t k, const std::string& space,
                     const std::string& families, bool median, const fs::path& out) {
  prior::PriorConfig pc;
  pc.use_gp = families.find("gp") != std::string::npos;
  pc.use_scm = families.find("scm") != std::string::npos;
  pc.use_bnn = families.find("bnn") != std::string::npos;
  pc.median_split = median;
  prior::PriorSource source(train::load_space(space), pc, n, k, k, true);
  std::vector<prior::SyntheticDataset> sets;
  for (std::size_t i = 0; i < count; ++i) {
    prior::Rng rng(prior::derive_seed(seed, i));
    sets.push_back(source.sample(rng));
  }
  prior::write_shard(out, sets);
  std::cout << "wrote " << count << " datasets to " << out << "\n";
  return 0;
}

int cmd_meta_train(const fs::path& config_path, std::uint64_t seed, const fs::path& out, const std::string& log,
                   std::size_t workers) {
  auto config = train::TrainingConfig::load(config_path);
  if (!log.empty()) config.log_path = log;
  if (workers > 0) config.workers = workers;
  if (g_deterministic) config.workers = 1;
  auto bundle = source_for(config);
  config.model.psi_size = bundle.source->psi_size();
  if (config.lr_candidates.size() > 1) {
    const auto sel = train::learning_rate_selection(config.lr_candidates, config, *bundle.source, seed);
    for (const auto& [lr, loss] : sel.pilots)
      std::cout << "pilot lr " << fmt(lr) << ": " << (loss ? fmt(*loss) : std::string("diverged")) << "\n";
    config.lr = sel.lr;
    std::cout << "selected lr " << fmt(sel.lr) << "\n";
  } else if (config.lr_candidates.size() == 1) {
    config.lr = config.lr_candidates[0];
  }
  train::TrainHooks hooks;
  hooks.deterministic_log = g_deterministic;
  hooks.on_step = [&](const train::LogRecord& r) {
    if (r.eval_loss) std::cerr << "step " << r.step << " loss " << fmt(r.loss) << " eval " << fmt(*r.eval_loss) << "\n";
  };
  auto result = train::meta_train(config, *bundle.source, seed, std::nullopt, hooks);
  result.checkpoint.space_json = bundle.space_json;
  model::save_checkpoint(out, result.checkpoint);
  std::cout << "steps " << config.steps << ", skipped " << result.skipped_steps << ", smoothed loss "
            << fmt(result.smoothed_loss);
  if (result.final_eval_loss) std::cout << ", eval " << fmt(*result.initial_eval_loss) << " -> " << fmt(*result.final_eval_loss);
  std::cout << "\nwrote " << out << "\n";
  return 0;
}

int cmd_tune(const fs::path& ckpt_path, const fs::path& val_dir, tune::TuneConfig tc, const fs::path& out,
             const fs::path& trajectory) {
  auto ckpt = model::load_checkpoint(ckpt_path);
  const auto sets = load_validation(val_dir, tc.seed);
  auto [v1, v2] = tune::split_validation(sets, prior::derive_seed(tc.seed, 1));
  const auto run = tune::tune(ckpt, v1, v2, tc);
  if (!trajectory.empty()) {
    std::string text;
    for (const auto& p : run.trajectory) text += p.to_json() + "\n";
    write_text(trajectory, text);
  }
  ckpt.tuning = model::TuningRecord{run.psi_star, run.t_star};
  model::save_checkpoint(out, ckpt);
  std::cout << "best V2 loss " << fmt(run.best_v2_loss) << " (draw " << run.best_draw << ", step " << run.best_step
            << "), temperature " << fmt(run.t_star) << "\nwrote " << out << "\n";
  return 0;
}

infer::EnsembleConfig ensemble_of(std::size_t members, std::uint64_t seed) {
  infer::EnsembleConfig e;
  e.members = members;
  e.seed = seed;
  return e;
}

int cmd_predict(const fs::path& ckpt_path, const fs::path& train_csv, const fs::path& test_csv,
                const fs::path& schema_path, const fs::path& out, std::size_t members, std::uint64_t seed) {
  const auto ckpt = model::load_checkpoint(ckpt_path);
  const auto schema = eval::Schema::load(schema_path);
  const auto train = eval::load_dataset(train_csv, schema);
  const auto test = eval::load_dataset(test_csv, schema, &train);
  const auto pred = infer::predict(ckpt, eval::make_task(train, test), ensemble_of(members, seed));
  for (const auto& w : train.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& w : pred.warnings) std::cerr << "warning: " << w << "\n";
  std::ostringstream o;
  for (const auto& c : pred.class_names) o << "p_" << c << ",";
  o << "prediction\n";
  const auto arg = pred.argmax();
  for (std::size_t r = 0; r < pred.rows; ++r) {
    for (std::size_t c = 0; c < pred.num_classes; ++c) o << fmt(pred.probabilities[r * pred.num_classes + c]) << ",";
    o << pred.class_names[arg[r]] << "\n";
  }
  write_text(out, o.str());
  if (!g_deterministic) std::cerr << pred.rows << " rows in " << fmt(pred.elapsed_ms, "%.1f") << " ms\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const fs::path& data_dir, const std::vector<std::string>& results,
             const fs::path& out, std::size_t seeds, std::size_t members, std::uint64_t seed, const std::string& method,
             const std::string& metric, const fs::path& table, const fs::path& svg) {
  std::vector<eval::ResultRecord> records;
  if (!ckpt_path.empty()) {
    if (data_dir.empty() || out.empty()) throw ConfigError("eval with --ckpt needs --data-dir and --out");
    eval::BenchmarkConfig cfg;
    cfg.seeds.clear();
    for (std::size_t s = 0; s < seeds; ++s) cfg.seeds.push_back(s);
    cfg.ensemble = ensemble_of(members, seed);
    cfg.method = method;
    cfg.deterministic = g_deterministic;
    fs::remove(out);
    records = eval::run_benchmark(model::load_checkpoint(ckpt_path), eval::discover_datasets(data_dir), cfg, out);
    for (const auto& r : records)
      if (!r.error.empty()) std::cerr << r.dataset << " seed " << r.seed << ": " << r.error << "\n";
  }
  for (const auto& f : results) {
    auto more = eval::read_results(f);
    records.insert(records.end(), more.begin(), more.end());
  }
  if (records.empty()) throw ConfigError("eval: no results (give --ckpt or --results)");
  const auto summary = eval::aggregate(records, metric);
  const std::string text = eval::summary_table(summary);
  std::cout << text;
  if (!table.empty()) write_text(table, text);
  if (!svg.empty()) write_text(svg, eval::summary_svg(summary));
  return 0;
}

int cmd_gp_ablation(const fs::path& ckpt_path, const fs::path& out_dir, eval::GpRecoveryConfig cfg) {
  const auto ckpt = model::load_checkpoint(ckpt_path);
  const auto rep = eval::run_gp_recovery(ckpt, cfg);
  fs::create_directories(out_dir);
  write_text(out_dir / "curves.csv", rep.curves_csv());
  write_text(out_dir / "curves.svg", rep.curves_svg());
  std::string traj;
  for (const auto& p : rep.run.trajectory) traj += p.to_json() + "\n";
  write_text(out_dir / "trajectory.jsonl", traj);
  ojson j;
  for (std::size_t i = 0; i < 3; ++i) {
    ojson h;
    h["truth"] = rep.truth[i];
    h["curve_argmin"] = rep.curves[i].argmin;
    h["tuned"] = rep.recovered[i];
    h["range_width"] = rep.range_width[i];
    h["curve_within_15pct"] = rep.curve_within(i, 0.15);
    h["tuned_within_15pct"] = rep.tuned_within(i, 0.15);
    j[rep.curves[i].name] = h;
  }
  j["best_v2_loss"] = rep.run.best_v2_loss;
  j["temperature"] = rep.run.t_star;
  write_text(out_dir / "report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_extrapolate(const fs::path& ckpt_path, const fs::path& out_dir, const std::string& space,
                    const std::string& lengths_text, std::size_t tasks, std::size_t n_test, std::size_t k,
                    std::size_t train_length, std::size_t members, std::uint64_t seed) {
  const auto ckpt = model::load_checkpoint(ckpt_path);
  const auto lengths = parse_sizes(lengths_text);
  const std::size_t longest = *std::max_element(lengths.begin(), lengths.end());
  prior::PriorConfig pc;
  pc.use_gp = pc.use_scm = false;
  const bool conditioned = ckpt.model.config().psi_size > 0;
  prior::PriorSource source(conditioned ? std::make_shared<const prior::HyperparameterSpace>(
                                              prior::HyperparameterSpace::from_json(ckpt.space_json))
                                        : train::load_space(space),
                            pc, longest + n_test, k, k, false);
  const auto pts = eval::run_extrapolation(ckpt, source, lengths, tasks, n_test, seed, ensemble_of(members, seed));
  std::ostringstream csv;
  csv << "n_train,mean_auc,ci95,tasks\n";
  for (const auto& p : pts) csv << p.n_train << "," << fmt(p.mean_auc) << "," << fmt(p.ci95) << "," << p.tasks << "\n";
  fs::create_directories(out_dir);
  write_text(out_dir / "extrapolation.csv", csv.str());
  write_text(out_dir / "extrapolation.svg", eval::extrapolation_svg(pts, train_length));
  std::cout << csv.str();
  return 0;
}

int cmd_oracle_check(const fs::path& ckpt_path, const std::string& prior_name, std::size_t n, std::size_t probes,
                     std::uint64_t seed, const fs::path& out) {
  const auto ckpt = model::load_checkpoint(ckpt_path);
  const auto prior = discrete_prior(prior_name);
  if (!prior) throw ConfigError("unknown discrete prior '" + prior_name + "'");
  eval::DiscretePriorSource source(*prior, n, n);
  const auto rep = eval::oracle_check(ckpt.model, source, probes, seed);
  ojson j;
  j["prior"] = prior_name;
  j["probes"] = rep.probes;
  j["mean_tv"] = rep.mean_tv;
  j["max_tv"] = rep.max_tv;
  j["uniform_tv"] = rep.uniform_tv;
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prior-data fitted networks for small tabular classification"};
  app.require_subcommand(1);
  app.add_flag("--deterministic", g_deterministic, "Single-threaded, no wall-clock fields in output files");

  std::uint64_t seed = 0;
  fs::path out, ckpt_path;
  std::size_t members = 10;

  auto* sp = app.add_subcommand("sample-prior", "Write prior datasets to a PFND shard");
  std::size_t count = 16, n = 100, k = 5;
  std::string space = "desk", families = "gp,scm,bnn";
  bool median = false;
  sp->add_option("--seed", seed)->required();
  sp->add_option("--count", count)->required();
  sp->add_option("--n", n, "Rows per dataset")->required();
  sp->add_option("--k", k, "Features per dataset")->required();
  sp->add_option("--out", out)->required();
  sp->add_option("--space", space, "paper, desk, gp_ablation, toy_linear or a JSON file")->capture_default_str();
  sp->add_option("--families", families, "Comma list of gp, scm, bnn")->capture_default_str();
  sp->add_flag("--median-split", median, "Binary labels split at the median");

  auto* mt = app.add_subcommand("meta-train", "Train a PFN on prior samples");
  fs::path config_path;
  std::string log;
  std::size_t workers = 0;
  mt->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  mt->add_option("--seed", seed)->required();
  mt->add_option("--out", out)->required();
  mt->add_option("--log", log, "JSONL training log (overrides the config)");
  mt->add_option("--workers", workers, "Prior sampling threads");

  auto* tn = app.add_subcommand("tune", "Tune psi and temperature on validation datasets");
  fs::path val_dir, trajectory;
  tune::TuneConfig tc;
  tn->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  tn->add_option("--val-dir", val_dir, "Directory of .pfnd shards and/or csv + schema pairs")->required();
  tn->add_option("--draws", tc.num_draws)->capture_default_str();
  tn->add_option("--steps", tc.num_steps)->capture_default_str();
  tn->add_option("--lr", tc.lr)->capture_default_str();
  tn->add_option("--patience", tc.patience)->capture_default_str();
  tn->add_option("--seed", tc.seed)->capture_default_str();
  bool tune_fixed_t = false;
  tn->add_flag("--no-temperature", tune_fixed_t, "Keep the temperature at 1");
  tn->add_option("--out", out)->required();
  tn->add_option("--trajectory", trajectory, "JSONL of every tuning step");

  auto* pr = app.add_subcommand("predict", "Class probabilities for a test CSV");
  fs::path train_csv, test_csv, schema_path;
  pr->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  pr->add_option("--train", train_csv)->required()->check(CLI::ExistingFile);
  pr->add_option("--test", test_csv)->required()->check(CLI::ExistingFile);
  pr->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
  pr->add_option("--out", out)->required();
  pr->add_option("--members", members)->capture_default_str();
  pr->add_option("--seed", seed)->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Benchmark a checkpoint and/or aggregate result files");
  std::string eval_ckpt, method = "tabpfn", metric = "roc_auc";
  fs::path data_dir, table, svg;
  std::vector<std::string> results;
  std::size_t seeds = 5;
  ev->add_option("--ckpt", eval_ckpt);
  ev->add_option("--data-dir", data_dir, "Directory of <name>.csv + <name>.schema.json");
  ev->add_option("--out", out, "Result JSONL (rewritten)");
  ev->add_option("--results", results, "Extra JSONL files to aggregate");
  ev->add_option("--seeds", seeds)->capture_default_str();
  ev->add_option("--members", members)->capture_default_str();
  ev->add_option("--seed", seed, "Ensemble seed")->capture_default_str();
  ev->add_option("--method", method)->capture_default_str();
  ev->add_option("--metric", metric)->capture_default_str();
  ev->add_option("--table", table, "Markdown summary");
  ev->add_option("--svg", svg, "Bar chart");

  auto* gp = app.add_subcommand("gp-ablation", "Loss curves and tuned recovery of GP hyperparameters");
  eval::GpRecoveryConfig gcfg;
  fs::path out_dir;
  gp->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  gp->add_option("--out-dir", out_dir)->required();
  gp->add_option("--datasets", gcfg.num_datasets)->capture_default_str();
  gp->add_option("--n", gcfg.n)->capture_default_str();
  gp->add_option("--points", gcfg.sweep_points)->capture_default_str();
  gp->add_option("--draws", gcfg.tune.num_draws)->capture_default_str();
  gp->add_option("--steps", gcfg.tune.num_steps)->capture_default_str();
  gp->add_option("--lr", gcfg.tune.lr)->capture_default_str();
  gp->add_option("--seed", gcfg.seed)->capture_default_str();
  bool gp_tune_t = false;
  gp->add_flag("--tune-temperature", gp_tune_t, "Also tune the temperature (default: psi only, at t = 1)");

  auto* ex = app.add_subcommand("extrapolate", "AUC against context length, beyond the training length");
  std::string lengths = "25,50,100", ex_space = "toy_linear";
  std::size_t tasks = 20, n_test = 100, train_length = 50;
  std::size_t ex_k = 3;
  ex->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  ex->add_option("--out-dir", out_dir)->required();
  ex->add_option("--lengths", lengths)->capture_default_str();
  ex->add_option("--space", ex_space, "Prior space for unconditioned checkpoints")->capture_default_str();
  ex->add_option("--tasks", tasks)->capture_default_str();
  ex->add_option("--n-test", n_test)->capture_default_str();
  ex->add_option("--k", ex_k)->capture_default_str();
  ex->add_option("--train-length", train_length, "Marked on the plot")->capture_default_str();
  ex->add_option("--members", members)->capture_default_str();
  ex->add_option("--seed", seed)->capture_default_str();

  auto* oc = app.add_subcommand("oracle-check", "Distance between a PFN and the exact posterior predictive");
  std::string prior_name = "four_half_planes";
  std::size_t probes = 200, oracle_n = 50;
  oc->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  oc->add_option("--prior", prior_name)->capture_default_str();
  oc->add_option("--n", oracle_n, "Rows per probe dataset before truncation")->capture_default_str();
  oc->add_option("--probes", probes)->capture_default_str();
  oc->add_option("--seed", seed)->capture_default_str();
  oc->add_option("--out", out, "JSON report");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sp) return cmd_sample_prior(seed, count, n, k, space, families, median, out);
    if (*mt) return cmd_meta_train(config_path, seed, out, log, workers);
    if (*tn) {
      tc.tune_temperature = !tune_fixed_t;
      return cmd_tune(ckpt_path, val_dir, tc, out, trajectory);
    }
    if (*pr) return cmd_predict(ckpt_path, train_csv, test_csv, schema_path, out, members, seed);
    if (*ev)
      return cmd_eval(eval_ckpt, data_dir, results, out, seeds, members, seed, method, metric, table, svg);
    if (*gp) {
      gcfg.tune.tune_temperature = gp_tune_t;
      return cmd_gp_ablation(ckpt_path, out_dir, gcfg);
    }
    if (*ex)
      return cmd_extrapolate(ckpt_path, out_dir, ex_space, lengths, tasks, n_test, ex_k, train_length, members, seed);
    if (*oc) return cmd_oracle_check(ckpt_path, prior_name, oracle_n, probes, seed, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

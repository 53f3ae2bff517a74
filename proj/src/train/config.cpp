#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tabpfn/errors.hpp"
#include "tabpfn/train/trainer.hpp"

namespace tabpfn::train {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace

TrainingConfig TrainingConfig::parse(const std::string& text) {
  TrainingConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size_field = [](std::size_t& f) -> Setter { return [&f](auto& k, auto& v) { f = to_size(k, v); }; };
  auto double_field = [](double& f) -> Setter { return [&f](auto& k, auto& v) { f = to_double(k, v); }; };
  auto bool_field = [](bool& f) -> Setter { return [&f](auto& k, auto& v) { f = to_bool(k, v); }; };
  const std::map<std::string, Setter> setters{
      {"steps", size_field(c.steps)},
      {"batch_size", size_field(c.batch_size)},
      {"n", size_field(c.n)},
      {"k_min", size_field(c.k_min)},
      {"k_max", size_field(c.k_max)},
      {"lr", double_field(c.lr)},
      {"warmup_fraction", double_field(c.warmup_fraction)},
      {"clip_norm", double_field(c.clip_norm)},
      {"nan_patience", size_field(c.nan_patience)},
      {"eval_every", size_field(c.eval_every)},
      {"eval_datasets", size_field(c.eval_datasets)},
      {"eval_seed", [&c](auto& k, auto& v) { c.eval_seed = to_size(k, v); }},
      {"checkpoint_every", size_field(c.checkpoint_every)},
      {"checkpoint_path", [&c](auto&, auto& v) { c.checkpoint_path = v; }},
      {"log", [&c](auto&, auto& v) { c.log_path = v; }},
      {"workers", size_field(c.workers)},
      {"prior", [&c](auto&, auto& v) { c.prior = v; }},
      {"use_gp", bool_field(c.use_gp)},
      {"use_scm", bool_field(c.use_scm)},
      {"use_bnn", bool_field(c.use_bnn)},
      {"median_split", bool_field(c.median_split)},
      {"conditional", bool_field(c.conditional)},
      {"lr_candidates",
       [&c](auto& k, auto& v) {
         c.lr_candidates.clear();
         std::stringstream ss(v);
         for (std::string item; std::getline(ss, item, ',');) c.lr_candidates.push_back(to_double(k, trim(item)));
       }},
      {"pilot_steps", size_field(c.pilot_steps)},
      {"layers", size_field(c.model.layers)},
      {"embedding", size_field(c.model.embedding)},
      {"hidden", size_field(c.model.hidden)},
      {"heads", size_field(c.model.heads)},
      {"max_features", size_field(c.model.max_features)},
      {"max_classes", size_field(c.model.max_classes)},
      {"max_train_length", size_field(c.model.max_train_length)},
  };

  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("line " + std::to_string(number) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

TrainingConfig TrainingConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void TrainingConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (n < 2) throw ConfigError("n must be at least 2");
  if (k_min == 0 || k_min > k_max) throw ConfigError("need 1 <= k_min <= k_max");
  if (k_max > model.max_features) throw ConfigError("k_max exceeds the model's max_features");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ConfigError("warmup_fraction must be in [0, 1]");
  if (nan_patience == 0) throw ConfigError("nan_patience must be positive");
  if (workers == 0) throw ConfigError("workers must be positive");
  if (!use_gp && !use_scm && !use_bnn) throw ConfigError("every prior family is disabled");
  for (double v : lr_candidates)
    if (!(v > 0.0)) throw ConfigError("lr_candidates must be positive");
  model.validate();
}

}  // namespace tabpfn::train

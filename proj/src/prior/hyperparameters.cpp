#include "tabpfn/prior/hyperparameters.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "tabpfn/errors.hpp"

namespace tabpfn::prior {

namespace {

constexpr std::array<std::string_view, kHpCount> kNames = {
    "gp_sampling_weight", "weight_dropout",     "sample_scm",     "share_noise_mean",     "y_from_last_layer",
    "activation",         "blockwise_dropout",  "keep_feature_order", "blockwise_features", "gp_noise",
    "mlp_layers",         "mlp_hidden",         "noise_std",      "weight_std",           "scm_causes",
    "gp_outputscale",     "gp_lengthscale",     "max_classes",    "class_shuffle",        "nan_probability",
    "nan_fraction",       "categorical_fraction", "categorical_shuffle"};

constexpr double kRelStdLo = 0.01;
constexpr double kRelStdHi = 1.0;

std::string_view kind_name(DistKind k) {
  switch (k) {
    case DistKind::uniform: return "uniform";
    case DistKind::beta: return "beta";
    case DistKind::truncated_normal: return "truncated_normal";
    case DistKind::log_scaled_truncated_normal: return "log_scaled_truncated_normal";
    case DistKind::choice: return "choice";
  }
  return "?";
}

DistKind kind_from_name(std::string_view s) {
  for (DistKind k : {DistKind::uniform, DistKind::beta, DistKind::truncated_normal,
                     DistKind::log_scaled_truncated_normal, DistKind::choice}) {
    if (kind_name(k) == s) return k;
  }
  throw ConfigError("unknown distribution kind '" + std::string(s) + "'");
}

double to_unit(double v, const ParamBounds& b) {
  if (b.hi <= b.lo) return 0.0;
  if (b.log_scale) return (std::log(v) - std::log(b.lo)) / (std::log(b.hi) - std::log(b.lo));
  return (v - b.lo) / (b.hi - b.lo);
}

double from_unit(double u, const ParamBounds& b) {
  u = std::clamp(u, 0.0, 1.0);
  if (b.hi <= b.lo) return b.lo;
  if (b.log_scale) return std::exp(std::log(b.lo) + u * (std::log(b.hi) - std::log(b.lo)));
  return b.lo + u * (b.hi - b.lo);
}

bool is_probability(Hp hp) {
  return hp == Hp::class_shuffle || hp == Hp::nan_probability || hp == Hp::nan_fraction ||
         hp == Hp::categorical_fraction || hp == Hp::categorical_shuffle || hp == Hp::weight_dropout;
}

bool is_count(Hp hp) {
  return hp == Hp::mlp_layers || hp == Hp::mlp_hidden || hp == Hp::scm_causes || hp == Hp::max_classes;
}

bool is_flag(Hp hp) {
  return hp == Hp::sample_scm || hp == Hp::share_noise_mean || hp == Hp::y_from_last_layer ||
         hp == Hp::blockwise_dropout || hp == Hp::keep_feature_order || hp == Hp::blockwise_features;
}

}  // namespace

std::string_view hp_name(Hp hp) { return kNames[static_cast<std::size_t>(hp)]; }

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::elu: return x > 0.0 ? x : std::expm1(x);
    case Activation::identity: return x;
    case Activation::threshold: return x > 0.0 ? 1.0 : 0.0;
  }
  return x;
}

MetaDistribution MetaDistribution::uniform(double lo, double hi, bool round) {
  MetaDistribution d;
  d.kind = DistKind::uniform;
  d.lo = lo;
  d.hi = hi;
  d.round = round;
  return d;
}

MetaDistribution MetaDistribution::beta(double min_ab, double max_ab, double scale) {
  MetaDistribution d;
  d.kind = DistKind::beta;
  d.lo = min_ab;
  d.hi = max_ab;
  d.scale = scale;
  return d;
}

MetaDistribution MetaDistribution::truncated_normal(double min_mean, double max_mean, bool round,
                                                    double lower_bound) {
  MetaDistribution d;
  d.kind = DistKind::truncated_normal;
  d.lo = min_mean;
  d.hi = max_mean;
  d.round = round;
  d.lower_bound = lower_bound;
  return d;
}

MetaDistribution MetaDistribution::log_truncated_normal(double min_mean, double max_mean, bool round,
                                                        double lower_bound) {
  MetaDistribution d = truncated_normal(min_mean, max_mean, round, lower_bound);
  d.kind = DistKind::log_scaled_truncated_normal;
  return d;
}

MetaDistribution MetaDistribution::choice(std::vector<double> choices, std::vector<double> max_weights) {
  MetaDistribution d;
  d.kind = DistKind::choice;
  d.choices = std::move(choices);
  d.max_weights = std::move(max_weights);
  return d;
}

MetaDistribution MetaDistribution::boolean(double max_false_weight) { return choice({1.0, 0.0}, {max_false_weight}); }

MetaDistribution MetaDistribution::fixed(double value) { return uniform(value, value); }

std::size_t MetaDistribution::param_count() const {
  switch (kind) {
    case DistKind::uniform: return 1;
    case DistKind::beta: return 2;
    case DistKind::truncated_normal:
    case DistKind::log_scaled_truncated_normal: return 2;
    case DistKind::choice: return choices.empty() ? 0 : choices.size() - 1;
  }
  return 0;
}

ParamBounds MetaDistribution::param_bounds(std::size_t i) const {
  switch (kind) {
    case DistKind::uniform:
    case DistKind::beta: return {lo, hi, false};
    case DistKind::truncated_normal:
      return i == 0 ? ParamBounds{lo, hi, false} : ParamBounds{kRelStdLo, kRelStdHi, false};
    case DistKind::log_scaled_truncated_normal:
      return i == 0 ? ParamBounds{lo, hi, true} : ParamBounds{kRelStdLo, kRelStdHi, true};
    case DistKind::choice: return {0.0, max_weights.at(i), false};
  }
  return {};
}

std::pair<double, double> MetaDistribution::support() const {
  switch (kind) {
    case DistKind::uniform:
      return round ? std::pair{std::round(lo), std::round(hi)} : std::pair{lo, hi};
    case DistKind::beta: return {0.0, scale};
    case DistKind::truncated_normal:
    case DistKind::log_scaled_truncated_normal: {
      const double top = round ? std::round(2.0 * hi) : 2.0 * hi;
      return {lower_bound, lower_bound + top};
    }
    case DistKind::choice:
      return {*std::min_element(choices.begin(), choices.end()), *std::max_element(choices.begin(), choices.end())};
  }
  return {0.0, 0.0};
}

std::vector<double> MetaDistribution::sample_params(Rng& rng) const {
  std::vector<double> out(param_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const ParamBounds b = param_bounds(i);
    if (b.hi <= b.lo) {
      out[i] = b.lo;
    } else if (b.log_scale) {
      out[i] = std::exp(prior::uniform(rng, std::log(b.lo), std::log(b.hi)));
    } else {
      out[i] = prior::uniform(rng, b.lo, b.hi);
    }
  }
  return out;
}

double MetaDistribution::sample_value(std::span<const double> params, Rng& rng) const {
  switch (kind) {
    case DistKind::uniform: return round ? std::round(params[0]) : params[0];
    case DistKind::beta: return scale * prior::beta(rng, params[0], params[1]);
    case DistKind::truncated_normal:
    case DistKind::log_scaled_truncated_normal: {
      const double mean = params[0];
      double v = prior::truncated_normal(rng, mean, mean * params[1], 0.0, 2.0 * hi);
      if (round) v = std::round(v);
      return lower_bound + v;
    }
    case DistKind::choice: {
      std::vector<double> weights(choices.size(), 1.0);
      for (std::size_t i = 1; i < choices.size(); ++i) weights[i] = params[i - 1];
      return choices[categorical(rng, weights)];
    }
  }
  return 0.0;
}

HyperparameterSpace::HyperparameterSpace(std::array<MetaDistribution, kHpCount> entries) : entries_(std::move(entries)) {
  reindex();
  validate();
}

void HyperparameterSpace::reindex() {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < kHpCount; ++i) {
    offsets_[i] = offset;
    offset += entries_[i].param_count();
  }
  encoded_size_ = offset;
}

void HyperparameterSpace::set(Hp hp, MetaDistribution d) {
  entries_[static_cast<std::size_t>(hp)] = std::move(d);
  reindex();
}

ParamBounds HyperparameterSpace::bounds_at(std::size_t flat_index) const {
  for (std::size_t i = 0; i < kHpCount; ++i) {
    const std::size_t n = entries_[i].param_count();
    if (flat_index < offsets_[i] + n) return entries_[i].param_bounds(flat_index - offsets_[i]);
  }
  throw ContractError("psi index " + std::to_string(flat_index) + " out of range");
}

std::vector<bool> HyperparameterSpace::free_dimensions() const {
  std::vector<bool> out(encoded_size_);
  for (std::size_t i = 0; i < encoded_size_; ++i) {
    const ParamBounds b = bounds_at(i);
    out[i] = b.hi > b.lo;
  }
  return out;
}

void HyperparameterSpace::validate() const {
  for (std::size_t i = 0; i < kHpCount; ++i) {
    const MetaDistribution& d = entries_[i];
    const Hp hp = static_cast<Hp>(i);
    const std::string name(hp_name(hp));
    if (!std::isfinite(d.lo) || !std::isfinite(d.hi)) throw ConfigError(name + ": non-finite bounds");
    if (d.kind != DistKind::choice && d.lo > d.hi) {
      throw ConfigError(name + ": inverted bounds [" + std::to_string(d.lo) + ", " + std::to_string(d.hi) + "]");
    }
    switch (d.kind) {
      case DistKind::beta:
        if (d.lo <= 0.0) throw ConfigError(name + ": beta parameters must be positive");
        if (d.scale <= 0.0 || d.scale > 1.0) throw ConfigError(name + ": beta scale must lie in (0, 1]");
        break;
      case DistKind::truncated_normal:
      case DistKind::log_scaled_truncated_normal:
        if (d.lo <= 0.0) throw ConfigError(name + ": truncated-normal means must be positive");
        break;
      case DistKind::choice:
        if (d.choices.empty()) throw ConfigError(name + ": choice without options");
        if (d.max_weights.size() + 1 != d.choices.size()) {
          throw ConfigError(name + ": need one weight bound per choice after the first");
        }
        for (double w : d.max_weights)
          if (w < 0.0 || !std::isfinite(w)) throw ConfigError(name + ": choice weights must be finite and >= 0");
        break;
      case DistKind::uniform: break;
    }
    const auto [smin, smax] = d.support();
    if (is_probability(hp) && (smin < 0.0 || smax > 1.0)) {
      throw ConfigError(name + ": probability field must stay inside [0, 1]");
    }
    if (is_count(hp)) {
      const bool integral = d.kind == DistKind::choice ? std::all_of(d.choices.begin(), d.choices.end(),
                                                                     [](double c) { return c == std::round(c); })
                                                       : d.round && d.lower_bound == std::round(d.lower_bound);
      if (!integral) throw ConfigError(name + ": count field must be rounded");
      const double minimum = hp == Hp::max_classes ? 2.0 : 1.0;
      if (smin < minimum) throw ConfigError(name + ": count field below " + std::to_string(int(minimum)));
    }
    if (is_flag(hp) && (smin < 0.0 || smax > 1.0)) throw ConfigError(name + ": flag choices must be 0 or 1");
    if (hp == Hp::activation && (smin < 0.0 || smax > 4.0)) throw ConfigError(name + ": unknown activation index");
    if (hp == Hp::gp_sampling_weight && smin < 0.0) throw ConfigError(name + ": weight must be non-negative");
  }
}

namespace {

std::array<MetaDistribution, kHpCount> base_entries() {
  std::array<MetaDistribution, kHpCount> e;
  auto set = [&](Hp hp, MetaDistribution d) { e[static_cast<std::size_t>(hp)] = std::move(d); };
  set(Hp::gp_sampling_weight, MetaDistribution::uniform(0.5, 8.0));
  set(Hp::weight_dropout, MetaDistribution::beta(0.1, 5.0, 0.9));
  set(Hp::sample_scm, MetaDistribution::boolean());
  set(Hp::share_noise_mean, MetaDistribution::boolean());
  set(Hp::y_from_last_layer, MetaDistribution::boolean());
  // Tanh, ReLU, ELU, Identity, Threshold; ELU and Threshold are off by default.
  set(Hp::activation, MetaDistribution::choice({0, 1, 2, 3, 4}, {3.0, 0.0, 3.0, 0.0}));
  set(Hp::blockwise_dropout, MetaDistribution::boolean());
  set(Hp::keep_feature_order, MetaDistribution::boolean());
  set(Hp::blockwise_features, MetaDistribution::boolean());
  set(Hp::gp_noise, MetaDistribution::choice({1e-5, 1e-4, 0.01}, {3.0, 3.0}));
  set(Hp::mlp_layers, MetaDistribution::log_truncated_normal(1.0, 6.0, true, 2.0));
  set(Hp::mlp_hidden, MetaDistribution::log_truncated_normal(5.0, 130.0, true, 4.0));
  set(Hp::noise_std, MetaDistribution::log_truncated_normal(1e-4, 0.3, false, 0.0));
  set(Hp::weight_std, MetaDistribution::log_truncated_normal(0.01, 10.0, false, 0.0));
  set(Hp::scm_causes, MetaDistribution::log_truncated_normal(1.0, 12.0, true, 1.0));
  set(Hp::gp_outputscale, MetaDistribution::log_truncated_normal(1e-5, 10.0, false, 0.0));
  set(Hp::gp_lengthscale, MetaDistribution::log_truncated_normal(1e-5, 10.0, false, 0.0));
  set(Hp::max_classes, MetaDistribution::uniform(10.0, 10.0, true));
  set(Hp::class_shuffle, MetaDistribution::fixed(0.5));
  set(Hp::nan_probability, MetaDistribution::uniform(0.0, 0.3));
  set(Hp::nan_fraction, MetaDistribution::uniform(0.0, 0.3));
  set(Hp::categorical_fraction, MetaDistribution::uniform(0.0, 0.3));
  set(Hp::categorical_shuffle, MetaDistribution::uniform(0.0, 1.0));
  return e;
}

}  // namespace

HyperparameterSpace HyperparameterSpace::paper() { return HyperparameterSpace(base_entries()); }

HyperparameterSpace HyperparameterSpace::desk() {
  auto e = base_entries();
  e[static_cast<std::size_t>(Hp::mlp_layers)] = MetaDistribution::log_truncated_normal(1.0, 3.0, true, 2.0);
  e[static_cast<std::size_t>(Hp::mlp_hidden)] = MetaDistribution::log_truncated_normal(5.0, 24.0, true, 4.0);
  e[static_cast<std::size_t>(Hp::scm_causes)] = MetaDistribution::log_truncated_normal(1.0, 8.0, true, 1.0);
  return HyperparameterSpace(e);
}

HyperparameterSpace HyperparameterSpace::gp_ablation() {
  auto e = base_entries();
  auto set = [&](Hp hp, MetaDistribution d) { e[static_cast<std::size_t>(hp)] = std::move(d); };
  set(Hp::gp_sampling_weight, MetaDistribution::fixed(0.0));
  set(Hp::gp_outputscale, MetaDistribution::uniform(0.0, 10.0));
  set(Hp::gp_lengthscale, MetaDistribution::uniform(0.0, 10.0));
  set(Hp::gp_noise, MetaDistribution::uniform(0.01, 0.5));
  set(Hp::max_classes, MetaDistribution::uniform(2.0, 2.0, true));
  set(Hp::class_shuffle, MetaDistribution::fixed(0.0));
  set(Hp::nan_probability, MetaDistribution::fixed(0.0));
  set(Hp::nan_fraction, MetaDistribution::fixed(0.0));
  set(Hp::categorical_fraction, MetaDistribution::fixed(0.0));
  set(Hp::categorical_shuffle, MetaDistribution::fixed(0.0));
  // Everything the GP generator ignores is pinned so psi has three live dimensions.
  for (Hp hp : {Hp::sample_scm, Hp::share_noise_mean, Hp::y_from_last_layer, Hp::blockwise_dropout,
                Hp::keep_feature_order, Hp::blockwise_features}) {
    set(hp, MetaDistribution::choice({1.0}, {}));
  }
  set(Hp::activation, MetaDistribution::choice({0.0}, {}));
  set(Hp::weight_dropout, MetaDistribution::fixed(0.0));
  set(Hp::mlp_layers, MetaDistribution::uniform(2.0, 2.0, true));
  set(Hp::mlp_hidden, MetaDistribution::uniform(4.0, 4.0, true));
  set(Hp::scm_causes, MetaDistribution::uniform(1.0, 1.0, true));
  set(Hp::noise_std, MetaDistribution::fixed(0.0));
  set(Hp::weight_std, MetaDistribution::fixed(1.0));
  return HyperparameterSpace(e);
}

HyperparameterSpace HyperparameterSpace::toy_linear() {
  auto e = base_entries();
  auto set = [&](Hp hp, MetaDistribution d) { e[static_cast<std::size_t>(hp)] = std::move(d); };
  set(Hp::gp_sampling_weight, MetaDistribution::fixed(1.0));
  set(Hp::sample_scm, MetaDistribution::choice({0.0}, {}));
  set(Hp::activation, MetaDistribution::choice({3.0}, {}));
  set(Hp::weight_dropout, MetaDistribution::fixed(0.0));
  set(Hp::mlp_layers, MetaDistribution::uniform(1.0, 1.0, true));
  set(Hp::noise_std, MetaDistribution::fixed(0.0));
  set(Hp::weight_std, MetaDistribution::fixed(1.0));
  set(Hp::max_classes, MetaDistribution::uniform(2.0, 2.0, true));
  set(Hp::class_shuffle, MetaDistribution::fixed(0.0));
  set(Hp::nan_probability, MetaDistribution::fixed(0.0));
  set(Hp::nan_fraction, MetaDistribution::fixed(0.0));
  set(Hp::categorical_fraction, MetaDistribution::fixed(0.0));
  set(Hp::categorical_shuffle, MetaDistribution::fixed(0.0));
  return HyperparameterSpace(e);
}

std::string HyperparameterSpace::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kHpCount; ++i) {
    const MetaDistribution& d = entries_[i];
    nlohmann::ordered_json e;
    e["kind"] = kind_name(d.kind);
    if (d.kind == DistKind::choice) {
      e["choices"] = d.choices;
      e["max_weights"] = d.max_weights;
    } else {
      e["lo"] = d.lo;
      e["hi"] = d.hi;
      if (d.kind == DistKind::beta) e["scale"] = d.scale;
      e["round"] = d.round;
      e["lower_bound"] = d.lower_bound;
    }
    j[std::string(kNames[i])] = e;
  }
  return j.dump();
}

HyperparameterSpace HyperparameterSpace::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hyperparameter space is not valid JSON: ") + e.what());
  }
  std::array<MetaDistribution, kHpCount> entries;
  for (std::size_t i = 0; i < kHpCount; ++i) {
    const std::string name(kNames[i]);
    if (!j.contains(name)) throw ConfigError("hyperparameter space is missing field '" + name + "'");
    const auto& e = j[name];
    try {
      MetaDistribution d;
      d.kind = kind_from_name(e.at("kind").get<std::string>());
      if (d.kind == DistKind::choice) {
        d.choices = e.at("choices").get<std::vector<double>>();
        d.max_weights = e.at("max_weights").get<std::vector<double>>();
      } else {
        d.lo = e.at("lo").get<double>();
        d.hi = e.at("hi").get<double>();
        d.scale = e.value("scale", 1.0);
        d.round = e.value("round", false);
        d.lower_bound = e.value("lower_bound", 0.0);
      }
      entries[i] = std::move(d);
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("hyperparameter '" + name + "': " + ex.what());
    }
  }
  return HyperparameterSpace(entries);
}

PriorHyperparameters::PriorHyperparameters(SpacePtr space, std::vector<double> params)
    : space_(std::move(space)), params_(std::move(params)) {
  if (params_.size() != space_->encoded_size()) {
    throw ContractError("psi has " + std::to_string(params_.size()) + " parameters, space expects " +
                        std::to_string(space_->encoded_size()));
  }
}

std::span<const double> PriorHyperparameters::params(Hp hp) const {
  return std::span<const double>(params_).subspan(space_->offset(hp), (*space_)[hp].param_count());
}

void PriorHyperparameters::set_params(Hp hp, std::span<const double> values) {
  if (values.size() != (*space_)[hp].param_count()) {
    throw ContractError(std::string(hp_name(hp)) + ": wrong number of parameters");
  }
  std::copy(values.begin(), values.end(), params_.begin() + space_->offset(hp));
}

double PriorHyperparameters::draw(Hp hp, Rng& rng) const { return (*space_)[hp].sample_value(params(hp), rng); }

std::vector<float> PriorHyperparameters::encode() const {
  std::vector<float> out(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) out[i] = static_cast<float>(to_unit(params_[i], space_->bounds_at(i)));
  return out;
}

PriorHyperparameters PriorHyperparameters::decode(SpacePtr space, std::span<const float> encoded) {
  if (encoded.size() != space->encoded_size()) {
    throw ContractError("encoded psi has length " + std::to_string(encoded.size()) + ", expected " +
                        std::to_string(space->encoded_size()));
  }
  std::vector<double> params(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i) params[i] = from_unit(encoded[i], space->bounds_at(i));
  return PriorHyperparameters(std::move(space), std::move(params));
}

PriorHyperparameters sample_hyperparameters(SpacePtr space, Rng& rng) {
  space->validate();
  std::vector<double> params;
  params.reserve(space->encoded_size());
  for (std::size_t i = 0; i < kHpCount; ++i) {
    auto p = (*space)[static_cast<Hp>(i)].sample_params(rng);
    params.insert(params.end(), p.begin(), p.end());
  }
  return PriorHyperparameters(std::move(space), std::move(params));
}

}  // namespace tabpfn::prior

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>

#include "tabpfn/errors.hpp"
#include "tabpfn/infer/predict.hpp"

namespace tabpfn::infer {

namespace {

bool parse_number(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
}

double yeo_johnson_log_likelihood(const std::vector<double>& y, double lambda) {
  const double n = double(y.size());
  double mean = 0.0;
  std::vector<double> t(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) mean += (t[i] = yeo_johnson(y[i], lambda));
  mean /= n;
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  double jac = 0.0;
  for (double v : y) jac += std::copysign(1.0, v) * std::log1p(std::abs(v));
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jac;
}

}  // namespace

void PredictTask::validate() const {
  if (k == 0) throw ContractError("task has no feature columns");
  if (x_train.size() != n_train * k || x_test.size() != n_test * k) throw ContractError("feature buffer size mismatch");
  if (!mask_train.empty() && mask_train.size() != x_train.size()) throw ContractError("train mask size mismatch");
  if (!mask_test.empty() && mask_test.size() != x_test.size()) throw ContractError("test mask size mismatch");
  if (y_train.size() != n_train) throw ContractError("label count does not match train rows");
  if (n_train == 0) throw ContractError("task has no train rows");
  if (class_names.empty()) throw ContractError("task has no classes");
  for (auto y : y_train)
    if (y >= class_names.size()) throw ContractError("label code outside the class map");
  if (!categorical.empty() && categorical.size() != k) throw ContractError("categorical flags size mismatch");
  if (!feature_names.empty() && feature_names.size() != k) throw ContractError("feature names size mismatch");
}

LabelMap remap_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> names(labels.begin(), labels.end());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  bool numeric = !names.empty();
  std::map<std::string, double> value;
  for (const auto& s : names) {
    double v = 0.0;
    if (!parse_number(s, v)) {
      numeric = false;
      break;
    }
    value[s] = v;
  }
  if (numeric) std::stable_sort(names.begin(), names.end(), [&](auto& a, auto& b) { return value[a] < value[b]; });
  if (names.size() > 65535) throw CapacityError("too many distinct labels");
  std::map<std::string, std::uint16_t> code;
  for (std::size_t i = 0; i < names.size(); ++i) code[names[i]] = static_cast<std::uint16_t>(i);
  LabelMap out{names, {}};
  for (const auto& l : labels) out.codes.push_back(code[l]);
  return out;
}

std::string preprocessing_name(Preprocessing p) {
  switch (p) {
    case Preprocessing::z_norm: return "z_norm";
    case Preprocessing::robust: return "robust";
    case Preprocessing::power: return "power";
  }
  return "unknown";
}

double yeo_johnson(double y, double lambda) {
  if (y >= 0.0) {
    return std::abs(lambda) < 1e-12 ? std::log1p(y) : (std::pow(y + 1.0, lambda) - 1.0) / lambda;
  }
  return std::abs(lambda - 2.0) < 1e-12 ? -std::log1p(-y) : -(std::pow(1.0 - y, 2.0 - lambda) - 1.0) / (2.0 - lambda);
}

double fit_yeo_johnson(const std::vector<double>& values) {
  if (values.size() < 2) return 1.0;
  // golden-section search; the profile likelihood is unimodal in practice
  double a = -3.0, b = 3.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = yeo_johnson_log_likelihood(values, c), fd = yeo_johnson_log_likelihood(values, d);
  for (int i = 0; i < 80; ++i) {
    if (fc > fd) {
      b = d, d = c, fd = fc;
      c = b - g * (b - a);
      fc = yeo_johnson_log_likelihood(values, c);
    } else {
      a = c, c = d, fc = fd;
      d = a + g * (b - a);
      fd = yeo_johnson_log_likelihood(values, d);
    }
  }
  return 0.5 * (a + b);
}

Preprocessed preprocess(const PredictTask& task, Preprocessing variant) {
  task.validate();
  const std::size_t k = task.k;
  auto missing = [](const std::vector<std::uint8_t>& m, std::size_t i) { return !m.empty() && m[i]; };
  auto is_cat = [&](std::size_t c) { return !task.categorical.empty() && task.categorical[c]; };

  Preprocessed out;
  out.stats.resize(k);
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> col;
    for (std::size_t r = 0; r < task.n_train; ++r)
      if (!missing(task.mask_train, r * k + c) && std::isfinite(task.x_train[r * k + c])) col.push_back(task.x_train[r * k + c]);
    ColumnStats& s = out.stats[c];
    if (col.empty()) {
      s.dropped = true;
      const std::string name = task.feature_names.empty() ? std::to_string(c) : task.feature_names[c];
      out.warnings.push_back("column '" + name + "' has no observed train value and was dropped");
      continue;
    }
    kept.push_back(c);
    // categorical codes only get the final z-normalisation, as in the prior
    if (!is_cat(c) && variant == Preprocessing::robust) {
      s.center = quantile(col, 0.5);
      const double iqr = quantile(col, 0.75) - quantile(col, 0.25);
      s.scale = iqr > 1e-12 ? iqr : 1.0;
      for (double& v : col) v = (v - s.center) / s.scale;
    } else if (!is_cat(c) && variant == Preprocessing::power) {
      s.lambda = fit_yeo_johnson(col);
      for (double& v : col) v = yeo_johnson(v, s.lambda);
    }
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= double(col.size());
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double std = std::sqrt(ss / double(col.size()));
    s.mean = mean;
    s.std = std > 1e-8 ? std : 0.0;  // 0 marks a constant column
  }

  PredictTask& t = out.task;
  t.n_train = task.n_train;
  t.n_test = task.n_test;
  t.k = kept.size();
  t.y_train = task.y_train;
  t.class_names = task.class_names;
  for (std::size_t c : kept) {
    if (!task.feature_names.empty()) t.feature_names.push_back(task.feature_names[c]);
    if (!task.categorical.empty()) t.categorical.push_back(task.categorical[c]);
  }
  if (t.k == 0) throw ContractError("every feature column is empty after dropping missing columns");

  auto transform = [&](const std::vector<float>& x, const std::vector<std::uint8_t>& mask, std::size_t rows,
                       std::vector<float>& xo, std::vector<std::uint8_t>& mo) {
    xo.assign(rows * t.k, 0.0f);
    mo.assign(rows * t.k, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < kept.size(); ++j) {
        const std::size_t c = kept[j];
        const double raw = x[r * k + c];
        if (missing(mask, r * k + c) || !std::isfinite(raw)) {
          mo[r * t.k + j] = 1;
          continue;
        }
        const ColumnStats& s = out.stats[c];
        double v = raw;
        if (!is_cat(c) && variant == Preprocessing::robust) v = (v - s.center) / s.scale;
        if (!is_cat(c) && variant == Preprocessing::power) v = yeo_johnson(v, s.lambda);
        v = s.std > 0.0 ? (v - s.mean) / s.std : 0.0;
        xo[r * t.k + j] = static_cast<float>(std::clamp(v, -1e4, 1e4));
      }
    }
  };
  transform(task.x_train, task.mask_train, task.n_train, t.x_train, t.mask_train);
  transform(task.x_test, task.mask_test, task.n_test, t.x_test, t.mask_test);
  return out;
}

}  // namespace tabpfn::infer

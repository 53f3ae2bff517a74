#include "tabpfn/eval/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "tabpfn/errors.hpp"
#include "tabpfn/prior/random.hpp"

namespace tabpfn::eval {

namespace {

bool is_missing(const std::string& s) { return s.empty() || s == "NA"; }

std::string where(const std::filesystem::path& p, std::size_t line) {
  return p.string() + ":" + std::to_string(line) + ": ";
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", double(v));
  return buf;
}

}  // namespace

Schema Schema::parse(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("schema: ") + e.what());
  }
  Schema s;
  if (!j.is_object() || !j.contains("target") || !j["target"].is_string())
    throw ParseError("schema: missing string field 'target'");
  if (!j.contains("columns") || !j["columns"].is_array()) throw ParseError("schema: missing array field 'columns'");
  s.target = j["target"];
  for (const auto& c : j["columns"]) {
    if (!c.is_object() || !c.contains("name") || !c["name"].is_string()) throw ParseError("schema: column without a name");
    Column col{c["name"], ColumnType::numeric};
    const std::string type = c.value("type", "numeric");
    if (type == "numeric") {
      col.type = ColumnType::numeric;
    } else if (type == "categorical") {
      col.type = ColumnType::categorical;
    } else {
      throw ParseError("schema: unknown type '" + type + "' for column '" + col.name + "'");
    }
    s.columns.push_back(col);
  }
  if (std::none_of(s.columns.begin(), s.columns.end(), [&](auto& c) { return c.name == s.target; }))
    throw ParseError("schema: target '" + s.target + "' is not among the columns");
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open schema " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Schema::to_json() const {
  nlohmann::ordered_json j;
  j["target"] = target;
  j["columns"] = nlohmann::ordered_json::array();
  for (const auto& c : columns)
    j["columns"].push_back({{"name", c.name}, {"type", c.type == ColumnType::numeric ? "numeric" : "categorical"}});
  return j.dump(2);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  for (auto& f : out) {
    const auto b = f.find_first_not_of(' ');
    const auto e = f.find_last_not_of(' ');
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& csv, const Schema& schema, const Dataset* reference) {
  std::ifstream in(csv);
  if (!in) throw ParseError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(where(csv, 1) + "empty file");
  const auto header = split_csv_line(line);

  std::map<std::string, const Schema::Column*> by_name;
  for (const auto& c : schema.columns) by_name[c.name] = &c;
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!by_name.count(header[i])) throw ParseError(where(csv, 1) + "column '" + header[i] + "' is not in the schema");
    if (position.count(header[i])) throw ParseError(where(csv, 1) + "duplicate column '" + header[i] + "'");
    position[header[i]] = i;
  }
  const bool has_target = position.count(schema.target) > 0;
  if (!has_target && !reference) throw ParseError(where(csv, 1) + "target column '" + schema.target + "' missing");
  for (const auto& c : schema.columns) {
    if (c.name != schema.target && !position.count(c.name))
      throw ParseError(where(csv, 1) + "schema column '" + c.name + "' missing from the header");
  }

  // Candidate features in schema order.
  std::vector<const Schema::Column*> features;
  for (const auto& c : schema.columns)
    if (c.name != schema.target) features.push_back(&c);
  std::vector<std::vector<std::string>> categories(features.size());
  std::vector<std::map<std::string, std::size_t>> codes(features.size());
  if (reference) {
    for (std::size_t f = 0; f < features.size(); ++f) {
      const auto it = std::find(reference->feature_names.begin(), reference->feature_names.end(), features[f]->name);
      if (it == reference->feature_names.end()) continue;
      categories[f] = reference->categories[std::size_t(it - reference->feature_names.begin())];
      for (std::size_t i = 0; i < categories[f].size(); ++i) codes[f][categories[f][i]] = i;
    }
  }

  std::vector<std::vector<double>> values(features.size());
  std::vector<std::vector<std::uint8_t>> missing(features.size());
  std::vector<std::string> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError(where(csv, line_no) + "expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    for (std::size_t f = 0; f < features.size(); ++f) {
      const std::string& s = fields[position[features[f]->name]];
      if (is_missing(s)) {
        values[f].push_back(0.0);
        missing[f].push_back(1);
        continue;
      }
      missing[f].push_back(0);
      if (features[f]->type == ColumnType::numeric) {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
          throw ParseError(where(csv, line_no) + "column '" + features[f]->name + "': cannot parse '" + s + "' as a number");
        values[f].push_back(v);
      } else {
        auto [it, inserted] = codes[f].emplace(s, categories[f].size());
        if (inserted) categories[f].push_back(s);
        values[f].push_back(double(it->second));
      }
    }
    if (has_target) {
      const std::string& label = fields[position[schema.target]];
      if (is_missing(label)) throw ParseError(where(csv, line_no) + "missing target value");
      labels.push_back(label);
    }
  }

  Dataset d;
  d.name = csv.stem().string();
  d.n = values.empty() ? labels.size() : values[0].size();
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < features.size(); ++f) {
    bool keep;
    if (reference) {
      keep = std::find(reference->feature_names.begin(), reference->feature_names.end(), features[f]->name) !=
             reference->feature_names.end();
    } else {
      keep = std::count(missing[f].begin(), missing[f].end(), 0) > 0;
      if (!keep) d.warnings.push_back("column '" + features[f]->name + "' has no observed value and was dropped");
    }
    if (keep) kept.push_back(f);
  }
  d.k = kept.size();
  if (d.k == 0) throw ParseError(csv.string() + ": no usable feature columns");
  d.x.resize(d.n * d.k);
  d.mask.resize(d.n * d.k);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const std::size_t f = kept[j];
    d.feature_names.push_back(features[f]->name);
    d.categorical.push_back(features[f]->type == ColumnType::categorical);
    d.categories.push_back(categories[f]);
    for (std::size_t r = 0; r < d.n; ++r) {
      d.x[r * d.k + j] = static_cast<float>(values[f][r]);
      d.mask[r * d.k + j] = missing[f][r];
    }
  }
  if (has_target) {
    if (reference) {
      d.class_names = reference->class_names;
      for (const auto& l : labels) {
        const auto it = std::find(d.class_names.begin(), d.class_names.end(), l);
        if (it == d.class_names.end()) throw ParseError(csv.string() + ": label '" + l + "' does not occur in the training data");
        d.y.push_back(static_cast<std::uint16_t>(it - d.class_names.begin()));
      }
    } else {
      auto map = infer::remap_labels(labels);
      d.class_names = std::move(map.names);
      d.y = std::move(map.codes);
    }
  } else {
    d.class_names = reference->class_names;
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& csv, const std::filesystem::path& schema) {
  return load_dataset(csv, Schema::load(schema));
}

Schema schema_of(const Dataset& data, const std::string& target) {
  Schema s;
  for (std::size_t j = 0; j < data.k; ++j)
    s.columns.push_back({data.feature_names[j], data.categorical[j] ? ColumnType::categorical : ColumnType::numeric});
  s.columns.push_back({target, ColumnType::categorical});
  s.target = target;
  return s;
}

void write_dataset(const std::filesystem::path& csv, const Dataset& data, const std::string& target) {
  std::ofstream out(csv);
  if (!out) throw ParseError("cannot open " + csv.string() + " for writing");
  for (std::size_t j = 0; j < data.k; ++j) out << quote_if_needed(data.feature_names[j]) << ',';
  out << quote_if_needed(target) << '\n';
  for (std::size_t r = 0; r < data.n; ++r) {
    for (std::size_t j = 0; j < data.k; ++j) {
      const std::size_t i = r * data.k + j;
      if (data.mask[i]) {
        out << "NA";
      } else if (data.categorical[j]) {
        out << quote_if_needed(data.categories[j][static_cast<std::size_t>(data.x[i])]);
      } else {
        out << format_float(data.x[i]);
      }
      out << ',';
    }
    if (!data.y.empty()) out << quote_if_needed(data.class_names[data.y[r]]);
    out << '\n';
  }
}

Split split(const Dataset& data, std::uint64_t seed, double test_fraction, int retries) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ContractError("split: test fraction must be in (0, 1)");
  if (data.y.size() != data.n) throw ContractError("split: dataset has no labels");
  if (data.n < 2) throw ContractError("split: need at least two rows");
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(double(data.n) * (1.0 - test_fraction))), 1, data.n - 1);
  std::vector<bool> present(data.class_names.size(), false);
  for (auto y : data.y) present[y] = true;

  prior::Rng rng(seed);
  for (int attempt = 0; attempt <= retries; ++attempt) {
    const auto order = prior::permutation(rng, data.n);
    std::vector<bool> seen(present.size(), false);
    for (std::size_t i = 0; i < n_train; ++i) seen[data.y[order[i]]] = true;
    if (seen != present) continue;

    Split s;
    s.train_rows.assign(order.begin(), order.begin() + std::ptrdiff_t(n_train));
    s.test_rows.assign(order.begin() + std::ptrdiff_t(n_train), order.end());
    infer::PredictTask& t = s.task;
    t.n_train = n_train;
    t.n_test = data.n - n_train;
    t.k = data.k;
    t.class_names = data.class_names;
    t.feature_names = data.feature_names;
    t.categorical = data.categorical;
    auto copy_rows = [&](const std::vector<std::size_t>& rows, std::vector<float>& x, std::vector<std::uint8_t>& m) {
      for (std::size_t r : rows) {
        x.insert(x.end(), data.x.begin() + std::ptrdiff_t(r * data.k), data.x.begin() + std::ptrdiff_t((r + 1) * data.k));
        m.insert(m.end(), data.mask.begin() + std::ptrdiff_t(r * data.k),
                 data.mask.begin() + std::ptrdiff_t((r + 1) * data.k));
      }
    };
    copy_rows(s.train_rows, t.x_train, t.mask_train);
    copy_rows(s.test_rows, t.x_test, t.mask_test);
    for (std::size_t r : s.train_rows) t.y_train.push_back(data.y[r]);
    for (std::size_t r : s.test_rows) s.test_labels.push_back(data.y[r]);
    return s;
  }
  throw ContractError("split: could not place every class on the train side in " + std::to_string(retries + 1) +
                      " attempts");
}

infer::PredictTask make_task(const Dataset& train, const Dataset& test) {
  if (train.feature_names != test.feature_names) throw ContractError("make_task: train and test columns differ");
  if (train.y.size() != train.n) throw ContractError("make_task: training data has no labels");
  infer::PredictTask t;
  t.n_train = train.n;
  t.n_test = test.n;
  t.k = train.k;
  t.x_train = train.x;
  t.mask_train = train.mask;
  t.x_test = test.x;
  t.mask_test = test.mask;
  t.y_train = train.y;
  t.class_names = train.class_names;
  t.feature_names = train.feature_names;
  t.categorical = train.categorical;
  return t;
}

}  // namespace tabpfn::eval

#pragma once

// Tabular datasets from CSV plus a JSON schema, and the train/test splits the
// benchmark runs on.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tabpfn/infer/predict.hpp"

namespace tabpfn::eval {

enum class ColumnType { numeric, categorical };

/// {"target": "y", "columns": [{"name": "a", "type": "numeric"}, ...]}
/// The column list names every CSV column, the target included.
struct Schema {
  struct Column {
    std::string name;
    ColumnType type = ColumnType::numeric;
  };
  std::vector<Column> columns;
  std::string target;

  static Schema parse(std::string_view json);
  static Schema load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct Dataset {
  std::string name;
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<float> x;  // row-major n x k, 0 where missing
  std::vector<std::uint8_t> mask;  // 1 = missing
  std::vector<std::uint16_t> y;  // empty when the file has no target column
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  std::vector<bool> categorical;
  std::vector<std::vector<std::string>> categories;  // per feature, code -> string in first-appearance order
  std::vector<std::string> warnings;

  bool labeled() const { return !y.empty() || n == 0; }
};

/// "" and "NA" are missing. Categorical strings get integer codes by first
/// appearance; labels are remapped with infer::remap_labels. Columns with no
/// observed value are dropped with a warning. With a reference dataset the
/// feature set, category codes and label map are taken from it, and the
/// target column may be absent. Throws ParseError naming the line.
Dataset load_dataset(const std::filesystem::path& csv, const Schema& schema, const Dataset* reference = nullptr);
Dataset load_dataset(const std::filesystem::path& csv, const std::filesystem::path& schema);

/// Writes the dataset back as CSV (features then target) readable by load_dataset.
void write_dataset(const std::filesystem::path& csv, const Dataset& data, const std::string& target = "target");
Schema schema_of(const Dataset& data, const std::string& target = "target");

/// Splits one CSV line; double quotes group and "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line);

struct Split {
  infer::PredictTask task;
  std::vector<std::uint16_t> test_labels;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Seeded shuffle, then the first round(n * (1 - test_fraction)) rows train.
/// Reshuffles (up to `retries` times) until every class has a train row.
Split split(const Dataset& data, std::uint64_t seed, double test_fraction, int retries = 100);

/// A task with all of `train` as context and all of `test` as queries.
infer::PredictTask make_task(const Dataset& train, const Dataset& test);

}  // namespace tabpfn::eval

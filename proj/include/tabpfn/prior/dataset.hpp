#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabpfn/prior/hyperparameters.hpp"

namespace tabpfn::prior {

enum class Family : std::uint8_t { gp, scm, bnn, unknown };

std::string_view family_name(Family f);

struct SyntheticDataset {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t num_classes = 0;
  std::size_t split_point = 0;  // rows [0, split) train, [split, n) held out
  std::vector<float> x;  // row-major n * k
  std::vector<std::uint8_t> mask;  // 1 = missing
  std::vector<std::uint16_t> y;
  std::vector<float> psi;  // encoded hyperparameters, empty when unconditioned
  Family family = Family::unknown;

  std::size_t n_train() const { return split_point; }
  std::size_t n_query() const { return n - split_point; }
};

struct PriorConfig {
  bool use_gp = true;
  bool use_scm = true;
  bool use_bnn = true;
  /// Binary labels from a split at the median instead of random bounds.
  bool median_split = false;
  /// Whole-dataset redraws on degenerate, unlabelable or overflowing draws.
  int max_retries = 16;
};

struct FamilyProbabilities {
  double gp = 0.0;
  double scm = 0.0;
  double bnn = 0.0;
};

/// Mixture weights implied by one dataset-level draw of the sampling weight w
/// and the SCM flag: P(GP) = 1 / (1 + w), the rest split by the flag.
FamilyProbabilities family_probabilities(double gp_weight, double p_scm, const PriorConfig& config);

SyntheticDataset sample_dataset(const PriorHyperparameters& psi, std::size_t n, std::size_t k, Rng& rng,
                                const PriorConfig& config = {});

/// Anything the trainer can draw datasets from.
class DatasetSource {
 public:
  virtual ~DatasetSource() = default;
  virtual SyntheticDataset sample(Rng& rng) const = 0;
  /// Length of the attached psi vector; 0 for unconditioned sources.
  virtual std::size_t psi_size() const = 0;
};

/// Draws psi from the space (or uses a fixed one), then a dataset with
/// k uniform in [k_min, k_max].
class PriorSource : public DatasetSource {
 public:
  PriorSource(SpacePtr space, PriorConfig config, std::size_t n, std::size_t k_min, std::size_t k_max,
              bool attach_psi = true);

  void fix_psi(PriorHyperparameters psi) { fixed_ = std::move(psi); }
  const SpacePtr& space() const { return space_; }
  const PriorConfig& config() const { return config_; }

  SyntheticDataset sample(Rng& rng) const override;
  std::size_t psi_size() const override { return attach_psi_ ? space_->encoded_size() : 0; }

 private:
  SpacePtr space_;
  PriorConfig config_;
  std::size_t n_;
  std::size_t k_min_;
  std::size_t k_max_;
  bool attach_psi_;
  std::optional<PriorHyperparameters> fixed_;
};

/// Binary container: "PFND", u16 version, u32 record count, then records.
void write_shard(const std::filesystem::path& path, std::span<const SyntheticDataset> datasets);
std::vector<SyntheticDataset> read_shard(const std::filesystem::path& path);

}  // namespace tabpfn::prior

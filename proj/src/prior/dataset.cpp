#include "tabpfn/prior/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tabpfn/errors.hpp"
#include "tabpfn/prior/generators.hpp"
#include "tabpfn/prior/postprocess.hpp"

namespace tabpfn::prior {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::gp: return "gp";
    case Family::scm: return "scm";
    case Family::bnn: return "bnn";
    case Family::unknown: return "unknown";
  }
  return "unknown";
}

FamilyProbabilities family_probabilities(double gp_weight, double p_scm, const PriorConfig& config) {
  if (!config.use_gp && !config.use_scm && !config.use_bnn) throw ConfigError("prior: every family is disabled");
  FamilyProbabilities p;
  const bool mlp = config.use_scm || config.use_bnn;
  p.gp = !config.use_gp ? 0.0 : (mlp ? 1.0 / (1.0 + std::max(0.0, gp_weight)) : 1.0);
  const double rest = 1.0 - p.gp;
  if (config.use_scm && config.use_bnn) {
    p.scm = rest * p_scm;
    p.bnn = rest * (1.0 - p_scm);
  } else if (config.use_scm) {
    p.scm = rest;
  } else {
    p.bnn = rest;
  }
  return p;
}

namespace {

Family draw_family(const PriorHyperparameters& psi, Rng& rng, const PriorConfig& config) {
  const double w = psi.draw(Hp::gp_sampling_weight, rng);
  const bool scm_flag = psi.draw(Hp::sample_scm, rng) > 0.5;
  const FamilyProbabilities p = family_probabilities(w, scm_flag ? 1.0 : 0.0, config);
  const std::array<double, 3> weights{p.gp, p.scm, p.bnn};
  return static_cast<Family>(categorical(rng, weights));
}

SyntheticDataset sample_once(const PriorHyperparameters& psi, Family family, std::size_t n, std::size_t k, Rng& rng,
                             const PriorConfig& config) {
  const auto max_classes = static_cast<std::size_t>(std::max(2.0, std::round(psi.draw(Hp::max_classes, rng))));
  const std::size_t num_classes =
      config.median_split ? 2 : static_cast<std::size_t>(uniform_int(rng, 2, std::int64_t(std::min(max_classes, n))));
  const double shuffle = std::clamp(psi.draw(Hp::class_shuffle, rng), 0.0, 1.0);

  RawData raw;
  switch (family) {
    case Family::gp: raw = sample_gp_dataset(psi, n, k, rng); break;
    case Family::scm: raw = scm_forward(sample_scm(psi, k, rng), n, rng); break;
    default: raw = sample_bnn_dataset(psi, n, k, rng); break;
  }

  SyntheticDataset ds;
  ds.n = n;
  ds.k = k;
  ds.family = family;
  ds.num_classes = num_classes;
  if (config.median_split) {
    const std::array<double, 1> half{0.5};
    ds.y = labels_from_bounds(raw.y, half);
    const auto ones = std::count(ds.y.begin(), ds.y.end(), 1);
    if (ones == 0 || std::size_t(ones) == n) throw UnlabelableError("median split left a class empty");
  } else {
    ds.y = labelize(raw.y, num_classes, rng, shuffle);
  }

  const double p_cat = std::clamp(psi.draw(Hp::categorical_fraction, rng), 0.0, 1.0);
  const double p_scat = std::clamp(psi.draw(Hp::categorical_shuffle, rng), 0.0, 1.0);
  categorize_features(raw.x, n, k, p_cat, p_scat, max_classes, rng);
  const double p_nan = std::clamp(psi.draw(Hp::nan_probability, rng), 0.0, 1.0);
  const double f_nan = std::clamp(psi.draw(Hp::nan_fraction, rng), 0.0, 1.0);
  ds.mask = inject_missing(raw.x, p_nan, f_nan, rng);
  normalize_columns(raw.x, ds.mask, n, k);
  ds.x.assign(raw.x.begin(), raw.x.end());
  ds.split_point = static_cast<std::size_t>(uniform_int(rng, 1, std::int64_t(n) - 1));
  ds.psi = psi.encode();
  return ds;
}

}  // namespace

SyntheticDataset sample_dataset(const PriorHyperparameters& psi, std::size_t n, std::size_t k, Rng& rng,
                                const PriorConfig& config) {
  if (n < 2) throw ContractError("sample_dataset: need at least 2 rows");
  if (k < 1) throw ContractError("sample_dataset: need at least 1 feature");
  // The family is fixed before any retry so that failed draws cannot skew
  // the mixture proportions.
  const Family family = draw_family(psi, rng, config);
  for (int attempt = 0;; ++attempt) {
    try {
      return sample_once(psi, family, n, k, rng, config);
    } catch (const DegenerateGraphError&) {
      if (attempt >= config.max_retries) throw;
    } catch (const UnlabelableError&) {
      if (attempt >= config.max_retries) throw;
    } catch (const NumericalError&) {
      if (attempt >= config.max_retries) throw;
    }
  }
}

PriorSource::PriorSource(SpacePtr space, PriorConfig config, std::size_t n, std::size_t k_min, std::size_t k_max,
                         bool attach_psi)
    : space_(std::move(space)), config_(config), n_(n), k_min_(k_min), k_max_(k_max), attach_psi_(attach_psi) {
  if (k_min_ < 1 || k_min_ > k_max_) throw ConfigError("prior source: invalid feature range");
  space_->validate();
}

SyntheticDataset PriorSource::sample(Rng& rng) const {
  const PriorHyperparameters psi = fixed_ ? *fixed_ : sample_hyperparameters(space_, rng);
  const auto k = static_cast<std::size_t>(uniform_int(rng, std::int64_t(k_min_), std::int64_t(k_max_)));
  SyntheticDataset ds = sample_dataset(psi, n_, k, rng, config_);
  if (!attach_psi_) ds.psi.clear();
  return ds;
}

namespace {

constexpr char kShardMagic[4] = {'P', 'F', 'N', 'D'};
constexpr std::uint16_t kShardVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_array(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(T)));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("shard: truncated record");
  return v;
}

template <typename T>
void get_array(std::istream& in, std::vector<T>& v, std::size_t count) {
  v.resize(count);
  if (!in.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(T)))) {
    throw ParseError("shard: truncated record");
  }
}

}  // namespace

void write_shard(const std::filesystem::path& path, std::span<const SyntheticDataset> datasets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  out.write(kShardMagic, 4);
  put<std::uint16_t>(out, kShardVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(datasets.size()));
  for (const auto& d : datasets) {
    put<std::uint32_t>(out, std::uint32_t(d.n));
    put<std::uint32_t>(out, std::uint32_t(d.k));
    put<std::uint32_t>(out, std::uint32_t(d.num_classes));
    put<std::uint32_t>(out, std::uint32_t(d.split_point));
    put<std::uint32_t>(out, std::uint32_t(d.psi.size()));
    put_array(out, d.psi);
    put_array(out, d.x);
    put_array(out, d.mask);
    put_array(out, d.y);
  }
  if (!out) throw ParseError("write to " + path.string() + " failed");
}

std::vector<SyntheticDataset> read_shard(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kShardMagic)) throw ParseError(path.string() + ": not a PFND shard");
  const auto version = get<std::uint16_t>(in);
  if (version != kShardVersion) throw ParseError(path.string() + ": unsupported shard version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in);
  std::vector<SyntheticDataset> out(count);
  for (auto& d : out) {
    d.n = get<std::uint32_t>(in);
    d.k = get<std::uint32_t>(in);
    d.num_classes = get<std::uint32_t>(in);
    d.split_point = get<std::uint32_t>(in);
    get_array(in, d.psi, get<std::uint32_t>(in));
    get_array(in, d.x, d.n * d.k);
    get_array(in, d.mask, d.n * d.k);
    get_array(in, d.y, d.n);
  }
  return out;
}

}  // namespace tabpfn::prior

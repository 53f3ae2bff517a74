#include <cstring>
#include <fstream>

#include "tabpfn/errors.hpp"
#include "tabpfn/model/transformer.hpp"

namespace tabpfn::model {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'N', 'C'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError(path.string() + ": truncated checkpoint");
  return v;
}

void get_floats(std::istream& in, std::span<float> out, const std::filesystem::path& path) {
  if (!in.read(reinterpret_cast<char*>(out.data()), std::streamsize(out.size() * sizeof(float)))) {
    throw ParseError(path.string() + ": truncated checkpoint");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  const ModelConfig& c = ckpt.model.config();
  out.write(kMagic, 4);
  put<std::uint16_t>(out, kVersion);
  for (std::size_t v : {c.layers, c.embedding, c.hidden, c.heads, c.max_features, c.max_classes, c.max_train_length,
                        c.psi_size})
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.space_json.size()));
  out.write(ckpt.space_json.data(), std::streamsize(ckpt.space_json.size()));
  put<std::uint64_t>(out, ckpt.model.parameter_count());
  for (const Tensor& t : ckpt.model.parameters()) {
    out.write(reinterpret_cast<const char*>(t.data().data()), std::streamsize(t.size() * sizeof(float)));
  }
  put<std::uint8_t>(out, ckpt.tuning ? 1 : 0);
  if (ckpt.tuning) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tuning->psi.size()));
    out.write(reinterpret_cast<const char*>(ckpt.tuning->psi.data()),
              std::streamsize(ckpt.tuning->psi.size() * sizeof(float)));
    put<float>(out, ckpt.tuning->temperature);
  }
  if (!out) throw ParseError("write to " + path.string() + " failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError(path.string() + ": not a PFNC checkpoint");
  const auto version = get<std::uint16_t>(in, path);
  if (version != kVersion) throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  for (std::size_t* f : {&c.layers, &c.embedding, &c.hidden, &c.heads, &c.max_features, &c.max_classes,
                         &c.max_train_length, &c.psi_size})
    *f = get<std::uint32_t>(in, path);
  std::string space(get<std::uint32_t>(in, path), '\0');
  if (!in.read(space.data(), std::streamsize(space.size()))) throw ParseError(path.string() + ": truncated checkpoint");

  Checkpoint ckpt{Transformer(c), std::move(space), std::nullopt};
  const auto count = get<std::uint64_t>(in, path);
  if (count != ckpt.model.parameter_count()) {
    throw ParseError(path.string() + ": parameter blob holds " + std::to_string(count) + " values, config implies " +
                     std::to_string(ckpt.model.parameter_count()));
  }
  for (Tensor& t : ckpt.model.parameters()) get_floats(in, t.mutable_data(), path);
  if (get<std::uint8_t>(in, path)) {
    TuningRecord rec;
    rec.psi.resize(get<std::uint32_t>(in, path));
    get_floats(in, rec.psi, path);
    rec.temperature = get<float>(in, path);
    ckpt.tuning = std::move(rec);
  }
  return ckpt;
}

}  // namespace tabpfn::model

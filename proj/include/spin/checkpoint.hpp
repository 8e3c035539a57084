#pragma once

// Checkpoint container. All integers little-endian.
//
//   offset  size  field
//   0       8     magic "SPINCKPT"
//   8       4     u32 format version (1)
//   12      8     u64 config text length K, then K bytes of config text
//   .       1     u8 element size in bytes: 4 (float32) or 8 (float64)
//   .       4     u32 record count R, then R records:
//                   u8  kind (0 parameter, 1 buffer, 2 optimizer velocity)
//                   u32 name length, name bytes
//                   u32 rank, rank x u64 dims
//                   numel x element, row-major IEEE-754
//   .       8     u64 epoch (next epoch to run)
//   .       8     u64 iteration count
//   .       8     u64 rng state length, then the textual mt19937_64 state
//
// Velocity records are named after the parameter they belong to.

#include <spin/config.hpp>
#include <spin/optim.hpp>

#include <bit>
#include <filesystem>

namespace spin {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

constexpr char kCheckpointMagic[8] = {'S', 'P', 'I', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct TrainState {
  int epoch = 0;
  long iter = 0;
  OptimizerState<T> optimizer;
  std::string rng_state;
};

struct CheckpointRecord {
  enum Kind : std::uint8_t { kParam = 0, kBuffer = 1, kVelocity = 2 };
  Kind kind = kParam;
  std::string name;
  Shape shape;
  std::vector<double> values;  // widened for transport; exact for both dtypes
};

struct CheckpointData {
  std::string config_text;
  int element_size = 4;
  std::vector<CheckpointRecord> records;
  std::uint64_t epoch = 0, iter = 0;
  std::string rng_state;
};

namespace detail {

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_string(std::ostream& os, const std::string& s, bool wide) {
  if (wide) put<std::uint64_t>(os, s.size());
  else put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename V>
V get(std::istream& is, const std::string& path) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint '" + path + "' is truncated");
  return v;
}

inline std::string get_string(std::istream& is, const std::string& path, bool wide) {
  const std::uint64_t n = wide ? get<std::uint64_t>(is, path) : get<std::uint32_t>(is, path);
  if (n > (1ULL << 32)) throw CheckpointError("checkpoint '" + path + "' has a corrupt string length");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n)))
    throw CheckpointError("checkpoint '" + path + "' is truncated");
  return s;
}

template <typename T>
void put_record(std::ostream& os, std::uint8_t kind, const std::string& name, const Shape& shape, const T* data) {
  put<std::uint8_t>(os, kind);
  put_string(os, name, false);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(numel(shape) * sizeof(T)));
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const std::string& config_text, const ParamSet<T>& ps,
                     const TrainState<T>* state = nullptr) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write checkpoint '" + path + "'");
    os.write(kCheckpointMagic, 8);
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    detail::put_string(os, config_text, true);
    detail::put<std::uint8_t>(os, sizeof(T));
    const std::size_t nvel = state ? state->optimizer.velocity.size() : 0;
    if (state && nvel && nvel != ps.params.size())
      throw CheckpointError("save_checkpoint: optimizer tracks " + std::to_string(nvel) + " tensors, model has " +
                            std::to_string(ps.params.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ps.params.size() + ps.buffers.size() + nvel));
    for (const auto& p : ps.params) detail::put_record(os, 0, p.name, p.tensor.shape(), p.tensor.ptr());
    for (const auto& b : ps.buffers) detail::put_record(os, 1, b.name, b.tensor.shape(), b.tensor.ptr());
    for (std::size_t i = 0; i < nvel; ++i)
      detail::put_record(os, 2, ps.params[i].name, ps.params[i].tensor.shape(), state->optimizer.velocity[i].data());
    detail::put<std::uint64_t>(os, state ? static_cast<std::uint64_t>(state->epoch) : 0);
    detail::put<std::uint64_t>(os, state ? static_cast<std::uint64_t>(state->iter) : 0);
    detail::put_string(os, state ? state->rng_state : std::string(), true);
    if (!os) throw CheckpointError("failed writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw CheckpointError("'" + path + "' is not a checkpoint (bad magic)");
  const auto version = detail::get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
  CheckpointData d;
  d.config_text = detail::get_string(is, path, true);
  d.element_size = detail::get<std::uint8_t>(is, path);
  if (d.element_size != 4 && d.element_size != 8)
    throw CheckpointError("checkpoint '" + path + "' has element size " + std::to_string(d.element_size));
  const auto count = detail::get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    const auto kind = detail::get<std::uint8_t>(is, path);
    if (kind > 2) throw CheckpointError("checkpoint '" + path + "' has unknown record kind " + std::to_string(kind));
    r.kind = static_cast<CheckpointRecord::Kind>(kind);
    r.name = detail::get_string(is, path, false);
    const auto rank = detail::get<std::uint32_t>(is, path);
    if (rank > 8) throw CheckpointError("checkpoint '" + path + "' has a corrupt rank for '" + r.name + "'");
    for (std::uint32_t k = 0; k < rank; ++k) r.shape.push_back(static_cast<int>(detail::get<std::uint64_t>(is, path)));
    const std::size_t n = numel(r.shape);
    r.values.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      r.values[k] = d.element_size == 4 ? static_cast<double>(detail::get<float>(is, path)) : detail::get<double>(is, path);
    d.records.push_back(std::move(r));
  }
  d.epoch = detail::get<std::uint64_t>(is, path);
  d.iter = detail::get<std::uint64_t>(is, path);
  d.rng_state = detail::get_string(is, path, true);
  return d;
}

// Copies stored tensors into `ps` (and `state` when given). Every parameter
// and buffer must be present with a matching shape.
template <typename T>
void apply_checkpoint(const CheckpointData& d, ParamSet<T>& ps, TrainState<T>* state = nullptr) {
  const auto find = [&](CheckpointRecord::Kind kind, const std::string& name) -> const CheckpointRecord* {
    for (const auto& r : d.records)
      if (r.kind == kind && r.name == name) return &r;
    return nullptr;
  };
  const auto fill = [&](CheckpointRecord::Kind kind, NamedTensor<T>& nt) {
    const CheckpointRecord* r = find(kind, nt.name);
    if (!r) throw CheckpointError("checkpoint is missing tensor '" + nt.name + "'");
    if (r->shape != nt.tensor.shape())
      throw CheckpointError("checkpoint tensor '" + nt.name + "' has shape " + to_string(r->shape) + ", model expects " +
                            to_string(nt.tensor.shape()));
    auto& dst = nt.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r->values[i]);
  };
  for (auto& p : ps.params) fill(CheckpointRecord::kParam, p);
  for (auto& b : ps.buffers) fill(CheckpointRecord::kBuffer, b);
  if (!state) return;
  state->epoch = static_cast<int>(d.epoch);
  state->iter = static_cast<long>(d.iter);
  state->rng_state = d.rng_state;
  state->optimizer.velocity.assign(ps.params.size(), {});
  for (std::size_t i = 0; i < ps.params.size(); ++i) {
    const CheckpointRecord* r = find(CheckpointRecord::kVelocity, ps.params[i].name);
    auto& v = state->optimizer.velocity[i];
    v.assign(ps.params[i].tensor.numel(), T(0));
    if (r)
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<T>(r->values[k]);
  }
}

template <typename T>
void load_checkpoint(const std::string& path, ParamSet<T>& ps, TrainState<T>* state = nullptr) {
  apply_checkpoint(read_checkpoint(path), ps, state);
}

}  // namespace spin

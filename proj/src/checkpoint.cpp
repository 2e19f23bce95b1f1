#include "gc3/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

namespace gc3 {

namespace {

constexpr char kMagic[8] = {'G', 'C', '3', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CheckpointError(std::string("truncated at ") + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (1u << 30)) throw CheckpointError(std::string("implausible length for ") + what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError(std::string("truncated at ") + what);
  return s;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(out, d);
  for (double v : t.data()) put<double>(out, v);
}

}  // namespace

void save_checkpoint(const std::string& path, const SeparationModel& model, const NamedParams& extras) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + tmp + "'");
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string config = serialize_config(model.config);
    put<std::uint64_t>(out, config.size());
    out.write(config.data(), static_cast<std::streamsize>(config.size()));
    const NamedParams params = model.parameters();
    put<std::uint64_t>(out, params.size() + extras.size());
    for (const auto& [name, t] : params) put_tensor(out, name, t);
    for (const auto& [name, t] : extras) put_tensor(out, name, t);
    if (!out.flush()) throw CheckpointError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError("'" + path + "' is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const std::string config_text = get_bytes(in, get<std::uint64_t>(in, "config length"), "config");
  Checkpoint ck;
  ck.model = build_model(parse_config_text(config_text), 0);

  std::map<std::string, Tensor> slots;
  for (auto& [name, t] : ck.model.parameters()) slots.emplace(name, t);
  const auto count = get<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_bytes(in, get<std::uint32_t>(in, "name length"), "name");
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank > 8) throw CheckpointError("tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in, "extent");
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = get<double>(in, "tensor data");
    auto slot = slots.find(name);
    if (slot == slots.end()) {
      ck.extras.emplace_back(name, Tensor(std::move(shape), std::move(data)));
      continue;
    }
    Tensor target = slot->second;
    if (target.shape() != shape) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                            shape_str(target.shape()));
    }
    std::copy(data.begin(), data.end(), target.mutable_data().begin());
    slots.erase(slot);
  }
  if (!slots.empty()) throw CheckpointError("checkpoint is missing tensor '" + slots.begin()->first + "'");
  return ck;
}

}  // namespace gc3

#include "mmasr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mmasr/errors.hpp"

namespace mmasr {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("checkpoint truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw CheckpointError("checkpoint string too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw CheckpointError("checkpoint truncated");
  return s;
}

}  // namespace

const ParamRecord* Checkpoint::find(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    put_string(out, p.name);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.component));
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
    write_tensor_record(out, p.value);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.stats.size()));
  for (const auto& [name, t] : ckpt.stats) {
    put_string(out, name);
    write_tensor_record(out, t);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad checkpoint magic (expected MMCK)");
  auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  auto n_meta = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_string(in);
    ckpt.metadata[k] = get_string(in);
  }
  auto n_params = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    ParamRecord p;
    p.name = get_string(in);
    auto comp = get<std::uint8_t>(in);
    if (comp > 3) throw CheckpointError("parameter " + p.name + ": bad component tag");
    p.component = static_cast<Component>(comp);
    p.trainable = get<std::uint8_t>(in) != 0;
    try {
      p.value = read_tensor_record(in);
    } catch (const DataError& e) {
      throw CheckpointError("parameter " + p.name + ": " + e.what());
    }
    ckpt.params.push_back(std::move(p));
  }
  auto n_stats = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_stats; ++i) {
    std::string name = get_string(in);
    ckpt.stats[name] = read_tensor_record(in);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
  if (!out) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Checkpoint average_parameters(std::span<const Checkpoint> ckpts) {
  if (ckpts.empty()) throw CheckpointError("average: no checkpoints");
  const Checkpoint& first = ckpts.front();
  Checkpoint out;
  out.metadata = first.metadata;
  out.stats = first.stats;
  out.metadata["averaged_from"] = std::to_string(ckpts.size());
  for (std::size_t i = 0; i < first.params.size(); ++i) {
    const ParamRecord& ref = first.params[i];
    std::vector<double> acc(ref.value.values().begin(), ref.value.values().end());
    for (std::size_t c = 1; c < ckpts.size(); ++c) {
      const auto& other = ckpts[c].params;
      if (other.size() != first.params.size() || other[i].name != ref.name ||
          other[i].value.shape() != ref.value.shape())
        throw CheckpointError("average: checkpoint " + std::to_string(c) + " disagrees with the first on parameter " +
                              ref.name);
      auto vals = other[i].value.values();
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += vals[k];
    }
    const double n = static_cast<double>(ckpts.size());
    for (double& v : acc) v /= n;
    out.params.push_back({ref.name, ref.component, ref.trainable, Tensor(ref.value.shape(), std::move(acc), ref.value.dtype())});
  }
  for (std::size_t c = 1; c < ckpts.size(); ++c)
    if (ckpts[c].params.size() != first.params.size())
      throw CheckpointError("average: checkpoints have different parameter counts");
  return out;
}

template <typename Scalar>
void export_parameters(const ParameterSet<Scalar>& params, Checkpoint& ckpt) {
  const DType dtype = std::is_same_v<Scalar, float> ? DType::f32 : DType::f64;
  for (const auto& p : params)
    ckpt.params.push_back({p->name, p->component, p->trainable, Tensor::from_matrix(p->value, dtype)});
}

template <typename Scalar>
void import_parameters(ParameterSet<Scalar>& params, const Checkpoint& ckpt, const Component* only) {
  std::vector<std::string> bad;
  for (auto& p : params) {
    if (only && p->component != *only) continue;
    const ParamRecord* rec = ckpt.find(p->name);
    if (!rec) {
      bad.push_back(p->name + " (missing)");
      continue;
    }
    const auto& shape = rec->value.shape();
    const bool matches = (shape.size() == 2 && static_cast<Eigen::Index>(shape[0]) == p->value.rows() &&
                          static_cast<Eigen::Index>(shape[1]) == p->value.cols());
    if (!matches) {
      bad.push_back(p->name + " (checkpoint " + shape_string(shape) + ", model [" + std::to_string(p->value.rows()) +
                    "x" + std::to_string(p->value.cols()) + "])");
      continue;
    }
  }
  if (!bad.empty()) {
    std::string msg = "checkpoint does not match model parameters:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw CheckpointError(msg);
  }
  for (auto& p : params) {
    if (only && p->component != *only) continue;
    p->value = ckpt.find(p->name)->value.template to_matrix<Scalar>();
  }
}

template void export_parameters<float>(const ParameterSet<float>&, Checkpoint&);
template void export_parameters<double>(const ParameterSet<double>&, Checkpoint&);
template void import_parameters<float>(ParameterSet<float>&, const Checkpoint&, const Component*);
template void import_parameters<double>(ParameterSet<double>&, const Checkpoint&, const Component*);

}  // namespace mmasr

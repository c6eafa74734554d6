#pragma once

// Checkpoint file:
//   "MMCK", u32 format version
//   u32 n_meta,   { u32 len, key, u32 len, value }
//   u32 n_params, { u32 len, name, u8 component, u8 trainable, tensor record }
//   u32 n_stats,  { u32 len, name, tensor record }
// Tensor records are rank, extents, dtype byte and a little-endian payload.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmasr/parameters.hpp"
#include "mmasr/tensor.hpp"

namespace mmasr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamRecord {
  std::string name;
  Component component = Component::decoder;
  bool trainable = true;
  Tensor value;

  bool operator==(const ParamRecord&) const = default;
};

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<ParamRecord> params;
  std::map<std::string, Tensor> stats;

  const ParamRecord* find(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameter-wise arithmetic mean (summed in input order, then divided).
// Metadata and statistics come from the first checkpoint.
Checkpoint average_parameters(std::span<const Checkpoint> ckpts);

template <typename Scalar>
void export_parameters(const ParameterSet<Scalar>& params, Checkpoint& ckpt);

// Copies matching records into params. Throws CheckpointError listing every
// missing or mis-shaped name. When `only` is set, other components are skipped.
template <typename Scalar>
void import_parameters(ParameterSet<Scalar>& params, const Checkpoint& ckpt,
                       const Component* only = nullptr);

}  // namespace mmasr

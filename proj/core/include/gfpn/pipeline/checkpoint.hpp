#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "gfpn/pipeline/config.hpp"
#include "gfpn/pipeline/model.hpp"

namespace gfpn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  std::string rng_state;
};

/// "GFPN", u32 version, then tagged sections (4-byte tag, u64 length):
/// CONF holds the config as JSON, PARM every tensor as name, rank, dims and
/// f64 data in parameter order, RNG_ the generator state as text. All
/// integers and floats are little-endian.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws FormatError on a bad magic, version, section or parameter layout.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a 64 of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace gfpn

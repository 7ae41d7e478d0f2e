#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ncre/tensor.hpp"

namespace ncre {

// Binary layout, all integers and floats little-endian:
//
//   magic    8 bytes  "NCRECKPT"
//   version  u32      kCheckpointVersion
//   count    u32      number of entries
//   entry*   count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     frozen   u8 (0 or 1)
//     ndim     u32, dims u64 * ndim
//     values   f64 * product(dims), IEEE-754 binary64
//
// Entries are written in the order given. Gradient buffers are not stored.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const std::vector<const Parameter*>& params);
std::vector<Parameter> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<const Parameter*>& params);
std::vector<Parameter> read_checkpoint(const std::filesystem::path& path);

/// Copies values and frozen flags from `saved` into same-named `targets`.
/// Every target must be present with an identical shape.
void restore_parameters(const std::vector<Parameter>& saved, const ParameterRefs& targets);

/// Entries whose name starts with `prefix`, with the prefix removed.
std::vector<Parameter> strip_prefix(const std::vector<Parameter>& saved,
                                    const std::string& prefix);

}  // namespace ncre

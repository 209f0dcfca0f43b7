#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "grace/autodiff/graph.hpp"
#include "grace/autodiff/tensor.hpp"

namespace grace {

struct NamedTensor {
  std::string name;
  Tensor tensor;

  bool operator==(const NamedTensor&) const = default;
};

// Flat tensor container, all integers and floats little-endian:
//
//   "GRCK"            4-byte magic
//   u32 version       currently 1
//   u32 count
//   count times:
//     u32 name_len, name bytes (UTF-8, no terminator)
//     u64 rows, u64 cols
//     rows*cols IEEE-754 binary64 values, row-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path,
                      std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot(std::span<Parameter* const> params);

// Copies the values of the tensors named like `params` into them. Throws
// DataError if a name is missing or a shape differs.
void load_named(std::span<Parameter* const> params,
                std::span<const NamedTensor> tensors);

}  // namespace grace

// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoint container.
//
// Binary layout (little-endian):
//   "CEPOCKPT1"                      9-byte magic
//   u64 entry_count
//   per entry:
//     u32 name_length, name bytes
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]        row-major
//
// Values are stored bit-exactly so a reload resumes identically.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cepo/autodiff/tensor.hpp"

namespace cepo::ad {

inline constexpr std::string_view kCheckpointMagic = "CEPOCKPT1";

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using TensorList = std::vector<NamedTensor>;

void save_checkpoint(const std::filesystem::path& path, const TensorList& tensors);
/// Throws std::runtime_error on a missing file, wrong magic or truncation.
TensorList load_checkpoint(const std::filesystem::path& path);

/// Looks a name up; throws std::out_of_range when absent.
const Tensor& find_tensor(const TensorList& tensors, std::string_view name);

} // namespace cepo::ad

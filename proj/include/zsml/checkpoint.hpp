#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "zsml/tensor.hpp"

namespace zsml {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// ZSMP layout: "ZSMP", u32 version, then one record per tensor until EOF:
/// u16 name length, name bytes, u8 rank, u32 dims, float32 payload.
std::vector<std::uint8_t> encode_zsmp(const NamedTensors& tensors);
NamedTensors decode_zsmp(const std::vector<std::uint8_t>& bytes);

void save_zsmp(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_zsmp(const std::filesystem::path& path);

std::uint64_t checksum(const NamedTensors& tensors);
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace zsml

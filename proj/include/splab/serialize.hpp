#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "splab/tensor.hpp"

namespace splab {

using json = nlohmann::json;

uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0);
uint32_t crc32_file(const std::filesystem::path& path);
std::string crc32_hex(uint32_t crc);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Checkpoint container: magic, version u32, length-prefixed UTF-8 JSON
// metadata, then named tensors (name length + name + rank + dims + float32
// little-endian payload) until end of file.
inline constexpr uint32_t kContainerVersion = 1;

void write_container(const std::filesystem::path& path, const std::string& magic,
                     const json& meta, const std::vector<NamedTensor>& tensors);

struct Container {
  uint32_t version = 0;
  json meta;
  std::vector<NamedTensor> tensors;

  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;  // FormatError when missing
};

Container read_container(const std::filesystem::path& path, const std::string& expected_magic);

}  // namespace splab

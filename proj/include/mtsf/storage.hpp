#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtsf/episode.hpp"

namespace mtsf::storage {

// On-disk tensor format: "MTSF" magic, version 1, dtype code, ndim,
// ndim little-endian uint32 dims, then a row-major little-endian payload.
// ndim is limited to [1, 5]. No compression, no padding.
enum class Dtype : uint8_t { f32 = 0, u8 = 1 };

struct Tensor {
  Dtype dtype = Dtype::f32;
  std::vector<uint32_t> dims;
  std::vector<float> f32;   // filled when dtype == f32
  std::vector<uint8_t> u8;  // filled when dtype == u8

  size_t count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

void write_tensor(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                  const std::vector<float>& values);
void write_tensor(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                  const std::vector<uint8_t>& values);
Tensor read_tensor(const std::filesystem::path& path);

// Episode directory: meta.json plus view{n}_visual.mtsf / view{n}_audio.mtsf
// for every view n in 1..N.
void write_episode(const std::filesystem::path& dir, const Episode& episode);
Episode read_episode(const std::filesystem::path& dir);

// Dataset root: one directory per episode plus manifest.json listing ids.
struct Manifest {
  std::vector<std::string> episode_ids;
  std::string gen_config_json;  // canonical JSON of the generator config
  uint64_t seed = 0;
};

void write_manifest(const std::filesystem::path& dataset_dir, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& dataset_dir);

}  // namespace mtsf::storage

#pragma once

// Procedural progressive clips: a static textured background with textured
// rectangles sliding across it. Values are pre-quantized to 8 bits so a PPM
// round trip is lossless.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfres/fields.hpp"

namespace dfres {

struct SyntheticConfig {
  std::size_t clips = 8;
  std::size_t frames = 32;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_rects = 2;
  std::size_t max_rects = 3;
  double min_speed = 1.0;  // px per field
  double max_speed = 4.0;
  // Spatial frequencies of the sinusoidal textures, cycles per pixel.
  double max_frequency = 0.12;
  // Vertical frequency band of the static background. Above 0.25 the detail
  // cannot be recovered from a single field, only from its neighbours.
  double background_min_frequency = 0.3;
  double background_max_frequency = 0.4;
  std::uint64_t seed = 0;

  void validate() const;
  // `key=value` override of any field except seed; throws std::invalid_argument.
  void set(const std::string& key, const std::string& value);
  static bool has_key(const std::string& key);
  std::string serialize() const;
};

// Clip `clip_index` of the set described by `config`; depends only on
// (config, clip_index).
std::vector<Frame> synthetic_clip(const SyntheticConfig& config, std::size_t clip_index);

// Writes config.clips clips as <dir>/clip_NN/000000.ppm ...
void write_synthetic_set(const std::filesystem::path& dir, const SyntheticConfig& config);

// Clip directory name for index i ("clip_00", "clip_01", ...).
std::string clip_dir_name(std::size_t index);

}  // namespace dfres

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dfres/fields.hpp"

namespace dfres {

// 8-bit quantization used for all file I/O: v/255 on read,
// clamp(round(v*255)) on write.
std::uint8_t to_byte(float v);
inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

// Binary PPM (P6, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

// Frame file name for position i: zero-padded to six digits.
std::string frame_file_name(std::size_t index);

// All *.ppm files of a directory in lexicographic order. Throws FormatError
// naming the directory when it holds none.
std::vector<std::filesystem::path> list_ppm_files(const std::filesystem::path& dir);
std::vector<Frame> read_clip(const std::filesystem::path& dir);
void write_clip(const std::filesystem::path& dir, const std::vector<Frame>& frames);

// Field stream on disk: one half-height PPM per field plus manifest.csv with
// header `index,file,parity,source_index`.
inline constexpr const char* kManifestName = "manifest.csv";
void write_field_stream(const std::filesystem::path& dir, const ClipStream& stream);
// Ground-truth fields are not stored; the returned stream leaves them empty.
ClipStream read_field_stream(const std::filesystem::path& dir);

}  // namespace dfres

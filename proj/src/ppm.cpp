#include "dfres/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "dfres/errors.hpp"

namespace fs = std::filesystem;

namespace dfres {

std::uint8_t to_byte(float v) {
  const float scaled = std::round(v * 255.0f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const fs::path& path) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  if (token.empty()) throw FormatError(path.string() + ": truncated PPM header");
  return token;
}

std::size_t header_number(std::istream& in, const fs::path& path) {
  const std::string tok = header_token(in, path);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(c); })) {
    throw FormatError(path.string() + ": bad PPM header field '" + tok + "'");
  }
  return std::stoul(tok);
}

}  // namespace

Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  if (header_token(in, path) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  const std::size_t width = header_number(in, path);
  const std::size_t height = header_number(in, path);
  const std::size_t maxval = header_number(in, path);
  if (width == 0 || height == 0) throw FormatError(path.string() + ": empty image");
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");

  std::vector<unsigned char> raw(width * height * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  Image img(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = from_byte(raw[(y * width + x) * 3 + c]);
    }
  }
  return img;
}

void write_ppm(const fs::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.width * image.height * 3);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) raw[(y * image.width + x) * 3 + c] = to_byte(image.at(c, y, x));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.ppm", index);
  return buf;
}

std::vector<fs::path> list_ppm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  }
  if (files.empty()) throw FormatError(dir.string() + ": no frames (*.ppm) found");
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

std::vector<Frame> read_clip(const fs::path& dir) {
  std::vector<Frame> frames;
  for (const auto& file : list_ppm_files(dir)) frames.emplace_back(read_ppm(file));
  return frames;
}

void write_clip(const fs::path& dir, const std::vector<Frame>& frames) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) write_ppm(dir / frame_file_name(i), frames[i]);
}

void write_field_stream(const fs::path& dir, const ClipStream& stream) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / kManifestName);
  if (!manifest) throw FormatError((dir / kManifestName).string() + ": cannot open for writing");
  manifest << "index,file,parity,source_index\n";
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const std::string name = frame_file_name(i);
    write_ppm(dir / name, stream.fields[i]);
    manifest << i << ',' << name << ',' << parity_char(stream.fields[i].parity) << ','
             << stream.source_index[i] << '\n';
  }
}

ClipStream read_field_stream(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  std::ifstream manifest(manifest_path);
  if (!manifest) throw FormatError(manifest_path.string() + ": cannot open");
  std::string line;
  std::getline(manifest, line);
  if (line != "index,file,parity,source_index") {
    throw FormatError(manifest_path.string() + ": unexpected header '" + line + "'");
  }
  ClipStream stream;
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string index, file, parity, source;
    if (!std::getline(row, index, ',') || !std::getline(row, file, ',') ||
        !std::getline(row, parity, ',') || !std::getline(row, source)) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    if (parity != "O" && parity != "E") {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": bad parity");
    }
    if (std::stoul(index) != stream.size()) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) +
                        ": indices must be consecutive from 0");
    }
    const Parity p = parity == "O" ? Parity::Odd : Parity::Even;
    stream.fields.emplace_back(p, read_ppm(dir / file));
    stream.source_index.push_back(std::stoul(source));
  }
  if (stream.size() == 0) throw FormatError(manifest_path.string() + ": no fields listed");
  for (const auto& f : stream.fields) {
    if (f.height != stream.fields[0].height || f.width != stream.fields[0].width) {
      throw FormatError(dir.string() + ": fields differ in size");
    }
  }
  return stream;
}

}  // namespace dfres

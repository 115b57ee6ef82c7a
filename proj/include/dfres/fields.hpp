#pragma once

// Interlaced field handling.
//
// Parity convention: the "odd" field carries scan lines 1,3,5,... in 1-based
// numbering, i.e. rows 0,2,4,... of the frame in 0-based indexing. The "even"
// field carries 0-based rows 1,3,5,... A clip is interlaced by taking the odd
// field of frames with even index and the even field of frames with odd
// index, so a five-field window centred on an odd field reads O,E,O,E,O.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dfres/tensor.hpp"

namespace dfres {

enum class Parity : std::uint8_t { Odd, Even };

inline Parity opposite(Parity p) { return p == Parity::Odd ? Parity::Even : Parity::Odd; }
inline char parity_char(Parity p) { return p == Parity::Odd ? 'O' : 'E'; }
// Parity of the field extracted from source frame `index`.
inline Parity parity_for_frame(std::size_t index) {
  return index % 2 == 0 ? Parity::Odd : Parity::Even;
}
// Indicator bit: 1 when the reference field is even.
inline int indicator_for(Parity reference) { return reference == Parity::Even ? 1 : 0; }

// Planar 3-channel image, values nominally in [0,1].
struct Image {
  static constexpr std::size_t kChannels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // [3, height, width]

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), pixels(kChannels * h * w, 0.0f) {}

  std::size_t plane() const { return height * width; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

// Progressive frame. Splitting into fields requires an even height.
struct Frame : Image {
  using Image::Image;
  explicit Frame(Image img) : Image(std::move(img)) {}
  bool operator==(const Frame&) const = default;
};

// Half-height interlaced field.
struct Field : Image {
  Parity parity = Parity::Odd;

  Field() = default;
  Field(Parity p, std::size_t h, std::size_t w) : Image(h, w), parity(p) {}
  Field(Parity p, Image img) : Image(std::move(img)), parity(p) {}
  bool operator==(const Field&) const = default;
};

struct FieldWindow {
  std::vector<Field> fields;                // temporal order, reference in the middle
  std::vector<std::size_t> stream_indices;  // after edge clamping
  int indicator = 0;

  std::size_t reference_index() const { return fields.size() / 2; }
  const Field& reference() const { return fields[reference_index()]; }
};

struct ClipStream {
  std::vector<Field> fields;
  std::vector<std::size_t> source_index;
  // Opposite-parity field of the same source frame, kept for supervision.
  std::vector<Field> ground_truth;

  std::size_t size() const { return fields.size(); }
};

// Returns (odd, even).
std::pair<Field, Field> split_fields(const Frame& frame);

// Interleaves the reference field with the estimated opposite-parity field.
// indicator 0: reference on 0-based even rows; indicator 1: reference on
// 0-based odd rows.
Frame weave(const Field& reference, const Field& estimate, int indicator);

ClipStream synth_interlaced(std::span<const Frame> clip);

// Window of `num_fields` fields centred on `center`; indices past either end
// of the stream are clamped to the nearest valid field.
FieldWindow make_window(const ClipStream& stream, std::size_t center, std::size_t num_fields = 5);

// Rectangular crop, origin at (top, left).
Frame crop(const Frame& frame, std::size_t top, std::size_t left, std::size_t height,
           std::size_t width);

template <typename T>
Tensor<T> to_tensor(const Image& image);

// Inverse of to_tensor for a [3,h,w] tensor; values are copied unclamped.
Field to_field(std::span<const float> chw, std::size_t height, std::size_t width, Parity parity);

}  // namespace dfres

#include "dfres/fields.hpp"

#include <algorithm>
#include <string>

#include "dfres/errors.hpp"

namespace dfres {

namespace {

void copy_row(const Image& src, std::size_t src_row, Image& dst, std::size_t dst_row) {
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    const float* from = src.pixels.data() + (c * src.height + src_row) * src.width;
    float* to = dst.pixels.data() + (c * dst.height + dst_row) * dst.width;
    std::copy_n(from, src.width, to);
  }
}

}  // namespace

std::pair<Field, Field> split_fields(const Frame& frame) {
  if (frame.height == 0 || frame.height % 2 != 0) {
    throw DimensionError("split_fields: frame height must be even and positive, got " +
                         std::to_string(frame.height));
  }
  const std::size_t half = frame.height / 2;
  Field odd(Parity::Odd, half, frame.width);
  Field even(Parity::Even, half, frame.width);
  for (std::size_t r = 0; r < half; ++r) {
    copy_row(frame, 2 * r, odd, r);
    copy_row(frame, 2 * r + 1, even, r);
  }
  return {std::move(odd), std::move(even)};
}

Frame weave(const Field& reference, const Field& estimate, int indicator) {
  if (indicator != 0 && indicator != 1) throw std::invalid_argument("weave: indicator must be 0 or 1");
  if (reference.height != estimate.height || reference.width != estimate.width) {
    throw DimensionError("weave: reference and estimate differ in size");
  }
  if (reference.parity == estimate.parity) {
    throw DimensionError("weave: reference and estimate have the same parity");
  }
  if (indicator != indicator_for(reference.parity)) {
    throw DimensionError("weave: indicator disagrees with reference parity");
  }
  Frame out(2 * reference.height, reference.width);
  const std::size_t ref_offset = indicator == 0 ? 0 : 1;
  for (std::size_t r = 0; r < reference.height; ++r) {
    copy_row(reference, r, out, 2 * r + ref_offset);
    copy_row(estimate, r, out, 2 * r + 1 - ref_offset);
  }
  return out;
}

ClipStream synth_interlaced(std::span<const Frame> clip) {
  if (clip.empty()) throw std::invalid_argument("synth_interlaced: empty clip");
  ClipStream stream;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    if (clip[i].height != clip[0].height || clip[i].width != clip[0].width) {
      throw DimensionError("synth_interlaced: frame " + std::to_string(i) +
                           " differs in size from frame 0");
    }
    auto [odd, even] = split_fields(clip[i]);
    const bool take_odd = parity_for_frame(i) == Parity::Odd;
    stream.fields.push_back(take_odd ? std::move(odd) : std::move(even));
    stream.ground_truth.push_back(take_odd ? std::move(even) : std::move(odd));
    stream.source_index.push_back(i);
  }
  return stream;
}

FieldWindow make_window(const ClipStream& stream, std::size_t center, std::size_t num_fields) {
  if (stream.size() == 0) throw std::invalid_argument("make_window: empty stream");
  if (center >= stream.size()) throw std::out_of_range("make_window: center past end of stream");
  if (num_fields % 2 == 0) throw std::invalid_argument("make_window: num_fields must be odd");
  const long half = static_cast<long>(num_fields / 2);
  const long last = static_cast<long>(stream.size()) - 1;
  FieldWindow window;
  for (long k = -half; k <= half; ++k) {
    const long idx = std::clamp(static_cast<long>(center) + k, 0L, last);
    window.stream_indices.push_back(static_cast<std::size_t>(idx));
    window.fields.push_back(stream.fields[static_cast<std::size_t>(idx)]);
  }
  window.indicator = indicator_for(stream.fields[center].parity);
  return window;
}

Frame crop(const Frame& frame, std::size_t top, std::size_t left, std::size_t height,
           std::size_t width) {
  if (top + height > frame.height || left + width > frame.width) {
    throw DimensionError("crop: window exceeds frame bounds");
  }
  Frame out(height, width);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out.at(c, y, x) = frame.at(c, top + y, left + x);
    }
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  std::vector<T> values(image.pixels.begin(), image.pixels.end());
  return Tensor<T>::from_data({Image::kChannels, image.height, image.width}, values);
}

Field to_field(std::span<const float> chw, std::size_t height, std::size_t width, Parity parity) {
  if (chw.size() != Image::kChannels * height * width) {
    throw DimensionError("to_field: buffer does not match a 3x" + std::to_string(height) + "x" +
                         std::to_string(width) + " field");
  }
  Field f(parity, height, width);
  std::copy(chw.begin(), chw.end(), f.pixels.begin());
  return f;
}

template Tensor<float> to_tensor<float>(const Image&);
template Tensor<double> to_tensor<double>(const Image&);

}  // namespace dfres

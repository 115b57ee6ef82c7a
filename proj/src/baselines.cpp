#include "dfres/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include "dfres/errors.hpp"

namespace dfres {

std::string to_string(Baseline method) {
  switch (method) {
    case Baseline::Bob: return "bob";
    case Baseline::Linear: return "linear";
    case Baseline::Weave: return "weave";
    case Baseline::TemporalMean: return "temporal_mean";
  }
  return "?";
}

Baseline baseline_from_string(const std::string& name) {
  for (const Baseline b : kAllBaselines) {
    if (to_string(b) == name) return b;
  }
  throw std::invalid_argument("unknown baseline '" + name +
                              "' (expected bob, linear, weave or temporal_mean)");
}

namespace {

// Reference rows bracketing estimated row r. With an odd reference (rows 2k)
// the missing row 2r+1 sits between reference rows r and r+1; with an even
// reference (rows 2k+1) the missing row 2r sits between r-1 and r.
std::pair<std::size_t, std::size_t> bracket(const Field& ref, std::size_t r) {
  const std::size_t last = ref.height - 1;
  if (ref.parity == Parity::Odd) return {r, std::min(r + 1, last)};
  return {r == 0 ? 0 : r - 1, r};
}

Field intra_field(const Field& ref, bool average) {
  Field est(opposite(ref.parity), ref.height, ref.width);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t r = 0; r < ref.height; ++r) {
      const auto [above, below] = bracket(ref, r);
      for (std::size_t x = 0; x < ref.width; ++x) {
        est.at(c, r, x) = average ? 0.5f * (ref.at(c, above, x) + ref.at(c, below, x))
                                  : ref.at(c, above, x);
      }
    }
  }
  return est;
}

}  // namespace

Field baseline_estimate(Baseline method, const ClipStream& stream, std::size_t index) {
  if (index >= stream.size()) {
    throw std::out_of_range("baseline: index " + std::to_string(index) + " past end of stream");
  }
  const Field& ref = stream.fields[index];
  switch (method) {
    case Baseline::Bob: return intra_field(ref, false);
    case Baseline::Linear: return intra_field(ref, true);
    case Baseline::Weave:
    case Baseline::TemporalMean: break;
  }
  if (stream.size() < 2) throw DimensionError("baseline: temporal methods need at least two fields");
  const std::size_t prev = index > 0 ? index - 1 : index + 1;
  const std::size_t next = index + 1 < stream.size() ? index + 1 : index - 1;
  if (method == Baseline::Weave) return stream.fields[prev];
  Field est(opposite(ref.parity), ref.height, ref.width);
  const auto& a = stream.fields[prev].pixels;
  const auto& b = stream.fields[next].pixels;
  for (std::size_t i = 0; i < est.pixels.size(); ++i) est.pixels[i] = 0.5f * (a[i] + b[i]);
  return est;
}

Frame baseline_deinterlace(Baseline method, const ClipStream& stream, std::size_t index) {
  const Field& ref = stream.fields.at(index);
  return weave(ref, baseline_estimate(method, stream, index), indicator_for(ref.parity));
}

}  // namespace dfres

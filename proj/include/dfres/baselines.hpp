#pragma once

// Classical deinterlacers used as comparison anchors.

#include <cstddef>
#include <string>

#include "dfres/fields.hpp"

namespace dfres {

enum class Baseline { Bob, Linear, Weave, TemporalMean };

std::string to_string(Baseline method);
// Throws std::invalid_argument for an unknown name.
Baseline baseline_from_string(const std::string& name);
inline constexpr Baseline kAllBaselines[] = {Baseline::Bob, Baseline::Linear, Baseline::Weave,
                                             Baseline::TemporalMean};

// Estimated opposite-parity field for stream position `index`.
//   bob           missing line = nearest reference line above (below at the top edge)
//   linear        missing line = mean of the reference lines above and below
//   weave         previous opposite-parity field (next one at the start of the stream)
//   temporal_mean mean of the previous and next opposite-parity fields
Field baseline_estimate(Baseline method, const ClipStream& stream, std::size_t index);

// weave(reference, baseline_estimate(...)).
Frame baseline_deinterlace(Baseline method, const ClipStream& stream, std::size_t index);

}  // namespace dfres

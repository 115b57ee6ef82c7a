#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>

#include "dfres/baselines.hpp"
#include "dfres/metrics.hpp"
#include "dfres/model.hpp"

namespace dfres {

// Frames at either end of a clip whose windows would need clamped fields;
// they are left out of every report.
inline constexpr std::size_t kEdgeFrames = 2;

// What produces the deinterlaced frame for a stream position.
struct Method {
  enum class Kind { Model, Baseline, GroundTruth };
  Kind kind = Kind::GroundTruth;
  const ModelWeights<float>* weights = nullptr;
  Baseline baseline = Baseline::Bob;

  static Method model(const ModelWeights<float>& w) { return {Kind::Model, &w, Baseline::Bob}; }
  static Method classical(Baseline b) { return {Kind::Baseline, nullptr, b}; }
  static Method ground_truth() { return {}; }
  std::string name() const;
};

// Deinterlaces stream position `index` of the clip's field stream.
Frame deinterlace_at(const Method& method, const ClipStream& stream, std::span<const Frame> clip,
                     std::size_t index);

// Synthesizes the field stream of `clip`, deinterlaces every interior
// position and scores it against the progressive frame. Writes the CSV when
// `report_path` is non-empty.
MetricReport eval_clip(const Method& method, std::span<const Frame> clip,
                       const std::filesystem::path& report_path = {});

// Concatenation of per-clip reports (means are over all frames).
MetricReport merge_reports(std::span<const MetricReport> reports);

}  // namespace dfres

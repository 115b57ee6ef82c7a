#include "dfres/evaluate.hpp"

#include <cstdint>
#include <exception>

#include "dfres/errors.hpp"

namespace dfres {

std::string Method::name() const {
  switch (kind) {
    case Kind::Model: return "model";
    case Kind::Baseline: return "baseline=" + to_string(baseline);
    case Kind::GroundTruth: return "gt";
  }
  return "?";
}

Frame deinterlace_at(const Method& method, const ClipStream& stream, std::span<const Frame> clip,
                     std::size_t index) {
  switch (method.kind) {
    case Method::Kind::Model:
      return deinterlace_frame(make_window(stream, index, method.weights->config().num_fields),
                               *method.weights);
    case Method::Kind::Baseline: return baseline_deinterlace(method.baseline, stream, index);
    case Method::Kind::GroundTruth: return clip[stream.source_index.at(index)];
  }
  throw std::logic_error("deinterlace_at: bad method kind");
}

MetricReport eval_clip(const Method& method, std::span<const Frame> clip,
                       const std::filesystem::path& report_path) {
  if (clip.size() <= 2 * kEdgeFrames) {
    throw DimensionError("eval: clip of " + std::to_string(clip.size()) +
                         " frames leaves no interior frames to score");
  }
  if (method.kind == Method::Kind::Model && method.weights == nullptr) {
    throw std::invalid_argument("eval: model method without weights");
  }
  const ClipStream stream = synth_interlaced(clip);
  MetricReport report;
  report.excluded_edge_frames = 2 * kEdgeFrames;
  // Frames are independent; each slot is written by exactly one iteration.
  report.frames.resize(clip.size() - 2 * kEdgeFrames);
  const auto count = static_cast<std::int64_t>(report.frames.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < count; ++k) {
    try {
      const std::size_t i = kEdgeFrames + static_cast<std::size_t>(k);
      const Frame out = deinterlace_at(method, stream, clip, i);
      report.frames[static_cast<std::size_t>(k)] = {i, psnr(out, clip[i]), ssim(out, clip[i])};
    } catch (...) {
#pragma omp critical(dfres_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  if (!report_path.empty()) write_report_csv(report_path, report);
  return report;
}

MetricReport merge_reports(std::span<const MetricReport> reports) {
  MetricReport all;
  for (const auto& r : reports) {
    all.frames.insert(all.frames.end(), r.frames.begin(), r.frames.end());
    all.excluded_edge_frames += r.excluded_edge_frames;
  }
  return all;
}

}  // namespace dfres

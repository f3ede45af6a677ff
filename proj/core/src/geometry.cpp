#include "apl/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "apl/errors.hpp"

namespace apl {

Segment::Segment(double start_s, double end_s) : start(start_s), end(end_s) {
  if (!std::isfinite(start) || !std::isfinite(end)) {
    throw ComputeError("segment bounds must be finite");
  }
  if (start < 0.0) {
    throw ComputeError("segment start must be non-negative, got " + std::to_string(start));
  }
  if (!(start < end)) {
    throw ComputeError("segment must satisfy start < end, got [" +
                       std::to_string(start) + ", " + std::to_string(end) + "]");
  }
}

double tiou(const Segment& a, const Segment& b) {
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

double tnd(const Segment& a, const Segment& b) {
  const double rho = a.center() - b.center();
  const double cover = std::max(a.end, b.end) - std::min(a.start, b.start);
  const double v = (rho * rho) / (cover * cover);
  assert(v < 1.0);
  return v;
}

double diou(const Segment& a, const Segment& b) { return tiou(a, b) - tnd(a, b); }

std::vector<std::pair<double, double>> regression_targets(
    const Segment& gt, const std::vector<double>& frame_times) {
  std::vector<std::pair<double, double>> out;
  out.reserve(frame_times.size());
  for (double t : frame_times) {
    if (t < gt.start || t > gt.end) {
      throw ComputeError("frame not inside action: t=" + std::to_string(t) +
                         " segment=[" + std::to_string(gt.start) + ", " +
                         std::to_string(gt.end) + "]");
    }
    out.emplace_back(t - gt.start, gt.end - t);
  }
  return out;
}

FrameTargets locq_targets(const std::vector<std::optional<Segment>>& predicted,
                          const std::vector<std::optional<Segment>>& gt,
                          const std::vector<bool>& inside_mask) {
  if (predicted.size() != inside_mask.size() || gt.size() != inside_mask.size()) {
    throw ComputeError("locq_targets: array lengths disagree with mask length");
  }
  FrameTargets targets;
  const std::size_t t_frames = inside_mask.size();
  targets.tiou.assign(t_frames, 0.0);
  targets.tnd.assign(t_frames, 0.0);
  targets.inside_mask = inside_mask;
  for (std::size_t t = 0; t < t_frames; ++t) {
    if (!inside_mask[t]) continue;
    if (!predicted[t].has_value() || !gt[t].has_value()) {
      throw ComputeError("locq_targets: masked frame " + std::to_string(t) +
                         " has no segment");
    }
    targets.tiou[t] = tiou(*predicted[t], *gt[t]);
    targets.tnd[t] = tnd(*predicted[t], *gt[t]);
  }
  return targets;
}

}  // namespace apl

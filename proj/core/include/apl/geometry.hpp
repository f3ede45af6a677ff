#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace apl {

// Temporal interval in seconds. Zero-length and inverted intervals are
// rejected at construction: every downstream formula assumes positive length,
// and the center-distance term would divide by a degenerate cover otherwise.
struct Segment {
  double start = 0.0;
  double end = 0.0;

  Segment() = default;
  Segment(double start_s, double end_s);

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }

  bool operator==(const Segment&) const = default;
};

// Overlap rate: |a ∩ b| / |a ∪ b|. Symmetric, 0 for disjoint intervals,
// 1 only for identical ones.
double tiou(const Segment& a, const Segment& b);

// Normalized center distance: squared distance between the two centers
// divided by the squared length of the smallest interval covering both.
// Always in [0,1).
double tnd(const Segment& a, const Segment& b);

// tiou minus tnd, in (-1,1]. Equals 1 exactly when the segments coincide.
double diou(const Segment& a, const Segment& b);

// Per-frame distances to the segment boundaries: (t - start, end - t).
// Every frame time must lie inside [start, end].
std::vector<std::pair<double, double>> regression_targets(
    const Segment& gt, const std::vector<double>& frame_times);

// Per-frame localization-quality targets. tiou/tnd are stored as 0 wherever
// inside_mask is false.
struct FrameTargets {
  std::vector<double> tiou;
  std::vector<double> tnd;
  std::vector<bool> inside_mask;
};

// Frame-wise tiou/tnd between a predicted and a reference segment, evaluated
// only where inside_mask is true. Predicted/reference entries must be present
// at masked positions.
FrameTargets locq_targets(const std::vector<std::optional<Segment>>& predicted,
                          const std::vector<std::optional<Segment>>& gt,
                          const std::vector<bool>& inside_mask);

}  // namespace apl

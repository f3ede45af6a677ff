#pragma once

#include <cstddef>
#include <vector>

#include "apl/selection.hpp"

namespace apl {

struct EvalConfig {
  std::vector<double> tiou_grid{0.3, 0.4, 0.5, 0.6, 0.7};
  // Overlap a correct-class pseudo label must exceed to count as a true
  // positive in the quality report.
  double pos_tiou = 0.5;
  // Quality matching: when true each reference instance is claimed by at
  // most one pseudo label (processed by score). Default describes labels
  // independently.
  bool exclusive_matching = false;
  // Average the quality metrics per video instead of pooling all labels.
  bool per_video = false;
};

// The denser grid used for datasets scored from 0.5 to 0.95.
std::vector<double> fine_tiou_grid();

// Throws unless the grid is strictly increasing within (0,1].
void validate(const EvalConfig& cfg);

struct QualityReport {
  double class_acc = 0.0;
  double avg_tiou = 0.0;
  double pos_acc = 0.0;
  std::size_t n_pseudo = 0;
  std::size_t n_gt = 0;
};

// Single-class average precision. Predictions are ranked by score (ties by
// start, video, class); each one greedily claims the highest-overlap
// unclaimed reference of the same video at or above the threshold. The
// precision-recall curve is integrated with all-point interpolation.
double average_precision(std::vector<Instance> preds,
                         const std::vector<Instance>& gts, double tiou_thresh);

struct MeanApResult {
  std::vector<double> thresholds;
  std::vector<std::size_t> classes;          // classes with references, ascending
  std::vector<std::vector<double>> ap;       // [threshold][class]
  std::vector<double> per_threshold;         // class means
  double avg = 0.0;
};

// AP averaged over classes that have reference instances, per threshold, then
// averaged over the grid. Classes without references are skipped, not zeroed.
MeanApResult mean_ap(const std::vector<Instance>& preds,
                     const std::vector<Instance>& gts, const EvalConfig& cfg);

// Label-quality metrics: each pseudo label is matched to the reference with
// the highest overlap in its video (class-agnostic). class_acc is the
// fraction whose match shares its class, avg_tiou the mean best overlap, and
// pos_acc the fraction with matching class and overlap strictly above
// pos_tiou. A label overlapping nothing counts as a miss for all three.
QualityReport pseudo_label_quality(const std::vector<Instance>& pseudo,
                                   const std::vector<Instance>& gts,
                                   const EvalConfig& cfg);

}  // namespace apl

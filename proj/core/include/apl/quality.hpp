#pragma once

#include <cstddef>
#include <vector>

#include "apl/geometry.hpp"
#include "apl/matrix.hpp"

namespace apl {

// Per-frame detector outputs for one video: per-class scores (K x T),
// localization-quality heads (T each), and left/right boundary offsets in
// seconds (2 x T).
struct FramePredictions {
  Matrix cls;
  std::vector<double> tiou_hat;
  std::vector<double> tnd_hat;
  Matrix offsets;

  std::size_t n_classes() const { return cls.rows(); }
  std::size_t n_frames() const { return tiou_hat.size(); }
};

// Throws if shapes disagree or any score leaves [0,1].
void validate(const FramePredictions& preds);

struct ScoringConfig {
  // Floor for the localization factor: keeps clamped joint scores strictly
  // positive and well below any selection threshold.
  double epsilon = 0.01;
  double focal_gamma = 2.0;
};

struct LossWeights {
  double beta = 2.0;
  double lambda_reg = 1.0;
  double lambda_locq = 0.1;
  double lambda_acp = 0.1;
};

// Per-branch loss components. cls/reg/locq are sums over frames; they are
// divided by n_pos at assembly time. total is filled by finalize_report.
struct LossReport {
  double cls = 0.0;
  double reg = 0.0;
  double locq = 0.0;
  double acp = 0.0;
  double icd = 0.0;
  std::size_t n_pos = 0;
  double total = 0.0;
};

// Binary cross-entropy with both arguments clamped to [1e-7, 1-1e-7];
// predictions arrive from external files and may be saturated.
double soft_bce(double p, double y);

// Joint reliability score: max(tiou_hat - tnd_hat, epsilon) * cls, per class
// and frame. Output has the same K x T shape as preds.cls.
Matrix joint_score(const FramePredictions& preds, const ScoringConfig& cfg);

// One-hot-like target vector whose active entry carries
// max(tiou - tnd, epsilon).
std::vector<double> soft_label(std::size_t class_index, double tiou_target,
                               double tnd_target, std::size_t n_classes,
                               const ScoringConfig& cfg);

// Sum over entries of |target - pred|^gamma * BCE(pred, target).
// gamma = 0 reduces to plain soft-target BCE.
double focal_loss(const std::vector<double>& pred,
                  const std::vector<double>& target, double gamma);

struct LocqResult {
  double value = 0.0;
  bool no_positive_frames = false;
};

// Mean over masked frames of BCE(tiou_hat, tiou) + BCE(tnd_hat, tnd).
LocqResult locq_loss(const FramePredictions& preds, const FrameTargets& targets);

// 1 - diou(pred, gt), in [0,2).
double diou_loss(const Segment& pred, const Segment& gt);

// Weighted branch value: (cls + lambda_reg*reg + lambda_locq*locq)/n_pos
// + lambda_acp*acp, plus the discriminator term on the supervised branch
// only. n_pos = 0 is an error when the frame-summed components are nonzero.
double branch_total(const LossReport& report, const LossWeights& weights,
                    bool supervised);

// Stores branch_total into report.total.
void finalize_report(LossReport& report, const LossWeights& weights,
                     bool supervised);

// Supervised branch plus beta times the unsupervised branch.
double assemble_total_loss(const LossReport& sup, const LossReport& unsup,
                           const LossWeights& weights);

}  // namespace apl

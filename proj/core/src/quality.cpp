#include "apl/quality.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apl/errors.hpp"

namespace apl {

namespace {
constexpr double kBceClamp = 1e-7;

double clamp01_unit(double v) { return std::clamp(v, kBceClamp, 1.0 - kBceClamp); }
}  // namespace

void validate(const FramePredictions& preds) {
  const std::size_t t_frames = preds.tiou_hat.size();
  if (preds.tnd_hat.size() != t_frames || preds.cls.cols() != t_frames ||
      preds.offsets.cols() != t_frames) {
    throw ComputeError("frame predictions: arrays disagree on frame count");
  }
  if (preds.offsets.rows() != 2) {
    throw ComputeError("frame predictions: offsets must have two rows");
  }
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (double v : preds.cls.data()) {
    if (!in_unit(v)) throw ComputeError("class score outside [0,1]");
  }
  for (std::size_t t = 0; t < t_frames; ++t) {
    if (!in_unit(preds.tiou_hat[t]) || !in_unit(preds.tnd_hat[t])) {
      throw ComputeError("localization head score outside [0,1]");
    }
  }
}

double soft_bce(double p, double y) {
  p = clamp01_unit(p);
  y = clamp01_unit(y);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

Matrix joint_score(const FramePredictions& preds, const ScoringConfig& cfg) {
  validate(preds);
  const std::size_t k_classes = preds.n_classes();
  const std::size_t t_frames = preds.n_frames();
  Matrix out(k_classes, t_frames);
  for (std::size_t t = 0; t < t_frames; ++t) {
    const double loc = std::max(preds.tiou_hat[t] - preds.tnd_hat[t], cfg.epsilon);
    for (std::size_t k = 0; k < k_classes; ++k) {
      out(k, t) = loc * preds.cls(k, t);
    }
  }
  return out;
}

std::vector<double> soft_label(std::size_t class_index, double tiou_target,
                               double tnd_target, std::size_t n_classes,
                               const ScoringConfig& cfg) {
  if (class_index >= n_classes) {
    throw ComputeError("soft_label: class index " + std::to_string(class_index) +
                       " out of range for " + std::to_string(n_classes) + " classes");
  }
  std::vector<double> label(n_classes, 0.0);
  label[class_index] = std::max(tiou_target - tnd_target, cfg.epsilon);
  return label;
}

double focal_loss(const std::vector<double>& pred,
                  const std::vector<double>& target, double gamma) {
  if (pred.size() != target.size()) {
    throw ComputeError("focal_loss: prediction/target length mismatch");
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double w = std::pow(std::abs(target[k] - pred[k]), gamma);
    if (w == 0.0) continue;
    loss += w * soft_bce(pred[k], target[k]);
  }
  return loss;
}

LocqResult locq_loss(const FramePredictions& preds, const FrameTargets& targets) {
  validate(preds);
  const std::size_t t_frames = preds.n_frames();
  if (targets.inside_mask.size() != t_frames ||
      targets.tiou.size() != t_frames || targets.tnd.size() != t_frames) {
    throw ComputeError("locq_loss: target arrays disagree with frame count");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < t_frames; ++t) {
    if (!targets.inside_mask[t]) continue;
    sum += soft_bce(preds.tiou_hat[t], targets.tiou[t]);
    sum += soft_bce(preds.tnd_hat[t], targets.tnd[t]);
    ++n;
  }
  if (n == 0) return {0.0, true};
  return {sum / static_cast<double>(n), false};
}

double diou_loss(const Segment& pred, const Segment& gt) {
  return 1.0 - diou(pred, gt);
}

double branch_total(const LossReport& report, const LossWeights& weights,
                    bool supervised) {
  const double framed = report.cls + weights.lambda_reg * report.reg +
                        weights.lambda_locq * report.locq;
  if (report.n_pos == 0 && framed != 0.0) {
    throw ComputeError("degenerate positive count: frame losses present with n_pos = 0");
  }
  const double div = report.n_pos > 0 ? static_cast<double>(report.n_pos) : 1.0;
  double total = framed / div + weights.lambda_acp * report.acp;
  if (supervised) total += report.icd;
  return total;
}

void finalize_report(LossReport& report, const LossWeights& weights,
                     bool supervised) {
  report.total = branch_total(report, weights, supervised);
}

double assemble_total_loss(const LossReport& sup, const LossReport& unsup,
                           const LossWeights& weights) {
  return branch_total(sup, weights, true) +
         weights.beta * branch_total(unsup, weights, false);
}

}  // namespace apl

#include "apl/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "apl/errors.hpp"

namespace apl {

bool instance_rank_less(const Instance& a, const Instance& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  return a.class_index < b.class_index;
}

namespace {

void require_single_video(const std::vector<Instance>& instances,
                          const char* op) {
  for (const auto& inst : instances) {
    if (inst.video_id != instances.front().video_id) {
      throw ComputeError(std::string(op) + " expects instances from one video");
    }
    if (inst.score < 0.0 || inst.score > 1.0) {
      throw ComputeError(std::string(op) + ": instance score outside [0,1]");
    }
  }
}

}  // namespace

const char* to_string(RefineAction action) {
  switch (action) {
    case RefineAction::kept: return "kept";
    case RefineAction::eap_removed: return "eap_removed";
    case RefineAction::mpp_promoted: return "mpp_promoted";
    case RefineAction::unscorable: return "unscorable";
  }
  throw ComputeError("unknown refine action");
}

RefineAction refine_action_from_string(const std::string& name) {
  if (name == "kept") return RefineAction::kept;
  if (name == "eap_removed") return RefineAction::eap_removed;
  if (name == "mpp_promoted") return RefineAction::mpp_promoted;
  if (name == "unscorable") return RefineAction::unscorable;
  throw ComputeError("unknown refine action: " + name);
}

DecodeResult decode_instances(const FramePredictions& preds,
                              const std::vector<double>& frame_times,
                              const std::string& video_id,
                              const SelectionConfig& cfg,
                              const ScoringConfig& scoring) {
  if (frame_times.size() != preds.n_frames()) {
    throw ComputeError("decode_instances: frame_times length mismatch");
  }
  DecodeResult result;
  if (preds.n_frames() == 0) return result;

  const Matrix joint = joint_score(preds, scoring);
  const std::size_t k_classes = preds.n_classes();
  for (std::size_t t = 0; t < preds.n_frames(); ++t) {
    const double start = std::max(0.0, frame_times[t] - preds.offsets(0, t));
    const double end = frame_times[t] + preds.offsets(1, t);
    if (!(start < end)) {
      ++result.dropped;
      continue;
    }
    const Segment segment(start, end);
    auto emit = [&](std::size_t k) {
      Instance inst;
      inst.segment = segment;
      inst.class_index = k;
      inst.score = joint(k, t);
      inst.video_id = video_id;
      inst.source_frame = t;
      result.instances.push_back(std::move(inst));
    };
    if (cfg.multi_class_decode) {
      for (std::size_t k = 0; k < k_classes; ++k) emit(k);
    } else {
      std::size_t best = 0;
      for (std::size_t k = 1; k < k_classes; ++k) {
        if (preds.cls(k, t) > preds.cls(best, t)) best = k;
      }
      emit(best);
    }
  }
  std::sort(result.instances.begin(), result.instances.end(), instance_rank_less);
  if (result.instances.size() > cfg.pre_nms_topk) {
    result.instances.resize(cfg.pre_nms_topk);
  }
  return result;
}

std::vector<Instance> soft_nms(std::vector<Instance> instances,
                               const SelectionConfig& cfg) {
  if (cfg.nms_sigma <= 0.0) throw ComputeError("soft_nms: sigma must be positive");
  if (instances.empty()) return instances;
  require_single_video(instances, "soft_nms");

  std::map<std::size_t, std::vector<Instance>> per_class;
  for (auto& inst : instances) per_class[inst.class_index].push_back(std::move(inst));

  std::vector<Instance> output;
  output.reserve(instances.size());
  for (auto& [cls, pool] : per_class) {
    while (!pool.empty()) {
      auto best = std::min_element(pool.begin(), pool.end(),
                                   [](const Instance& a, const Instance& b) {
                                     return instance_rank_less(a, b);
                                   });
      Instance kept = std::move(*best);
      pool.erase(best);
      std::vector<Instance> next;
      next.reserve(pool.size());
      for (auto& other : pool) {
        const double overlap = tiou(kept.segment, other.segment);
        other.score *= std::exp(-(overlap * overlap) / cfg.nms_sigma);
        if (other.score >= cfg.nms_floor) next.push_back(std::move(other));
      }
      pool = std::move(next);
      output.push_back(std::move(kept));
    }
  }
  std::sort(output.begin(), output.end(), instance_rank_less);
  return output;
}

PseudoLabelSet dynamic_partition(std::vector<Instance> instances,
                                 const SelectionConfig& cfg) {
  if (cfg.tau_neg < 0.0 || cfg.tau_neg >= 1.0) {
    throw ComputeError("dynamic_partition: tau_neg must lie in [0,1)");
  }
  std::sort(instances.begin(), instances.end(), instance_rank_less);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].id.empty()) {
      instances[i].id = instances[i].video_id + "#" + std::to_string(i);
    }
  }

  PseudoLabelSet set;
  set.tau_neg = cfg.tau_neg;

  std::vector<Instance> survivors;
  for (auto& inst : instances) {
    if (inst.score <= cfg.tau_neg) {
      set.rejected.push_back(std::move(inst));
    } else {
      survivors.push_back(std::move(inst));
    }
  }

  if (survivors.empty()) {
    set.tau_pos = cfg.fixed_tau_pos.value_or(1.0);
    set.no_survivors = true;
    return set;
  }

  if (cfg.fixed_tau_pos.has_value()) {
    set.tau_pos = *cfg.fixed_tau_pos;
  } else {
    double mean = 0.0;
    for (const auto& inst : survivors) mean += inst.score;
    mean /= static_cast<double>(survivors.size());
    double var = 0.0;
    for (const auto& inst : survivors) {
      const double d = inst.score - mean;
      var += d * d;
    }
    var /= static_cast<double>(survivors.size());
    set.tau_pos = std::min(1.0, mean + cfg.tau_pos_multiplier * std::sqrt(var));
  }

  for (auto& inst : survivors) {
    if (inst.score >= set.tau_pos) {
      set.positives.push_back(std::move(inst));
    } else {
      set.candidates.push_back(std::move(inst));
    }
  }
  return set;
}

}  // namespace apl

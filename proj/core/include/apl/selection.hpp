#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "apl/geometry.hpp"
#include "apl/quality.hpp"

namespace apl {

// One scored action instance.
struct Instance {
  Segment segment;
  std::size_t class_index = 0;
  double score = 0.0;
  std::string video_id;
  std::optional<std::size_t> source_frame;
  // Stable identifier, assigned when a post-suppression set is partitioned
  // (video id plus running index). Empty until then.
  std::string id;
};

// Deterministic ranking used everywhere instances are ordered:
// score desc, start asc, video id asc, class asc.
bool instance_rank_less(const Instance& a, const Instance& b);

struct SelectionConfig {
  // Scores at or below this are rejected outright.
  double tau_neg = 0.15;
  double nms_sigma = 0.5;
  double nms_floor = 0.001;
  std::size_t pre_nms_topk = 2000;
  // tau_pos = mean + tau_pos_multiplier * population std of surviving scores.
  double tau_pos_multiplier = 1.0;
  // When set, bypasses the dynamic threshold entirely.
  std::optional<double> fixed_tau_pos;
  // Decode one instance per (frame, class) instead of per-frame argmax.
  bool multi_class_decode = false;
};

enum class RefineAction { kept, eap_removed, mpp_promoted, unscorable };

const char* to_string(RefineAction action);
RefineAction refine_action_from_string(const std::string& name);

struct RefinementLogEntry {
  std::string instance_id;
  RefineAction action = RefineAction::kept;
  std::optional<double> similarity;
};

// Scored instances split into score tiers. The three lists are disjoint and
// together hold every post-suppression instance of the video.
struct PseudoLabelSet {
  std::vector<Instance> positives;
  std::vector<Instance> candidates;
  std::vector<Instance> rejected;
  double tau_pos = 1.0;
  double tau_neg = 0.15;
  bool no_survivors = false;
  std::vector<RefinementLogEntry> refinement_log;
};

struct DecodeResult {
  std::vector<Instance> instances;
  // Decodes whose boundaries collapsed (start >= end after clamping).
  std::size_t dropped = 0;
};

// Turns per-frame predictions into scored instances: the frame's best class
// (or every class with multi_class_decode), the segment spanned by the
// regressed offsets, and the joint score at that frame and class. Keeps the
// pre_nms_topk best by score.
DecodeResult decode_instances(const FramePredictions& preds,
                              const std::vector<double>& frame_times,
                              const std::string& video_id,
                              const SelectionConfig& cfg,
                              const ScoringConfig& scoring);

// Gaussian soft suppression per class: repeatedly take the highest-scoring
// instance and decay same-class overlaps by exp(-tiou^2 / sigma); decayed
// scores below nms_floor are dropped. Segments and classes are never altered.
// Output is sorted by final score descending.
std::vector<Instance> soft_nms(std::vector<Instance> instances,
                               const SelectionConfig& cfg);

// Splits suppressed instances into rejected (score <= tau_neg), positives
// (score >= tau_pos) and candidates (in between), where tau_pos is the mean
// plus scaled population std of the surviving scores, capped at 1.
PseudoLabelSet dynamic_partition(std::vector<Instance> instances,
                                 const SelectionConfig& cfg);

}  // namespace apl

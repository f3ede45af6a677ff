#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apl/geometry.hpp"
#include "apl/icd.hpp"
#include "apl/matrix.hpp"
#include "apl/quality.hpp"
#include "apl/selection.hpp"

namespace apl {

// Controls for corrupting clean detector outputs.
struct NoiseModel {
  // Std of Gaussian boundary jitter as a fraction of segment length.
  double boundary_jitter = 0.08;
  double class_flip_prob = 0.05;
  // Scales the noise on the localization-quality heads and the strength of
  // spurious background detections. Zero means clean predictions.
  double score_noise_std = 0.25;
  // Fraction of true instances re-labeled with a wrong class at a high score.
  double ambiguous_rate = 0.10;
  // Fraction of true instances demoted into the candidate score band.
  double missed_rate = 0.15;
  std::uint64_t seed = 0;
};

void validate(const NoiseModel& noise);

struct WorldConfig {
  std::size_t n_videos = 200;
  std::size_t n_classes = 10;
  std::pair<double, double> video_duration = {45.0, 75.0};
  std::pair<std::size_t, std::size_t> instances_per_video = {2, 4};
  std::pair<double, double> instance_length = {4.0, 12.0};
  // Minimum spacing between ground-truth instances of one video.
  double min_gap = 1.0;
  double fps = 1.0;
  std::size_t feature_dim = 16;
  // Distance between class feature prototypes; zero makes classes
  // indistinguishable in feature space.
  double class_prototype_separation = 4.0;
  // Fraction of videos whose annotations are visible to training.
  double labeled_fraction = 0.2;
  std::uint64_t seed = 0;
};

void validate(const WorldConfig& cfg);

struct GtInstance {
  Segment segment;
  std::size_t class_index = 0;
};

struct SimVideo {
  std::string video_id;
  double duration = 0.0;
  double fps = 1.0;
  bool labeled = false;
  std::vector<GtInstance> gt;
  Matrix features;  // D x T frame features
};

struct World {
  WorldConfig config;
  std::vector<std::string> class_names;
  Matrix prototypes;  // K x D
  std::vector<SimVideo> videos;
};

// Frame-center timestamps (t + 0.5) / fps for the video's frame grid.
std::vector<double> frame_times(double duration, double fps);

// Deterministic synthetic corpus: per video a duration, non-overlapping
// ground-truth segments with classes, and a D x T feature matrix that blends
// the covering instance's class prototype with background noise. Every video
// is generated from a seed derived from (config seed, video id), so
// regeneration is byte-identical and order-independent.
World generate_world(const WorldConfig& cfg);

// Frame-feature slice spanning the segment (columns whose timestamp falls
// inside it; the nearest column if none do).
InstanceFeature slice_instance_feature(const Matrix& features, double fps,
                                       const Segment& segment, std::size_t class_index,
                                       std::string video_id);
InstanceFeature slice_instance_feature(const SimVideo& video, const Segment& segment,
                                       std::size_t class_index);

enum class InjectionKind { normal, ambiguous, demoted, junk };

const char* to_string(InjectionKind kind);

// Hidden accounting of what the corruption did to each instance, so tests
// can measure exact recovery and removal rates.
struct InjectionRecord {
  std::string video_id;
  std::optional<std::size_t> gt_index;  // unset for spurious instances
  InjectionKind kind = InjectionKind::normal;
  std::size_t claimed_class = 0;
  Segment segment;  // post-jitter
  double peak = 0.0;
  std::size_t owned_frames = 0;
};

struct CorruptedVideo {
  std::string video_id;
  FramePredictions predictions;
  // What an exact decoder recovers: one instance per injection that owns at
  // least one frame, with its noiseless joint score.
  std::vector<Instance> oracle;
};

struct CorruptionResult {
  std::vector<CorruptedVideo> videos;
  std::vector<InjectionRecord> ledger;
};

// Noisy per-frame predictions for every video. True instances keep their
// jittered segment in the offsets; the localization heads carry the true
// post-jitter values plus clipped Gaussian noise; scores peak at the claimed
// class. Ambiguous injections claim a wrong class at a high peak, demotions
// keep the true class at a candidate-band peak, and spurious background
// instances appear only when score_noise_std is positive.
CorruptionResult corrupt_predictions(const World& world, const NoiseModel& noise);

}  // namespace apl

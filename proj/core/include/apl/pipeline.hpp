#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apl/evalsuite.hpp"
#include "apl/formats.hpp"
#include "apl/icd.hpp"
#include "apl/quality.hpp"
#include "apl/selection.hpp"
#include "apl/simharness.hpp"

namespace apl {

// Runs fn(0), ..., fn(n-1) across a fixed pool of threads. Calls for distinct
// indices run concurrently; the first exception is rethrown after the pool
// drains. workers <= 1 runs inline.
void parallel_for_index(std::size_t n, std::size_t workers,
                        const std::function<void(std::size_t)>& fn);

struct VideoPredictions {
  std::string video_id;
  double fps = 1.0;
  FramePredictions predictions;
};

struct SelectionSummary {
  std::size_t videos = 0;
  std::size_t decoded = 0;  // instances entering suppression
  std::size_t dropped = 0;  // decodes with collapsed boundaries
  std::size_t positives = 0;
  std::size_t candidates = 0;
  std::size_t rejected = 0;
  std::size_t empty_videos = 0;
};

struct SelectionRun {
  std::map<std::string, PseudoLabelSet> videos;
  SelectionSummary summary;
};

// Decode, soft suppression and tier split, one video per work item.
SelectionRun select_videos(const std::vector<VideoPredictions>& inputs,
                           const SelectionConfig& cfg, const ScoringConfig& scoring,
                           std::size_t workers = 1);

// Ground-truth instance features of every labeled video.
std::vector<InstanceFeature> annotated_instances(const World& world);

// Same, from an annotation file plus per-video feature matrices. Videos with
// empty annotation lists contribute nothing; annotated videos missing from
// the feature map are an error.
std::vector<InstanceFeature> annotated_instances(
    const AnnotationFile& ann, const std::map<std::string, Matrix>& features);

// Labeled reference instances keyed by class.
using ReferenceBank = std::map<std::size_t, std::vector<InstanceFeature>>;
ReferenceBank group_by_class(std::vector<InstanceFeature> instances);

// Discriminator similarity for every positive and candidate of one video,
// keyed by instance id. Instances of a class with no labeled reference map
// to null (unscorable).
std::map<std::string, std::optional<double>> score_similarities(
    const DiscriminatorModel& model, const PseudoLabelSet& set,
    const Matrix& features, double fps, const ReferenceBank& refs,
    const IcdConfig& cfg);

// Flat reference instances (unit score, empty ids) for the evaluators.
std::vector<Instance> gt_instances(const SimVideo& video);
std::vector<Instance> gt_instances(const AnnotationFile& ann);

struct EvalReport {
  MeanApResult detection;
  QualityReport quality;
};

// Scores the positive tier of every video against the references.
EvalReport evaluate_positives(const std::map<std::string, PseudoLabelSet>& videos,
                              const std::vector<Instance>& gts,
                              const EvalConfig& cfg);

}  // namespace apl

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace apl {

enum class Granularity { coarse, fine };

// A contrastive batch: feature vectors with integer pseudo-class labels.
// Vectors are unit-normalized inside the loss; inputs stay unnormalized.
struct ContrastBatch {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  double temperature = 0.07;
  Granularity granularity = Granularity::coarse;
};

struct AcpConfig {
  // Frames sampled per video, one from each of this many equal partitions.
  std::size_t partitions_n = 8;
  // Action-vs-background contrast within one video is always binary.
  std::size_t coarse_clusters = 2;
  // Pseudo-class count for the cross-video contrast.
  std::size_t fine_clusters_b = 4;
  double temperature = 0.07;
  std::size_t kmeans_restarts = 8;
  std::size_t kmeans_max_iters = 100;
  std::uint64_t seed = 0;
};

void validate(const AcpConfig& cfg);

// Partitions [0, t_frames) into n contiguous bins of near-equal size (the
// remainder widens the leading bins) and draws one frame index per bin.
// Indices come back strictly increasing.
std::vector<std::size_t> sample_frames(std::size_t t_frames, std::size_t n,
                                       std::uint64_t seed);

// Lloyd's algorithm with distance-weighted seeding, best of
// kmeans_restarts by within-cluster sum of squares. Labels are renamed in
// first-occurrence order so the first point always gets label 0.
std::vector<int> kmeans_labels(const std::vector<std::vector<double>>& points,
                               std::size_t k, const AcpConfig& cfg);

// Normalized-temperature contrastive loss. For each anchor, every same-label
// vector (the anchor itself excluded) is a positive; every other-label vector
// is a negative. Each positive contributes
//   -log( exp(s_ij/t) / (exp(s_ij/t) + sum_negatives exp(s_in/t)) )
// and the sum is divided by the total number of positive pairs.
double infonce_loss(const ContrastBatch& batch);

// Analytic gradient of infonce_loss with respect to the raw (pre-
// normalization) feature vectors.
std::vector<std::vector<double>> infonce_grad(const ContrastBatch& batch);

struct AcpLossReport {
  double l_conc = 0.0;  // within-video action-vs-background contrast, averaged
  double l_conf = 0.0;  // cross-video fine-grained contrast
  double l_acp = 0.0;   // their sum
  std::size_t kmeans_invocations = 0;
};

// Combined contrast losses over per-video frame feature sets. Labels are
// produced by clustering unless supplied externally (per-video binary labels
// for the within-video term, one flat label list over the concatenated frames
// for the cross-video term), in which case clustering is skipped.
AcpLossReport acp_losses(
    const std::vector<std::vector<std::vector<double>>>& video_frames,
    const AcpConfig& cfg,
    const std::optional<std::vector<std::vector<int>>>& coarse_labels = std::nullopt,
    const std::optional<std::vector<int>>& fine_labels = std::nullopt);

}  // namespace apl

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apl/matrix.hpp"
#include "apl/selection.hpp"

namespace apl {

// Frame features spanning one action instance: D rows (feature dimensions)
// by L columns (frames).
struct InstanceFeature {
  Matrix features;
  std::size_t class_index = 0;
  std::string video_id;
};

// Two-layer pairwise-similarity network. Takes the concatenation [a;b] of two
// pooled D-vectors, so w1 has 2D columns; one hidden rectified-linear layer,
// one sigmoid output.
struct DiscriminatorModel {
  Matrix w1;               // H x 2D
  std::vector<double> b1;  // H
  std::vector<double> w2;  // H
  double b2 = 0.0;
  std::uint64_t seed = 0;

  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t feature_dim() const { return w1.cols() / 2; }
};

struct IcdConfig {
  std::size_t pairs_per_anchor = 10;
  std::size_t epochs = 200;
  double learning_rate = 1.0;
  // Positives scoring strictly below tau_icd are removed; candidates scoring
  // strictly above sigma_icd are promoted.
  double tau_icd = 0.3;
  double sigma_icd = 0.7;
  std::size_t hidden_dim = 64;
  // Z-score pooled features before training, then fold the affine transform
  // back into w1/b1 so the trained model consumes raw features.
  bool standardize = true;
  // Optional cap on how many labeled references a similarity score averages
  // over; unset means all of them.
  std::optional<std::size_t> reference_cap;
  std::uint64_t seed = 0;
};

void validate(const IcdConfig& cfg);

// Elementwise temporal maximum: D x L -> D.
std::vector<double> max_pool(const InstanceFeature& feat);

// sigmoid(w2 . relu(w1 [a;b] + b1) + b2)
double pair_probability(const DiscriminatorModel& model,
                        const std::vector<double>& a,
                        const std::vector<double>& b);

// Index pairs drawn for discriminator training. Pairs are unordered and
// deduplicated (stored with the smaller index first); the sampled_* tallies
// count draws before deduplication.
struct PairSets {
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  std::vector<std::pair<std::size_t, std::size_t>> negatives;
  std::size_t sampled_positive = 0;
  std::size_t sampled_negative = 0;
  // Classes with one instance only; they contribute no positive pairs.
  std::vector<std::size_t> singleton_classes;
};

// For every anchor, up to pairs_per_anchor same-class partners and up to
// pairs_per_anchor different-class partners, sampled without replacement.
PairSets build_pair_sets(const std::vector<InstanceFeature>& batch,
                         const IcdConfig& cfg);

struct ModelGradients {
  Matrix w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

// Mean binary cross-entropy over all pairs, each taken in both orders.
// Positive pairs carry label 1, negative pairs label 0.
double pair_loss(const DiscriminatorModel& model,
                 const std::vector<std::vector<double>>& pooled,
                 const PairSets& pairs);

// Analytic gradient of pair_loss with respect to every weight.
ModelGradients pair_gradients(const DiscriminatorModel& model,
                              const std::vector<std::vector<double>>& pooled,
                              const PairSets& pairs);

struct TrainResult {
  DiscriminatorModel model;
  // Mean pair loss at the start of each epoch, before that epoch's step.
  std::vector<double> loss_curve;
};

// Full-batch gradient descent from a seeded random initialization.
TrainResult train_pairs(const std::vector<std::vector<double>>& pooled,
                        const PairSets& pairs, const IcdConfig& cfg);

// Pools every instance, samples pairs, and trains the discriminator.
TrainResult train(const std::vector<InstanceFeature>& batch, const IcdConfig& cfg);

// Fraction of pairs classified correctly at 0.5 using the order-averaged
// pair probability.
double pair_accuracy(const DiscriminatorModel& model,
                     const std::vector<std::vector<double>>& pooled,
                     const PairSets& pairs);

// Mean pair probability of pred against labeled same-class instances.
// With a cap, that many references are drawn without replacement (seeded).
double similarity_score(const DiscriminatorModel& model, const InstanceFeature& pred,
                        const std::vector<InstanceFeature>& labeled_same_class,
                        std::optional<std::size_t> cap = std::nullopt,
                        std::uint64_t seed = 0);

enum class RefineMode { eap_and_mpp, eap_only, mpp_only };

// Moves positives with similarity < tau_icd to rejected and candidates with
// similarity > sigma_icd to positives. Similarities are keyed by instance id;
// a present-but-null entry marks an unscorable instance, which stays put.
// Every positive and candidate gets a refinement_log entry.
PseudoLabelSet refine(PseudoLabelSet set,
                      const std::map<std::string, std::optional<double>>& similarities,
                      const IcdConfig& cfg, RefineMode mode = RefineMode::eap_and_mpp);

// Flat little-endian binary, magic "ICD1": dims (D, H) as 32-bit unsigned,
// then w1, b1, w2, b2 as 32-bit floats row-major, then the seed as 64-bit
// unsigned.
void save_model(const DiscriminatorModel& model, const std::string& path);
DiscriminatorModel load_model(const std::string& path);

}  // namespace apl

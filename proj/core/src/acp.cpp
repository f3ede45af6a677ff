#include "apl/acp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

namespace {

constexpr double kMinTemperature = 1e-6;

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    d += x * x;
  }
  return d;
}

struct NormalizedBatch {
  std::vector<std::vector<double>> unit;
  std::vector<double> norms;
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> negatives;
  std::size_t n_pairs = 0;
};

NormalizedBatch prepare(const ContrastBatch& batch) {
  if (batch.features.size() != batch.labels.size()) {
    throw ComputeError("contrast batch: feature/label count mismatch");
  }
  if (batch.temperature < kMinTemperature) {
    throw ComputeError("contrast batch: temperature below 1e-6");
  }
  NormalizedBatch nb;
  const std::size_t n = batch.features.size();
  nb.unit.resize(n);
  nb.norms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.features[i].size() != batch.features[0].size() ||
        batch.features[i].empty()) {
      throw ComputeError("contrast batch: inconsistent feature dimensions");
    }
    double norm2 = 0.0;
    for (double v : batch.features[i]) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) throw ComputeError("contrast batch: zero-norm feature vector");
    nb.norms[i] = norm;
    nb.unit[i] = batch.features[i];
    for (double& v : nb.unit[i]) v /= norm;
  }
  nb.positives.resize(n);
  nb.negatives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (batch.labels[j] == batch.labels[i]) {
        nb.positives[i].push_back(j);
      } else {
        nb.negatives[i].push_back(j);
      }
    }
    nb.n_pairs += nb.positives[i].size();
  }
  if (nb.n_pairs == 0) throw ComputeError("degenerate contrast batch: no positive pair");
  return nb;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void validate(const AcpConfig& cfg) {
  if (cfg.partitions_n == 0) throw ComputeError("partitions_n must be positive");
  if (cfg.coarse_clusters != 2) {
    throw ComputeError("the within-video contrast is binary; coarse_clusters must be 2");
  }
  if (cfg.fine_clusters_b < 2) throw ComputeError("fine_clusters_b must be at least 2");
  if (cfg.temperature < kMinTemperature) throw ComputeError("temperature below 1e-6");
  if (cfg.kmeans_restarts == 0 || cfg.kmeans_max_iters == 0) {
    throw ComputeError("clustering restarts and iterations must be positive");
  }
}

std::vector<std::size_t> sample_frames(std::size_t t_frames, std::size_t n,
                                       std::uint64_t seed) {
  if (n > t_frames) {
    throw ComputeError("sample_frames: asked for " + std::to_string(n) +
                       " frames from " + std::to_string(t_frames));
  }
  Rng rng(seed);
  std::vector<std::size_t> picks;
  picks.reserve(n);
  const std::size_t base = n == 0 ? 0 : t_frames / n;
  const std::size_t rem = n == 0 ? 0 : t_frames % n;
  std::size_t lo = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t width = base + (b < rem ? 1 : 0);
    picks.push_back(lo + static_cast<std::size_t>(rng.uniform_int(
                             static_cast<std::uint64_t>(width))));
    lo += width;
  }
  return picks;
}

std::vector<int> kmeans_labels(const std::vector<std::vector<double>>& points,
                               std::size_t k, const AcpConfig& cfg) {
  if (k == 0) throw ComputeError("kmeans: k must be positive");
  if (points.empty()) throw ComputeError("kmeans: no points");
  for (const auto& p : points) {
    if (p.size() != points[0].size()) {
      throw ComputeError("kmeans: inconsistent point dimensions");
    }
  }
  if (k == 1) return std::vector<int>(points.size(), 0);

  std::set<std::vector<double>> distinct(points.begin(), points.end());
  if (distinct.size() < k) {
    throw ComputeError("kmeans: need at least " + std::to_string(k) +
                       " distinct points, have " + std::to_string(distinct.size()));
  }

  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  Rng rng(cfg.seed);

  std::vector<int> best_labels;
  double best_wcss = std::numeric_limits<double>::infinity();

  for (std::size_t restart = 0; restart < cfg.kmeans_restarts; ++restart) {
    // distance-weighted seeding
    std::vector<std::vector<double>> centers;
    centers.push_back(points[rng.uniform_int(static_cast<std::uint64_t>(n))]);
    std::vector<double> d2(n);
    while (centers.size() < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, dist2(points[i], c));
        d2[i] = best;
        total += best;
      }
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      std::size_t chosen = n;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc >= r) {
          chosen = i;
          break;
        }
      }
      if (chosen == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            chosen = i;
            break;
          }
        }
      }
      centers.push_back(points[chosen]);
    }

    std::vector<int> labels(n, -1);
    for (std::size_t iter = 0; iter < cfg.kmeans_max_iters; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double bd = dist2(points[i], centers[0]);
        for (std::size_t c = 1; c < k; ++c) {
          const double d = dist2(points[i], centers[c]);
          if (d < bd) {
            bd = d;
            best = static_cast<int>(c);
          }
        }
        if (labels[i] != best) {
          labels[i] = best;
          changed = true;
        }
      }
      if (!changed) break;

      std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
          // revive an empty cluster at the point farthest from its center
          std::size_t far = 0;
          double fd = -1.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double d = dist2(points[i], centers[static_cast<std::size_t>(labels[i])]);
            if (d > fd) {
              fd = d;
              far = i;
            }
          }
          centers[c] = points[far];
        } else {
          for (std::size_t d = 0; d < dim; ++d) {
            centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
          }
        }
      }
    }

    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wcss += dist2(points[i], centers[static_cast<std::size_t>(labels[i])]);
    }
    if (wcss < best_wcss) {
      best_wcss = wcss;
      best_labels = labels;
    }
  }

  // first-occurrence canonical names
  std::vector<int> rename(k, -1);
  int next = 0;
  for (int& l : best_labels) {
    if (rename[static_cast<std::size_t>(l)] < 0) rename[static_cast<std::size_t>(l)] = next++;
    l = rename[static_cast<std::size_t>(l)];
  }
  return best_labels;
}

double infonce_loss(const ContrastBatch& batch) {
  const NormalizedBatch nb = prepare(batch);
  const double inv_t = 1.0 / batch.temperature;
  double loss = 0.0;
  for (std::size_t i = 0; i < nb.unit.size(); ++i) {
    if (nb.positives[i].empty()) continue;
    std::vector<double> neg_logits;
    neg_logits.reserve(nb.negatives[i].size());
    for (std::size_t n : nb.negatives[i]) {
      neg_logits.push_back(dot(nb.unit[i], nb.unit[n]) * inv_t);
    }
    for (std::size_t j : nb.positives[i]) {
      const double pos = dot(nb.unit[i], nb.unit[j]) * inv_t;
      double m = pos;
      for (double v : neg_logits) m = std::max(m, v);
      double denom = std::exp(pos - m);
      for (double v : neg_logits) denom += std::exp(v - m);
      loss -= pos - (m + std::log(denom));
    }
  }
  return loss / static_cast<double>(nb.n_pairs);
}

std::vector<std::vector<double>> infonce_grad(const ContrastBatch& batch) {
  const NormalizedBatch nb = prepare(batch);
  const double inv_t = 1.0 / batch.temperature;
  const std::size_t n = nb.unit.size();
  const std::size_t dim = nb.unit[0].size();
  const double inv_pairs = 1.0 / static_cast<double>(nb.n_pairs);

  std::vector<std::vector<double>> dg(n, std::vector<double>(dim, 0.0));
  auto add = [&](std::size_t idx, double w, const std::vector<double>& v) {
    for (std::size_t d = 0; d < dim; ++d) dg[idx][d] += w * v[d];
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (nb.positives[i].empty()) continue;
    std::vector<double> neg_logits;
    neg_logits.reserve(nb.negatives[i].size());
    for (std::size_t x : nb.negatives[i]) {
      neg_logits.push_back(dot(nb.unit[i], nb.unit[x]) * inv_t);
    }
    for (std::size_t j : nb.positives[i]) {
      const double pos = dot(nb.unit[i], nb.unit[j]) * inv_t;
      double m = pos;
      for (double v : neg_logits) m = std::max(m, v);
      double denom = std::exp(pos - m);
      for (double v : neg_logits) denom += std::exp(v - m);
      const double p_pos = std::exp(pos - m) / denom;

      const double w_pos = -inv_pairs * (1.0 - p_pos) * inv_t;
      add(i, w_pos, nb.unit[j]);
      add(j, w_pos, nb.unit[i]);
      for (std::size_t x = 0; x < nb.negatives[i].size(); ++x) {
        const double w_neg = inv_pairs * (std::exp(neg_logits[x] - m) / denom) * inv_t;
        add(i, w_neg, nb.unit[nb.negatives[i][x]]);
        add(nb.negatives[i][x], w_neg, nb.unit[i]);
      }
    }
  }

  // through the normalization: d/df of f/|f| applied to the unit-space grads
  std::vector<std::vector<double>> out(n, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double along = dot(nb.unit[i], dg[i]);
    for (std::size_t d = 0; d < dim; ++d) {
      out[i][d] = (dg[i][d] - nb.unit[i][d] * along) / nb.norms[i];
    }
  }
  return out;
}

AcpLossReport acp_losses(
    const std::vector<std::vector<std::vector<double>>>& video_frames,
    const AcpConfig& cfg,
    const std::optional<std::vector<std::vector<int>>>& coarse_labels,
    const std::optional<std::vector<int>>& fine_labels) {
  validate(cfg);
  if (video_frames.size() < 2) {
    throw ComputeError("acp_losses: the cross-video contrast needs at least two videos");
  }
  if (coarse_labels && coarse_labels->size() != video_frames.size()) {
    throw ComputeError("acp_losses: one coarse label list per video expected");
  }

  AcpLossReport report;
  for (std::size_t v = 0; v < video_frames.size(); ++v) {
    ContrastBatch batch;
    batch.features = video_frames[v];
    batch.temperature = cfg.temperature;
    batch.granularity = Granularity::coarse;
    if (coarse_labels) {
      batch.labels = (*coarse_labels)[v];
      if (batch.labels.size() != batch.features.size()) {
        throw ComputeError("acp_losses: coarse label count mismatch for video " +
                           std::to_string(v));
      }
    } else {
      batch.labels = kmeans_labels(batch.features, cfg.coarse_clusters, cfg);
      ++report.kmeans_invocations;
    }
    report.l_conc += infonce_loss(batch);
  }
  report.l_conc /= static_cast<double>(video_frames.size());

  ContrastBatch fine;
  fine.temperature = cfg.temperature;
  fine.granularity = Granularity::fine;
  for (const auto& frames : video_frames) {
    fine.features.insert(fine.features.end(), frames.begin(), frames.end());
  }
  if (fine_labels) {
    fine.labels = *fine_labels;
    if (fine.labels.size() != fine.features.size()) {
      throw ComputeError("acp_losses: fine label count mismatch");
    }
  } else {
    fine.labels = kmeans_labels(fine.features, cfg.fine_clusters_b, cfg);
    ++report.kmeans_invocations;
  }
  report.l_conf = infonce_loss(fine);
  report.l_acp = report.l_conc + report.l_conf;
  return report;
}

}  // namespace apl

#include "apl/icd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// logit-space BCE: log(1 + e^z) - y*z, stable for large |z|
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

double forward_logit(const DiscriminatorModel& model, const std::vector<double>& a,
                     const std::vector<double>& b, std::vector<double>* hidden) {
  const std::size_t h_dim = model.w1.rows();
  const std::size_t d = model.feature_dim();
  if (a.size() != d || b.size() != d) {
    throw ComputeError("pair features must have dimension " + std::to_string(d) +
                       ", got " + std::to_string(a.size()) + " and " +
                       std::to_string(b.size()));
  }
  double logit = model.b2;
  if (hidden) hidden->assign(h_dim, 0.0);
  for (std::size_t h = 0; h < h_dim; ++h) {
    const double* row = model.w1.row(h);
    double z = model.b1[h];
    for (std::size_t k = 0; k < d; ++k) z += row[k] * a[k];
    for (std::size_t k = 0; k < d; ++k) z += row[d + k] * b[k];
    if (z > 0.0) {
      if (hidden) (*hidden)[h] = z;
      logit += model.w2[h] * z;
    }
  }
  return logit;
}

DiscriminatorModel initial_model(std::size_t feature_dim, const IcdConfig& cfg) {
  DiscriminatorModel model;
  model.seed = cfg.seed;
  model.w1 = Matrix(cfg.hidden_dim, 2 * feature_dim);
  model.b1.assign(cfg.hidden_dim, 0.0);
  model.w2.assign(cfg.hidden_dim, 0.0);
  model.b2 = 0.0;
  Rng rng(cfg.seed);
  const double s1 = std::sqrt(2.0 / static_cast<double>(2 * feature_dim));
  for (double& w : model.w1.data()) w = rng.normal(0.0, s1);
  const double s2 = std::sqrt(2.0 / static_cast<double>(cfg.hidden_dim));
  for (double& w : model.w2) w = rng.normal(0.0, s2);
  return model;
}

// draw n distinct elements from pool (partial Fisher-Yates), order discarded
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t n, Rng& rng) {
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t j =
        t + static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::uint64_t>(pool.size() - t)));
    std::swap(pool[t], pool[j]);
  }
  pool.resize(n);
  return pool;
}

void check_pooled(const std::vector<std::vector<double>>& pooled) {
  if (pooled.empty()) throw ComputeError("degenerate pair sets: no instances");
  for (const auto& p : pooled) {
    if (p.empty() || p.size() != pooled[0].size()) {
      throw ComputeError("pooled features must share one nonzero dimension");
    }
  }
}

}  // namespace

void validate(const IcdConfig& cfg) {
  if (cfg.pairs_per_anchor == 0) throw ComputeError("pairs_per_anchor must be positive");
  if (!(cfg.tau_icd >= 0.0 && cfg.tau_icd < cfg.sigma_icd && cfg.sigma_icd <= 1.0)) {
    throw ComputeError("thresholds must satisfy 0 <= tau_icd < sigma_icd <= 1");
  }
  if (cfg.sigma_icd <= 0.5) throw ComputeError("sigma_icd must exceed 0.5");
  if (cfg.hidden_dim == 0) throw ComputeError("hidden_dim must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ComputeError("learning_rate must be positive");
  if (cfg.reference_cap && *cfg.reference_cap == 0) {
    throw ComputeError("reference_cap must be positive when set");
  }
}

std::vector<double> max_pool(const InstanceFeature& feat) {
  if (feat.features.rows() == 0 || feat.features.cols() == 0) {
    throw ComputeError("instance features must be a nonempty D x L matrix");
  }
  std::vector<double> pooled(feat.features.rows());
  for (std::size_t d = 0; d < feat.features.rows(); ++d) {
    const double* row = feat.features.row(d);
    pooled[d] = *std::max_element(row, row + feat.features.cols());
  }
  return pooled;
}

double pair_probability(const DiscriminatorModel& model, const std::vector<double>& a,
                        const std::vector<double>& b) {
  return sigmoid(forward_logit(model, a, b, nullptr));
}

PairSets build_pair_sets(const std::vector<InstanceFeature>& batch,
                         const IcdConfig& cfg) {
  validate(cfg);
  PairSets out;
  const std::size_t n = batch.size();

  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[batch[i].class_index].push_back(i);
  for (const auto& [cls, members] : by_class) {
    if (members.size() == 1) out.singleton_classes.push_back(cls);
  }

  Rng rng(cfg.seed);
  std::set<std::pair<std::size_t, std::size_t>> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> same, diff;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      (batch[j].class_index == batch[i].class_index ? same : diff).push_back(j);
    }
    const std::size_t n_pos = std::min(cfg.pairs_per_anchor, same.size());
    const std::size_t n_neg = std::min(cfg.pairs_per_anchor, diff.size());
    out.sampled_positive += n_pos;
    out.sampled_negative += n_neg;
    for (std::size_t j : sample_without_replacement(same, n_pos, rng)) {
      pos.emplace(std::min(i, j), std::max(i, j));
    }
    for (std::size_t j : sample_without_replacement(diff, n_neg, rng)) {
      neg.emplace(std::min(i, j), std::max(i, j));
    }
  }
  out.positives.assign(pos.begin(), pos.end());
  out.negatives.assign(neg.begin(), neg.end());
  return out;
}

double pair_loss(const DiscriminatorModel& model,
                 const std::vector<std::vector<double>>& pooled,
                 const PairSets& pairs) {
  check_pooled(pooled);
  double loss = 0.0;
  std::size_t terms = 0;
  auto accumulate = [&](const std::vector<std::pair<std::size_t, std::size_t>>& list,
                        double label) {
    for (const auto& [i, j] : list) {
      loss += bce_from_logit(forward_logit(model, pooled[i], pooled[j], nullptr), label);
      loss += bce_from_logit(forward_logit(model, pooled[j], pooled[i], nullptr), label);
      terms += 2;
    }
  };
  accumulate(pairs.positives, 1.0);
  accumulate(pairs.negatives, 0.0);
  if (terms == 0) throw ComputeError("degenerate pair sets: nothing to score");
  return loss / static_cast<double>(terms);
}

ModelGradients pair_gradients(const DiscriminatorModel& model,
                              const std::vector<std::vector<double>>& pooled,
                              const PairSets& pairs) {
  check_pooled(pooled);
  const std::size_t h_dim = model.w1.rows();
  const std::size_t d = model.feature_dim();

  ModelGradients g;
  g.w1 = Matrix(h_dim, 2 * d);
  g.b1.assign(h_dim, 0.0);
  g.w2.assign(h_dim, 0.0);
  g.b2 = 0.0;

  const std::size_t terms =
      2 * (pairs.positives.size() + pairs.negatives.size());
  if (terms == 0) throw ComputeError("degenerate pair sets: nothing to score");
  const double inv_terms = 1.0 / static_cast<double>(terms);

  std::vector<double> hidden;
  auto accumulate_one = [&](const std::vector<double>& a, const std::vector<double>& b,
                            double label) {
    const double logit = forward_logit(model, a, b, &hidden);
    const double dlogit = (sigmoid(logit) - label) * inv_terms;
    g.b2 += dlogit;
    for (std::size_t h = 0; h < h_dim; ++h) {
      if (hidden[h] <= 0.0) continue;  // rectifier gate
      g.w2[h] += dlogit * hidden[h];
      const double dz = dlogit * model.w2[h];
      g.b1[h] += dz;
      double* grow = g.w1.row(h);
      for (std::size_t k = 0; k < d; ++k) grow[k] += dz * a[k];
      for (std::size_t k = 0; k < d; ++k) grow[d + k] += dz * b[k];
    }
  };
  for (const auto& [i, j] : pairs.positives) {
    accumulate_one(pooled[i], pooled[j], 1.0);
    accumulate_one(pooled[j], pooled[i], 1.0);
  }
  for (const auto& [i, j] : pairs.negatives) {
    accumulate_one(pooled[i], pooled[j], 0.0);
    accumulate_one(pooled[j], pooled[i], 0.0);
  }
  return g;
}

TrainResult train_pairs(const std::vector<std::vector<double>>& pooled,
                        const PairSets& pairs, const IcdConfig& cfg) {
  validate(cfg);
  check_pooled(pooled);
  if (pairs.positives.empty() || pairs.negatives.empty()) {
    throw ComputeError("degenerate pair sets: need both positive and negative pairs");
  }

  TrainResult result;
  result.model = initial_model(pooled[0].size(), cfg);
  if (cfg.epochs == 0) return result;

  const std::size_t dim = pooled[0].size();
  std::vector<std::vector<double>> x = pooled;
  std::vector<double> mean(dim, 0.0), scale(dim, 1.0);
  if (cfg.standardize) {
    for (const auto& p : x) {
      for (std::size_t k = 0; k < dim; ++k) mean[k] += p[k];
    }
    for (std::size_t k = 0; k < dim; ++k) mean[k] /= static_cast<double>(x.size());
    std::vector<double> var(dim, 0.0);
    for (const auto& p : x) {
      for (std::size_t k = 0; k < dim; ++k) {
        const double c = p[k] - mean[k];
        var[k] += c * c;
      }
    }
    for (std::size_t k = 0; k < dim; ++k) {
      const double s = std::sqrt(var[k] / static_cast<double>(x.size()));
      scale[k] = s > 0.0 ? s : 1.0;
    }
    for (auto& p : x) {
      for (std::size_t k = 0; k < dim; ++k) p[k] = (p[k] - mean[k]) / scale[k];
    }
  }

  result.loss_curve.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    result.loss_curve.push_back(pair_loss(result.model, x, pairs));
    const ModelGradients g = pair_gradients(result.model, x, pairs);
    auto& w1 = result.model.w1.data();
    const auto& gw1 = g.w1.data();
    for (std::size_t k = 0; k < w1.size(); ++k) w1[k] -= cfg.learning_rate * gw1[k];
    for (std::size_t h = 0; h < result.model.b1.size(); ++h) {
      result.model.b1[h] -= cfg.learning_rate * g.b1[h];
      result.model.w2[h] -= cfg.learning_rate * g.w2[h];
    }
    result.model.b2 -= cfg.learning_rate * g.b2;
  }

  if (cfg.standardize) {
    // fold x' = (x - mean) / scale into the first layer so the returned model
    // consumes raw features
    auto& m = result.model;
    for (std::size_t h = 0; h < m.w1.rows(); ++h) {
      double* row = m.w1.row(h);
      double shift = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        row[k] /= scale[k];
        row[dim + k] /= scale[k];
        shift += (row[k] + row[dim + k]) * mean[k];
      }
      m.b1[h] -= shift;
    }
  }
  return result;
}

TrainResult train(const std::vector<InstanceFeature>& batch, const IcdConfig& cfg) {
  validate(cfg);
  if (batch.size() < 2) {
    throw ComputeError("degenerate pair sets: need at least two instances");
  }
  std::vector<std::vector<double>> pooled;
  pooled.reserve(batch.size());
  for (const auto& inst : batch) pooled.push_back(max_pool(inst));
  return train_pairs(pooled, build_pair_sets(batch, cfg), cfg);
}

double pair_accuracy(const DiscriminatorModel& model,
                     const std::vector<std::vector<double>>& pooled,
                     const PairSets& pairs) {
  check_pooled(pooled);
  std::size_t correct = 0, total = 0;
  auto tally = [&](const std::vector<std::pair<std::size_t, std::size_t>>& list,
                   bool want_high) {
    for (const auto& [i, j] : list) {
      const double p = 0.5 * (pair_probability(model, pooled[i], pooled[j]) +
                              pair_probability(model, pooled[j], pooled[i]));
      if ((p > 0.5) == want_high) ++correct;
      ++total;
    }
  };
  tally(pairs.positives, true);
  tally(pairs.negatives, false);
  if (total == 0) throw ComputeError("degenerate pair sets: nothing to score");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double similarity_score(const DiscriminatorModel& model, const InstanceFeature& pred,
                        const std::vector<InstanceFeature>& labeled_same_class,
                        std::optional<std::size_t> cap, std::uint64_t seed) {
  if (labeled_same_class.empty()) {
    throw ComputeError("no labeled instances for class " +
                       std::to_string(pred.class_index));
  }
  const std::vector<double> anchor = max_pool(pred);

  std::vector<std::size_t> idx(labeled_same_class.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (cap && *cap < idx.size()) {
    Rng rng(seed);
    idx = sample_without_replacement(std::move(idx), *cap, rng);
  }

  double total = 0.0;
  for (std::size_t i : idx) {
    total += pair_probability(model, anchor, max_pool(labeled_same_class[i]));
  }
  return total / static_cast<double>(idx.size());
}

PseudoLabelSet refine(PseudoLabelSet set,
                      const std::map<std::string, std::optional<double>>& similarities,
                      const IcdConfig& cfg, RefineMode mode) {
  validate(cfg);
  auto lookup = [&](const Instance& inst) -> const std::optional<double>& {
    const auto it = similarities.find(inst.id);
    if (it == similarities.end()) {
      throw ComputeError("missing similarity for instance " + inst.id);
    }
    return it->second;
  };

  std::vector<Instance> positives, candidates;
  const bool run_eap = mode != RefineMode::mpp_only;
  const bool run_mpp = mode != RefineMode::eap_only;

  for (auto& inst : set.positives) {
    const auto& s = lookup(inst);
    RefinementLogEntry entry{inst.id, RefineAction::kept, s};
    if (!s) {
      entry.action = RefineAction::unscorable;
      positives.push_back(std::move(inst));
    } else if (run_eap && *s < cfg.tau_icd) {
      entry.action = RefineAction::eap_removed;
      set.rejected.push_back(std::move(inst));
    } else {
      positives.push_back(std::move(inst));
    }
    set.refinement_log.push_back(std::move(entry));
  }
  for (auto& inst : set.candidates) {
    const auto& s = lookup(inst);
    RefinementLogEntry entry{inst.id, RefineAction::kept, s};
    if (!s) {
      entry.action = RefineAction::unscorable;
      candidates.push_back(std::move(inst));
    } else if (run_mpp && *s > cfg.sigma_icd) {
      entry.action = RefineAction::mpp_promoted;
      positives.push_back(std::move(inst));
    } else {
      candidates.push_back(std::move(inst));
    }
    set.refinement_log.push_back(std::move(entry));
  }

  std::sort(positives.begin(), positives.end(), instance_rank_less);
  std::sort(candidates.begin(), candidates.end(), instance_rank_less);
  std::sort(set.rejected.begin(), set.rejected.end(), instance_rank_less);
  set.positives = std::move(positives);
  set.candidates = std::move(candidates);
  return set;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

void put_f32(std::ofstream& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(f));
  std::memcpy(&bits, &f, sizeof(bits));
  put_u32(out, bits);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw IoError("truncated model file: " + path);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw IoError("truncated model file: " + path);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

double get_f32(std::ifstream& in, const std::string& path) {
  const std::uint32_t bits = get_u32(in, path);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return static_cast<double>(f);
}

}  // namespace

void save_model(const DiscriminatorModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open model file for writing: " + path);
  out.write("ICD1", 4);
  put_u32(out, static_cast<std::uint32_t>(model.feature_dim()));
  put_u32(out, static_cast<std::uint32_t>(model.hidden_dim()));
  for (double v : model.w1.data()) put_f32(out, v);
  for (double v : model.b1) put_f32(out, v);
  for (double v : model.w2) put_f32(out, v);
  put_f32(out, model.b2);
  put_u64(out, model.seed);
  if (!out) throw IoError("failed writing model file: " + path);
}

DiscriminatorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "ICD1") {
    throw IoError("not a discriminator model file: " + path);
  }
  const std::uint32_t d = get_u32(in, path);
  const std::uint32_t h = get_u32(in, path);
  if (d == 0 || h == 0) throw IoError("corrupt model dimensions: " + path);

  DiscriminatorModel model;
  model.w1 = Matrix(h, 2 * static_cast<std::size_t>(d));
  for (double& v : model.w1.data()) v = get_f32(in, path);
  model.b1.resize(h);
  for (double& v : model.b1) v = get_f32(in, path);
  model.w2.resize(h);
  for (double& v : model.w2) v = get_f32(in, path);
  model.b2 = get_f32(in, path);
  model.seed = get_u64(in, path);
  char extra;
  if (in.read(&extra, 1)) throw IoError("trailing bytes in model file: " + path);
  return model;
}

}  // namespace apl

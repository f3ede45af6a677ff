#include "apl/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

namespace {

constexpr double kFeatureNoiseStd = 0.6;
constexpr double kBackgroundFeatureStd = 0.5;
constexpr double kBackgroundClsCeil = 0.03;
constexpr std::size_t kPackingRetries = 100;
constexpr std::size_t kJunkPerVideo = 4;
constexpr double kJunkTiou = 0.7;
constexpr double kJunkTnd = 0.05;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::string zero_padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

struct Placed {
  std::vector<double> starts;
  std::vector<double> lengths;
};

// lay out n non-overlapping segments with min_gap spacing inside [0, duration]
std::optional<Placed> try_pack(double duration, std::size_t n, double min_gap,
                               std::pair<double, double> length_range, Rng& rng) {
  Placed p;
  p.lengths.resize(n);
  double total = n > 1 ? min_gap * static_cast<double>(n - 1) : 0.0;
  for (double& l : p.lengths) {
    l = rng.uniform(length_range.first, length_range.second);
    total += l;
  }
  if (total > duration) return std::nullopt;

  // spread the leftover room as sorted random offsets
  std::vector<double> cuts(n);
  const double free_room = duration - total;
  for (double& c : cuts) c = rng.uniform(0.0, free_room);
  std::sort(cuts.begin(), cuts.end());

  p.starts.resize(n);
  double cursor = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p.starts[i] = cuts[i] + cursor;
    cursor += p.lengths[i] + min_gap;
  }
  return p;
}

}  // namespace

void validate(const NoiseModel& noise) {
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob(noise.class_flip_prob) || !prob(noise.ambiguous_rate) ||
      !prob(noise.missed_rate)) {
    throw ComputeError("noise probabilities must lie in [0,1]");
  }
  if (noise.ambiguous_rate + noise.missed_rate > 1.0) {
    throw ComputeError("ambiguous_rate + missed_rate must not exceed 1");
  }
  if (noise.boundary_jitter < 0.0 || noise.score_noise_std < 0.0) {
    throw ComputeError("noise magnitudes must be non-negative");
  }
}

void validate(const WorldConfig& cfg) {
  if (cfg.n_videos == 0) throw ComputeError("world needs at least one video");
  if (cfg.n_classes < 2) throw ComputeError("world needs at least two classes");
  if (cfg.feature_dim == 0) throw ComputeError("feature_dim must be positive");
  if (!(cfg.fps > 0.0)) throw ComputeError("fps must be positive");
  if (cfg.min_gap < 0.0) throw ComputeError("min_gap must be non-negative");
  if (!(cfg.video_duration.first > 0.0) ||
      cfg.video_duration.second < cfg.video_duration.first) {
    throw ComputeError("video_duration range is invalid");
  }
  if (cfg.instances_per_video.first == 0 ||
      cfg.instances_per_video.second < cfg.instances_per_video.first) {
    throw ComputeError("instances_per_video range is invalid");
  }
  if (!(cfg.instance_length.first > 0.0) ||
      cfg.instance_length.second < cfg.instance_length.first) {
    throw ComputeError("instance_length range is invalid");
  }
  if (cfg.class_prototype_separation < 0.0) {
    throw ComputeError("class_prototype_separation must be non-negative");
  }
  if (cfg.labeled_fraction < 0.0 || cfg.labeled_fraction > 1.0) {
    throw ComputeError("labeled_fraction must lie in [0,1]");
  }
}

std::vector<double> frame_times(double duration, double fps) {
  const auto n = static_cast<std::size_t>(std::floor(duration * fps));
  std::vector<double> times(n);
  for (std::size_t t = 0; t < n; ++t) {
    times[t] = (static_cast<double>(t) + 0.5) / fps;
  }
  return times;
}

World generate_world(const WorldConfig& cfg) {
  validate(cfg);
  World world;
  world.config = cfg;

  world.class_names.reserve(cfg.n_classes);
  for (std::size_t k = 0; k < cfg.n_classes; ++k) {
    world.class_names.push_back("action_" + zero_padded(k, 2));
  }

  // class prototypes: random unit directions scaled by the separation
  const auto draw_prototype = [&cfg](Rng& rng, double* row) {
    double norm2 = 0.0;
    for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
      row[d] = rng.normal();
      norm2 += row[d] * row[d];
    }
    const double scale = cfg.class_prototype_separation / std::sqrt(norm2);
    for (std::size_t d = 0; d < cfg.feature_dim; ++d) row[d] *= scale;
  };
  world.prototypes = Matrix(cfg.n_classes, cfg.feature_dim);
  {
    Rng rng = Rng::derive(cfg.seed, "prototypes");
    for (std::size_t k = 0; k < cfg.n_classes; ++k) {
      draw_prototype(rng, world.prototypes.row(k));
    }
  }

  std::vector<bool> labeled(cfg.n_videos, false);
  {
    std::vector<std::size_t> order(cfg.n_videos);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng::derive(cfg.seed, "labeled-split");
    rng.shuffle(order);
    const auto n_labeled = static_cast<std::size_t>(
        std::llround(cfg.labeled_fraction * static_cast<double>(cfg.n_videos)));
    for (std::size_t i = 0; i < n_labeled; ++i) labeled[order[i]] = true;
  }

  world.videos.resize(cfg.n_videos);
  for (std::size_t v = 0; v < cfg.n_videos; ++v) {
    SimVideo& video = world.videos[v];
    video.video_id = "video_" + zero_padded(v, 4);
    video.fps = cfg.fps;
    video.labeled = labeled[v];

    Rng rng = Rng::derive(cfg.seed, video.video_id);
    video.duration = rng.uniform(cfg.video_duration.first, cfg.video_duration.second);
    const auto n_inst = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.instances_per_video.first),
                        static_cast<std::int64_t>(cfg.instances_per_video.second)));

    std::optional<Placed> placed;
    for (std::size_t attempt = 0; attempt < kPackingRetries && !placed; ++attempt) {
      placed = try_pack(video.duration, n_inst, cfg.min_gap, cfg.instance_length, rng);
    }
    if (!placed) {
      throw ComputeError(
          "cannot pack " + std::to_string(n_inst) + " instances of length " +
          std::to_string(cfg.instance_length.first) + ".." +
          std::to_string(cfg.instance_length.second) + " with gap " +
          std::to_string(cfg.min_gap) + " into " + std::to_string(video.duration) +
          "s (video " + video.video_id + ")");
    }

    video.gt.reserve(n_inst);
    for (std::size_t i = 0; i < n_inst; ++i) {
      GtInstance inst;
      inst.segment = Segment(placed->starts[i], placed->starts[i] + placed->lengths[i]);
      inst.class_index =
          static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(cfg.n_classes)));
      video.gt.push_back(inst);
    }

    const std::vector<double> times = frame_times(video.duration, video.fps);
    video.features = Matrix(cfg.feature_dim, times.size());
    for (std::size_t t = 0; t < times.size(); ++t) {
      const GtInstance* owner = nullptr;
      for (const auto& inst : video.gt) {
        if (times[t] >= inst.segment.start && times[t] <= inst.segment.end) {
          owner = &inst;
          break;
        }
      }
      for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
        video.features(d, t) =
            owner ? world.prototypes(owner->class_index, d) +
                        rng.normal(0.0, kFeatureNoiseStd)
                  : rng.normal(0.0, kBackgroundFeatureStd);
      }
    }
  }
  return world;
}

InstanceFeature slice_instance_feature(const Matrix& features, double fps,
                                       const Segment& segment, std::size_t class_index,
                                       std::string video_id) {
  if (features.empty() || fps <= 0.0) {
    throw ComputeError("video " + video_id + " has no usable frame grid");
  }
  std::vector<double> times(features.cols());
  for (std::size_t t = 0; t < times.size(); ++t) {
    times[t] = (static_cast<double>(t) + 0.5) / fps;
  }
  std::size_t lo = times.size(), hi = 0;
  for (std::size_t t = 0; t < times.size(); ++t) {
    if (times[t] >= segment.start && times[t] <= segment.end) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  if (lo == times.size()) {
    // no frame center inside: take the nearest column
    std::size_t best = 0;
    double dist = std::abs(times[0] - segment.center());
    for (std::size_t t = 1; t < times.size(); ++t) {
      const double d = std::abs(times[t] - segment.center());
      if (d < dist) {
        dist = d;
        best = t;
      }
    }
    lo = hi = best;
  }

  InstanceFeature out;
  out.class_index = class_index;
  out.video_id = std::move(video_id);
  out.features = Matrix(features.rows(), hi - lo + 1);
  for (std::size_t d = 0; d < features.rows(); ++d) {
    for (std::size_t t = lo; t <= hi; ++t) {
      out.features(d, t - lo) = features(d, t);
    }
  }
  return out;
}

InstanceFeature slice_instance_feature(const SimVideo& video, const Segment& segment,
                                       std::size_t class_index) {
  if (video.features.cols() != frame_times(video.duration, video.fps).size()) {
    throw ComputeError("video " + video.video_id + " has no usable frame grid");
  }
  return slice_instance_feature(video.features, video.fps, segment, class_index,
                                video.video_id);
}

const char* to_string(InjectionKind kind) {
  switch (kind) {
    case InjectionKind::normal: return "normal";
    case InjectionKind::ambiguous: return "ambiguous";
    case InjectionKind::demoted: return "demoted";
    case InjectionKind::junk: return "junk";
  }
  return "unknown";
}

CorruptionResult corrupt_predictions(const World& world, const NoiseModel& noise) {
  validate(noise);
  const std::size_t k_classes = world.config.n_classes;
  const ScoringConfig scoring;

  CorruptionResult result;
  result.videos.reserve(world.videos.size());

  for (const auto& video : world.videos) {
    Rng rng = Rng::derive(noise.seed, video.video_id);
    const std::vector<double> times = frame_times(video.duration, video.fps);
    const std::size_t t_frames = times.size();

    struct Planned {
      InjectionRecord record;
      double tiou_true = 1.0;
      double tnd_true = 0.0;
    };
    std::vector<Planned> plan;

    for (std::size_t i = 0; i < video.gt.size(); ++i) {
      const GtInstance& gt = video.gt[i];
      Planned p;
      p.record.video_id = video.video_id;
      p.record.gt_index = i;

      const double type_draw = rng.uniform01();
      if (type_draw < noise.ambiguous_rate) {
        p.record.kind = InjectionKind::ambiguous;
      } else if (type_draw < noise.ambiguous_rate + noise.missed_rate) {
        p.record.kind = InjectionKind::demoted;
      } else {
        p.record.kind = InjectionKind::normal;
      }

      const double jitter_std = noise.boundary_jitter * gt.segment.length();
      double start = gt.segment.start + rng.normal(0.0, jitter_std);
      double end = gt.segment.end + rng.normal(0.0, jitter_std);
      start = std::clamp(start, 0.0, std::max(0.0, video.duration - 0.5));
      end = std::clamp(end, start + 0.5, std::max(start + 0.5, video.duration));
      p.record.segment = Segment(start, end);
      p.tiou_true = tiou(p.record.segment, gt.segment);
      p.tnd_true = tnd(p.record.segment, gt.segment);

      const bool flip = rng.uniform01() < noise.class_flip_prob;
      if (p.record.kind == InjectionKind::ambiguous ||
          (p.record.kind == InjectionKind::normal && flip)) {
        const auto shift =
            1 + rng.uniform_int(static_cast<std::uint64_t>(k_classes - 1));
        p.record.claimed_class =
            (gt.class_index + static_cast<std::size_t>(shift)) % k_classes;
      } else {
        p.record.claimed_class = gt.class_index;
      }

      // peak spreads are quoted at the default score noise of 0.25 and
      // collapse with it, so a noiseless world scores every true instance
      // identically and the dynamic threshold keeps them all
      const double spread = noise.score_noise_std / 0.25;
      switch (p.record.kind) {
        case InjectionKind::ambiguous:
          p.record.peak = clamp01(rng.normal(0.92, 0.02 * spread));
          break;
        case InjectionKind::demoted:
          p.record.peak = rng.uniform(0.28, 0.50);
          break;
        default:
          p.record.peak = clamp01(rng.normal(0.85, 0.05 * spread));
          break;
      }
      plan.push_back(std::move(p));
    }

    // spurious low-confidence fires, scaled away as score noise drops. Each
    // one hangs off the edge of a real instance with a wrong class claim, so
    // its span still covers genuine action content (the discriminator can
    // judge it) while the quality heads blindly over-report it
    const double junk_gain = std::min(1.0, noise.score_noise_std / 0.25);
    const std::size_t n_hosts = plan.size();
    for (std::size_t j = 0; j < kJunkPerVideo && n_hosts > 0; ++j) {
      const Planned& host = plan[j % n_hosts];
      // anchor to the true extent (not the jittered claim) so the overlapped
      // span really covers action content; it always includes a couple of
      // frame centers, and the overhang never bridges the packing gap to a
      // neighbouring instance
      const Segment hseg = video.gt[*host.record.gt_index].segment;
      const double inside = std::min(2.2 / video.fps, hseg.length());
      const double outside =
          rng.uniform(0.55, 0.95) * world.config.min_gap;
      const double len = inside + outside;
      const double peak = rng.uniform(0.25, 0.62) * junk_gain;
      const bool right_first = rng.uniform01() < 0.5;
      if (peak < 0.01 || !(outside > 0.0)) continue;

      Segment seg = hseg;
      bool fits = false;
      for (int side = 0; side < 2 && !fits; ++side) {
        if (side == 0 ? right_first : !right_first) {
          const double start = hseg.end - inside;
          fits = start >= 0.0 && start + len <= video.duration;
          if (fits) seg = Segment(start, start + len);
        } else {
          const double start = hseg.start - outside;
          fits = start >= 0.0 && start + len <= video.duration;
          if (fits) seg = Segment(start, start + len);
        }
      }
      if (!fits) continue;

      const std::size_t host_gt = video.gt[*host.record.gt_index].class_index;
      auto shift = 1 + rng.uniform_int(static_cast<std::uint64_t>(k_classes - 1));
      std::size_t claimed = (host_gt + static_cast<std::size_t>(shift)) % k_classes;
      if (claimed == host.record.claimed_class && k_classes > 2) {
        shift = 1 + rng.uniform_int(static_cast<std::uint64_t>(k_classes - 1));
        claimed = (host_gt + static_cast<std::size_t>(shift)) % k_classes;
      }

      Planned p;
      p.record.video_id = video.video_id;
      p.record.kind = InjectionKind::junk;
      p.record.claimed_class = claimed;
      p.record.segment = seg;
      p.record.peak = peak;
      p.tiou_true = kJunkTiou;
      p.tnd_true = kJunkTnd;
      plan.push_back(std::move(p));
    }

    // the highest peak owns each frame its segment covers
    std::vector<std::ptrdiff_t> owner(t_frames, -1);
    for (std::size_t pi = 0; pi < plan.size(); ++pi) {
      const Segment& seg = plan[pi].record.segment;
      for (std::size_t t = 0; t < t_frames; ++t) {
        if (times[t] < seg.start || times[t] > seg.end) continue;
        if (owner[t] < 0 ||
            plan[static_cast<std::size_t>(owner[t])].record.peak <
                plan[pi].record.peak) {
          owner[t] = static_cast<std::ptrdiff_t>(pi);
        }
      }
    }

    CorruptedVideo out;
    out.video_id = video.video_id;
    out.predictions.cls = Matrix(k_classes, t_frames);
    out.predictions.tiou_hat.assign(t_frames, 0.0);
    out.predictions.tnd_hat.assign(t_frames, 0.0);
    out.predictions.offsets = Matrix(2, t_frames);

    for (std::size_t k = 0; k < k_classes; ++k) {
      for (std::size_t t = 0; t < t_frames; ++t) {
        out.predictions.cls(k, t) = rng.uniform(0.0, kBackgroundClsCeil);
      }
    }

    const double loc_noise = 0.2 * noise.score_noise_std;
    const double peak_noise = 0.08 * noise.score_noise_std;
    for (std::size_t t = 0; t < t_frames; ++t) {
      if (owner[t] < 0) {
        out.predictions.tiou_hat[t] = clamp01(rng.normal(0.0, loc_noise));
        out.predictions.tnd_hat[t] =
            std::clamp(rng.normal(0.5, loc_noise), 0.0, 0.999);
        continue;
      }
      Planned& p = plan[static_cast<std::size_t>(owner[t])];
      ++p.record.owned_frames;
      out.predictions.cls(p.record.claimed_class, t) =
          clamp01(p.record.peak + rng.normal(0.0, peak_noise));
      out.predictions.tiou_hat[t] =
          clamp01(p.tiou_true + rng.normal(0.0, loc_noise));
      out.predictions.tnd_hat[t] =
          std::clamp(p.tnd_true + rng.normal(0.0, loc_noise), 0.0, 0.999);
      out.predictions.offsets(0, t) = times[t] - p.record.segment.start;
      out.predictions.offsets(1, t) = p.record.segment.end - times[t];
    }

    for (const auto& p : plan) {
      if (p.record.owned_frames == 0) continue;
      Instance inst;
      inst.segment = p.record.segment;
      inst.class_index = p.record.claimed_class;
      inst.score =
          std::max(p.tiou_true - p.tnd_true, scoring.epsilon) * p.record.peak;
      inst.video_id = video.video_id;
      out.oracle.push_back(inst);
    }
    std::sort(out.oracle.begin(), out.oracle.end(), instance_rank_less);

    for (auto& p : plan) result.ledger.push_back(std::move(p.record));
    result.videos.push_back(std::move(out));
  }
  return result;
}

}  // namespace apl

#include "apl/pipeline.hpp"

#include <atomic>
#include <mutex>
#include <thread>
#include <utility>

#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

void parallel_for_index(std::size_t n, std::size_t workers,
                        const std::function<void(std::size_t)>& fn) {
  if (n == 0) {
    return;
  }
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  const auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) {
        return;
      }
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
        next.store(n);  // drain the queue, let workers exit
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(std::min(workers, n));
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back(run);
  }
  for (std::thread& t : pool) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

SelectionRun select_videos(const std::vector<VideoPredictions>& inputs,
                           const SelectionConfig& cfg, const ScoringConfig& scoring,
                           std::size_t workers) {
  std::vector<PseudoLabelSet> sets(inputs.size());
  std::vector<std::pair<std::size_t, std::size_t>> tallies(inputs.size());

  parallel_for_index(inputs.size(), workers, [&](std::size_t i) {
    const VideoPredictions& in = inputs[i];
    if (in.fps <= 0.0) {
      throw ComputeError("video " + in.video_id + " has non-positive fps");
    }
    std::vector<double> times(in.predictions.n_frames());
    for (std::size_t t = 0; t < times.size(); ++t) {
      times[t] = (static_cast<double>(t) + 0.5) / in.fps;
    }
    DecodeResult decoded = decode_instances(in.predictions, times, in.video_id,
                                            cfg, scoring);
    tallies[i] = {decoded.instances.size(), decoded.dropped};
    sets[i] = dynamic_partition(soft_nms(std::move(decoded.instances), cfg), cfg);
  });

  SelectionRun run;
  run.summary.videos = inputs.size();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    run.summary.decoded += tallies[i].first;
    run.summary.dropped += tallies[i].second;
    run.summary.positives += sets[i].positives.size();
    run.summary.candidates += sets[i].candidates.size();
    run.summary.rejected += sets[i].rejected.size();
    run.summary.empty_videos += sets[i].no_survivors ? 1 : 0;
    if (!run.videos.emplace(inputs[i].video_id, std::move(sets[i])).second) {
      throw ComputeError("duplicate video id " + inputs[i].video_id);
    }
  }
  return run;
}

std::vector<InstanceFeature> annotated_instances(const World& world) {
  std::vector<InstanceFeature> out;
  for (const SimVideo& video : world.videos) {
    if (!video.labeled) {
      continue;
    }
    for (const GtInstance& gt : video.gt) {
      out.push_back(slice_instance_feature(video, gt.segment, gt.class_index));
    }
  }
  return out;
}

namespace {

std::map<std::string, std::size_t> class_index_of(const AnnotationFile& ann) {
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < ann.classes.size(); ++k) {
    index.emplace(ann.classes[k], k);
  }
  return index;
}

}  // namespace

std::vector<InstanceFeature> annotated_instances(
    const AnnotationFile& ann, const std::map<std::string, Matrix>& features) {
  const std::map<std::string, std::size_t> index = class_index_of(ann);
  std::vector<InstanceFeature> out;
  for (const auto& [video_id, record] : ann.videos) {
    if (record.annotations.empty()) {
      continue;
    }
    const auto feat = features.find(video_id);
    if (feat == features.end()) {
      throw ComputeError("no features for annotated video " + video_id);
    }
    for (const VideoAnnotation& a : record.annotations) {
      out.push_back(slice_instance_feature(feat->second, record.fps, a.segment,
                                           index.at(a.label), video_id));
    }
  }
  return out;
}

ReferenceBank group_by_class(std::vector<InstanceFeature> instances) {
  ReferenceBank bank;
  for (InstanceFeature& inst : instances) {
    bank[inst.class_index].push_back(std::move(inst));
  }
  return bank;
}

std::map<std::string, std::optional<double>> score_similarities(
    const DiscriminatorModel& model, const PseudoLabelSet& set,
    const Matrix& features, double fps, const ReferenceBank& refs,
    const IcdConfig& cfg) {
  std::map<std::string, std::optional<double>> out;
  const auto score_tier = [&](const std::vector<Instance>& tier) {
    for (const Instance& inst : tier) {
      const auto it = refs.find(inst.class_index);
      if (it == refs.end() || it->second.empty()) {
        out.emplace(inst.id, std::nullopt);
        continue;
      }
      const InstanceFeature feat = slice_instance_feature(
          features, fps, inst.segment, inst.class_index, inst.video_id);
      // per-instance stream so the reference subsample does not depend on
      // scoring order
      const std::uint64_t sub = splitmix64(splitmix64(cfg.seed) ^ fnv1a64(inst.id));
      out.emplace(inst.id, similarity_score(model, feat, it->second,
                                            cfg.reference_cap, sub));
    }
  };
  score_tier(set.positives);
  score_tier(set.candidates);
  return out;
}

std::vector<Instance> gt_instances(const SimVideo& video) {
  std::vector<Instance> out;
  out.reserve(video.gt.size());
  for (const GtInstance& gt : video.gt) {
    Instance inst;
    inst.segment = gt.segment;
    inst.class_index = gt.class_index;
    inst.score = 1.0;
    inst.video_id = video.video_id;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> gt_instances(const AnnotationFile& ann) {
  const std::map<std::string, std::size_t> index = class_index_of(ann);
  std::vector<Instance> out;
  for (const auto& [video_id, record] : ann.videos) {
    for (const VideoAnnotation& a : record.annotations) {
      Instance inst;
      inst.segment = a.segment;
      inst.class_index = index.at(a.label);
      inst.score = 1.0;
      inst.video_id = video_id;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

EvalReport evaluate_positives(const std::map<std::string, PseudoLabelSet>& videos,
                              const std::vector<Instance>& gts,
                              const EvalConfig& cfg) {
  std::vector<Instance> flat;
  for (const auto& [video_id, set] : videos) {
    flat.insert(flat.end(), set.positives.begin(), set.positives.end());
  }
  EvalReport report;
  report.detection = mean_ap(flat, gts, cfg);
  report.quality = pseudo_label_quality(flat, gts, cfg);
  return report;
}

}  // namespace apl

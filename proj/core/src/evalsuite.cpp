#include "apl/evalsuite.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "apl/errors.hpp"

namespace apl {

namespace {

void require_single_class(const std::vector<Instance>& preds,
                          const std::vector<Instance>& gts) {
  const Instance* first = nullptr;
  for (const auto* list : {&preds, &gts}) {
    for (const auto& inst : *list) {
      if (!first) first = &inst;
      if (inst.class_index != first->class_index) {
        throw ComputeError("average_precision expects a single class");
      }
    }
  }
}

std::vector<Instance> of_class(const std::vector<Instance>& all, std::size_t cls) {
  std::vector<Instance> out;
  for (const auto& inst : all) {
    if (inst.class_index == cls) out.push_back(inst);
  }
  return out;
}

struct BestMatch {
  double overlap = 0.0;
  long gt_index = -1;  // -1 when nothing overlaps
  std::size_t gt_class = 0;
};

// Highest-overlap reference in the same video; ties prefer the earlier start,
// then the lower index. Skips references flagged in `claimed` when given.
BestMatch best_match(const Instance& pseudo, const std::vector<Instance>& gts,
                     const std::vector<bool>* claimed) {
  BestMatch best;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (claimed && (*claimed)[g]) continue;
    if (gts[g].video_id != pseudo.video_id) continue;
    const double o = tiou(pseudo.segment, gts[g].segment);
    const bool better =
        o > best.overlap ||
        (o == best.overlap && best.gt_index >= 0 && o > 0.0 &&
         gts[g].segment.start < gts[static_cast<std::size_t>(best.gt_index)].segment.start);
    if (better && o > 0.0) {
      best.overlap = o;
      best.gt_index = static_cast<long>(g);
      best.gt_class = gts[g].class_index;
    }
  }
  return best;
}

QualityReport pooled_quality(const std::vector<Instance>& pseudo,
                             const std::vector<Instance>& gts,
                             const EvalConfig& cfg) {
  QualityReport report;
  report.n_pseudo = pseudo.size();
  report.n_gt = gts.size();
  if (pseudo.empty()) return report;

  std::vector<Instance> ranked = pseudo;
  std::sort(ranked.begin(), ranked.end(), instance_rank_less);
  std::vector<bool> claimed(gts.size(), false);

  double class_hits = 0.0, overlap_sum = 0.0, pos_hits = 0.0;
  for (const auto& p : ranked) {
    const BestMatch m = best_match(p, gts, cfg.exclusive_matching ? &claimed : nullptr);
    if (m.gt_index >= 0) {
      if (cfg.exclusive_matching) claimed[static_cast<std::size_t>(m.gt_index)] = true;
      overlap_sum += m.overlap;
      if (m.gt_class == p.class_index) {
        class_hits += 1.0;
        if (m.overlap > cfg.pos_tiou) pos_hits += 1.0;
      }
    }
  }
  const auto n = static_cast<double>(pseudo.size());
  report.class_acc = class_hits / n;
  report.avg_tiou = overlap_sum / n;
  report.pos_acc = pos_hits / n;
  return report;
}

}  // namespace

std::vector<double> fine_tiou_grid() {
  std::vector<double> grid;
  for (int k = 10; k <= 19; ++k) grid.push_back(0.05 * k);
  return grid;
}

void validate(const EvalConfig& cfg) {
  if (cfg.tiou_grid.empty()) throw ComputeError("evaluation grid is empty");
  double prev = 0.0;
  for (double t : cfg.tiou_grid) {
    if (t <= prev || t > 1.0) {
      throw ComputeError("evaluation grid must be strictly increasing in (0,1]");
    }
    prev = t;
  }
}

double average_precision(std::vector<Instance> preds,
                         const std::vector<Instance>& gts, double tiou_thresh) {
  require_single_class(preds, gts);
  if (gts.empty()) return 0.0;
  if (preds.empty()) return 0.0;

  std::sort(preds.begin(), preds.end(), instance_rank_less);
  std::vector<bool> matched(gts.size(), false);

  std::vector<bool> tp(preds.size(), false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    long best = -1;
    double best_overlap = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].video_id != preds[i].video_id) continue;
      const double o = tiou(preds[i].segment, gts[g].segment);
      if (o < tiou_thresh) continue;
      const bool better =
          o > best_overlap ||
          (o == best_overlap && best >= 0 &&
           gts[g].segment.start < gts[static_cast<std::size_t>(best)].segment.start);
      if (best < 0 || better) {
        best = static_cast<long>(g);
        best_overlap = o;
      }
    }
    if (best >= 0) {
      matched[static_cast<std::size_t>(best)] = true;
      tp[i] = true;
    }
  }

  // all-point interpolation: area under the running-max precision curve
  std::vector<double> precision(preds.size());
  std::size_t tp_cum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (tp[i]) ++tp_cum;
    precision[i] = static_cast<double>(tp_cum) / static_cast<double>(i + 1);
  }
  for (std::size_t i = preds.size() - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (tp[i]) ap += precision[i];
  }
  return ap / static_cast<double>(gts.size());
}

MeanApResult mean_ap(const std::vector<Instance>& preds,
                     const std::vector<Instance>& gts, const EvalConfig& cfg) {
  validate(cfg);
  MeanApResult result;
  result.thresholds = cfg.tiou_grid;

  std::map<std::size_t, bool> class_seen;
  for (const auto& g : gts) class_seen[g.class_index] = true;
  for (const auto& [cls, seen] : class_seen) result.classes.push_back(cls);

  result.ap.assign(result.thresholds.size(), {});
  result.per_threshold.assign(result.thresholds.size(), 0.0);
  for (std::size_t ti = 0; ti < result.thresholds.size(); ++ti) {
    double sum = 0.0;
    for (std::size_t cls : result.classes) {
      const double ap = average_precision(of_class(preds, cls),
                                          of_class(gts, cls),
                                          result.thresholds[ti]);
      result.ap[ti].push_back(ap);
      sum += ap;
    }
    result.per_threshold[ti] =
        result.classes.empty() ? 0.0 : sum / static_cast<double>(result.classes.size());
    result.avg += result.per_threshold[ti];
  }
  result.avg /= static_cast<double>(result.thresholds.size());
  return result;
}

QualityReport pseudo_label_quality(const std::vector<Instance>& pseudo,
                                   const std::vector<Instance>& gts,
                                   const EvalConfig& cfg) {
  if (!cfg.per_video) return pooled_quality(pseudo, gts, cfg);

  std::map<std::string, std::vector<Instance>> pseudo_by_video, gts_by_video;
  for (const auto& p : pseudo) pseudo_by_video[p.video_id].push_back(p);
  for (const auto& g : gts) gts_by_video[g.video_id].push_back(g);

  QualityReport total;
  total.n_pseudo = pseudo.size();
  total.n_gt = gts.size();
  std::size_t n_videos = 0;
  for (const auto& [video, labels] : pseudo_by_video) {
    const auto it = gts_by_video.find(video);
    const QualityReport r = pooled_quality(
        labels, it == gts_by_video.end() ? std::vector<Instance>{} : it->second, cfg);
    total.class_acc += r.class_acc;
    total.avg_tiou += r.avg_tiou;
    total.pos_acc += r.pos_acc;
    ++n_videos;
  }
  if (n_videos > 0) {
    total.class_acc /= static_cast<double>(n_videos);
    total.avg_tiou /= static_cast<double>(n_videos);
    total.pos_acc /= static_cast<double>(n_videos);
  }
  return total;
}

}  // namespace apl

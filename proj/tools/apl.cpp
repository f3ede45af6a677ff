// Command line front end: composes the library modules into the
// simulate -> select -> train -> refine -> eval -> report pipeline.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apl/acp.hpp"
#include "apl/config.hpp"
#include "apl/errors.hpp"
#include "apl/formats.hpp"
#include "apl/icd.hpp"
#include "apl/pipeline.hpp"
#include "apl/rng.hpp"
#include "apl/selection.hpp"
#include "apl/simharness.hpp"

namespace fs = std::filesystem;
using namespace apl;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::size_t workers = 0;  // 0 means take run.workers from the config
  bool json_out = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "run configuration file");
  cmd->add_option("--workers", opts.workers, "worker threads for per-video work");
  cmd->add_flag("--json", opts.json_out, "print the summary as JSON");
}

RunConfig load_config(const CommonOpts& opts) {
  if (opts.config_path.empty()) {
    RunConfig cfg;
    apply_seed_env(cfg);
    return cfg;
  }
  return load_run_config(opts.config_path);
}

std::size_t effective_workers(const CommonOpts& opts, const RunConfig& cfg) {
  return opts.workers > 0 ? opts.workers : cfg.run.workers;
}

std::string resolve_path(const std::string& flag_value, const std::string& cfg_value,
                         const char* what) {
  if (!flag_value.empty()) {
    return flag_value;
  }
  if (!cfg_value.empty()) {
    return cfg_value;
  }
  throw IoError(std::string("no ") + what + " given (flag or run.* config key)");
}

std::string feature_path(const std::string& dir, const std::string& video_id) {
  return (fs::path(dir) / (video_id + ".aplf")).string();
}

std::string prediction_path(const std::string& dir, const std::string& video_id) {
  return (fs::path(dir) / (video_id + ".aplp")).string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out << text;
  out.flush();
  if (!out) {
    throw IoError("failed writing " + path);
  }
}

using SummaryRows = std::vector<std::pair<std::string, std::string>>;

void print_rows(const SummaryRows& rows) {
  std::size_t width = 0;
  for (const auto& [k, v] : rows) {
    width = std::max(width, k.size());
  }
  for (const auto& [k, v] : rows) {
    std::printf("%-*s  %s\n", static_cast<int>(width), k.c_str(), v.c_str());
  }
}

std::string fmt_count(std::size_t n) { return std::to_string(n); }

std::string fmt_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// Feature matrices of every annotated video, keyed by id.
std::map<std::string, Matrix> annotated_features(const AnnotationFile& ann,
                                                 const std::string& features_dir) {
  std::map<std::string, Matrix> out;
  for (const auto& [video_id, record] : ann.videos) {
    if (!record.annotations.empty()) {
      out.emplace(video_id, read_features(feature_path(features_dir, video_id)));
    }
  }
  return out;
}

json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  json parsed = json::parse(in, nullptr, false);
  if (parsed.is_discarded()) {
    throw IoError(path + ": invalid JSON");
  }
  return parsed;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  CommonOpts common;
  std::string out_dir;
};

void cmd_simulate(const SimulateOpts& opt) {
  const RunConfig cfg = load_config(opt.common);
  const std::string out = resolve_path(opt.out_dir, cfg.run.out, "output directory");
  const std::size_t workers = effective_workers(opt.common, cfg);

  const World world = generate_world(cfg.world);
  const CorruptionResult corrupted = corrupt_predictions(world, cfg.noise);

  fs::create_directories(fs::path(out) / "features");
  fs::create_directories(fs::path(out) / "predictions");

  // the training view hides annotations of unlabeled videos; the ground
  // truth file keeps everything for evaluation
  AnnotationFile visible, truth;
  visible.classes = world.class_names;
  truth.classes = world.class_names;
  std::size_t labeled = 0, gt_total = 0;
  for (const SimVideo& video : world.videos) {
    VideoRecord record;
    record.duration = video.duration;
    record.fps = video.fps;
    for (const GtInstance& gt : video.gt) {
      record.annotations.push_back({gt.segment, world.class_names[gt.class_index]});
    }
    gt_total += video.gt.size();
    truth.videos.emplace(video.video_id, record);
    if (video.labeled) {
      ++labeled;
    } else {
      record.annotations.clear();
    }
    visible.videos.emplace(video.video_id, std::move(record));
  }
  write_annotations(visible, (fs::path(out) / "annotations.json").string());
  write_annotations(truth, (fs::path(out) / "ground_truth.json").string());

  const std::string fdir = (fs::path(out) / "features").string();
  const std::string pdir = (fs::path(out) / "predictions").string();
  parallel_for_index(world.videos.size(), workers, [&](std::size_t i) {
    const SimVideo& video = world.videos[i];
    write_features(video.features, feature_path(fdir, video.video_id));
    write_predictions(corrupted.videos[i].predictions,
                      prediction_path(pdir, video.video_id));
  });

  std::array<std::size_t, 4> kinds{};
  JsonWriter w;
  w.begin_object().key("injections").begin_array();
  for (const InjectionRecord& r : corrupted.ledger) {
    ++kinds[static_cast<std::size_t>(r.kind)];
    w.begin_object();
    w.key("video").value(r.video_id);
    w.key("gt_index");
    if (r.gt_index) {
      w.value(static_cast<std::uint64_t>(*r.gt_index));
    } else {
      w.null();
    }
    w.key("kind").value(to_string(r.kind));
    w.key("claimed_class").value(static_cast<std::uint64_t>(r.claimed_class));
    w.key("segment").begin_array().value(r.segment.start).value(r.segment.end)
        .end_array();
    w.key("peak").value(r.peak);
    w.key("owned_frames").value(static_cast<std::uint64_t>(r.owned_frames));
    w.end_object();
  }
  w.end_array().end_object();
  write_text_file((fs::path(out) / "ledger.json").string(), w.str() + "\n");

  if (opt.common.json_out) {
    JsonWriter s;
    s.begin_object();
    s.key("videos").value(static_cast<std::uint64_t>(world.videos.size()));
    s.key("labeled").value(static_cast<std::uint64_t>(labeled));
    s.key("classes").value(static_cast<std::uint64_t>(world.class_names.size()));
    s.key("gt_instances").value(static_cast<std::uint64_t>(gt_total));
    s.key("injections").begin_object();
    s.key("normal").value(static_cast<std::uint64_t>(kinds[0]));
    s.key("ambiguous").value(static_cast<std::uint64_t>(kinds[1]));
    s.key("demoted").value(static_cast<std::uint64_t>(kinds[2]));
    s.key("junk").value(static_cast<std::uint64_t>(kinds[3]));
    s.end_object();
    s.key("out").value(out);
    s.end_object();
    std::printf("%s\n", s.str().c_str());
    return;
  }
  print_rows({{"videos", fmt_count(world.videos.size())},
              {"labeled", fmt_count(labeled)},
              {"classes", fmt_count(world.class_names.size())},
              {"gt instances", fmt_count(gt_total)},
              {"normal injections", fmt_count(kinds[0])},
              {"ambiguous injections", fmt_count(kinds[1])},
              {"demoted injections", fmt_count(kinds[2])},
              {"junk injections", fmt_count(kinds[3])},
              {"out", out}});
}

// ------------------------------------------------------------------ select

struct SelectOpts {
  CommonOpts common;
  std::string annotations, predictions_dir, out;
};

void cmd_select(const SelectOpts& opt) {
  const RunConfig cfg = load_config(opt.common);
  const AnnotationFile ann = read_annotations(
      resolve_path(opt.annotations, cfg.run.annotations, "annotations file"));
  const std::string pdir = resolve_path(opt.predictions_dir,
                                        cfg.run.predictions_dir,
                                        "predictions directory");
  const std::string out = resolve_path(opt.out, cfg.run.out, "output path");
  const std::size_t workers = effective_workers(opt.common, cfg);

  std::vector<std::pair<std::string, double>> vids;  // id, fps
  for (const auto& [video_id, record] : ann.videos) {
    vids.emplace_back(video_id, record.fps);
  }
  std::vector<VideoPredictions> inputs(vids.size());
  parallel_for_index(vids.size(), workers, [&](std::size_t i) {
    inputs[i].video_id = vids[i].first;
    inputs[i].fps = vids[i].second;
    inputs[i].predictions = read_predictions(prediction_path(pdir, vids[i].first));
    if (inputs[i].predictions.n_classes() != ann.classes.size()) {
      throw IoError("video " + vids[i].first + ": predictions carry " +
                    std::to_string(inputs[i].predictions.n_classes()) +
                    " classes, annotations " + std::to_string(ann.classes.size()));
    }
  });

  SelectionRun run = select_videos(inputs, cfg.selection, cfg.scoring, workers);

  PseudoLabelFile file;
  file.classes = ann.classes;
  file.videos = std::move(run.videos);
  write_pseudo_labels(file, out);

  const SelectionSummary& s = run.summary;
  if (opt.common.json_out) {
    JsonWriter w;
    w.begin_object();
    w.key("videos").value(static_cast<std::uint64_t>(s.videos));
    w.key("decoded").value(static_cast<std::uint64_t>(s.decoded));
    w.key("dropped").value(static_cast<std::uint64_t>(s.dropped));
    w.key("positives").value(static_cast<std::uint64_t>(s.positives));
    w.key("candidates").value(static_cast<std::uint64_t>(s.candidates));
    w.key("rejected").value(static_cast<std::uint64_t>(s.rejected));
    w.key("empty_videos").value(static_cast<std::uint64_t>(s.empty_videos));
    w.key("out").value(out);
    w.end_object();
    std::printf("%s\n", w.str().c_str());
    return;
  }
  print_rows({{"videos", fmt_count(s.videos)},
              {"decoded", fmt_count(s.decoded)},
              {"dropped decodes", fmt_count(s.dropped)},
              {"positives", fmt_count(s.positives)},
              {"candidates", fmt_count(s.candidates)},
              {"rejected", fmt_count(s.rejected)},
              {"no-survivor videos", fmt_count(s.empty_videos)},
              {"out", out}});
}

// --------------------------------------------------------------- icd-train

struct IcdTrainOpts {
  CommonOpts common;
  std::string annotations, features_dir, out;
};

void cmd_icd_train(const IcdTrainOpts& opt) {
  const RunConfig cfg = load_config(opt.common);
  const AnnotationFile ann = read_annotations(
      resolve_path(opt.annotations, cfg.run.annotations, "annotations file"));
  const std::string fdir = resolve_path(opt.features_dir, cfg.run.features_dir,
                                        "features directory");
  const std::string out = resolve_path(opt.out, cfg.run.out, "model output path");

  const std::vector<InstanceFeature> refs =
      annotated_instances(ann, annotated_features(ann, fdir));
  const TrainResult result = train(refs, cfg.icd);
  save_model(result.model, out);

  std::vector<std::vector<double>> pooled;
  pooled.reserve(refs.size());
  for (const InstanceFeature& r : refs) {
    pooled.push_back(max_pool(r));
  }
  const PairSets pairs = build_pair_sets(refs, cfg.icd);
  const double accuracy = pair_accuracy(result.model, pooled, pairs);
  const double first_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.front();
  const double last_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();

  if (opt.common.json_out) {
    JsonWriter w;
    w.begin_object();
    w.key("references").value(static_cast<std::uint64_t>(refs.size()));
    w.key("positive_pairs").value(static_cast<std::uint64_t>(pairs.positives.size()));
    w.key("negative_pairs").value(static_cast<std::uint64_t>(pairs.negatives.size()));
    w.key("epochs").value(static_cast<std::uint64_t>(result.loss_curve.size()));
    w.key("initial_loss").value(first_loss);
    w.key("final_loss").value(last_loss);
    w.key("train_pair_accuracy").value(accuracy);
    w.key("out").value(out);
    w.end_object();
    std::printf("%s\n", w.str().c_str());
    return;
  }
  print_rows({{"references", fmt_count(refs.size())},
              {"positive pairs", fmt_count(pairs.positives.size())},
              {"negative pairs", fmt_count(pairs.negatives.size())},
              {"epochs", fmt_count(result.loss_curve.size())},
              {"initial loss", fmt_real(first_loss)},
              {"final loss", fmt_real(last_loss)},
              {"train pair accuracy", fmt_real(accuracy)},
              {"out", out}});
}

// ------------------------------------------------------------------ refine

struct RefineOpts {
  CommonOpts common;
  std::string pseudo, model, features_dir, annotations, out;
  bool eap_only = false;
  bool mpp_only = false;
};

void cmd_refine(const RefineOpts& opt) {
  const RunConfig cfg = load_config(opt.common);
  const PseudoLabelFile pseudo = read_pseudo_labels(
      resolve_path(opt.pseudo, cfg.run.pseudo, "pseudo label file"));
  const DiscriminatorModel model =
      load_model(resolve_path(opt.model, cfg.run.model, "model file"));
  const AnnotationFile ann = read_annotations(
      resolve_path(opt.annotations, cfg.run.annotations, "annotations file"));
  const std::string fdir = resolve_path(opt.features_dir, cfg.run.features_dir,
                                        "features directory");
  const std::string out = resolve_path(opt.out, cfg.run.out, "output path");
  const std::size_t workers = effective_workers(opt.common, cfg);
  if (pseudo.classes != ann.classes) {
    throw IoError("class lists differ between pseudo labels and annotations");
  }
  const RefineMode mode = opt.eap_only   ? RefineMode::eap_only
                          : opt.mpp_only ? RefineMode::mpp_only
                                         : RefineMode::eap_and_mpp;

  const ReferenceBank bank =
      group_by_class(annotated_instances(ann, annotated_features(ann, fdir)));

  std::vector<std::string> ids;
  for (const auto& [video_id, set] : pseudo.videos) {
    ids.push_back(video_id);
  }
  std::vector<PseudoLabelSet> refined(ids.size());
  std::vector<std::array<std::size_t, 4>> tallies(ids.size());
  parallel_for_index(ids.size(), workers, [&](std::size_t i) {
    const std::string& video_id = ids[i];
    const auto record = ann.videos.find(video_id);
    if (record == ann.videos.end()) {
      throw IoError("video " + video_id + " has pseudo labels but no annotation entry");
    }
    const PseudoLabelSet& set = pseudo.videos.at(video_id);
    const Matrix features = read_features(feature_path(fdir, video_id));
    const auto sims = score_similarities(model, set, features, record->second.fps,
                                         bank, cfg.icd);
    const std::size_t old_log = set.refinement_log.size();
    refined[i] = refine(set, sims, cfg.icd, mode);
    tallies[i] = {};
    for (std::size_t e = old_log; e < refined[i].refinement_log.size(); ++e) {
      ++tallies[i][static_cast<std::size_t>(refined[i].refinement_log[e].action)];
    }
  });

  PseudoLabelFile result;
  result.classes = pseudo.classes;
  std::array<std::size_t, 4> actions{};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t a = 0; a < 4; ++a) {
      actions[a] += tallies[i][a];
    }
    result.videos.emplace(ids[i], std::move(refined[i]));
  }
  write_pseudo_labels(result, out);

  const std::size_t scored = actions[0] + actions[1] + actions[2];
  if (opt.common.json_out) {
    JsonWriter w;
    w.begin_object();
    w.key("videos").value(static_cast<std::uint64_t>(ids.size()));
    w.key("scored").value(static_cast<std::uint64_t>(scored));
    w.key("kept").value(static_cast<std::uint64_t>(actions[0]));
    w.key("eap_removed").value(static_cast<std::uint64_t>(actions[1]));
    w.key("mpp_promoted").value(static_cast<std::uint64_t>(actions[2]));
    w.key("unscorable").value(static_cast<std::uint64_t>(actions[3]));
    w.key("out").value(out);
    w.end_object();
    std::printf("%s\n", w.str().c_str());
    return;
  }
  print_rows({{"videos", fmt_count(ids.size())},
              {"scored", fmt_count(scored)},
              {"kept", fmt_count(actions[0])},
              {"eap removed", fmt_count(actions[1])},
              {"mpp promoted", fmt_count(actions[2])},
              {"unscorable", fmt_count(actions[3])},
              {"out", out}});
}

// -------------------------------------------------------------- acp labels

struct AcpLabelsOpts {
  CommonOpts common;
  std::string annotations, features_dir, out;
};

// One sampled frame set per video, in video id order.
struct SampledFrames {
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> indices;
  std::vector<std::vector<std::vector<double>>> frames;
};

SampledFrames sample_all_frames(const AnnotationFile& ann, const std::string& fdir,
                                const AcpConfig& cfg) {
  SampledFrames out;
  for (const auto& [video_id, record] : ann.videos) {
    const Matrix features = read_features(feature_path(fdir, video_id));
    const std::uint64_t seed = splitmix64(splitmix64(cfg.seed) ^ fnv1a64(video_id));
    std::vector<std::size_t> idx =
        sample_frames(features.cols(), cfg.partitions_n, seed);
    std::vector<std::vector<double>> frames;
    frames.reserve(idx.size());
    for (const std::size_t t : idx) {
      std::vector<double> col(features.rows());
      for (std::size_t d = 0; d < features.rows(); ++d) {
        col[d] = features(d, t);
      }
      frames.push_back(std::move(col));
    }
    out.ids.push_back(video_id);
    out.indices.push_back(std::move(idx));
    out.frames.push_back(std::move(frames));
  }
  return out;
}

void cmd_acp_labels(const AcpLabelsOpts& opt) {
  const RunConfig cfg = load_config(opt.common);
  const AnnotationFile ann = read_annotations(
      resolve_path(opt.annotations, cfg.run.annotations, "annotations file"));
  const std::string fdir = resolve_path(opt.features_dir, cfg.run.features_dir,
                                        "features directory");
  const std::string out = resolve_path(opt.out, cfg.run.out, "output path");

  const SampledFrames sampled = sample_all_frames(ann, fdir, cfg.acp);

  std::vector<std::vector<int>> coarse(sampled.ids.size());
  std::vector<std::vector<double>> all_frames;
  for (std::size_t v = 0; v < sampled.ids.size(); ++v) {
    AcpConfig per_video = cfg.acp;
    per_video.seed = splitmix64(splitmix64(cfg.acp.seed) ^
                                fnv1a64("kmeans/" + sampled.ids[v]));
    coarse[v] = kmeans_labels(sampled.frames[v], cfg.acp.coarse_clusters, per_video);
    all_frames.insert(all_frames.end(), sampled.frames[v].begin(),
                      sampled.frames[v].end());
  }
  const std::vector<int> fine =
      kmeans_labels(all_frames, cfg.acp.fine_clusters_b, cfg.acp);

  JsonWriter w;
  w.begin_object();
  w.key("partitions").value(static_cast<std::uint64_t>(cfg.acp.partitions_n));
  w.key("videos").begin_object();
  for (std::size_t v = 0; v < sampled.ids.size(); ++v) {
    w.key(sampled.ids[v]).begin_object();
    w.key("frames").begin_array();
    for (const std::size_t t : sampled.indices[v]) {
      w.value(static_cast<std::uint64_t>(t));
    }
    w.end_array();
    w.key("coarse").begin_array();
    for (const int label : coarse[v]) {
      w.value(static_cast<std::int64_t>(label));
    }
    w.end_array();
    w.end_object();
  }
  w.end_object();
  w.key("fine").begin_array();
  for (const int label : fine) {
    w.value(static_cast<std::int64_t>(label));
  }
  w.end_array();
  w.end_object();
  write_text_file(out, w.str() + "\n");

  if (opt.common.json_out) {
    JsonWriter s;
    s.begin_object();
    s.key("videos").value(static_cast<std::uint64_t>(sampled.ids.size()));
    s.key("frames_per_video").value(static_cast<std::uint64_t>(cfg.acp.partitions_n));
    s.key("total_frames").value(static_cast<std::uint64_t>(all_frames.size()));
    s.key("coarse_clusters").value(static_cast<std::uint64_t>(cfg.acp.coarse_clusters));
    s.key("fine_clusters").value(static_cast<std::uint64_t>(cfg.acp.fine_clusters_b));
    s.key("out").value(out);
    s.end_object();
    std::printf("%s\n", s.str().c_str());
    return;
  }
  print_rows({{"videos", fmt_count(sampled.ids.size())},
              {"frames per video", fmt_count(cfg.acp.partitions_n)},
              {"total frames", fmt_count(all_frames.size())},
              {"coarse clusters", fmt_count(cfg.acp.coarse_clusters)},
              {"fine clusters", fmt_count(cfg.acp.fine_clusters_b)},
              {"out", out}});
}

// ---------------------------------------------------------------- acp loss

struct AcpLossOpts {
  CommonOpts common;
  std::string annotations, features_dir, labels, out;
};

void cmd_acp_loss(const AcpLossOpts& opt) {
  const RunConfig cfg = load_config(opt.common);
  const AnnotationFile ann = read_annotations(
      resolve_path(opt.annotations, cfg.run.annotations, "annotations file"));
  const std::string fdir = resolve_path(opt.features_dir, cfg.run.features_dir,
                                        "features directory");
  const std::string out = resolve_path(opt.out, cfg.run.out, "output path");

  const SampledFrames sampled = sample_all_frames(ann, fdir, cfg.acp);

  std::optional<std::vector<std::vector<int>>> coarse;
  std::optional<std::vector<int>> fine;
  if (!opt.labels.empty()) {
    const json doc = parse_json_file(opt.labels);
    try {
      std::vector<std::vector<int>> coarse_labels(sampled.ids.size());
      const json& videos = doc.at("videos");
      if (videos.size() != sampled.ids.size()) {
        throw IoError(opt.labels + ": label file covers " +
                      std::to_string(videos.size()) + " videos, annotations " +
                      std::to_string(sampled.ids.size()));
      }
      for (std::size_t v = 0; v < sampled.ids.size(); ++v) {
        const json& entry = videos.at(sampled.ids[v]);
        const auto stored = entry.at("frames").get<std::vector<std::size_t>>();
        if (stored != sampled.indices[v]) {
          throw IoError(opt.labels + ": frame sample for " + sampled.ids[v] +
                        " does not match this config/seed");
        }
        coarse_labels[v] = entry.at("coarse").get<std::vector<int>>();
      }
      coarse = std::move(coarse_labels);
      fine = doc.at("fine").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw IoError(opt.labels + ": " + e.what());
    }
  }

  const AcpLossReport report = acp_losses(sampled.frames, cfg.acp, coarse, fine);

  JsonWriter w;
  w.begin_object();
  w.key("l_conc").value(report.l_conc);
  w.key("l_conf").value(report.l_conf);
  w.key("l_acp").value(report.l_acp);
  w.key("kmeans_invocations")
      .value(static_cast<std::uint64_t>(report.kmeans_invocations));
  w.end_object();
  write_text_file(out, w.str() + "\n");

  if (opt.common.json_out) {
    std::printf("%s\n", w.str().c_str());
    return;
  }
  print_rows({{"within-video loss", fmt_real(report.l_conc)},
              {"cross-video loss", fmt_real(report.l_conf)},
              {"combined loss", fmt_real(report.l_acp)},
              {"kmeans invocations", fmt_count(report.kmeans_invocations)},
              {"out", out}});
}

// -------------------------------------------------------------------- eval

struct EvalOpts {
  CommonOpts common;
  std::string pseudo, annotations, out, csv;
};

void cmd_eval(const EvalOpts& opt) {
  const RunConfig cfg = load_config(opt.common);
  const PseudoLabelFile pseudo = read_pseudo_labels(
      resolve_path(opt.pseudo, cfg.run.pseudo, "pseudo label file"));
  const AnnotationFile truth = read_annotations(
      resolve_path(opt.annotations, cfg.run.annotations, "annotations file"));
  const std::string out = resolve_path(opt.out, cfg.run.out, "output path");
  if (pseudo.classes != truth.classes) {
    throw IoError("class lists differ between pseudo labels and annotations");
  }

  const EvalReport report =
      evaluate_positives(pseudo.videos, gt_instances(truth), cfg.eval);
  write_eval_json(report.detection, report.quality, out);
  if (!opt.csv.empty()) {
    write_ap_csv(report.detection, truth.classes, opt.csv);
  }

  if (opt.common.json_out) {
    JsonWriter w;
    w.begin_object();
    w.key("map").begin_object();
    for (std::size_t t = 0; t < report.detection.thresholds.size(); ++t) {
      w.key(JsonWriter::format_real(report.detection.thresholds[t]))
          .value(report.detection.per_threshold[t]);
    }
    w.end_object();
    w.key("avg").value(report.detection.avg);
    w.key("class_acc").value(report.quality.class_acc);
    w.key("avg_tiou").value(report.quality.avg_tiou);
    w.key("pos_acc").value(report.quality.pos_acc);
    w.key("n_pseudo").value(static_cast<std::uint64_t>(report.quality.n_pseudo));
    w.key("n_gt").value(static_cast<std::uint64_t>(report.quality.n_gt));
    w.key("out").value(out);
    w.end_object();
    std::printf("%s\n", w.str().c_str());
    return;
  }
  SummaryRows rows;
  for (std::size_t t = 0; t < report.detection.thresholds.size(); ++t) {
    rows.emplace_back("mAP@" + JsonWriter::format_real(report.detection.thresholds[t]),
                      fmt_real(report.detection.per_threshold[t]));
  }
  rows.emplace_back("average mAP", fmt_real(report.detection.avg));
  rows.emplace_back("class accuracy", fmt_real(report.quality.class_acc));
  rows.emplace_back("average tiou", fmt_real(report.quality.avg_tiou));
  rows.emplace_back("positive accuracy", fmt_real(report.quality.pos_acc));
  rows.emplace_back("pseudo labels", fmt_count(report.quality.n_pseudo));
  rows.emplace_back("gt instances", fmt_count(report.quality.n_gt));
  rows.emplace_back("out", out);
  print_rows(rows);
}

// ------------------------------------------------------------------ report

struct ReportOpts {
  CommonOpts common;
  std::string out;
  std::vector<std::string> runs;  // name=path, or a bare path
};

void cmd_report(const ReportOpts& opt) {
  struct Row {
    std::string name;
    double avg = 0.0;
    std::map<std::string, double> per_threshold;
    double class_acc = 0.0, avg_tiou = 0.0, pos_acc = 0.0;
    std::uint64_t n_pseudo = 0, n_gt = 0;
  };
  if (opt.runs.empty()) {
    throw IoError("no eval files given");
  }

  std::vector<Row> rows;
  for (const std::string& spec : opt.runs) {
    const auto eq = spec.find('=');
    Row row;
    std::string path;
    if (eq == std::string::npos) {
      path = spec;
      row.name = fs::path(spec).stem().string();
    } else {
      row.name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    }
    const json doc = parse_json_file(path);
    try {
      row.avg = doc.at("avg").get<double>();
      for (const auto& [threshold, value] : doc.at("map").items()) {
        row.per_threshold.emplace(threshold, value.get<double>());
      }
      const json& quality = doc.at("quality");
      row.class_acc = quality.at("class_acc").get<double>();
      row.avg_tiou = quality.at("avg_tiou").get<double>();
      row.pos_acc = quality.at("pos_acc").get<double>();
      row.n_pseudo = quality.at("n_pseudo").get<std::uint64_t>();
      row.n_gt = quality.at("n_gt").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
    rows.push_back(std::move(row));
  }

  if (!opt.out.empty()) {
    std::string csv = "run,avg_map,class_acc,avg_tiou,pos_acc,n_pseudo,n_gt\n";
    for (const Row& r : rows) {
      csv += r.name + "," + JsonWriter::format_real(r.avg) + "," +
             JsonWriter::format_real(r.class_acc) + "," +
             JsonWriter::format_real(r.avg_tiou) + "," +
             JsonWriter::format_real(r.pos_acc) + "," + std::to_string(r.n_pseudo) +
             "," + std::to_string(r.n_gt) + "\n";
    }
    write_text_file(opt.out, csv);
  }

  if (opt.common.json_out) {
    JsonWriter w;
    w.begin_object().key("runs").begin_array();
    for (const Row& r : rows) {
      w.begin_object();
      w.key("name").value(r.name);
      w.key("avg_map").value(r.avg);
      w.key("map").begin_object();
      for (const auto& [threshold, value] : r.per_threshold) {
        w.key(threshold).value(value);
      }
      w.end_object();
      w.key("class_acc").value(r.class_acc);
      w.key("avg_tiou").value(r.avg_tiou);
      w.key("pos_acc").value(r.pos_acc);
      w.key("n_pseudo").value(r.n_pseudo);
      w.key("n_gt").value(r.n_gt);
      w.end_object();
    }
    w.end_array().end_object();
    std::printf("%s\n", w.str().c_str());
    return;
  }

  std::size_t name_width = 3;
  for (const Row& r : rows) {
    name_width = std::max(name_width, r.name.size());
  }
  std::printf("%-*s  %9s  %9s  %9s  %9s  %8s\n", static_cast<int>(name_width),
              "run", "avg_map", "pos_acc", "class_acc", "avg_tiou", "n_pseudo");
  for (const Row& r : rows) {
    std::printf("%-*s  %9.6f  %9.6f  %9.6f  %9.6f  %8llu\n",
                static_cast<int>(name_width), r.name.c_str(), r.avg, r.pos_acc,
                r.class_acc, r.avg_tiou,
                static_cast<unsigned long long>(r.n_pseudo));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo label engineering toolkit for temporal action localization"};
  app.require_subcommand(1);

  SimulateOpts simulate_opts;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "generate the synthetic benchmark corpus");
  add_common(simulate, simulate_opts.common);
  simulate->add_option("--out", simulate_opts.out_dir, "output directory");
  simulate->callback([&] { cmd_simulate(simulate_opts); });

  SelectOpts select_opts;
  CLI::App* select = app.add_subcommand(
      "select", "decode, suppress and tier-split predictions into pseudo labels");
  add_common(select, select_opts.common);
  select->add_option("--annotations", select_opts.annotations, "annotation file");
  select->add_option("--predictions", select_opts.predictions_dir,
                     "per-video prediction directory");
  select->add_option("--out", select_opts.out, "pseudo label output file");
  select->callback([&] { cmd_select(select_opts); });

  IcdTrainOpts icd_opts;
  CLI::App* icd_train = app.add_subcommand(
      "icd-train", "train the pairwise consistency discriminator on labeled videos");
  add_common(icd_train, icd_opts.common);
  icd_train->add_option("--annotations", icd_opts.annotations, "annotation file");
  icd_train->add_option("--features", icd_opts.features_dir,
                        "per-video feature directory");
  icd_train->add_option("--out", icd_opts.out, "model output file");
  icd_train->callback([&] { cmd_icd_train(icd_opts); });

  RefineOpts refine_opts;
  CLI::App* refine = app.add_subcommand(
      "refine", "rescore pseudo labels with the discriminator and move tiers");
  add_common(refine, refine_opts.common);
  refine->add_option("--pseudo", refine_opts.pseudo, "pseudo label file");
  refine->add_option("--model", refine_opts.model, "discriminator model file");
  refine->add_option("--features", refine_opts.features_dir,
                     "per-video feature directory");
  refine->add_option("--annotations", refine_opts.annotations, "annotation file");
  refine->add_option("--out", refine_opts.out, "refined output file");
  CLI::Option* eap = refine->add_flag("--eap-only", refine_opts.eap_only,
                                      "only remove low-similarity positives");
  refine->add_flag("--mpp-only", refine_opts.mpp_only,
                   "only promote high-similarity candidates")
      ->excludes(eap);
  refine->callback([&] { cmd_refine(refine_opts); });

  AcpLabelsOpts acp_labels_opts;
  CLI::App* acp_labels = app.add_subcommand(
      "acp-labels", "cluster sampled frames into contrastive pseudo classes");
  add_common(acp_labels, acp_labels_opts.common);
  acp_labels->add_option("--annotations", acp_labels_opts.annotations,
                         "annotation file");
  acp_labels->add_option("--features", acp_labels_opts.features_dir,
                         "per-video feature directory");
  acp_labels->add_option("--out", acp_labels_opts.out, "label output file");
  acp_labels->callback([&] { cmd_acp_labels(acp_labels_opts); });

  AcpLossOpts acp_loss_opts;
  CLI::App* acp_loss = app.add_subcommand(
      "acp-loss", "contrastive losses over sampled frames");
  add_common(acp_loss, acp_loss_opts.common);
  acp_loss->add_option("--annotations", acp_loss_opts.annotations, "annotation file");
  acp_loss->add_option("--features", acp_loss_opts.features_dir,
                       "per-video feature directory");
  acp_loss->add_option("--labels", acp_loss_opts.labels,
                       "cluster label file (skips clustering)");
  acp_loss->add_option("--out", acp_loss_opts.out, "loss output file");
  acp_loss->callback([&] { cmd_acp_loss(acp_loss_opts); });

  EvalOpts eval_opts;
  CLI::App* eval = app.add_subcommand(
      "eval", "score positive pseudo labels against ground truth");
  add_common(eval, eval_opts.common);
  eval->add_option("--pseudo", eval_opts.pseudo, "pseudo label file");
  eval->add_option("--annotations", eval_opts.annotations, "ground truth file");
  eval->add_option("--out", eval_opts.out, "evaluation JSON output");
  eval->add_option("--csv", eval_opts.csv, "per-class AP table output");
  eval->callback([&] { cmd_eval(eval_opts); });

  ReportOpts report_opts;
  CLI::App* report = app.add_subcommand(
      "report", "aggregate evaluation files into one table");
  add_common(report, report_opts.common);
  report->add_option("--out", report_opts.out, "CSV output file");
  report->add_option("runs", report_opts.runs,
                     "eval JSON files, each optionally prefixed name=");
  report->callback([&] { cmd_report(report_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ComputeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

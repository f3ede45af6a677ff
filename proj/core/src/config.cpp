#include "apl/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "apl/errors.hpp"

namespace apl {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Setter {
  std::function<void(RunConfig&, const std::string&)> apply;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw IoError("invalid value '" + value + "' for " + key);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  if (value.empty() || value[0] == '-') bad_value(key, value);
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value);
}

std::vector<double> parse_real_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_real(key, trim(item)));
  }
  if (out.empty()) bad_value(key, value);
  return out;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      // world
      {"world.n_videos",
       {[](RunConfig& c, const std::string& v) {
         c.world.n_videos = parse_uint("world.n_videos", v);
       }}},
      {"world.n_classes",
       {[](RunConfig& c, const std::string& v) {
         c.world.n_classes = parse_uint("world.n_classes", v);
       }}},
      {"world.duration_min",
       {[](RunConfig& c, const std::string& v) {
         c.world.video_duration.first = parse_real("world.duration_min", v);
       }}},
      {"world.duration_max",
       {[](RunConfig& c, const std::string& v) {
         c.world.video_duration.second = parse_real("world.duration_max", v);
       }}},
      {"world.instances_min",
       {[](RunConfig& c, const std::string& v) {
         c.world.instances_per_video.first = parse_uint("world.instances_min", v);
       }}},
      {"world.instances_max",
       {[](RunConfig& c, const std::string& v) {
         c.world.instances_per_video.second = parse_uint("world.instances_max", v);
       }}},
      {"world.length_min",
       {[](RunConfig& c, const std::string& v) {
         c.world.instance_length.first = parse_real("world.length_min", v);
       }}},
      {"world.length_max",
       {[](RunConfig& c, const std::string& v) {
         c.world.instance_length.second = parse_real("world.length_max", v);
       }}},
      {"world.min_gap",
       {[](RunConfig& c, const std::string& v) {
         c.world.min_gap = parse_real("world.min_gap", v);
       }}},
      {"world.fps",
       {[](RunConfig& c, const std::string& v) {
         c.world.fps = parse_real("world.fps", v);
       }}},
      {"world.feature_dim",
       {[](RunConfig& c, const std::string& v) {
         c.world.feature_dim = parse_uint("world.feature_dim", v);
       }}},
      {"world.separation",
       {[](RunConfig& c, const std::string& v) {
         c.world.class_prototype_separation = parse_real("world.separation", v);
       }}},
      {"world.labeled_fraction",
       {[](RunConfig& c, const std::string& v) {
         c.world.labeled_fraction = parse_real("world.labeled_fraction", v);
       }}},
      {"world.seed",
       {[](RunConfig& c, const std::string& v) {
         c.world.seed = parse_uint("world.seed", v);
       }}},
      // noise
      {"noise.boundary_jitter",
       {[](RunConfig& c, const std::string& v) {
         c.noise.boundary_jitter = parse_real("noise.boundary_jitter", v);
       }}},
      {"noise.class_flip_prob",
       {[](RunConfig& c, const std::string& v) {
         c.noise.class_flip_prob = parse_real("noise.class_flip_prob", v);
       }}},
      {"noise.score_noise_std",
       {[](RunConfig& c, const std::string& v) {
         c.noise.score_noise_std = parse_real("noise.score_noise_std", v);
       }}},
      {"noise.ambiguous_rate",
       {[](RunConfig& c, const std::string& v) {
         c.noise.ambiguous_rate = parse_real("noise.ambiguous_rate", v);
       }}},
      {"noise.missed_rate",
       {[](RunConfig& c, const std::string& v) {
         c.noise.missed_rate = parse_real("noise.missed_rate", v);
       }}},
      {"noise.seed",
       {[](RunConfig& c, const std::string& v) {
         c.noise.seed = parse_uint("noise.seed", v);
       }}},
      // scoring
      {"scoring.epsilon",
       {[](RunConfig& c, const std::string& v) {
         c.scoring.epsilon = parse_real("scoring.epsilon", v);
       }}},
      {"scoring.focal_gamma",
       {[](RunConfig& c, const std::string& v) {
         c.scoring.focal_gamma = parse_real("scoring.focal_gamma", v);
       }}},
      // selection
      {"selection.tau_neg",
       {[](RunConfig& c, const std::string& v) {
         c.selection.tau_neg = parse_real("selection.tau_neg", v);
       }}},
      {"selection.nms_sigma",
       {[](RunConfig& c, const std::string& v) {
         c.selection.nms_sigma = parse_real("selection.nms_sigma", v);
       }}},
      {"selection.nms_floor",
       {[](RunConfig& c, const std::string& v) {
         c.selection.nms_floor = parse_real("selection.nms_floor", v);
       }}},
      {"selection.pre_nms_topk",
       {[](RunConfig& c, const std::string& v) {
         c.selection.pre_nms_topk = parse_uint("selection.pre_nms_topk", v);
       }}},
      {"selection.tau_pos_multiplier",
       {[](RunConfig& c, const std::string& v) {
         c.selection.tau_pos_multiplier = parse_real("selection.tau_pos_multiplier", v);
       }}},
      {"selection.fixed_tau_pos",
       {[](RunConfig& c, const std::string& v) {
         if (v == "none") {
           c.selection.fixed_tau_pos.reset();
         } else {
           c.selection.fixed_tau_pos = parse_real("selection.fixed_tau_pos", v);
         }
       }}},
      {"selection.multi_class_decode",
       {[](RunConfig& c, const std::string& v) {
         c.selection.multi_class_decode = parse_bool("selection.multi_class_decode", v);
       }}},
      // icd
      {"icd.pairs_per_anchor",
       {[](RunConfig& c, const std::string& v) {
         c.icd.pairs_per_anchor = parse_uint("icd.pairs_per_anchor", v);
       }}},
      {"icd.epochs",
       {[](RunConfig& c, const std::string& v) {
         c.icd.epochs = parse_uint("icd.epochs", v);
       }}},
      {"icd.learning_rate",
       {[](RunConfig& c, const std::string& v) {
         c.icd.learning_rate = parse_real("icd.learning_rate", v);
       }}},
      {"icd.tau_icd",
       {[](RunConfig& c, const std::string& v) {
         c.icd.tau_icd = parse_real("icd.tau_icd", v);
       }}},
      {"icd.sigma_icd",
       {[](RunConfig& c, const std::string& v) {
         c.icd.sigma_icd = parse_real("icd.sigma_icd", v);
       }}},
      {"icd.hidden_dim",
       {[](RunConfig& c, const std::string& v) {
         c.icd.hidden_dim = parse_uint("icd.hidden_dim", v);
       }}},
      {"icd.standardize",
       {[](RunConfig& c, const std::string& v) {
         c.icd.standardize = parse_bool("icd.standardize", v);
       }}},
      {"icd.reference_cap",
       {[](RunConfig& c, const std::string& v) {
         if (v == "none") {
           c.icd.reference_cap.reset();
         } else {
           c.icd.reference_cap = parse_uint("icd.reference_cap", v);
         }
       }}},
      {"icd.seed",
       {[](RunConfig& c, const std::string& v) {
         c.icd.seed = parse_uint("icd.seed", v);
       }}},
      // acp
      {"acp.partitions_n",
       {[](RunConfig& c, const std::string& v) {
         c.acp.partitions_n = parse_uint("acp.partitions_n", v);
       }}},
      {"acp.coarse_clusters",
       {[](RunConfig& c, const std::string& v) {
         c.acp.coarse_clusters = parse_uint("acp.coarse_clusters", v);
       }}},
      {"acp.fine_clusters_b",
       {[](RunConfig& c, const std::string& v) {
         c.acp.fine_clusters_b = parse_uint("acp.fine_clusters_b", v);
       }}},
      {"acp.temperature",
       {[](RunConfig& c, const std::string& v) {
         c.acp.temperature = parse_real("acp.temperature", v);
       }}},
      {"acp.kmeans_restarts",
       {[](RunConfig& c, const std::string& v) {
         c.acp.kmeans_restarts = parse_uint("acp.kmeans_restarts", v);
       }}},
      {"acp.kmeans_max_iters",
       {[](RunConfig& c, const std::string& v) {
         c.acp.kmeans_max_iters = parse_uint("acp.kmeans_max_iters", v);
       }}},
      {"acp.seed",
       {[](RunConfig& c, const std::string& v) {
         c.acp.seed = parse_uint("acp.seed", v);
       }}},
      // eval
      {"eval.tiou_grid",
       {[](RunConfig& c, const std::string& v) {
         c.eval.tiou_grid = parse_real_list("eval.tiou_grid", v);
       }}},
      {"eval.pos_tiou",
       {[](RunConfig& c, const std::string& v) {
         c.eval.pos_tiou = parse_real("eval.pos_tiou", v);
       }}},
      {"eval.exclusive_matching",
       {[](RunConfig& c, const std::string& v) {
         c.eval.exclusive_matching = parse_bool("eval.exclusive_matching", v);
       }}},
      {"eval.per_video",
       {[](RunConfig& c, const std::string& v) {
         c.eval.per_video = parse_bool("eval.per_video", v);
       }}},
      // run
      {"run.annotations",
       {[](RunConfig& c, const std::string& v) { c.run.annotations = v; }}},
      {"run.features_dir",
       {[](RunConfig& c, const std::string& v) { c.run.features_dir = v; }}},
      {"run.predictions_dir",
       {[](RunConfig& c, const std::string& v) { c.run.predictions_dir = v; }}},
      {"run.pseudo", {[](RunConfig& c, const std::string& v) { c.run.pseudo = v; }}},
      {"run.model", {[](RunConfig& c, const std::string& v) { c.run.model = v; }}},
      {"run.out", {[](RunConfig& c, const std::string& v) { c.run.out = v; }}},
      {"run.workers",
       {[](RunConfig& c, const std::string& v) {
         c.run.workers = parse_uint("run.workers", v);
         if (c.run.workers == 0) bad_value("run.workers", v);
       }}},
  };
  return table;
}

void check_path(const std::string& config_path, const std::string& key,
                const std::string& value, bool want_directory) {
  if (value.empty()) return;
  namespace fs = std::filesystem;
  if (!fs::exists(value)) {
    throw IoError(config_path + ": " + key + " path does not exist: " + value);
  }
  if (want_directory && !fs::is_directory(value)) {
    throw IoError(config_path + ": " + key + " must be a directory: " + value);
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);

  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;

    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw IoError(path + ":" + std::to_string(line_no) +
                    ": expected 'section.key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.find('.') == std::string::npos) {
      throw IoError(path + ":" + std::to_string(line_no) +
                    ": key '" + key + "' has no section");
    }

    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw IoError(path + ":" + std::to_string(line_no) + ": unknown key '" + key +
                    "'");
    }
    try {
      it->second.apply(config, value);
    } catch (const IoError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }

  check_path(path, "run.annotations", config.run.annotations, false);
  check_path(path, "run.features_dir", config.run.features_dir, true);
  check_path(path, "run.predictions_dir", config.run.predictions_dir, true);
  check_path(path, "run.pseudo", config.run.pseudo, false);
  check_path(path, "run.model", config.run.model, false);

  apply_seed_env(config);
  return config;
}

void apply_seed_env(RunConfig& config) {
  if (const char* env_seed = std::getenv("APL_SEED")) {
    const std::uint64_t seed = parse_uint("APL_SEED", env_seed);
    config.world.seed = seed;
    config.noise.seed = seed;
    config.icd.seed = seed;
    config.acp.seed = seed;
  }
}

}  // namespace apl

// Exercises the installed command line tool as a subprocess: exit codes,
// file artifacts, determinism and the documented pipeline examples.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "apl/formats.hpp"
#include "apl/pipeline.hpp"

using namespace apl;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

std::string cli() { return APL_CLI_PATH; }

int run_cli(const std::string& args, const std::string& capture = "/dev/null") {
  const std::string cmd = cli() + " " + args + " >" + capture + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out << text;
}

std::string fresh_dir(const std::string& name) {
  fs::remove_all(name);
  fs::create_directories(name);
  return name;
}

const char* kZeroNoise =
    "world.n_videos = 10\n"
    "world.n_classes = 4\n"
    "world.feature_dim = 8\n"
    "world.seed = 3\n"
    "noise.boundary_jitter = 0\n"
    "noise.class_flip_prob = 0\n"
    "noise.score_noise_std = 0\n"
    "noise.ambiguous_rate = 0\n"
    "noise.missed_rate = 0\n";

std::set<std::string> tier_ids(const std::vector<Instance>& tier) {
  std::set<std::string> ids;
  for (const Instance& inst : tier) ids.insert(inst.id);
  return ids;
}

}  // namespace

TEST_CASE("cli: a noiseless corpus turns into exactly the ground truth") {
  const std::string dir = fresh_dir("cli_zero");
  spit(dir + "/run.conf", kZeroNoise);

  REQUIRE(run_cli("simulate --config " + dir + "/run.conf --out " + dir +
                  "/corpus") == 0);
  REQUIRE(run_cli("select --config " + dir + "/run.conf --annotations " + dir +
                  "/corpus/annotations.json --predictions " + dir +
                  "/corpus/predictions --out " + dir + "/pseudo.json") == 0);

  const AnnotationFile truth = read_annotations(dir + "/corpus/ground_truth.json");
  const PseudoLabelFile pseudo = read_pseudo_labels(dir + "/pseudo.json");
  std::size_t n_gt = 0;
  for (const auto& [id, rec] : truth.videos) n_gt += rec.annotations.size();
  std::size_t n_pos = 0;
  for (const auto& [id, set] : pseudo.videos) n_pos += set.positives.size();
  CHECK(n_gt > 0);
  CHECK(n_pos == n_gt);

  REQUIRE(run_cli("eval --pseudo " + dir + "/pseudo.json --annotations " + dir +
                  "/corpus/ground_truth.json --out " + dir + "/eval.json") == 0);
  const nlohmann::json eval = nlohmann::json::parse(slurp(dir + "/eval.json"));
  CHECK(eval.at("avg").get<double>() == Approx(1.0).epsilon(1e-9));
  CHECK(eval.at("quality").at("pos_acc").get<double>() == Approx(1.0).epsilon(1e-9));
  CHECK(eval.at("quality").at("avg_tiou").get<double>() == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cli: selection reproduces the dynamic threshold fixture") {
  const std::string dir = fresh_dir("cli_fixture");

  AnnotationFile ann;
  ann.classes = {"a"};
  VideoRecord rec;
  rec.duration = 40.0;
  rec.fps = 1.0;
  ann.videos.emplace("v", std::move(rec));
  write_annotations(ann, dir + "/ann.json");

  // four isolated single-frame spikes scoring 0.9 / 0.7 / 0.5 / 0.1
  FramePredictions preds;
  preds.cls = Matrix(1, 40);
  preds.tiou_hat.assign(40, 0.0);
  preds.tnd_hat.assign(40, 0.999);
  preds.offsets = Matrix(2, 40);
  const std::size_t frames[4] = {2, 12, 22, 32};
  const double peaks[4] = {0.9, 0.7, 0.5, 0.1};
  for (int i = 0; i < 4; ++i) {
    preds.cls(0, frames[i]) = 1.0;
    preds.tiou_hat[frames[i]] = peaks[i];
    preds.tnd_hat[frames[i]] = 0.0;
    preds.offsets(0, frames[i]) = 1.0;
    preds.offsets(1, frames[i]) = 1.0;
  }
  fs::create_directories(dir + "/preds");
  write_predictions(preds, dir + "/preds/v.aplp");

  REQUIRE(run_cli("select --annotations " + dir + "/ann.json --predictions " + dir +
                  "/preds --out " + dir + "/pseudo.json") == 0);

  const PseudoLabelFile pseudo = read_pseudo_labels(dir + "/pseudo.json");
  const PseudoLabelSet& set = pseudo.videos.at("v");
  CHECK(set.tau_pos == Approx(0.863299).epsilon(1e-6));
  CHECK(set.tau_neg == 0.15);
  REQUIRE(set.positives.size() == 1);
  CHECK(set.positives[0].score == Approx(0.9).epsilon(1e-6));
  CHECK(set.candidates.size() == 2);
  CHECK(set.rejected.size() == 1);
}

TEST_CASE("cli: exit codes distinguish usage, data and computation failures") {
  const std::string dir = fresh_dir("cli_exit");

  SUBCASE("missing input file exits 2 and names the path") {
    const int code = run_cli("select --annotations " + dir +
                                 "/does_not_exist.json --predictions " + dir +
                                 " --out " + dir + "/x.json",
                             dir + "/err.txt");
    CHECK(code == 2);
    CHECK(slurp(dir + "/err.txt").find("does_not_exist.json") != std::string::npos);
  }

  SUBCASE("unknown flags exit 2, help exits 0") {
    CHECK(run_cli("select --definitely-not-a-flag") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("refine --help") == 0);
  }

  SUBCASE("an impossible world exits 1") {
    spit(dir + "/bad.conf",
         "world.n_videos = 1\nworld.duration_min = 10\nworld.duration_max = 10\n"
         "world.instances_min = 3\nworld.instances_max = 3\n"
         "world.length_min = 9\nworld.length_max = 9\n");
    CHECK(run_cli("simulate --config " + dir + "/bad.conf --out " + dir + "/w") == 1);
  }

  SUBCASE("config mistakes exit 2 with a line reference") {
    spit(dir + "/typo.conf", "selection.tau_nge = 0.2\n");
    const int code = run_cli("simulate --config " + dir + "/typo.conf --out " + dir +
                                 "/w2",
                             dir + "/err2.txt");
    CHECK(code == 2);
    const std::string message = slurp(dir + "/err2.txt");
    CHECK(message.find("typo.conf:1") != std::string::npos);
    CHECK(message.find("unknown key") != std::string::npos);
  }
}

TEST_CASE("cli: refinement flags compose and membership stabilizes") {
  const std::string dir = fresh_dir("cli_refine");
  spit(dir + "/run.conf",
       "world.n_videos = 14\n"
       "world.n_classes = 3\n"
       "world.feature_dim = 8\n"
       "world.labeled_fraction = 0.3\n"
       "world.seed = 11\n"
       "noise.ambiguous_rate = 0.25\n"
       "noise.missed_rate = 0.25\n"
       "noise.seed = 11\n"
       "icd.epochs = 60\n"
       "icd.hidden_dim = 16\n"
       "icd.seed = 11\n");

  const std::string corpus = dir + "/corpus";
  REQUIRE(run_cli("simulate --config " + dir + "/run.conf --out " + corpus) == 0);
  REQUIRE(run_cli("select --config " + dir + "/run.conf --annotations " + corpus +
                  "/annotations.json --predictions " + corpus +
                  "/predictions --out " + dir + "/raw.json") == 0);
  REQUIRE(run_cli("icd-train --config " + dir + "/run.conf --annotations " + corpus +
                  "/annotations.json --features " + corpus + "/features --out " +
                  dir + "/model.icd") == 0);

  const std::string refine_args = "refine --config " + dir + "/run.conf --pseudo " +
                                  dir + "/raw.json --model " + dir +
                                  "/model.icd --features " + corpus +
                                  "/features --annotations " + corpus +
                                  "/annotations.json --out " + dir;
  REQUIRE(run_cli(refine_args + "/both.json") == 0);
  REQUIRE(run_cli(refine_args + "/eap.json --eap-only") == 0);
  REQUIRE(run_cli(refine_args + "/mpp.json --mpp-only") == 0);
  CHECK(run_cli(refine_args + "/x.json --eap-only --mpp-only") == 2);

  const PseudoLabelFile raw = read_pseudo_labels(dir + "/raw.json");
  const PseudoLabelFile both = read_pseudo_labels(dir + "/both.json");
  const PseudoLabelFile eap = read_pseudo_labels(dir + "/eap.json");
  const PseudoLabelFile mpp = read_pseudo_labels(dir + "/mpp.json");

  std::size_t moved = 0;
  for (const auto& [video_id, raw_set] : raw.videos) {
    const auto raw_pos = tier_ids(raw_set.positives);
    const auto eap_pos = tier_ids(eap.videos.at(video_id).positives);
    const auto mpp_pos = tier_ids(mpp.videos.at(video_id).positives);
    const auto both_pos = tier_ids(both.videos.at(video_id).positives);

    // one-sided modes only shrink or only grow the positive tier
    CHECK(std::includes(raw_pos.begin(), raw_pos.end(), eap_pos.begin(),
                        eap_pos.end()));
    CHECK(std::includes(mpp_pos.begin(), mpp_pos.end(), raw_pos.begin(),
                        raw_pos.end()));

    // the combined mode applies both edits at once
    std::set<std::string> expect = eap_pos;
    for (const std::string& id : mpp_pos) {
      if (!raw_pos.count(id)) expect.insert(id);
    }
    CHECK(both_pos == expect);
    moved += (raw_pos.size() - eap_pos.size()) + (mpp_pos.size() - raw_pos.size());
  }
  CHECK(moved > 0);  // the noise must exercise both directions

  // refining the refined set changes nothing
  REQUIRE(run_cli("refine --config " + dir + "/run.conf --pseudo " + dir +
                  "/both.json --model " + dir + "/model.icd --features " + corpus +
                  "/features --annotations " + corpus + "/annotations.json --out " +
                  dir + "/again.json") == 0);
  const PseudoLabelFile again = read_pseudo_labels(dir + "/again.json");
  for (const auto& [video_id, set] : both.videos) {
    CHECK(tier_ids(set.positives) == tier_ids(again.videos.at(video_id).positives));
    CHECK(tier_ids(set.candidates) ==
          tier_ids(again.videos.at(video_id).candidates));
    CHECK(tier_ids(set.rejected) == tier_ids(again.videos.at(video_id).rejected));
  }
}

TEST_CASE("cli: outputs are byte stable across reruns and worker counts") {
  const std::string dir = fresh_dir("cli_stable");
  spit(dir + "/run.conf",
       "world.n_videos = 8\nworld.n_classes = 3\nworld.feature_dim = 6\n"
       "world.seed = 21\nnoise.seed = 21\n");

  REQUIRE(run_cli("simulate --config " + dir + "/run.conf --out " + dir + "/a") == 0);
  REQUIRE(run_cli("simulate --config " + dir + "/run.conf --out " + dir +
                  "/b --workers 4") == 0);
  CHECK(slurp(dir + "/a/ledger.json") == slurp(dir + "/b/ledger.json"));
  CHECK(slurp(dir + "/a/annotations.json") == slurp(dir + "/b/annotations.json"));
  CHECK(slurp(dir + "/a/features/video_0000.aplf") ==
        slurp(dir + "/b/features/video_0000.aplf"));

  for (const char* workers : {"1", "3"}) {
    REQUIRE(run_cli("select --config " + dir + "/run.conf --annotations " + dir +
                    "/a/annotations.json --predictions " + dir +
                    "/a/predictions --out " + dir + "/pseudo_" + workers +
                    ".json --workers " + workers) == 0);
  }
  CHECK(slurp(dir + "/pseudo_1.json") == slurp(dir + "/pseudo_3.json"));
}

TEST_CASE("cli: the seed environment variable rules every stage") {
  const std::string dir = fresh_dir("cli_envseed");
  spit(dir + "/run.conf",
       "world.n_videos = 6\nworld.n_classes = 3\nworld.feature_dim = 6\n"
       "world.seed = 1\nnoise.seed = 2\n");

  REQUIRE(std::system((std::string("APL_SEED=99 ") + cli() +
                       " simulate --config " + dir + "/run.conf --out " + dir +
                       "/x >/dev/null 2>&1")
                          .c_str()) == 0);
  spit(dir + "/run2.conf",
       "world.n_videos = 6\nworld.n_classes = 3\nworld.feature_dim = 6\n"
       "world.seed = 99\nnoise.seed = 99\n");
  REQUIRE(run_cli("simulate --config " + dir + "/run2.conf --out " + dir + "/y") ==
          0);
  CHECK(slurp(dir + "/x/ledger.json") == slurp(dir + "/y/ledger.json"));
  CHECK(slurp(dir + "/x/ground_truth.json") == slurp(dir + "/y/ground_truth.json"));
}

TEST_CASE("cli: report table aggregates eval files in argument order") {
  const std::string dir = fresh_dir("cli_report");
  spit(dir + "/e1.json",
       "{\n  \"map\": {\n    \"0.500000\": 0.500000\n  },\n  \"avg\": 0.500000,\n"
       "  \"quality\": {\n    \"class_acc\": 0.800000,\n    \"avg_tiou\": 0.700000,\n"
       "    \"pos_acc\": 0.600000,\n    \"n_pseudo\": 10,\n    \"n_gt\": 12\n  }\n}\n");
  spit(dir + "/e2.json",
       "{\n  \"map\": {\n    \"0.500000\": 0.900000\n  },\n  \"avg\": 0.900000,\n"
       "  \"quality\": {\n    \"class_acc\": 0.950000,\n    \"avg_tiou\": 0.850000,\n"
       "    \"pos_acc\": 0.900000,\n    \"n_pseudo\": 14,\n    \"n_gt\": 12\n  }\n}\n");

  REQUIRE(run_cli("report --out " + dir + "/table.csv baseline=" + dir +
                  "/e1.json refined=" + dir + "/e2.json") == 0);
  CHECK(slurp(dir + "/table.csv") ==
        "run,avg_map,class_acc,avg_tiou,pos_acc,n_pseudo,n_gt\n"
        "baseline,0.500000,0.800000,0.700000,0.600000,10,12\n"
        "refined,0.900000,0.950000,0.850000,0.900000,14,12\n");

  // bare paths fall back to the file stem as the run name
  REQUIRE(run_cli("report --out " + dir + "/table2.csv " + dir + "/e1.json") == 0);
  CHECK(slurp(dir + "/table2.csv").find("e1,0.500000") != std::string::npos);

  CHECK(run_cli("report --out " + dir + "/t3.csv missing=" + dir + "/nope.json") ==
        2);
}

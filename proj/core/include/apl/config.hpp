#pragma once

#include <cstddef>
#include <string>

#include "apl/acp.hpp"
#include "apl/evalsuite.hpp"
#include "apl/icd.hpp"
#include "apl/quality.hpp"
#include "apl/selection.hpp"
#include "apl/simharness.hpp"

namespace apl {

// File locations and execution knobs for a run.
struct RunPaths {
  std::string annotations;
  std::string features_dir;
  std::string predictions_dir;
  std::string pseudo;
  std::string model;
  std::string out;
  std::size_t workers = 1;
};

// Every module configuration plus run paths, loaded from one
// `section.key = value` text file.
struct RunConfig {
  WorldConfig world;
  NoiseModel noise;
  ScoringConfig scoring;
  SelectionConfig selection;
  IcdConfig icd;
  AcpConfig acp;
  EvalConfig eval;
  RunPaths run;
};

// Parses and validates a run configuration. Unknown keys and malformed
// values fail with the offending line number; path-valued run.* keys must
// point at existing files or directories (run.out is created later and is
// exempt). If the APL_SEED environment variable is set, it overrides every
// module seed.
RunConfig load_run_config(const std::string& path);

// The APL_SEED override on its own, for configs built without a file.
void apply_seed_env(RunConfig& config);

}  // namespace apl

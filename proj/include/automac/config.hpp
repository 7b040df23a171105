#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>
#include <string>

#include "automac/encoder.hpp"
#include "automac/motion_sim.hpp"
#include "automac/training.hpp"
#include "automac/types.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Run configuration: one JSON document drives every subcommand
// ---------------------------------------------------------------------------

struct DataSection {
  std::string manifest;  // default: <simulator.out_dir>/manifest.csv
  double train_ratio = 0.481;
  double val_ratio = 0.090;
  double test_ratio = 0.429;
};

struct SimulatorSection {
  int source_count = 24;
  int source_size = 224;
  std::array<std::int64_t, kNumGrades> per_grade_counts = {300, 300, 300};
  GradeThresholds thresholds;
  double max_rotation_deg = 5.0;
  double max_shift_px = 8.0;
  int n_motion_states = 3;
  std::string image_format = "amac";
  std::string out_dir;  // default: <output_root>/dataset
};

struct EvaluationSection {
  double perplexity = 30.0;
  int iterations = 500;
  bool figures = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output_root = "runs/automac";
  DataSection data;
  SimulatorSection simulator;
  EncoderConfig encoder;
  double loss_temperature = 0.07;
  TrainConfig training;
  EvaluationSection evaluation;
};

// Unknown keys are rejected at every nesting level.
RunConfig run_config_from_json(const nlohmann::json& j);

// Echoes every field, defaulted or not, so reports carry the effective
// configuration.
nlohmann::json run_config_to_json(const RunConfig& config);

RunConfig load_run_config(const std::string& path);

// Resolves every path to an absolute one, fills the derived defaults (dataset
// directory, manifest, checkpoint root), stamps the top-level seed and loss
// temperature into the training section, and validates the result. Must run
// before any command does real work.
void finalize_run_config(RunConfig& config);

}  // namespace automac

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "automac/config.hpp"
#include "automac/evaluation.hpp"
#include "automac/types.hpp"

namespace automac {

// The paper's three comparison arms.
bool is_valid_arm(const std::string& arm);

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

// Synthesizes clean sources, corrupts them per the simulator section and
// writes images + manifest under simulator.out_dir. Returns the manifest path.
std::string cmd_simulate(const RunConfig& config);

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOutcome {
  std::string arm;
  std::string encoder_checkpoint;
  std::string head_checkpoint;
  std::string templates_file;
  std::string summary_file;
  nlohmann::json summary;
};

// proposed = supcon stage-1 then frozen-encoder stage-2; simclr = the same
// with the label-free loss; supervised = end-to-end cross-entropy. Every arm
// also writes the grade templates of its encoder.
TrainOutcome cmd_train(const RunConfig& config, const std::string& arm);

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreRow {
  std::string id;
  MotionGrade predicted = MotionGrade::NoMotion;
  std::optional<MotionGrade> truth;
  std::array<double, kNumGrades> scores = {0.0, 0.0, 0.0};
};

struct ScoreOutput {
  std::vector<ScoreRow> rows;
  std::string csv_file;
  std::string embeddings_file;
};

// Scores one split ("train", "val", "test" or "all") with a trained arm's
// artifacts. Writes a CSV (id, predicted, truth, three scores at 4 decimals)
// plus an embedding sidecar for the evaluation step. Deterministic: the same
// config and seed produce byte-identical files.
ScoreOutput cmd_score(const RunConfig& config, const std::string& arm, const std::string& split);

std::vector<ScoreRow> load_score_rows(const std::string& csv_path);

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOutcome {
  EvalReport report;
  std::string report_json_file;
  std::string report_text_file;
  std::vector<std::string> figure_files;
};

// Builds the EvalReport (confusion, metrics, MoGrAS distributions, silhouette)
// from in-memory score rows. `embeddings` may be empty, which skips the
// separability value.
EvalReport evaluate_rows(const RunConfig& config, const std::string& arm,
                         const std::string& split, const std::vector<ScoreRow>& rows,
                         const std::vector<Embedding>& embeddings);

// File-level wrapper: reads the CSV + sidecar written by cmd_score for the
// same arm/split and writes report.json, report.txt and the figures.
EvaluateOutcome cmd_evaluate(const RunConfig& config, const std::string& arm,
                             const std::string& split);

}  // namespace automac

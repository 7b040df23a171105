#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "automac/types.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Confusion + scalar metrics
// ---------------------------------------------------------------------------

// Rows are truth grades, columns predicted grades.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumGrades>, kNumGrades> counts{};

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int truth) const;
  std::int64_t col_sum(int pred) const;
};

ConfusionMatrix confusion(const std::vector<MotionGrade>& preds,
                          const std::vector<MotionGrade>& truths);

// Zero-denominator cells are explicitly undefined, never NaN.
struct Metrics {
  double accuracy = 0.0;
  std::array<std::optional<double>, kNumGrades> precision;
  std::array<std::optional<double>, kNumGrades> recall;
};

Metrics metrics(const ConfusionMatrix& cm);

// Renders "0.840 / 0.951 / 0.940" for the headline accuracy / NoMotion
// precision / SevereMotion recall row.
std::string format_metrics_row(double accuracy, std::optional<double> precision_no_motion,
                               std::optional<double> recall_severe);

// ---------------------------------------------------------------------------
// MoGrAS distribution summaries
// ---------------------------------------------------------------------------

struct DistributionCell {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

// cell[truth][score_type]: distribution of score_type across samples whose
// truth grade is `truth`. Quartiles use linear interpolation on the sorted
// sample. Every truth grade must be represented.
using MograsDistribution = std::array<std::array<DistributionCell, kNumGrades>, kNumGrades>;

MograsDistribution mogras_distribution(const std::vector<MoGrASTriple>& triples,
                                        const std::vector<MotionGrade>& truths);

// ---------------------------------------------------------------------------
// Embedding-space separability
// ---------------------------------------------------------------------------

// Stochastic-neighbor projection to 2-D (exact gradients, no tree
// approximations; fine for a few thousand points). Deterministic in the seed.
struct ProjectionConfig {
  double perplexity = 30.0;
  int iterations = 500;
  std::uint64_t seed = 0;
};

std::vector<std::array<double, 2>> project_2d(const std::vector<Embedding>& embeddings,
                                              const ProjectionConfig& config);

// Mean silhouette coefficient under cosine distance. Needs at least two
// classes with at least two members each.
double silhouette(const std::vector<Embedding>& embeddings,
                  const std::vector<MotionGrade>& labels);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct EvalReport {
  ConfusionMatrix confusion;
  Metrics metrics;
  std::optional<MograsDistribution> mogras;
  std::optional<double> silhouette;
  nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();
};

// Stable key order; suitable for byte-comparison across reruns.
nlohmann::ordered_json report_to_json(const EvalReport& report);
std::string render_report_text(const EvalReport& report);

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

void render_confusion_png(const std::string& path, const ConfusionMatrix& cm);
void render_scatter_png(const std::string& path,
                        const std::vector<std::array<double, 2>>& points,
                        const std::vector<MotionGrade>& labels);
void render_distribution_png(const std::string& path, const MograsDistribution& dist);

}  // namespace automac

#include "automac/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "automac/errors.hpp"
#include "automac/rng.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Confusion + scalar metrics
// ---------------------------------------------------------------------------

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t n = 0;
  for (int i = 0; i < kNumGrades; ++i) n += counts[i][i];
  return n;
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
  std::int64_t n = 0;
  for (auto v : counts[truth]) n += v;
  return n;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
  std::int64_t n = 0;
  for (const auto& row : counts) n += row[pred];
  return n;
}

ConfusionMatrix confusion(const std::vector<MotionGrade>& preds,
                          const std::vector<MotionGrade>& truths) {
  if (preds.size() != truths.size()) {
    throw ValidationError("confusion: predictions and truths differ in length");
  }
  if (preds.empty()) throw ValidationError("confusion: empty inputs");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    cm.counts[static_cast<int>(truths[i])][static_cast<int>(preds[i])]++;
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw ValidationError("metrics: empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (int c = 0; c < kNumGrades; ++c) {
    const std::int64_t col = cm.col_sum(c);
    const std::int64_t row = cm.row_sum(c);
    if (col > 0) m.precision[c] = static_cast<double>(cm.counts[c][c]) / static_cast<double>(col);
    if (row > 0) m.recall[c] = static_cast<double>(cm.counts[c][c]) / static_cast<double>(row);
  }
  return m;
}

namespace {

std::string format3(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.3f", *v);
  return buf;
}

}  // namespace

std::string format_metrics_row(double accuracy, std::optional<double> precision_no_motion,
                               std::optional<double> recall_severe) {
  return format3(accuracy) + " / " + format3(precision_no_motion) + " / " + format3(recall_severe);
}

// ---------------------------------------------------------------------------
// MoGrAS distribution summaries
// ---------------------------------------------------------------------------

namespace {

// linear-interpolation quantile on sorted data
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

MograsDistribution mogras_distribution(const std::vector<MoGrASTriple>& triples,
                                       const std::vector<MotionGrade>& truths) {
  if (triples.size() != truths.size()) {
    throw ValidationError("mogras_distribution: triples and truths differ in length");
  }
  std::array<std::array<std::vector<double>, kNumGrades>, kNumGrades> pools;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const int t = static_cast<int>(truths[i]);
    for (int s = 0; s < kNumGrades; ++s) pools[t][s].push_back(triples[i].scores[s]);
  }
  MograsDistribution out;
  for (int t = 0; t < kNumGrades; ++t) {
    if (pools[t][0].empty()) {
      throw DataError("mogras_distribution: no samples with truth grade '" +
                      grade_name(static_cast<MotionGrade>(t)) + "'");
    }
    for (int s = 0; s < kNumGrades; ++s) {
      auto& pool = pools[t][s];
      std::sort(pool.begin(), pool.end());
      out[t][s].q1 = quantile_sorted(pool, 0.25);
      out[t][s].median = quantile_sorted(pool, 0.5);
      out[t][s].q3 = quantile_sorted(pool, 0.75);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D projection (exact t-SNE)
// ---------------------------------------------------------------------------

namespace {

std::vector<double> pairwise_sq_dists(const std::vector<Embedding>& embeddings) {
  const std::size_t n = embeddings.size();
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      const auto& a = embeddings[i].values;
      const auto& b = embeddings[j].values;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = static_cast<double>(a[k]) - b[k];
        acc += diff * diff;
      }
      d2[i * n + j] = acc;
      d2[j * n + i] = acc;
    }
  }
  return d2;
}

// Per-point precision search so each conditional distribution hits the target
// perplexity, then symmetrize.
std::vector<double> joint_affinities(const std::vector<double>& d2, std::size_t n,
                                     double perplexity) {
  const double target_entropy = std::log(perplexity);
  std::vector<double> p(n * n, 0.0);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 64; ++iter) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = (j == i) ? 0.0 : std::exp(-d2[i * n + j] * beta);
        sum += row[j];
      }
      if (sum <= 0.0) {
        beta = (beta_lo + beta) * 0.5;
        continue;
      }
      double entropy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (row[j] > 0.0) {
          const double pj = row[j] / sum;
          entropy -= pj * std::log(pj);
        }
      }
      if (std::abs(entropy - target_entropy) < 1e-5) break;
      if (entropy > target_entropy) {
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : (beta + beta_hi) * 0.5;
      } else {
        beta_hi = beta;
        beta = (beta + beta_lo) * 0.5;
      }
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = (j == i) ? 0.0 : std::exp(-d2[i * n + j] * beta);
      sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = sum > 0.0 ? row[j] / sum : 0.0;
  }

  std::vector<double> joint(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      joint[i * n + j] = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * static_cast<double>(n)),
                                  1e-12);
    }
  }
  return joint;
}

}  // namespace

std::vector<std::array<double, 2>> project_2d(const std::vector<Embedding>& embeddings,
                                              const ProjectionConfig& config) {
  const std::size_t n = embeddings.size();
  if (n < 5) throw ValidationError("project_2d needs at least 5 points");
  for (const auto& e : embeddings) {
    if (e.values.size() != embeddings[0].values.size()) {
      throw ValidationError("project_2d: inconsistent embedding dimensions");
    }
  }

  const double perplexity =
      std::max(1.0, std::min(config.perplexity, static_cast<double>(n - 1) / 3.0));
  const auto d2 = pairwise_sq_dists(embeddings);
  auto p = joint_affinities(d2, n, perplexity);

  // early exaggeration for the first phase
  const int exaggeration_end = std::min(100, config.iterations / 2);
  for (auto& v : p) v *= 12.0;

  Rng rng = Rng::derive(config.seed, {hash_tag("project_2d")});
  std::vector<std::array<double, 2>> y(n), velocity(n, {0.0, 0.0}), gains(n, {1.0, 1.0});
  for (auto& pt : y) {
    pt[0] = rng.normal() * 1e-2;
    pt[1] = rng.normal() * 1e-2;
  }

  const double lr = 200.0;
  std::vector<double> q(n * n);
  std::vector<std::array<double, 2>> grad(n);
  for (int iter = 0; iter < config.iterations; ++iter) {
    if (iter == exaggeration_end) {
      for (auto& v : p) v /= 12.0;
    }
    const double momentum = iter < 250 ? 0.5 : 0.8;

    double qsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      q[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dy0 = y[i][0] - y[j][0];
        const double dy1 = y[i][1] - y[j][1];
        const double w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
        q[i * n + j] = w;
        q[j * n + i] = w;
        qsum += 2.0 * w;
      }
    }

    for (std::size_t i = 0; i < n; ++i) grad[i] = {0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = q[i * n + j];
        const double coeff = 4.0 * (p[i * n + j] - w / qsum) * w;
        grad[i][0] += coeff * (y[i][0] - y[j][0]);
        grad[i][1] += coeff * (y[i][1] - y[j][1]);
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        const bool same_sign = (grad[i][d] > 0.0) == (velocity[i][d] > 0.0);
        gains[i][d] = std::max(0.01, same_sign ? gains[i][d] * 0.8 : gains[i][d] + 0.2);
        velocity[i][d] = momentum * velocity[i][d] - lr * gains[i][d] * grad[i][d];
        y[i][d] += velocity[i][d];
      }
    }

    // keep the embedding centered so runs are comparable
    double c0 = 0.0, c1 = 0.0;
    for (const auto& pt : y) {
      c0 += pt[0];
      c1 += pt[1];
    }
    c0 /= static_cast<double>(n);
    c1 /= static_cast<double>(n);
    for (auto& pt : y) {
      pt[0] -= c0;
      pt[1] -= c1;
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Silhouette (cosine distance)
// ---------------------------------------------------------------------------

double silhouette(const std::vector<Embedding>& embeddings,
                  const std::vector<MotionGrade>& labels) {
  const std::size_t n = embeddings.size();
  if (labels.size() != n) throw ValidationError("silhouette: embeddings/labels length mismatch");

  std::array<std::int64_t, kNumGrades> class_sizes{};
  for (auto l : labels) class_sizes[static_cast<int>(l)]++;
  int present = 0;
  for (auto c : class_sizes) {
    if (c == 1) throw ValidationError("silhouette: every present class needs at least 2 members");
    if (c >= 2) ++present;
  }
  if (present < 2) throw ValidationError("silhouette: needs at least 2 classes");

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (float v : embeddings[i].values) acc += static_cast<double>(v) * v;
    norms[i] = std::sqrt(acc);
    if (norms[i] == 0.0) throw ValidationError("silhouette: zero-norm embedding");
  }

  auto cos_dist = [&](std::size_t i, std::size_t j) {
    const auto& a = embeddings[i].values;
    const auto& b = embeddings[j].values;
    double dot = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) dot += static_cast<double>(a[k]) * b[k];
    return 1.0 - dot / (norms[i] * norms[j]);
  };

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, kNumGrades> sums{};
    std::array<std::int64_t, kNumGrades> cnts{};
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const int c = static_cast<int>(labels[j]);
      sums[c] += cos_dist(i, j);
      cnts[c]++;
    }
    const int own = static_cast<int>(labels[i]);
    const double a = sums[own] / static_cast<double>(cnts[own]);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < kNumGrades; ++c) {
      if (c != own && cnts[c] > 0) b = std::min(b, sums[c] / static_cast<double>(cnts[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json optional_to_json(std::optional<double> v) {
  if (!v) return "n/a";
  return *v;
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["confusion"] = report.confusion.counts;
  j["overall_accuracy"] = report.metrics.accuracy;
  for (int c = 0; c < kNumGrades; ++c) {
    const std::string name = grade_name(static_cast<MotionGrade>(c));
    j["precision"][name] = optional_to_json(report.metrics.precision[c]);
    j["recall"][name] = optional_to_json(report.metrics.recall[c]);
  }
  if (report.mogras) {
    for (int t = 0; t < kNumGrades; ++t) {
      const std::string truth = grade_name(static_cast<MotionGrade>(t));
      for (int s = 0; s < kNumGrades; ++s) {
        const std::string score_type = grade_name(static_cast<MotionGrade>(s));
        const auto& cell = (*report.mogras)[t][s];
        j["mogras"][truth][score_type] = {{"q1", cell.q1}, {"median", cell.median}, {"q3", cell.q3}};
      }
    }
  }
  j["silhouette"] = optional_to_json(report.silhouette);
  j["config"] = report.config_echo;
  return j;
}

std::string render_report_text(const EvalReport& report) {
  std::string out;
  out += "== evaluation report ==\n";
  out += "confusion (rows = truth, cols = predicted):\n";
  for (int t = 0; t < kNumGrades; ++t) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-14s %8lld %8lld %8lld\n",
                  grade_name(static_cast<MotionGrade>(t)).c_str(),
                  static_cast<long long>(report.confusion.counts[t][0]),
                  static_cast<long long>(report.confusion.counts[t][1]),
                  static_cast<long long>(report.confusion.counts[t][2]));
    out += buf;
  }
  out += "accuracy / precision(no_motion) / recall(severe_motion): " +
         format_metrics_row(report.metrics.accuracy, report.metrics.precision[0],
                            report.metrics.recall[2]) +
         "\n";
  for (int c = 0; c < kNumGrades; ++c) {
    out += "  " + grade_name(static_cast<MotionGrade>(c)) +
           ": precision " + format3(report.metrics.precision[c]) +
           ", recall " + format3(report.metrics.recall[c]) + "\n";
  }
  if (report.mogras) {
    out += "mogras medians (rows = truth, cols = score type):\n";
    for (int t = 0; t < kNumGrades; ++t) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "  %-14s %8.4f %8.4f %8.4f\n",
                    grade_name(static_cast<MotionGrade>(t)).c_str(), (*report.mogras)[t][0].median,
                    (*report.mogras)[t][1].median, (*report.mogras)[t][2].median);
      out += buf;
    }
  }
  if (report.silhouette) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "silhouette (cosine): %.4f\n", *report.silhouette);
    out += buf;
  }
  return out;
}

}  // namespace automac

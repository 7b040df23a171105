#include "automac/types.hpp"

#include <cmath>

#include "automac/errors.hpp"

namespace automac {

namespace {

const std::array<std::string, 3> kGradeNames = {"no_motion", "subtle_motion", "severe_motion"};
const std::array<std::string, 4> kContrastNames = {"T1w", "T2w", "PDw", "FLAIR"};
const std::array<std::string, 4> kOrientationNames = {"axial", "coronal", "sagittal", "oblique"};
const std::array<std::string, 2> kProvenanceNames = {"real", "synthetic"};

template <std::size_t N>
int index_of(const std::array<std::string, N>& names, const std::string& name, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw ValidationError(std::string("unknown ") + what + ": '" + name + "'");
}

}  // namespace

const std::string& grade_name(MotionGrade g) { return kGradeNames[static_cast<int>(g)]; }

MotionGrade grade_from_name(const std::string& name) {
  return static_cast<MotionGrade>(index_of(kGradeNames, name, "motion grade"));
}

const std::string& contrast_name(Contrast c) { return kContrastNames[static_cast<int>(c)]; }

Contrast contrast_from_name(const std::string& name) {
  return static_cast<Contrast>(index_of(kContrastNames, name, "contrast"));
}

const std::string& orientation_name(Orientation o) { return kOrientationNames[static_cast<int>(o)]; }

Orientation orientation_from_name(const std::string& name) {
  return static_cast<Orientation>(index_of(kOrientationNames, name, "orientation"));
}

const std::string& provenance_name(Provenance p) { return kProvenanceNames[static_cast<int>(p)]; }

Provenance provenance_from_name(const std::string& name) {
  return static_cast<Provenance>(index_of(kProvenanceNames, name, "provenance"));
}

const SliceRecord& validate(const SliceRecord& record) {
  if (record.id.empty()) throw ValidationError("slice record has empty id");
  if (record.pixels.h < kMinSliceDim || record.pixels.w < kMinSliceDim) {
    throw ValidationError("slice '" + record.id + "' is " + std::to_string(record.pixels.h) + "x" +
                          std::to_string(record.pixels.w) + "; minimum is 32x32");
  }
  if (record.pixels.size() != static_cast<std::size_t>(record.pixels.h) * record.pixels.w) {
    throw ValidationError("slice '" + record.id + "' pixel buffer does not match its shape");
  }
  if (!all_finite(record.pixels)) {
    throw ValidationError("slice '" + record.id + "' contains non-finite pixels");
  }
  return record;
}

Embedding make_embedding(std::vector<float> values) {
  if (values.size() != static_cast<std::size_t>(kEmbeddingDim)) {
    throw ValidationError("embedding must have exactly " + std::to_string(kEmbeddingDim) +
                          " values, got " + std::to_string(values.size()));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ValidationError("embedding contains non-finite values");
  }
  Embedding e;
  e.values = std::move(values);
  return e;
}

void validate_templates(const GradeTemplateSet& set) {
  if (set.encoder_fingerprint.empty()) {
    throw ValidationError("template set has an empty encoder fingerprint");
  }
  for (MotionGrade g : kAllGrades) {
    const auto& t = set.templates[static_cast<int>(g)];
    if (t.size() != static_cast<std::size_t>(kEmbeddingDim)) {
      throw ValidationError("template for " + grade_name(g) + " is not " +
                            std::to_string(kEmbeddingDim) + "-D");
    }
    bool any_nonzero = false;
    for (float v : t) {
      if (!std::isfinite(v)) throw ValidationError("template for " + grade_name(g) + " is non-finite");
      if (v != 0.0f) any_nonzero = true;
    }
    if (!any_nonzero) throw ValidationError("template for " + grade_name(g) + " is all-zero");
  }
}

MoGrASTriple make_mogras_triple(double no_motion, double subtle, double severe) {
  constexpr double kTol = 1e-9;
  auto check = [](double v, MotionGrade g) {
    if (!std::isfinite(v) || v < -1.0 - kTol || v > 1.0 + kTol) {
      throw ValidationError("MoGrAS score for " + grade_name(g) + " outside [-1, 1]: " +
                            std::to_string(v));
    }
    return std::min(1.0, std::max(-1.0, v));
  };
  MoGrASTriple t;
  t.scores[0] = check(no_motion, MotionGrade::NoMotion);
  t.scores[1] = check(subtle, MotionGrade::SubtleMotion);
  t.scores[2] = check(severe, MotionGrade::SevereMotion);
  return t;
}

GradePrediction make_grade_prediction(const std::array<double, kNumGrades>& probabilities) {
  double sum = 0.0;
  for (double p : probabilities) {
    if (!std::isfinite(p) || p < 0.0) throw ValidationError("prediction probabilities must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ValidationError("prediction probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
  GradePrediction pred;
  pred.probabilities = probabilities;
  // >= makes ties resolve toward the more severe grade
  int best = 0;
  for (int g = 1; g < kNumGrades; ++g) {
    if (probabilities[g] >= probabilities[best]) best = g;
  }
  pred.grade = static_cast<MotionGrade>(best);
  return pred;
}

}  // namespace automac

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "automac/image.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Motion grades
// ---------------------------------------------------------------------------

// Ordered by severity. The integer values are load-bearing: tie-breaking,
// confusion-matrix indexing and the template file layout all use them.
enum class MotionGrade : int { NoMotion = 0, SubtleMotion = 1, SevereMotion = 2 };

inline constexpr std::array<MotionGrade, 3> kAllGrades = {
    MotionGrade::NoMotion, MotionGrade::SubtleMotion, MotionGrade::SevereMotion};

inline constexpr int kNumGrades = 3;

const std::string& grade_name(MotionGrade g);
MotionGrade grade_from_name(const std::string& name);

enum class Contrast { T1w, T2w, PDw, FLAIR };
enum class Orientation { Axial, Coronal, Sagittal, Oblique };
enum class Provenance { Real, Synthetic };

const std::string& contrast_name(Contrast c);
Contrast contrast_from_name(const std::string& name);
const std::string& orientation_name(Orientation o);
Orientation orientation_from_name(const std::string& name);
const std::string& provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Slice records
// ---------------------------------------------------------------------------

inline constexpr int kMinSliceDim = 32;

struct SliceRecord {
  std::string id;
  ImageF pixels;
  Contrast contrast = Contrast::T1w;
  Orientation orientation = Orientation::Axial;
  std::optional<MotionGrade> grade;
  Provenance provenance = Provenance::Real;
  std::map<std::string, std::string> metadata;
};

// Returns the record iff every invariant holds; throws ValidationError with
// the violated condition otherwise.
const SliceRecord& validate(const SliceRecord& record);

// ---------------------------------------------------------------------------
// Embeddings, templates, scores
// ---------------------------------------------------------------------------

inline constexpr int kEmbeddingDim = 512;

struct Embedding {
  std::vector<float> values;
};

// Throws unless the vector is exactly 512-D and finite.
Embedding make_embedding(std::vector<float> values);

struct GradeTemplateSet {
  // templates[g] is the 512-D template for grade g
  std::array<std::vector<float>, kNumGrades> templates;
  std::string encoder_fingerprint;
  std::array<std::int64_t, kNumGrades> created_from = {0, 0, 0};
};

void validate_templates(const GradeTemplateSet& set);

struct MoGrASTriple {
  std::array<double, kNumGrades> scores = {0.0, 0.0, 0.0};

  double operator[](MotionGrade g) const { return scores[static_cast<int>(g)]; }
};

// Scores within 1e-9 outside [-1, 1] are clamped (cosine round-off at the
// poles); anything further out is rejected.
MoGrASTriple make_mogras_triple(double no_motion, double subtle, double severe);

struct GradePrediction {
  MotionGrade grade = MotionGrade::NoMotion;
  std::array<double, kNumGrades> probabilities = {0.0, 0.0, 0.0};
};

// Probabilities must be nonnegative and sum to 1 within 1e-6. Ties on the
// argmax resolve toward the more severe grade.
GradePrediction make_grade_prediction(const std::array<double, kNumGrades>& probabilities);

}  // namespace automac

#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "automac/encoder.hpp"
#include "automac/types.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Template construction
// ---------------------------------------------------------------------------

// Coordinate-wise median; even counts average the two middle values.
// `normalize` switches to L2-normalized embeddings before the median (kept as
// an option for comparison; the default matches the raw-embedding reading).
GradeTemplateSet build_templates_from_embeddings(
    const std::array<std::vector<Embedding>, kNumGrades>& per_grade,
    const std::string& encoder_fingerprint, bool normalize = false);

// Embeds the labeled records and builds the per-grade templates. A grade with
// zero samples is an error naming the grade.
GradeTemplateSet build_templates(Encoder& encoder, const std::vector<SliceRecord>& records,
                                 std::int64_t batch_size = 32, bool normalize = false);

// ---------------------------------------------------------------------------
// Scoring (Eq. 1)
// ---------------------------------------------------------------------------

// MoGrAS_g = (F_g . F_test) / (||F_g|| ||F_test||), computed in double
// precision. Zero-norm embeddings or templates are errors.
MoGrASTriple score(const Embedding& embedding, const GradeTemplateSet& templates);

// One embedding pass feeding both the classifier head and the affinity
// scores. The templates must carry the fingerprint of `encoder`; a mismatch
// is a contract violation, not a warning.
std::pair<GradePrediction, MoGrASTriple> score_and_grade(const SliceRecord& record,
                                                         Encoder& encoder,
                                                         const GradeTemplateSet& templates,
                                                         GradeHead& head);

// ---------------------------------------------------------------------------
// Template file
// ---------------------------------------------------------------------------

// Container with grade order, the 3x512 little-endian f32 matrix, encoder
// fingerprint, per-grade sample counts and a creation timestamp.
void save_templates(const std::string& path, const GradeTemplateSet& templates);
GradeTemplateSet load_templates(const std::string& path);

}  // namespace automac

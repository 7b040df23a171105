#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "automac/ingestion.hpp"
#include "automac/rng.hpp"
#include "automac/types.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Simulation parameters
// ---------------------------------------------------------------------------

struct MotionParams {
  double corrupt_fraction = 0.0;  // fraction of phase-encode rows replaced
  double max_rotation_deg = 5.0;
  double max_shift_px = 8.0;
  int n_motion_states = 3;
  std::uint64_t seed = 0;
};

void validate_motion_params(const MotionParams& params);

struct GradeThresholds {
  double subtle_min = 0.03;
  double severe_min = 0.15;
};

void validate_thresholds(const GradeThresholds& thresholds);

// ---------------------------------------------------------------------------
// k-space corruption
// ---------------------------------------------------------------------------

// A rigid motion state: the subject's pose while some k-space rows were read.
struct MotionState {
  double rotation_deg = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

// Core k-space machinery, exposed so tests can drive it with fixed states and
// rows: replaces row r of the clean image's 2-D spectrum with row r of the
// spectrum of states[row_state[i]]'s transformed image, inverse-transforms,
// and returns the magnitude image.
ImageF kspace_row_substitute(const ImageF& clean, const std::vector<MotionState>& states,
                             const std::vector<int>& rows, const std::vector<int>& row_state);

// Draws motion states and the corrupted row subset from the seeded generator,
// then applies kspace_row_substitute. Deterministic in (image, params).
// corrupt_fraction = 0 returns the input unchanged.
ImageF simulate_motion(const ImageF& image, const MotionParams& params);

// Phase-encode rows replaced for an H-row image: floor(corrupt_fraction * H).
int corrupted_row_count(double corrupt_fraction, int height);

// Band rule: NoMotion below subtle_min, SevereMotion at or above severe_min.
MotionGrade grade_from_params(const MotionParams& params, const GradeThresholds& thresholds);

// ---------------------------------------------------------------------------
// Synthetic dataset generation
// ---------------------------------------------------------------------------

struct SourceImage {
  std::string id;
  ImageF image;
  Contrast contrast = Contrast::T1w;
  Orientation orientation = Orientation::Axial;
};

// Ellipse-based brain-like phantom with nominal [0, 1] intensities,
// deterministic in the rng stream. Tissue intensities follow the requested
// contrast (T1w: dark fluid / bright fat, T2w: bright fluid, PDw: fluid
// near-isointense, FLAIR: suppressed fluid with hyperintense lesions) and the
// head geometry follows the orientation, so a synthesized pool looks like a
// mixed clinical pull rather than one template with noise.
ImageF make_phantom(int size, Rng& rng, Contrast contrast = Contrast::T1w,
                    Orientation orientation = Orientation::Axial);

// `count` phantoms with contrast/orientation metadata cycled for diversity.
std::vector<SourceImage> synthesize_sources(int count, int size, std::uint64_t seed);

struct GenerateConfig {
  std::array<std::int64_t, kNumGrades> per_grade_counts = {0, 0, 0};
  GradeThresholds thresholds;
  double max_rotation_deg = 5.0;
  double max_shift_px = 8.0;
  int n_motion_states = 3;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string image_format = "amac";  // "amac" or "png"
};

// Writes the corrupted slices under out_dir and returns the manifest
// (root = out_dir). Fractions are drawn uniformly within each grade's band;
// contrast/orientation metadata is copied from the chosen source.
Manifest generate_dataset(const std::vector<SourceImage>& sources, const GenerateConfig& config);

}  // namespace automac

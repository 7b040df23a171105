#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "automac/types.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

// CSV schema: image_path,contrast,orientation,grade,provenance
// `grade` may be empty for pure-inference records.
struct ManifestEntry {
  std::string image_path;  // relative to the manifest root
  Contrast contrast = Contrast::T1w;
  Orientation orientation = Orientation::Axial;
  std::optional<MotionGrade> grade;
  Provenance provenance = Provenance::Real;
};

struct Manifest {
  std::string root;
  std::vector<ManifestEntry> entries;
};

// Parses and validates a manifest. Every referenced image must exist on disk;
// unknown enum labels and malformed rows are rejected with the row number.
Manifest load_manifest(const std::string& path);

void save_manifest(const std::string& path, const Manifest& manifest);

// Reads the entry's image and wraps it as a validated SliceRecord. The id is
// the image path stem.
SliceRecord load_slice(const Manifest& manifest, const ManifestEntry& entry);

std::vector<SliceRecord> load_all_slices(const Manifest& manifest);

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

inline constexpr int kInputSize = 224;

// 3 x 224 x 224, channels identical, per-image standardized.
struct PreprocessedImage {
  std::vector<float> tensor;  // size 3*224*224, channel-major
  std::string source_id;
  bool constant_input = false;  // std == 0 fallback: tensor is all zeros
};

// Bilinear resize to 224x224, per-image standardization (mean 0, std 1 over
// the resized slice), grayscale replicated to 3 channels. Deterministic.
PreprocessedImage preprocess(const SliceRecord& record);

// Same pipeline applied to a raw image, used after augmentation.
PreprocessedImage preprocess_image(const ImageF& img, const std::string& source_id);

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
  std::uint64_t seed = 0;
};

void validate_split_spec(const SplitSpec& spec);

struct SplitResult {
  std::vector<std::size_t> train;  // indices into the input record list
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Stratifies on (contrast x orientation x grade). Within each stratum the
// three counts come from largest-remainder rounding of the ratios; membership
// is a seed-deterministic shuffle. Records missing a grade are rejected.
SplitResult stratified_split(const std::vector<ManifestEntry>& entries, const SplitSpec& spec);

}  // namespace automac

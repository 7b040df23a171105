#include "automac/motion_sim.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <mutex>

#include "automac/errors.hpp"
#include "automac/image_io.hpp"

namespace fs = std::filesystem;

namespace automac {

namespace {

// FFTW plan creation is not thread-safe; execution on separate buffers is.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

using ComplexGrid = std::vector<std::complex<double>>;

ComplexGrid fft2(const ImageF& img) {
  const int h = img.h, w = img.w;
  ComplexGrid in(static_cast<std::size_t>(h) * w), out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = {static_cast<double>(img.px[i]), 0.0};
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    plan = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(in.data()),
                            reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

ImageF ifft2_magnitude(ComplexGrid& freq, int h, int w) {
  ComplexGrid out(freq.size());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    plan = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(freq.data()),
                            reinterpret_cast<fftw_complex*>(out.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  ImageF img(h, w);
  const double norm = 1.0 / (static_cast<double>(h) * w);
  for (std::size_t i = 0; i < out.size(); ++i) img.px[i] = static_cast<float>(std::abs(out[i] * norm));
  return img;
}

}  // namespace

void validate_motion_params(const MotionParams& params) {
  if (!(params.corrupt_fraction >= 0.0 && params.corrupt_fraction <= 1.0)) {
    throw ValidationError("corrupt_fraction must be in [0, 1]");
  }
  if (params.max_rotation_deg < 0.0) throw ValidationError("max_rotation_deg must be >= 0");
  if (params.max_shift_px < 0.0) throw ValidationError("max_shift_px must be >= 0");
  if (params.n_motion_states < 1) throw ValidationError("n_motion_states must be >= 1");
}

void validate_thresholds(const GradeThresholds& thresholds) {
  if (!(thresholds.subtle_min > 0.0 && thresholds.subtle_min < thresholds.severe_min &&
        thresholds.severe_min <= 1.0)) {
    throw ValidationError("thresholds must satisfy 0 < subtle_min < severe_min <= 1");
  }
}

int corrupted_row_count(double corrupt_fraction, int height) {
  return static_cast<int>(std::floor(corrupt_fraction * static_cast<double>(height)));
}

ImageF kspace_row_substitute(const ImageF& clean, const std::vector<MotionState>& states,
                             const std::vector<int>& rows, const std::vector<int>& row_state) {
  if (rows.size() != row_state.size()) throw ValidationError("rows/row_state length mismatch");
  if (!all_finite(clean)) throw ValidationError("non-finite input image");

  ComplexGrid spectrum = fft2(clean);

  std::vector<ComplexGrid> state_spectra;
  state_spectra.reserve(states.size());
  for (const auto& s : states) {
    state_spectra.push_back(fft2(rigid_transform(clean, s.rotation_deg, s.shift_x, s.shift_y)));
  }

  const std::size_t w = static_cast<std::size_t>(clean.w);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    const int s = row_state[i];
    if (r < 0 || r >= clean.h) throw ValidationError("row index out of range");
    if (s < 0 || static_cast<std::size_t>(s) >= states.size()) {
      throw ValidationError("state index out of range");
    }
    std::copy_n(state_spectra[static_cast<std::size_t>(s)].begin() + static_cast<std::size_t>(r) * w, w,
                spectrum.begin() + static_cast<std::size_t>(r) * w);
  }
  return ifft2_magnitude(spectrum, clean.h, clean.w);
}

ImageF simulate_motion(const ImageF& image, const MotionParams& params) {
  validate_motion_params(params);
  if (image.h < kMinSliceDim || image.w < kMinSliceDim) {
    throw ValidationError("simulate_motion requires at least a 32x32 image");
  }
  if (!all_finite(image)) throw ValidationError("non-finite input image");

  const int n_rows = corrupted_row_count(params.corrupt_fraction, image.h);
  if (n_rows == 0) return image;

  Rng rng = Rng::derive(params.seed, {hash_tag("simulate_motion")});

  std::vector<MotionState> states(static_cast<std::size_t>(params.n_motion_states));
  for (auto& s : states) {
    s.rotation_deg = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg);
    s.shift_x = rng.uniform(-params.max_shift_px, params.max_shift_px);
    s.shift_y = rng.uniform(-params.max_shift_px, params.max_shift_px);
  }

  const auto picked = rng.sample_without_replacement(static_cast<std::size_t>(image.h),
                                                     static_cast<std::size_t>(n_rows));
  std::vector<int> rows(picked.size());
  std::vector<int> row_state(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    rows[i] = static_cast<int>(picked[i]);
    row_state[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(params.n_motion_states)));
  }
  return kspace_row_substitute(image, states, rows, row_state);
}

MotionGrade grade_from_params(const MotionParams& params, const GradeThresholds& thresholds) {
  validate_thresholds(thresholds);
  if (params.corrupt_fraction < thresholds.subtle_min) return MotionGrade::NoMotion;
  if (params.corrupt_fraction < thresholds.severe_min) return MotionGrade::SubtleMotion;
  return MotionGrade::SevereMotion;
}

ImageF make_phantom(int size, Rng& rng, Contrast contrast, Orientation orientation) {
  ImageF img(size, size, 0.0f);
  const double c = (size - 1) * 0.5;

  // Tissue intensities per contrast: scalp/fat ring, parenchyma, CSF relative
  // to parenchyma, and the lesion-delta band. The values follow the usual MR
  // phenomenology (T1w: dark fluid and bright fat, T2w: bright fluid, PDw:
  // fluid near-isointense, FLAIR: suppressed fluid with hyperintense lesions)
  // so the four contrast families genuinely look different after per-image
  // standardization instead of differing only in manifest metadata.
  double scalp = 0, paren = 0, csf_delta = 0, les_lo = 0, les_hi = 0;
  switch (contrast) {
    case Contrast::T1w:   scalp = 0.95; paren = 0.72; csf_delta = -0.45; les_lo = -0.20; les_hi = 0.12; break;
    case Contrast::T2w:   scalp = 0.50; paren = 0.42; csf_delta = 0.48;  les_lo = -0.08; les_hi = 0.30; break;
    case Contrast::PDw:   scalp = 0.68; paren = 0.78; csf_delta = 0.07;  les_lo = -0.14; les_hi = 0.14; break;
    case Contrast::FLAIR: scalp = 0.58; paren = 0.66; csf_delta = -0.55; les_lo = 0.06;  les_hi = 0.30; break;
  }
  // per-source jitter so one contrast family is not a single template
  scalp *= rng.uniform(0.9, 1.1);
  paren *= rng.uniform(0.9, 1.1);
  csf_delta *= rng.uniform(0.85, 1.15);

  // The view shapes the geometry: head eccentricity, a global tilt, and how
  // the ventricles sit relative to each other.
  double ry_s = 1.0, rx_s = 1.0, tilt = rng.uniform(-0.2, 0.2);
  double vent_sep = 0.55, vent_drop = -0.2;
  switch (orientation) {
    case Orientation::Axial:
      break;
    case Orientation::Coronal:
      ry_s = 1.22; rx_s = 0.92; vent_sep = 0.40; vent_drop = 0.05;
      break;
    case Orientation::Sagittal:
      ry_s = 0.95; rx_s = 1.25; vent_sep = 0.18; vent_drop = -0.10;
      break;
    case Orientation::Oblique:
      tilt += rng.uniform(-0.35, 0.35);
      ry_s = rng.uniform(0.9, 1.2);
      rx_s = rng.uniform(0.9, 1.2);
      break;
  }

  struct Ellipse {
    double cy, cx, ry, rx, angle, value;
  };
  std::vector<Ellipse> shapes;

  // scalp ring, dark skull line, parenchyma bulk
  const double head_r = size * rng.uniform(0.36, 0.44);
  const double hry = head_r * ry_s * rng.uniform(0.95, 1.05);
  const double hrx = head_r * rx_s;
  shapes.push_back({c, c, hry, hrx, tilt, scalp});
  shapes.push_back({c, c, hry * 0.90, hrx * 0.88, tilt, -scalp});
  shapes.push_back({c, c, hry * 0.86, hrx * 0.84, tilt, paren * rng.uniform(0.95, 1.05)});

  // ventricles: CSF pools whose layout depends on the view
  const double vr = head_r * rng.uniform(0.18, 0.28);
  shapes.push_back({c + vr * vent_drop, c - vr * vent_sep, vr, vr * 0.38,
                    tilt + rng.uniform(0.2, 0.5), csf_delta});
  shapes.push_back({c + vr * vent_drop, c + vr * vent_sep, vr, vr * 0.38,
                    tilt - rng.uniform(0.2, 0.5), csf_delta});

  // a handful of internal structures / lesions
  const int n_blobs = 3 + static_cast<int>(rng.uniform_int(4));
  for (int i = 0; i < n_blobs; ++i) {
    const double ang = rng.uniform(0.0, 6.283185307179586);
    const double rad = rng.uniform(0.15, 0.62) * head_r;
    shapes.push_back({c + std::sin(ang) * rad, c + std::cos(ang) * rad,
                      head_r * rng.uniform(0.05, 0.16), head_r * rng.uniform(0.05, 0.16),
                      rng.uniform(0.0, 3.14), rng.uniform(les_lo, les_hi)});
  }

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      for (const auto& e : shapes) {
        const double dy = y - e.cy;
        const double dx = x - e.cx;
        const double ca = std::cos(e.angle), sa = std::sin(e.angle);
        const double u = (ca * dx + sa * dy) / e.rx;
        const double t = (-sa * dx + ca * dy) / e.ry;
        if (u * u + t * t <= 1.0) v += e.value;
      }
      img.at(y, x) = static_cast<float>(v);
    }
  }

  // smooth intensity gradient + low-frequency texture so slices are not flat
  const double gdir = rng.uniform(0.0, 6.283185307179586);
  const double gmag = rng.uniform(0.02, 0.10);
  const double fy = rng.uniform(1.5, 4.0), fx = rng.uniform(1.5, 4.0);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  Rng noise = Rng::derive(rng.next_u64(), {hash_tag("phantom_noise")});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      float& v = img.at(y, x);
      if (v > 0.0f) {
        const double ny = (y - c) / size, nx = (x - c) / size;
        v += static_cast<float>(gmag * (std::cos(gdir) * nx + std::sin(gdir) * ny));
        v += static_cast<float>(0.03 * std::sin(fy * 6.2831853 * ny + phase) *
                                std::cos(fx * 6.2831853 * nx));
      }
      v += static_cast<float>(noise.normal() * 0.004);
      v = std::max(0.0f, v);
    }
  }
  return img;
}

std::vector<SourceImage> synthesize_sources(int count, int size, std::uint64_t seed) {
  if (count < 1) throw ValidationError("source count must be >= 1");
  if (size < kMinSliceDim) throw ValidationError("source size must be >= 32");
  std::vector<SourceImage> sources;
  sources.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, {hash_tag("phantom"), static_cast<std::uint64_t>(i)});
    SourceImage src;
    src.id = "phantom_" + std::to_string(i);
    src.contrast = static_cast<Contrast>(i % 4);
    src.orientation = static_cast<Orientation>((i / 4) % 4);
    src.image = make_phantom(size, rng, src.contrast, src.orientation);
    sources.push_back(std::move(src));
  }
  return sources;
}

Manifest generate_dataset(const std::vector<SourceImage>& sources, const GenerateConfig& config) {
  validate_thresholds(config.thresholds);
  const std::int64_t total =
      config.per_grade_counts[0] + config.per_grade_counts[1] + config.per_grade_counts[2];
  for (auto c : config.per_grade_counts) {
    if (c < 0) throw ValidationError("per-grade counts must be >= 0");
  }
  if (sources.empty() && total > 0) throw DataError("no source images for a nonzero request");
  if (config.image_format != "amac" && config.image_format != "png") {
    throw ConfigError("image_format must be 'amac' or 'png'");
  }
  fs::create_directories(config.out_dir);

  Manifest manifest;
  manifest.root = config.out_dir;

  for (MotionGrade grade : kAllGrades) {
    const int g = static_cast<int>(grade);
    for (std::int64_t i = 0; i < config.per_grade_counts[g]; ++i) {
      Rng rec = Rng::derive(config.seed, {hash_tag("generate"), static_cast<std::uint64_t>(g),
                                          static_cast<std::uint64_t>(i)});
      const auto& src = sources[rec.uniform_int(sources.size())];

      MotionParams params;
      params.max_rotation_deg = config.max_rotation_deg;
      params.max_shift_px = config.max_shift_px;
      params.n_motion_states = config.n_motion_states;
      params.seed = rec.next_u64();
      switch (grade) {
        case MotionGrade::NoMotion:
          params.corrupt_fraction = 0.0;
          break;
        case MotionGrade::SubtleMotion:
          params.corrupt_fraction = rec.uniform(config.thresholds.subtle_min, config.thresholds.severe_min);
          break;
        case MotionGrade::SevereMotion:
          params.corrupt_fraction = rec.uniform(config.thresholds.severe_min, 1.0);
          break;
      }

      const ImageF corrupted = simulate_motion(src.image, params);
      const std::string file =
          grade_name(grade) + "_" + std::to_string(i) + "." + config.image_format;
      write_image((fs::path(config.out_dir) / file).string(), corrupted);

      ManifestEntry entry;
      entry.image_path = file;
      entry.contrast = src.contrast;
      entry.orientation = src.orientation;
      entry.grade = grade;
      entry.provenance = Provenance::Synthetic;
      manifest.entries.push_back(std::move(entry));
    }
  }
  return manifest;
}

}  // namespace automac

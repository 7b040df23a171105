#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <random>
#include <vector>

#include "automac/errors.hpp"
#include "automac/motion_sim.hpp"
#include "automac/rng.hpp"

using namespace automac;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("automac_msim_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Direct O(N^4) 2-D DFT, the independent reference for the FFT path.
std::vector<std::complex<double>> dft2(const ImageF& img) {
  const int h = img.h, w = img.w;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      std::complex<double> acc(0.0, 0.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double ph = -2.0 * 3.14159265358979323846 *
                            (static_cast<double>(ky) * y / h + static_cast<double>(kx) * x / w);
          acc += static_cast<double>(img.at(y, x)) * std::complex<double>(std::cos(ph), std::sin(ph));
        }
      }
      out[static_cast<std::size_t>(ky) * w + kx] = acc;
    }
  }
  return out;
}

// Inverse of dft2 followed by magnitude, mirroring the production pipeline.
ImageF idft2_mag(const std::vector<std::complex<double>>& spec, int h, int w) {
  ImageF out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::complex<double> acc(0.0, 0.0);
      for (int ky = 0; ky < h; ++ky) {
        for (int kx = 0; kx < w; ++kx) {
          const double ph = 2.0 * 3.14159265358979323846 *
                            (static_cast<double>(ky) * y / h + static_cast<double>(kx) * x / w);
          acc += spec[static_cast<std::size_t>(ky) * w + kx] *
                 std::complex<double>(std::cos(ph), std::sin(ph));
        }
      }
      out.at(y, x) = static_cast<float>(std::abs(acc) / (static_cast<double>(h) * w));
    }
  }
  return out;
}

ImageF test_phantom(int size, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {hash_tag("test_phantom")});
  return make_phantom(size, rng);
}

double image_energy_diff(const ImageF& a, const ImageF& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = static_cast<double>(a.px[i]) - b.px[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

TEST_CASE("corrupted_row_count floors the fraction") {
  CHECK(corrupted_row_count(0.0, 224) == 0);
  CHECK(corrupted_row_count(0.03, 224) == 6);
  CHECK(corrupted_row_count(0.15, 224) == 33);
  CHECK(corrupted_row_count(0.999, 224) == 223);
  CHECK(corrupted_row_count(0.0299, 100) == 2);
}

TEST_CASE("grade banding follows the thresholds") {
  const GradeThresholds t;
  auto grade = [&](double f) {
    MotionParams p;
    p.corrupt_fraction = f;
    return grade_from_params(p, t);
  };
  CHECK(grade(0.0) == MotionGrade::NoMotion);
  CHECK(grade(0.0299) == MotionGrade::NoMotion);
  CHECK(grade(0.03) == MotionGrade::SubtleMotion);
  CHECK(grade(0.1499) == MotionGrade::SubtleMotion);
  CHECK(grade(0.15) == MotionGrade::SevereMotion);
  CHECK(grade(0.9) == MotionGrade::SevereMotion);
}

TEST_CASE("zero corruption fraction returns the image untouched") {
  const ImageF img = test_phantom(64, 1);
  MotionParams p;
  p.corrupt_fraction = 0.0;
  p.seed = 7;
  const ImageF out = simulate_motion(img, p);
  CHECK(max_abs_diff(img, out) == 0.0f);
}

TEST_CASE("simulation is deterministic in (image, params) and varies with seed") {
  const ImageF img = test_phantom(64, 2);
  MotionParams p;
  p.corrupt_fraction = 0.2;
  p.seed = 3;
  const ImageF a = simulate_motion(img, p);
  const ImageF b = simulate_motion(img, p);
  CHECK(a.px == b.px);

  MotionParams q = p;
  q.seed = 4;
  const ImageF c = simulate_motion(img, q);
  CHECK(max_abs_diff(a, c) > 0.0f);
}

TEST_CASE("single substituted row matches a direct-DFT oracle") {
  // Drive the exposed k-space core with one fixed state and row, and rebuild
  // the same thing from scratch with quartic-time DFTs.
  const int n = 32;
  const ImageF img = test_phantom(n, 3);
  const std::vector<MotionState> states = {{4.0, 2.5, -1.5}};
  const std::vector<int> rows = {5};
  const std::vector<int> row_state = {0};

  const ImageF got = kspace_row_substitute(img, states, rows, row_state);

  const ImageF moved = rigid_transform(img, states[0].rotation_deg, states[0].shift_x,
                                       states[0].shift_y);
  auto spec = dft2(img);
  const auto spec_moved = dft2(moved);
  for (int kx = 0; kx < n; ++kx) {
    spec[static_cast<std::size_t>(5) * n + kx] = spec_moved[static_cast<std::size_t>(5) * n + kx];
  }
  const ImageF want = idft2_mag(spec, n, n);

  REQUIRE(got.h == n);
  double worst = 0.0;
  for (std::size_t i = 0; i < got.px.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(got.px[i]) - want.px[i]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("multi-row substitution also matches the oracle") {
  const int n = 24;
  const ImageF img = test_phantom(n, 4);
  const std::vector<MotionState> states = {{-3.0, 1.0, 2.0}, {6.0, -2.0, 0.5}};
  const std::vector<int> rows = {2, 9, 17};
  const std::vector<int> row_state = {0, 1, 0};

  const ImageF got = kspace_row_substitute(img, states, rows, row_state);

  auto spec = dft2(img);
  std::vector<std::vector<std::complex<double>>> moved_specs;
  for (const auto& st : states) {
    moved_specs.push_back(dft2(rigid_transform(img, st.rotation_deg, st.shift_x, st.shift_y)));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int kx = 0; kx < n; ++kx) {
      spec[static_cast<std::size_t>(rows[i]) * n + kx] =
          moved_specs[static_cast<std::size_t>(row_state[i])][static_cast<std::size_t>(rows[i]) * n + kx];
    }
  }
  const ImageF want = idft2_mag(spec, n, n);

  double worst = 0.0;
  for (std::size_t i = 0; i < got.px.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(got.px[i]) - want.px[i]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("substituting zero rows reproduces the magnitude image") {
  const ImageF img = test_phantom(48, 5);
  const ImageF out = kspace_row_substitute(img, {}, {}, {});
  // round trip through FFT + magnitude of a nonnegative image is the image
  CHECK(max_abs_diff(img, out) < 1e-5f);
}

TEST_CASE("corruption severity grows with the fraction on average") {
  const ImageF img = test_phantom(96, 6);
  const std::vector<double> fractions = {0.05, 0.20, 0.50};
  std::vector<double> mean_err(fractions.size(), 0.0);
  const int trials = 40;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    for (int t = 0; t < trials; ++t) {
      MotionParams p;
      p.corrupt_fraction = fractions[fi];
      p.seed = 1000 + static_cast<std::uint64_t>(t);
      mean_err[fi] += image_energy_diff(simulate_motion(img, p), img);
    }
    mean_err[fi] /= trials;
  }
  CHECK(mean_err[0] < mean_err[1]);
  CHECK(mean_err[1] < mean_err[2]);
}

TEST_CASE("simulated output stays finite across a parameter sweep") {
  const ImageF img = test_phantom(64, 7);
  for (double f : {0.01, 0.07, 0.33, 0.80}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      MotionParams p;
      p.corrupt_fraction = f;
      p.max_rotation_deg = 10.0;
      p.max_shift_px = 12.0;
      p.seed = s;
      const ImageF out = simulate_motion(img, p);
      CHECK(all_finite(out));
      REQUIRE(out.h == img.h);
    }
  }
}

TEST_CASE("parameter validation rejects nonsense") {
  MotionParams p;
  p.corrupt_fraction = -0.1;
  CHECK_THROWS_AS(validate_motion_params(p), ValidationError);
  p.corrupt_fraction = 1.5;
  CHECK_THROWS_AS(validate_motion_params(p), ValidationError);
  p.corrupt_fraction = 0.2;
  p.n_motion_states = 0;
  CHECK_THROWS_AS(validate_motion_params(p), ValidationError);

  GradeThresholds t;
  t.subtle_min = 0.2;
  t.severe_min = 0.1;
  CHECK_THROWS_AS(validate_thresholds(t), ValidationError);
}

TEST_CASE("phantoms are varied, nonnegative, and structured") {
  const ImageF a = test_phantom(128, 10);
  const ImageF b = test_phantom(128, 11);
  CHECK(all_finite(a));
  float mn = 1e9f, mx = -1e9f;
  for (float v : a.px) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  CHECK(mn >= 0.0f);
  CHECK(mx > 0.3f);                  // has bright structure
  CHECK(mean_abs_diff(a, b) > 0.01); // different seeds give different anatomy
}

TEST_CASE("generate_dataset writes a balanced, loadable manifest") {
  TempDir tmp;
  const auto sources = synthesize_sources(4, 64, 21);
  REQUIRE(sources.size() == 4);

  GenerateConfig cfg;
  cfg.per_grade_counts = {6, 6, 6};
  cfg.seed = 77;
  cfg.out_dir = tmp.path.string();
  const Manifest m = generate_dataset(sources, cfg);
  REQUIRE(m.entries.size() == 18);

  std::array<int, kNumGrades> counts = {0, 0, 0};
  for (const auto& e : m.entries) {
    REQUIRE(e.grade.has_value());
    counts[static_cast<int>(*e.grade)]++;
    CHECK(e.provenance == Provenance::Synthetic);
    CHECK(fs::exists(tmp.path / e.image_path));
  }
  CHECK(counts[0] == 6);
  CHECK(counts[1] == 6);
  CHECK(counts[2] == 6);

  // every written image loads and validates
  const auto slices = load_all_slices(m);
  CHECK(slices.size() == 18);

  // no-motion outputs equal their source exactly (fraction pinned to zero)
  int identical = 0;
  for (const auto& s : slices) {
    if (s.grade == MotionGrade::NoMotion) {
      for (const auto& src : sources) {
        if (src.image.h == s.pixels.h && max_abs_diff(src.image, s.pixels) == 0.0f) {
          ++identical;
          break;
        }
      }
    }
  }
  CHECK(identical == 6);
}

TEST_CASE("generate_dataset is deterministic in the seed") {
  TempDir tmp_a, tmp_b;
  const auto sources = synthesize_sources(3, 48, 5);
  GenerateConfig cfg;
  cfg.per_grade_counts = {2, 2, 2};
  cfg.seed = 31;
  cfg.out_dir = tmp_a.path.string();
  const Manifest ma = generate_dataset(sources, cfg);
  cfg.out_dir = tmp_b.path.string();
  const Manifest mb = generate_dataset(sources, cfg);
  REQUIRE(ma.entries.size() == mb.entries.size());
  for (std::size_t i = 0; i < ma.entries.size(); ++i) {
    const SliceRecord a = load_slice(ma, ma.entries[i]);
    const SliceRecord b = load_slice(mb, mb.entries[i]);
    CHECK(a.pixels.px == b.pixels.px);
  }
}

TEST_CASE("generate_dataset rejects impossible requests") {
  TempDir tmp;
  GenerateConfig cfg;
  cfg.per_grade_counts = {1, 0, 0};
  cfg.out_dir = tmp.path.string();
  CHECK_THROWS_AS(generate_dataset({}, cfg), DataError);

  const auto sources = synthesize_sources(1, 48, 2);
  cfg.image_format = "bmp";
  CHECK_THROWS_AS(generate_dataset(sources, cfg), ConfigError);
}

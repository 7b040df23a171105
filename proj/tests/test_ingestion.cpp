#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "automac/errors.hpp"
#include "automac/image_io.hpp"
#include "automac/ingestion.hpp"
#include "automac/rng.hpp"

using namespace automac;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("automac_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ImageF ramp_image(int h, int w) {
  ImageF img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x) = static_cast<float>(y * w + x);
  return img;
}

void write_manifest_file(const fs::path& p, const std::string& body) {
  std::ofstream os(p);
  os << body;
}

ManifestEntry entry_with(Contrast c, Orientation o, MotionGrade g) {
  ManifestEntry e;
  e.image_path = "x.amac";
  e.contrast = c;
  e.orientation = o;
  e.grade = g;
  e.provenance = Provenance::Synthetic;
  return e;
}

}  // namespace

TEST_CASE("amac container round-trips bit-exactly") {
  TempDir tmp;
  const ImageF img = ramp_image(40, 33);
  const auto p = (tmp.path / "a.amac").string();
  write_amac(p, img);
  const ImageF back = read_amac(p);
  REQUIRE(back.h == 40);
  REQUIRE(back.w == 33);
  CHECK(back.px == img.px);
}

TEST_CASE("png16 round-trips integer-valued images exactly") {
  TempDir tmp;
  ImageF img(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) img.at(y, x) = static_cast<float>((y * 32 + x) * 64 % 65536);
  // make sure min and max hit the quantization anchors
  img.at(0, 0) = 0.0f;
  img.at(31, 31) = 65535.0f;
  const auto p = (tmp.path / "a.png").string();
  write_png16(p, img);
  const ImageF back = read_png16(p);
  REQUIRE(back.h == 32);
  CHECK(max_abs_diff(back, img) == 0.0f);
}

TEST_CASE("manifest loads well-formed rows") {
  TempDir tmp;
  write_amac((tmp.path / "s0.amac").string(), ramp_image(32, 32));
  write_amac((tmp.path / "s1.amac").string(), ramp_image(32, 32));
  std::string body = "image_path,contrast,orientation,grade,provenance\n";
  for (int i = 0; i < 12; ++i) {
    body += "s" + std::to_string(i % 2) + ".amac,T1w,axial,no_motion,synthetic\n";
  }
  write_manifest_file(tmp.path / "m.csv", body);
  const Manifest m = load_manifest((tmp.path / "m.csv").string());
  CHECK(m.entries.size() == 12);
  CHECK(m.entries[0].grade == MotionGrade::NoMotion);

  const SliceRecord r = load_slice(m, m.entries[0]);
  CHECK(r.id == "s0");
  CHECK(r.pixels.h == 32);
}

TEST_CASE("manifest rejects unknown contrast naming the row") {
  TempDir tmp;
  write_amac((tmp.path / "s.amac").string(), ramp_image(32, 32));
  write_manifest_file(tmp.path / "m.csv",
                      "image_path,contrast,orientation,grade,provenance\n"
                      "s.amac,T1w,axial,no_motion,synthetic\n"
                      "s.amac,T1rho,axial,no_motion,synthetic\n");
  try {
    load_manifest((tmp.path / "m.csv").string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("T1rho") != std::string::npos);
  }
}

TEST_CASE("manifest rejects empty and missing-file cases") {
  TempDir tmp;
  write_manifest_file(tmp.path / "empty.csv", "image_path,contrast,orientation,grade,provenance\n");
  CHECK_THROWS_WITH_AS(load_manifest((tmp.path / "empty.csv").string()),
                       doctest::Contains("empty manifest"), DataError);

  write_manifest_file(tmp.path / "m.csv",
                      "image_path,contrast,orientation,grade,provenance\n"
                      "ghost.amac,T1w,axial,no_motion,synthetic\n");
  CHECK_THROWS_AS(load_manifest((tmp.path / "m.csv").string()), DataError);

  CHECK_THROWS_AS(load_manifest((tmp.path / "nonexistent.csv").string()), DataError);
}

TEST_CASE("manifest save/load round-trip") {
  TempDir tmp;
  write_amac((tmp.path / "a.amac").string(), ramp_image(32, 32));
  Manifest m;
  m.root = tmp.path.string();
  auto e = entry_with(Contrast::FLAIR, Orientation::Sagittal, MotionGrade::SevereMotion);
  e.image_path = "a.amac";
  m.entries.push_back(e);
  save_manifest((tmp.path / "m.csv").string(), m);
  const Manifest back = load_manifest((tmp.path / "m.csv").string());
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].contrast == Contrast::FLAIR);
  CHECK(back.entries[0].orientation == Orientation::Sagittal);
  CHECK(back.entries[0].grade == MotionGrade::SevereMotion);
}

TEST_CASE("preprocess produces standardized 3x224x224 tensors") {
  SliceRecord r;
  r.id = "p";
  r.pixels = ramp_image(100, 80);
  r.grade = MotionGrade::NoMotion;
  const PreprocessedImage out = preprocess(r);
  REQUIRE(out.tensor.size() == 3u * 224 * 224);
  CHECK_FALSE(out.constant_input);

  const std::size_t plane = 224 * 224;
  double mean = 0.0;
  for (std::size_t i = 0; i < plane; ++i) mean += out.tensor[i];
  mean /= static_cast<double>(plane);
  double var = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double d = out.tensor[i] - mean;
    var += d * d;
  }
  const double sd = std::sqrt(var / static_cast<double>(plane));
  CHECK(std::abs(mean) < 1e-4);
  CHECK(std::abs(sd - 1.0) < 1e-4);
  // channels identical
  for (std::size_t i = 0; i < plane; i += 997) {
    CHECK(out.tensor[i] == out.tensor[plane + i]);
    CHECK(out.tensor[i] == out.tensor[2 * plane + i]);
  }
}

TEST_CASE("preprocess of a constant image flags the fallback") {
  SliceRecord r;
  r.id = "c";
  r.pixels = ImageF(64, 64, 3.5f);
  const PreprocessedImage out = preprocess(r);
  CHECK(out.constant_input);
  for (float v : out.tensor) CHECK(v == 0.0f);
}

TEST_CASE("preprocess is deterministic and idempotent in distribution") {
  SliceRecord r;
  r.id = "d";
  r.pixels = ramp_image(224, 224);
  const auto a = preprocess(r);
  const auto b = preprocess(r);
  CHECK(a.tensor == b.tensor);

  // feed the standardized 224x224 plane back through: stats stay put
  SliceRecord again;
  again.id = "d2";
  again.pixels = ImageF(224, 224);
  std::copy_n(a.tensor.begin(), 224 * 224, again.pixels.px.begin());
  const auto c = preprocess(again);
  const std::size_t plane = 224 * 224;
  double max_dev = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    max_dev = std::max(max_dev, std::abs(static_cast<double>(c.tensor[i]) - a.tensor[i]));
  }
  CHECK(max_dev < 1e-4);
}

TEST_CASE("split spec validation") {
  CHECK_NOTHROW(validate_split_spec({0.5, 0.2, 0.3, 0}));
  CHECK_THROWS_AS(validate_split_spec({0.5, 0.5, 0.0, 0}), ValidationError);
  CHECK_THROWS_AS(validate_split_spec({0.5, 0.2, 0.2, 0}), ValidationError);
}

TEST_CASE("single-stratum split matches exact ratios") {
  std::vector<ManifestEntry> entries(10, entry_with(Contrast::T1w, Orientation::Axial,
                                                    MotionGrade::NoMotion));
  const SplitResult r = stratified_split(entries, {0.5, 0.2, 0.3, 42});
  CHECK(r.train.size() == 5);
  CHECK(r.val.size() == 2);
  CHECK(r.test.size() == 3);
}

TEST_CASE("split is an exhaustive disjoint partition with per-stratum ±1 accuracy") {
  std::vector<ManifestEntry> entries;
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    entries.push_back(entry_with(static_cast<Contrast>(rng.uniform_int(4)),
                                 static_cast<Orientation>(rng.uniform_int(3)),
                                 static_cast<MotionGrade>(rng.uniform_int(3))));
  }
  const SplitSpec spec{0.6, 0.1, 0.3, 11};
  const SplitResult r = stratified_split(entries, spec);

  std::set<std::size_t> seen;
  for (auto i : r.train) seen.insert(i);
  for (auto i : r.val) seen.insert(i);
  for (auto i : r.test) seen.insert(i);
  CHECK(seen.size() == entries.size());
  CHECK(r.train.size() + r.val.size() + r.test.size() == entries.size());

  // per-stratum deviation from ratios is at most 1
  std::map<std::tuple<int, int, int>, std::array<long, 4>> tally;
  auto key = [&](std::size_t i) {
    return std::make_tuple(static_cast<int>(entries[i].contrast),
                           static_cast<int>(entries[i].orientation),
                           static_cast<int>(*entries[i].grade));
  };
  for (auto i : r.train) tally[key(i)][0]++;
  for (auto i : r.val) tally[key(i)][1]++;
  for (auto i : r.test) tally[key(i)][2]++;
  for (auto& [k, v] : tally) v[3] = v[0] + v[1] + v[2];
  const std::array<double, 3> ratios = {spec.train, spec.val, spec.test};
  for (const auto& [k, v] : tally) {
    for (int s = 0; s < 3; ++s) {
      CHECK(std::abs(static_cast<double>(v[s]) - ratios[s] * static_cast<double>(v[3])) <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("paper-scale composition lands within rounding slack of the published sizes") {
  // orientation marginals 3183/1804/313/4 over four contrasts, three grades
  std::vector<ManifestEntry> entries;
  const std::array<std::pair<Orientation, int>, 4> orient = {
      std::make_pair(Orientation::Axial, 3183), std::make_pair(Orientation::Coronal, 1804),
      std::make_pair(Orientation::Sagittal, 313), std::make_pair(Orientation::Oblique, 4)};
  Rng rng(5);
  for (const auto& [o, n] : orient) {
    for (int i = 0; i < n; ++i) {
      entries.push_back(entry_with(static_cast<Contrast>(rng.uniform_int(4)), o,
                                   static_cast<MotionGrade>(rng.uniform_int(3))));
    }
  }
  REQUIRE(entries.size() == 5304);
  const SplitResult r = stratified_split(entries, {0.481, 0.090, 0.429, 3});
  CHECK(std::abs(static_cast<long>(r.train.size()) - 2552) <= 3);
  CHECK(std::abs(static_cast<long>(r.val.size()) - 478) <= 3);
  CHECK(std::abs(static_cast<long>(r.test.size()) - 2274) <= 3);
}

TEST_CASE("split determinism in the seed") {
  std::vector<ManifestEntry> entries;
  Rng rng(13);
  for (int i = 0; i < 120; ++i) {
    entries.push_back(entry_with(static_cast<Contrast>(rng.uniform_int(2)), Orientation::Axial,
                                 static_cast<MotionGrade>(rng.uniform_int(3))));
  }
  const SplitSpec spec{0.5, 0.25, 0.25, 99};
  const SplitResult a = stratified_split(entries, spec);
  const SplitResult b = stratified_split(entries, spec);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  int differing = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    SplitSpec other = spec;
    other.seed = 1000 + s;
    if (stratified_split(entries, other).train != a.train) ++differing;
  }
  CHECK(differing >= 19);
}

TEST_CASE("split rejects records without a grade") {
  std::vector<ManifestEntry> entries(3, entry_with(Contrast::T1w, Orientation::Axial,
                                                   MotionGrade::NoMotion));
  entries[1].grade.reset();
  CHECK_THROWS_AS(stratified_split(entries, {0.5, 0.25, 0.25, 0}), DataError);
}

TEST_CASE("tiny strata assign members in ratio-descending order") {
  std::vector<ManifestEntry> entries(2, entry_with(Contrast::PDw, Orientation::Oblique,
                                                   MotionGrade::SubtleMotion));
  const SplitResult r = stratified_split(entries, {0.481, 0.090, 0.429, 0});
  CHECK(r.train.size() == 1);  // largest ratio
  CHECK(r.test.size() == 1);   // second largest
  CHECK(r.val.empty());
}

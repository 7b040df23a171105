#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include "automac/encoder.hpp"
#include "automac/errors.hpp"
#include "automac/losses.hpp"
#include "automac/motion_sim.hpp"
#include "automac/rng.hpp"
#include "automac/training.hpp"

// torch's c10 logging layer defines glog-style CHECK macros; clear them so the
// doctest assertion macros win in this translation unit.
#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LE
#undef CHECK_LT
#undef CHECK_GE
#undef CHECK_GT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace automac;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() /
           ("automac_train_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SliceRecord slice_of(ImageF img, std::string id, MotionGrade grade) {
  SliceRecord r;
  r.id = std::move(id);
  r.pixels = std::move(img);
  r.grade = grade;
  r.provenance = Provenance::Synthetic;
  return r;
}

// Phantom slices pushed through the k-space corruption at grade-typical
// severities, so the classes differ the way the classifier will see them.
std::vector<SliceRecord> motion_toy_set(int per_grade, int size, std::uint64_t seed) {
  const std::array<double, kNumGrades> fractions = {0.0, 0.12, 0.45};
  std::vector<SliceRecord> out;
  int k = 0;
  for (int g = 0; g < kNumGrades; ++g) {
    for (int i = 0; i < per_grade; ++i, ++k) {
      Rng rng = Rng::derive(seed, {static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(i)});
      ImageF phantom = make_phantom(size, rng);
      MotionParams params;
      params.corrupt_fraction = fractions[static_cast<std::size_t>(g)];
      params.max_rotation_deg = 6.0;
      params.max_shift_px = 6.0;
      params.seed = seed * 1000003ULL + static_cast<std::uint64_t>(k);
      out.push_back(slice_of(simulate_motion(phantom, params), "toy_" + std::to_string(k),
                             static_cast<MotionGrade>(g)));
    }
  }
  return out;
}

// Three grossly distinct spatial patterns (one per grade) with mild noise;
// linearly separable in any reasonable feature space.
std::vector<SliceRecord> pattern_set(int per_grade, int size, std::uint64_t seed) {
  std::vector<SliceRecord> out;
  int k = 0;
  for (int g = 0; g < kNumGrades; ++g) {
    for (int i = 0; i < per_grade; ++i, ++k) {
      Rng rng = Rng::derive(seed, {static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(i)});
      ImageF img(size, size);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          double base = 0.0;
          if (g == 0) base = static_cast<double>(x) / (size - 1);
          if (g == 1) base = static_cast<double>(y) / (size - 1);
          if (g == 2) base = ((y / 8 + x / 8) % 2 == 0) ? 1.0 : 0.0;
          img.at(y, x) = static_cast<float>(base + 0.05 * rng.uniform());
        }
      }
      out.push_back(slice_of(std::move(img), "pat_" + std::to_string(k),
                             static_cast<MotionGrade>(g)));
    }
  }
  return out;
}

EncoderConfig tiny_encoder_config(std::vector<std::int64_t> fc_widths = {64}) {
  EncoderConfig c;
  c.backbone = "tiny";
  c.fc_widths = std::move(fc_widths);
  c.pretrained = false;
  return c;
}

TrainConfig toy_train_config(const fs::path& dir, Stage1Method method) {
  TrainConfig c;
  c.stage1_method = method;
  c.stage1_epochs = 6;
  c.stage2_epochs = 25;
  c.batch_size = 6;
  c.lr = 1e-3;
  c.seed = 7;
  c.checkpoint_dir = dir.string();
  return c;
}

double cosine(const Embedding& a, const Embedding& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  return dot / std::sqrt(na * nb);
}

std::int64_t param_count(const torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST_CASE("train config validation rejects bad values") {
  TempDir tmp;
  TrainConfig good = toy_train_config(tmp.path, Stage1Method::Supcon);
  CHECK_NOTHROW(validate_train_config(good));

  TrainConfig c = good;
  c.batch_size = 1;
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.stage1_epochs = 0;
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.lr = 0.0;
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.lr_schedule = "step";
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.temperature = -0.1;
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.augment.crop_scale_min = 0.0;
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.augment.intensity_jitter = 1.0;
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.checkpoint_dir.clear();
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  c = good;
  c.stop_after_epoch = 0;
  CHECK_THROWS_AS(validate_train_config(c), ConfigError);
}

TEST_CASE("train config JSON round-trips and rejects unknown keys") {
  TrainConfig c;
  c.stage1_method = Stage1Method::Simclr;
  c.stage1_epochs = 11;
  c.stage2_epochs = 4;
  c.batch_size = 12;
  c.lr = 3e-4;
  c.lr_schedule = "constant";
  c.temperature = 0.5;
  c.augment.hflip = false;
  c.augment.max_rotation_deg = 7.5;
  c.augment.crop_scale_min = 0.9;
  c.augment.intensity_jitter = 0.05;
  c.seed = 99;
  c.checkpoint_dir = "/tmp/ckpt";
  c.stage2_cached_embeddings = false;
  c.resume = true;
  c.stop_after_epoch = 3;

  const TrainConfig back = train_config_from_json(train_config_to_json(c));
  CHECK(back.stage1_method == Stage1Method::Simclr);
  CHECK(back.stage1_epochs == 11);
  CHECK(back.stage2_epochs == 4);
  CHECK(back.batch_size == 12);
  CHECK(back.lr == doctest::Approx(3e-4));
  CHECK(back.lr_schedule == "constant");
  CHECK(back.temperature == doctest::Approx(0.5));
  CHECK(back.augment.hflip == false);
  CHECK(back.augment.max_rotation_deg == doctest::Approx(7.5));
  CHECK(back.augment.crop_scale_min == doctest::Approx(0.9));
  CHECK(back.augment.intensity_jitter == doctest::Approx(0.05));
  CHECK(back.seed == 99);
  CHECK(back.checkpoint_dir == "/tmp/ckpt");
  CHECK(back.stage2_cached_embeddings == false);
  CHECK(back.resume == true);
  CHECK(back.stop_after_epoch.has_value());
  CHECK(*back.stop_after_epoch == 3);

  c.stop_after_epoch.reset();
  CHECK_FALSE(train_config_from_json(train_config_to_json(c)).stop_after_epoch.has_value());

  CHECK_THROWS_AS(train_config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"augment", {{"zoom", 2.0}}}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"batch_size", "many"}}), ConfigError);
  CHECK_THROWS_AS(stage1_method_from_string("triplet"), ConfigError);
  CHECK(stage1_method_from_string("supcon") == Stage1Method::Supcon);
  CHECK(to_string(Stage1Method::None) == "none");
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

TEST_CASE("balanced batches give every grade equal presence") {
  std::vector<SliceRecord> records;
  for (int g = 0; g < kNumGrades; ++g)
    for (int i = 0; i < 4; ++i)
      records.push_back(slice_of(ImageF(32, 32, 0.5f), "r" + std::to_string(g * 4 + i),
                                 static_cast<MotionGrade>(g)));

  Rng rng(3);
  const auto batches = balanced_batches(records, 6, rng);
  REQUIRE(batches.size() == 2);
  std::multiset<std::size_t> seen;
  for (const auto& batch : batches) {
    REQUIRE(batch.size() == 6);
    std::array<int, kNumGrades> counts{};
    for (std::size_t i : batch) {
      ++counts[static_cast<std::size_t>(*records[i].grade)];
      seen.insert(i);
    }
    for (int g = 0; g < kNumGrades; ++g) CHECK(counts[static_cast<std::size_t>(g)] == 2);
  }
  // even counts divide evenly: each record exactly once
  CHECK(seen.size() == records.size());
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == records.size());

  // determinism in the stream
  Rng rng_a(3), rng_b(3);
  CHECK(balanced_batches(records, 6, rng_a) == balanced_batches(records, 6, rng_b));
}

TEST_CASE("balanced batches cycle short grades and reject infeasible ones") {
  std::vector<SliceRecord> records;
  const std::array<int, kNumGrades> counts = {5, 2, 9};
  int k = 0;
  for (int g = 0; g < kNumGrades; ++g)
    for (int i = 0; i < counts[static_cast<std::size_t>(g)]; ++i, ++k)
      records.push_back(
          slice_of(ImageF(32, 32, 0.1f), "r" + std::to_string(k), static_cast<MotionGrade>(g)));

  Rng rng(11);
  const auto batches = balanced_batches(records, 6, rng);
  REQUIRE(batches.size() == 5);  // ceil(9 / 2)
  std::set<std::size_t> largest_seen;
  for (const auto& batch : batches) {
    std::array<int, kNumGrades> per{};
    for (std::size_t i : batch) {
      ++per[static_cast<std::size_t>(*records[i].grade)];
      if (*records[i].grade == MotionGrade::SevereMotion) largest_seen.insert(i);
    }
    for (int g = 0; g < kNumGrades; ++g) CHECK(per[static_cast<std::size_t>(g)] == 2);
  }
  // the largest grade fills its 10 slots with all 9 distinct samples plus one repeat
  CHECK(largest_seen.size() == 9);

  // a grade with a single sample is infeasible
  std::vector<SliceRecord> starved = records;
  starved.erase(std::remove_if(starved.begin(), starved.end(),
                               [](const SliceRecord& r) {
                                 return *r.grade == MotionGrade::SubtleMotion && r.id != "r5";
                               }),
                starved.end());
  Rng rng2(1);
  CHECK_THROWS_WITH_AS(balanced_batches(starved, 6, rng2),
                       doctest::Contains("subtle_motion"), DataError);

  // batch too small to hold two of each grade
  Rng rng3(1);
  CHECK_THROWS_AS(balanced_batches(records, 5, rng3), ConfigError);

  // unlabeled record
  std::vector<SliceRecord> unlabeled = records;
  unlabeled[0].grade.reset();
  Rng rng4(1);
  CHECK_THROWS_AS(balanced_batches(unlabeled, 6, rng4), DataError);
}

TEST_CASE("shuffled batches partition the index range") {
  Rng rng(5);
  const auto batches = shuffled_batches(10, 4, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);

  Rng rng_a(5), rng_b(5);
  CHECK(shuffled_batches(10, 4, rng_a) == shuffled_batches(10, 4, rng_b));
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

TEST_CASE("augmentation is deterministic and respects disabled knobs") {
  Rng src(2);
  const ImageF img = make_phantom(64, src);

  AugmentSpec off;
  off.hflip = false;
  off.max_rotation_deg = 0.0;
  off.crop_scale_min = 1.0;
  off.intensity_jitter = 0.0;
  Rng rng_off(4);
  const ImageF same = augment_image(img, off, rng_off);
  REQUIRE(same.h == img.h);
  REQUIRE(same.w == img.w);
  CHECK(max_abs_diff(same, img) == 0.0f);

  AugmentSpec on;  // defaults: flip, rotate, crop, jitter
  Rng rng_a = Rng::derive(9, {1, 2, 3});
  Rng rng_b = Rng::derive(9, {1, 2, 3});
  const ImageF view_a = augment_image(img, on, rng_a);
  const ImageF view_b = augment_image(img, on, rng_b);
  REQUIRE(view_a.h == view_b.h);
  REQUIRE(view_a.w == view_b.w);
  CHECK(max_abs_diff(view_a, view_b) == 0.0f);
  CHECK(all_finite(view_a));
  CHECK(view_a.h >= static_cast<int>(std::lround(img.h * on.crop_scale_min)) - 1);
  CHECK(view_a.h <= img.h);

  Rng rng_c = Rng::derive(9, {1, 2, 4});  // different stream -> different view
  const ImageF view_c = augment_image(img, on, rng_c);
  const bool differs = view_c.h != view_a.h || view_c.w != view_a.w ||
                       mean_abs_diff(view_c, ImageF(view_c.h, view_c.w, 0.0f)) !=
                           mean_abs_diff(view_a, ImageF(view_a.h, view_a.w, 0.0f));
  CHECK(differs);
}

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

TEST_CASE("supcon stage-1 reduces the loss and separates classes") {
  TempDir tmp;
  const auto train = motion_toy_set(4, 48, 21);
  const auto val = motion_toy_set(2, 48, 22);
  TrainConfig config = toy_train_config(tmp.path, Stage1Method::Supcon);

  Stage1Result result = train_stage1(tiny_encoder_config(), config, train, val);
  REQUIRE(!result.log.epochs.empty());

  std::vector<double> train_losses;
  for (const auto& e : result.log.epochs)
    if (e.split == "train") train_losses.push_back(e.loss);
  REQUIRE(static_cast<int>(train_losses.size()) == config.stage1_epochs);
  CHECK(train_losses.back() < train_losses.front());

  CHECK(result.log.best_epoch >= 0);
  CHECK(fs::exists(result.best_checkpoint));
  CHECK(fs::exists(result.last_checkpoint));
  CHECK_FALSE(result.stopped_early);

  // checkpoint round-trip: reloaded encoder embeds identically
  std::vector<PreprocessedImage> pre;
  for (const auto& r : val) pre.push_back(preprocess(r));
  const auto direct = embed(result.encoder, pre);
  Encoder reloaded = load_encoder_checkpoint(result.best_checkpoint).encoder;
  const auto loaded = embed(reloaded, pre);
  REQUIRE(direct.size() == loaded.size());
  for (std::size_t i = 0; i < direct.size(); ++i)
    for (std::size_t d = 0; d < direct[i].values.size(); ++d)
      CHECK(std::abs(direct[i].values[d] - loaded[i].values[d]) < 1e-6f);

  // at the selected checkpoint, same-grade embeddings sit closer than
  // different-grade ones
  double within = 0.0, between = 0.0;
  int n_within = 0, n_between = 0;
  for (std::size_t i = 0; i < direct.size(); ++i) {
    for (std::size_t j = i + 1; j < direct.size(); ++j) {
      const double c = cosine(direct[i], direct[j]);
      if (val[i].grade == val[j].grade) {
        within += c;
        ++n_within;
      } else {
        between += c;
        ++n_between;
      }
    }
  }
  CHECK(within / n_within > between / n_between);
}

TEST_CASE("simclr stage-1 never reads the labels") {
  const auto base = motion_toy_set(3, 48, 31);
  std::vector<SliceRecord> relabeled = base;
  for (std::size_t i = 0; i < relabeled.size(); ++i)
    relabeled[i].grade = static_cast<MotionGrade>((static_cast<int>(*relabeled[i].grade) + 1) %
                                                  kNumGrades);

  const auto run = [&](const std::vector<SliceRecord>& records, const fs::path& dir) {
    TrainConfig config = toy_train_config(dir, Stage1Method::Simclr);
    config.stage1_epochs = 2;
    config.batch_size = 4;
    std::vector<double> losses;
    for (const auto& e : train_stage1(tiny_encoder_config(), config, records, records).log.epochs)
      losses.push_back(e.loss);
    return losses;
  };

  TempDir dir_a, dir_b;
  const auto losses_a = run(base, dir_a.path);
  const auto losses_b = run(relabeled, dir_b.path);
  REQUIRE(losses_a.size() == losses_b.size());
  for (std::size_t i = 0; i < losses_a.size(); ++i)
    CHECK(losses_a[i] == doctest::Approx(losses_b[i]).epsilon(1e-12));
}

TEST_CASE("stage-1 method none returns an untrained encoder with checkpoints") {
  TempDir tmp;
  const auto records = motion_toy_set(2, 48, 41);
  TrainConfig config = toy_train_config(tmp.path, Stage1Method::None);
  Stage1Result result = train_stage1(tiny_encoder_config(), config, records, records);
  CHECK(result.log.epochs.empty());
  CHECK(fs::exists(result.best_checkpoint));
  CHECK(fs::exists(result.last_checkpoint));
  CHECK(fingerprint(*result.encoder) ==
        fingerprint(*load_encoder_checkpoint(result.best_checkpoint).encoder));
}

TEST_CASE("interrupted stage-1 resumes to the bit-identical encoder") {
  const auto train = motion_toy_set(3, 48, 51);
  const auto val = motion_toy_set(2, 48, 52);

  TempDir dir_full, dir_parts;
  TrainConfig config = toy_train_config(dir_full.path, Stage1Method::Supcon);
  config.stage1_epochs = 5;
  Stage1Result full = train_stage1(tiny_encoder_config(), config, train, val);

  TrainConfig first = config;
  first.checkpoint_dir = dir_parts.path.string();
  first.stop_after_epoch = 2;
  Stage1Result part = train_stage1(tiny_encoder_config(), first, train, val);
  CHECK(part.stopped_early);

  TrainConfig second = first;
  second.stop_after_epoch.reset();
  second.resume = true;
  Stage1Result resumed = train_stage1(tiny_encoder_config(), second, train, val);
  CHECK_FALSE(resumed.stopped_early);

  CHECK(fingerprint(*load_encoder_checkpoint(full.last_checkpoint).encoder) ==
        fingerprint(*load_encoder_checkpoint(resumed.last_checkpoint).encoder));
  CHECK(fingerprint(*full.encoder) == fingerprint(*resumed.encoder));
  CHECK(full.log.best_epoch == resumed.log.best_epoch);
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

TEST_CASE("stage-2 trains only the head and keeps the encoder frozen") {
  TempDir tmp;
  Encoder encoder = build_encoder(tiny_encoder_config());
  const std::string fp = fingerprint(*encoder);

  const auto train = pattern_set(10, 48, 61);
  const auto val = pattern_set(4, 48, 62);
  TrainConfig config = toy_train_config(tmp.path, Stage1Method::Supcon);
  config.stage2_epochs = 30;
  config.lr = 1e-2;
  config.lr_schedule = "constant";

  Stage2Result result = train_stage2(encoder, config, train, val);
  CHECK(fingerprint(*encoder) == fp);
  CHECK(fs::exists(result.head_checkpoint));
  CHECK(result.log.best_metric >= 0.99);  // separable construction

  double max_train_acc = 0.0;
  for (const auto& e : result.log.epochs)
    if (e.split == "train" && e.accuracy) max_train_acc = std::max(max_train_acc, *e.accuracy);
  CHECK(max_train_acc == 1.0);

  LoadedHead loaded = load_head(result.head_checkpoint);
  CHECK(loaded.encoder_fingerprint == fp);
  CHECK(torch::equal(loaded.head->fc->weight, result.head->fc->weight));
  CHECK(torch::equal(loaded.head->fc->bias, result.head->fc->bias));
}

TEST_CASE("cached and on-the-fly stage-2 embeddings give the same head") {
  TempDir dir_a, dir_b;
  Encoder encoder = build_encoder(tiny_encoder_config());
  const auto train = motion_toy_set(6, 48, 71);
  const auto val = motion_toy_set(2, 48, 72);

  TrainConfig cached = toy_train_config(dir_a.path, Stage1Method::Supcon);
  cached.stage2_epochs = 8;
  cached.stage2_cached_embeddings = true;
  TrainConfig onfly = cached;
  onfly.checkpoint_dir = dir_b.path.string();
  onfly.stage2_cached_embeddings = false;

  Stage2Result head_a = train_stage2(encoder, cached, train, val);
  Stage2Result head_b = train_stage2(encoder, onfly, train, val);

  const auto wa = head_a.head->fc->weight, wb = head_b.head->fc->weight;
  const auto ba = head_a.head->fc->bias, bb = head_b.head->fc->bias;
  CHECK((wa - wb).abs().max().item<double>() <= 1e-5);
  CHECK((ba - bb).abs().max().item<double>() <= 1e-5);
}

TEST_CASE("grade head separates simplex-corner embedding clusters") {
  torch::manual_seed(12);
  const int dim = 8, per_class = 100;
  const auto make_split = [&](int n_per) {
    torch::Tensor x = torch::empty({n_per * kNumGrades, dim});
    torch::Tensor y = torch::empty({n_per * kNumGrades}, torch::kInt64);
    for (int g = 0; g < kNumGrades; ++g) {
      torch::Tensor corner = torch::zeros({dim});
      corner[g] = 3.0;
      for (int i = 0; i < n_per; ++i) {
        x[g * n_per + i] = corner + 0.1 * torch::randn({dim});
        y[g * n_per + i] = g;
      }
    }
    return std::make_pair(x, y);
  };
  const auto [train_x, train_y] = make_split(per_class);
  const auto [val_x, val_y] = make_split(30);

  GradeHead head(dim);
  torch::optim::Adam opt(head->parameters(), torch::optim::AdamOptions(0.05));
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad();
    auto loss = losses::cross_entropy_loss(head->forward(train_x), train_y);
    loss.backward();
    opt.step();
  }
  torch::NoGradGuard guard;
  const double acc =
      head->forward(val_x).argmax(1).eq(val_y).to(torch::kFloat64).mean().item<double>();
  CHECK(acc >= 0.99);
}

// ---------------------------------------------------------------------------
// Supervised baseline
// ---------------------------------------------------------------------------

TEST_CASE("supervised baseline overfits the toy set and is seed-deterministic") {
  const auto train = pattern_set(10, 48, 81);  // 30 slices
  const auto val = pattern_set(4, 48, 82);

  TempDir dir_a;
  TrainConfig config = toy_train_config(dir_a.path, Stage1Method::None);
  config.stage1_epochs = 25;
  config.lr = 2e-3;

  SupervisedResult result = train_supervised_baseline(tiny_encoder_config(), config, train, val);
  double max_train_acc = 0.0;
  for (const auto& e : result.log.epochs)
    if (e.split == "train" && e.accuracy) max_train_acc = std::max(max_train_acc, *e.accuracy);
  CHECK(max_train_acc == 1.0);
  CHECK(fs::exists(result.encoder_checkpoint));
  CHECK(fs::exists(result.head_checkpoint));
  CHECK(load_head(result.head_checkpoint).encoder_fingerprint == fingerprint(*result.encoder));

  // identical architecture as the two-stage arms
  Encoder fresh = build_encoder(tiny_encoder_config());
  GradeHead fresh_head(fresh->config.embedding_dim());
  CHECK(param_count(*result.encoder) + param_count(*result.head) ==
        param_count(*fresh) + param_count(*fresh_head));

  TempDir dir_b;
  TrainConfig rerun = config;
  rerun.checkpoint_dir = dir_b.path.string();
  SupervisedResult again = train_supervised_baseline(tiny_encoder_config(), rerun, train, val);
  CHECK(again.log.best_metric == result.log.best_metric);
  CHECK(fingerprint(*again.encoder) == fingerprint(*result.encoder));
}

// ---------------------------------------------------------------------------
// Head artifact
// ---------------------------------------------------------------------------

TEST_CASE("head artifact round-trips and rejects foreign archives") {
  TempDir tmp;
  torch::manual_seed(5);
  GradeHead head(16);
  const std::string path = (tmp.path / "head.ckpt").string();
  save_head(path, head, "fp_abc", {{"note", "unit"}});

  LoadedHead loaded = load_head(path);
  CHECK(loaded.encoder_fingerprint == "fp_abc");
  CHECK(loaded.meta.at("note") == "unit");
  CHECK(torch::equal(loaded.head->fc->weight, head->fc->weight));
  CHECK(torch::equal(loaded.head->fc->bias, head->fc->bias));
  CHECK(loaded.head->fc->weight.size(1) == 16);

  // an encoder checkpoint is not a head checkpoint
  Encoder enc = build_encoder(tiny_encoder_config());
  const std::string enc_path = (tmp.path / "enc.ckpt").string();
  save_encoder_checkpoint(enc_path, enc);
  CHECK_THROWS_AS(load_head(enc_path), ContractError);
}

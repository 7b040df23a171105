#include "automac/training.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "automac/errors.hpp"
#include "automac/image.hpp"
#include "automac/losses.hpp"
#include "automac/serialize.hpp"

namespace automac {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

Stage1Method stage1_method_from_string(const std::string& name) {
  if (name == "supcon") return Stage1Method::Supcon;
  if (name == "simclr") return Stage1Method::Simclr;
  if (name == "none") return Stage1Method::None;
  throw ConfigError("unknown stage1_method '" + name + "' (expected supcon, simclr or none)");
}

std::string to_string(Stage1Method method) {
  switch (method) {
    case Stage1Method::Supcon: return "supcon";
    case Stage1Method::Simclr: return "simclr";
    case Stage1Method::None: return "none";
  }
  throw ConfigError("invalid stage1_method value");
}

void validate_train_config(const TrainConfig& config) {
  if (config.stage1_epochs < 1) throw ConfigError("stage1_epochs must be >= 1");
  if (config.stage2_epochs < 1) throw ConfigError("stage2_epochs must be >= 1");
  if (config.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (config.lr <= 0.0) throw ConfigError("lr must be positive");
  if (config.lr_schedule != "cosine" && config.lr_schedule != "constant")
    throw ConfigError("lr_schedule must be 'cosine' or 'constant', got '" + config.lr_schedule +
                      "'");
  if (config.temperature <= 0.0) throw ConfigError("temperature must be positive");
  if (config.augment.max_rotation_deg < 0.0 || config.augment.max_rotation_deg > 45.0)
    throw ConfigError("augment.max_rotation_deg must be in [0, 45]");
  if (config.augment.crop_scale_min <= 0.0 || config.augment.crop_scale_min > 1.0)
    throw ConfigError("augment.crop_scale_min must be in (0, 1]");
  if (config.augment.intensity_jitter < 0.0 || config.augment.intensity_jitter >= 1.0)
    throw ConfigError("augment.intensity_jitter must be in [0, 1)");
  if (config.checkpoint_dir.empty()) throw ConfigError("checkpoint_dir is required");
  if (config.stop_after_epoch && *config.stop_after_epoch < 1)
    throw ConfigError("stop_after_epoch must be >= 1 when set");
}

nlohmann::json train_config_to_json(const TrainConfig& config) {
  nlohmann::json augment{{"hflip", config.augment.hflip},
                         {"max_rotation_deg", config.augment.max_rotation_deg},
                         {"crop_scale_min", config.augment.crop_scale_min},
                         {"intensity_jitter", config.augment.intensity_jitter}};
  nlohmann::json j{{"stage1_method", to_string(config.stage1_method)},
                   {"stage1_epochs", config.stage1_epochs},
                   {"stage2_epochs", config.stage2_epochs},
                   {"batch_size", config.batch_size},
                   {"lr", config.lr},
                   {"lr_schedule", config.lr_schedule},
                   {"temperature", config.temperature},
                   {"augment", augment},
                   {"seed", config.seed},
                   {"checkpoint_dir", config.checkpoint_dir},
                   {"stage2_cached_embeddings", config.stage2_cached_embeddings},
                   {"resume", config.resume},
                   {"stop_after_epoch", nullptr}};
  if (config.stop_after_epoch) j["stop_after_epoch"] = *config.stop_after_epoch;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig config;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "stage1_method") {
        config.stage1_method = stage1_method_from_string(value.get<std::string>());
      } else if (key == "stage1_epochs") {
        config.stage1_epochs = value.get<int>();
      } else if (key == "stage2_epochs") {
        config.stage2_epochs = value.get<int>();
      } else if (key == "batch_size") {
        config.batch_size = value.get<int>();
      } else if (key == "lr") {
        config.lr = value.get<double>();
      } else if (key == "lr_schedule") {
        config.lr_schedule = value.get<std::string>();
      } else if (key == "temperature") {
        config.temperature = value.get<double>();
      } else if (key == "augment") {
        for (const auto& [akey, avalue] : value.items()) {
          if (akey == "hflip") {
            config.augment.hflip = avalue.get<bool>();
          } else if (akey == "max_rotation_deg") {
            config.augment.max_rotation_deg = avalue.get<double>();
          } else if (akey == "crop_scale_min") {
            config.augment.crop_scale_min = avalue.get<double>();
          } else if (akey == "intensity_jitter") {
            config.augment.intensity_jitter = avalue.get<double>();
          } else {
            throw ConfigError("unknown training.augment key '" + akey + "'");
          }
        }
      } else if (key == "seed") {
        config.seed = value.get<std::uint64_t>();
      } else if (key == "checkpoint_dir") {
        config.checkpoint_dir = value.get<std::string>();
      } else if (key == "stage2_cached_embeddings") {
        config.stage2_cached_embeddings = value.get<bool>();
      } else if (key == "resume") {
        config.resume = value.get<bool>();
      } else if (key == "stop_after_epoch") {
        if (!value.is_null()) config.stop_after_epoch = value.get<int>();
      } else {
        throw ConfigError("unknown training key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  return config;
}

nlohmann::json epoch_log_to_json(const EpochLog& entry) {
  nlohmann::json j{{"stage", entry.stage}, {"epoch", entry.epoch}, {"split", entry.split},
                   {"loss", entry.loss},   {"lr", entry.lr},       {"seconds", entry.seconds}};
  j["accuracy"] = entry.accuracy ? nlohmann::json(*entry.accuracy) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Sampling and augmentation
// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> balanced_batches(const std::vector<SliceRecord>& records,
                                                       int batch_size, Rng& rng) {
  std::array<std::vector<std::size_t>, kNumGrades> per_grade;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].grade)
      throw DataError("record '" + records[i].id +
                      "' has no grade; class-balanced sampling needs labels");
    per_grade[static_cast<std::size_t>(*records[i].grade)].push_back(i);
  }
  const int per = batch_size / kNumGrades;
  if (per < 2)
    throw ConfigError("batch_size " + std::to_string(batch_size) +
                      " cannot place two samples of every grade in a batch; need at least " +
                      std::to_string(2 * kNumGrades));
  std::size_t largest = 0;
  for (int g = 0; g < kNumGrades; ++g) {
    if (per_grade[g].size() < 2)
      throw DataError("class-balanced sampler infeasible: grade '" +
                      grade_name(static_cast<MotionGrade>(g)) + "' has " +
                      std::to_string(per_grade[g].size()) + " sample(s), need >= 2");
    largest = std::max(largest, per_grade[g].size());
  }

  // Every grade contributes `per` samples per batch; shorter grades cycle with
  // a reshuffle so each batch stays label-balanced.
  const std::size_t n_batches = (largest + per - 1) / static_cast<std::size_t>(per);
  std::array<std::vector<std::size_t>, kNumGrades> order = per_grade;
  std::array<std::size_t, kNumGrades> cursor{};
  for (auto& v : order) rng.shuffle(v);

  std::vector<std::vector<std::size_t>> batches(n_batches);
  for (auto& batch : batches) {
    batch.reserve(static_cast<std::size_t>(per) * kNumGrades);
    for (int g = 0; g < kNumGrades; ++g) {
      for (int k = 0; k < per; ++k) {
        if (cursor[g] == order[g].size()) {
          rng.shuffle(order[g]);
          cursor[g] = 0;
        }
        batch.push_back(order[g][cursor[g]++]);
      }
    }
  }
  return batches;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t count, int batch_size,
                                                       Rng& rng) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(count, i + static_cast<std::size_t>(batch_size));
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                     idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

ImageF augment_image(const ImageF& img, const AugmentSpec& spec, Rng& rng) {
  ImageF out = img;

  const double deg = rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg);
  if (std::abs(deg) > 1e-9) out = rigid_transform(out, deg, 0.0, 0.0);

  const double scale = rng.uniform(spec.crop_scale_min, 1.0);
  const int crop_h = std::max(8, static_cast<int>(std::lround(out.h * scale)));
  const int crop_w = std::max(8, static_cast<int>(std::lround(out.w * scale)));
  if (crop_h < out.h || crop_w < out.w) {
    const int oy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(out.h - crop_h + 1)));
    const int ox = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(out.w - crop_w + 1)));
    ImageF crop(crop_h, crop_w);
    for (int y = 0; y < crop_h; ++y)
      for (int x = 0; x < crop_w; ++x) crop.at(y, x) = out.at(oy + y, ox + x);
    out = std::move(crop);
  }

  if (spec.hflip && rng.uniform() < 0.5) {
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w / 2; ++x) std::swap(out.at(y, x), out.at(y, out.w - 1 - x));
  }

  if (spec.intensity_jitter > 0.0) {
    // Gamma on the min-max normalized image; preprocessing standardizes
    // afterwards, so only this non-affine part of the jitter survives.
    const double gamma = 1.0 + rng.uniform(-spec.intensity_jitter, spec.intensity_jitter);
    const auto [lo_it, hi_it] = std::minmax_element(out.px.begin(), out.px.end());
    const float lo = *lo_it;
    const float range = *hi_it - lo;
    if (range > 0.0f) {
      for (auto& v : out.px)
        v = std::pow((v - lo) / range, static_cast<float>(gamma));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Internal helpers
// ---------------------------------------------------------------------------

namespace {

constexpr double kPi = 3.141592653589793;

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

torch::Tensor labels_of(const std::vector<SliceRecord>& records,
                        const std::vector<std::size_t>& idxs, const char* stage) {
  std::vector<std::int64_t> v(idxs.size());
  for (std::size_t i = 0; i < idxs.size(); ++i) {
    const SliceRecord& r = records[idxs[i]];
    if (!r.grade)
      throw DataError(std::string(stage) + " training requires labeled records; '" + r.id +
                      "' has no grade");
    v[i] = static_cast<std::int64_t>(*r.grade);
  }
  return torch::tensor(v, torch::kInt64);
}

torch::Tensor index_tensor(const std::vector<std::size_t>& idxs) {
  std::vector<std::int64_t> v(idxs.begin(), idxs.end());
  return torch::tensor(v, torch::kInt64);
}

// One augmented view per record, with every draw coming from a stream keyed by
// (seed, stage, epoch, record index, view) so data order never shifts results.
torch::Tensor augmented_batch(const std::vector<SliceRecord>& records,
                              const std::vector<std::size_t>& idxs, const AugmentSpec& spec,
                              std::uint64_t seed, const char* stage_tag, int epoch, int view) {
  std::vector<PreprocessedImage> pre;
  pre.reserve(idxs.size());
  for (std::size_t i : idxs) {
    Rng rng = Rng::derive(seed, {hash_tag("augment"), hash_tag(stage_tag),
                                 static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(i),
                                 static_cast<std::uint64_t>(view)});
    pre.push_back(preprocess_image(augment_image(records[i].pixels, spec, rng), records[i].id));
  }
  return batch_from_preprocessed(pre);
}

std::vector<PreprocessedImage> preprocess_all(const std::vector<SliceRecord>& records) {
  std::vector<PreprocessedImage> pre;
  pre.reserve(records.size());
  for (const SliceRecord& r : records) pre.push_back(preprocess(r));
  return pre;
}

double scheduled_lr(const TrainConfig& config, int epoch, int total_epochs) {
  if (config.lr_schedule == "constant") return config.lr;
  return config.lr * 0.5 *
         (1.0 + std::cos(kPi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

void set_lr(torch::optim::Optimizer& optimizer, double lr) {
  for (auto& group : optimizer.param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void append_log(const std::string& dir, const std::string& file, TrainLog& log,
                const EpochLog& entry) {
  log.epochs.push_back(entry);
  if (dir.empty()) return;
  std::ofstream out(fs::path(dir) / file, std::ios::app);
  out << epoch_log_to_json(entry).dump() << "\n";
}

// Chunked eval-mode forward through the encoder; gradients and BN statistics
// stay untouched.
torch::Tensor eval_embeddings(Encoder& encoder, const std::vector<PreprocessedImage>& pre,
                              std::int64_t chunk = 32) {
  return embeddings_to_tensor(embed(encoder, pre, chunk));
}

std::vector<torch::Tensor> snapshot_state(torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const torch::Tensor& p : module.parameters()) out.push_back(p.detach().clone());
  for (const torch::Tensor& b : module.buffers()) out.push_back(b.detach().clone());
  return out;
}

void restore_state(torch::nn::Module& module, const std::vector<torch::Tensor>& snap) {
  torch::NoGradGuard guard;
  std::size_t k = 0;
  for (torch::Tensor p : module.parameters()) p.copy_(snap.at(k++));
  for (torch::Tensor b : module.buffers()) b.copy_(snap.at(k++));
}

double accuracy_of(const torch::Tensor& logits, const torch::Tensor& labels) {
  return logits.argmax(1).eq(labels).to(torch::kFloat64).mean().item<double>();
}

// Validation loss for stage 1. Supcon scores the plain preprocessed set; the
// simclr metric needs views, which come from fixed (epoch-independent) streams
// so the number is comparable across epochs.
double stage1_val_loss(Encoder& encoder, const TrainConfig& config,
                       const std::vector<SliceRecord>& val_records,
                       const std::vector<PreprocessedImage>& val_pre) {
  torch::NoGradGuard guard;
  const bool was_training = encoder->is_training();
  encoder->eval();
  double loss = 0.0;
  if (config.stage1_method == Stage1Method::Supcon) {
    torch::Tensor z = eval_embeddings(encoder, val_pre);
    torch::Tensor labels = labels_of(val_records, all_indices(val_records.size()), "supcon");
    loss = losses::supcon_loss(z, labels, config.temperature).item<double>();
  } else {
    std::vector<PreprocessedImage> view_a, view_b;
    view_a.reserve(val_records.size());
    view_b.reserve(val_records.size());
    for (std::size_t i = 0; i < val_records.size(); ++i) {
      for (int view = 0; view < 2; ++view) {
        Rng rng = Rng::derive(config.seed, {hash_tag("val_views"), static_cast<std::uint64_t>(i),
                                            static_cast<std::uint64_t>(view)});
        auto img = augment_image(val_records[i].pixels, config.augment, rng);
        (view == 0 ? view_a : view_b)
            .push_back(preprocess_image(img, val_records[i].id));
      }
    }
    torch::Tensor za = eval_embeddings(encoder, view_a);
    torch::Tensor zb = eval_embeddings(encoder, view_b);
    loss = losses::ntxent_loss(za, zb, config.temperature).item<double>();
  }
  if (was_training) encoder->train();
  return loss;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

Stage1Result train_stage1(const EncoderConfig& encoder_config, const TrainConfig& config,
                          const std::vector<SliceRecord>& train_records,
                          const std::vector<SliceRecord>& val_records) {
  validate_train_config(config);
  validate_encoder_config(encoder_config);
  if (train_records.empty() || val_records.empty())
    throw DataError("stage-1 training needs non-empty train and val record lists");

  fs::create_directories(config.checkpoint_dir);
  const fs::path dir(config.checkpoint_dir);
  const std::string best_path = (dir / "stage1_best.ckpt").string();
  const std::string last_path = (dir / "stage1_last.ckpt").string();
  const std::string opt_path = (dir / "stage1_last.opt").string();
  const std::string state_path = (dir / "stage1_state.json").string();
  const std::string log_file = "stage1_log.jsonl";

  EncoderConfig enc_cfg = encoder_config;
  enc_cfg.init_seed = Rng::derive(config.seed, {hash_tag("encoder_init")}).next_u64();

  Stage1Result result;
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;

  if (config.stage1_method == Stage1Method::None) {
    Encoder encoder = build_encoder(enc_cfg);
    const nlohmann::json extra{{"stage", "stage1"}, {"method", "none"}};
    save_encoder_checkpoint(best_path, encoder, extra);
    save_encoder_checkpoint(last_path, encoder, extra);
    result.encoder = encoder;
    return result;
  }

  const bool supcon = config.stage1_method == Stage1Method::Supcon;
  if (supcon) {
    // The validation loss runs over the whole val set, so every grade that
    // appears there needs a positive partner. Catch this before training
    // instead of mid-epoch with a cryptic batch error.
    std::array<std::int64_t, kNumGrades> counts{};
    for (const SliceRecord& r : val_records) {
      if (r.grade) ++counts[static_cast<std::size_t>(*r.grade)];
    }
    for (int g = 0; g < kNumGrades; ++g) {
      if (counts[static_cast<std::size_t>(g)] == 1)
        throw DataError("validation split has a single sample of grade '" +
                        grade_name(static_cast<MotionGrade>(g)) +
                        "'; the contrastive validation loss needs at least 2 per present grade "
                        "(enlarge data.split.val or the dataset)");
    }
  }
  const char* stage_tag = "stage1";
  const std::string method_name = to_string(config.stage1_method);

  Encoder encoder{nullptr};
  int start_epoch = 0;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();

  const bool resuming = config.resume && fs::exists(state_path) && fs::exists(last_path);
  if (resuming) {
    LoadedEncoder loaded = load_encoder_checkpoint(last_path);
    if (encoder_config_to_json(loaded.encoder->config) != encoder_config_to_json(enc_cfg))
      throw ConfigError("resume requested but '" + last_path +
                        "' was trained with a different encoder architecture");
    encoder = loaded.encoder;
    std::ifstream in(state_path);
    nlohmann::json state;
    try {
      in >> state;
      start_epoch = state.at("completed_epochs").get<int>();
      best_epoch = state.at("best_epoch").get<int>();
      best_val = state.at("best_val_loss").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corrupt resume state '" + state_path + "': " + e.what());
    }
  } else {
    encoder = build_encoder(enc_cfg);
  }

  torch::optim::Adam optimizer(encoder->parameters(), torch::optim::AdamOptions(config.lr));
  if (resuming && fs::exists(opt_path)) torch::load(optimizer, opt_path);

  const std::vector<PreprocessedImage> val_pre = preprocess_all(val_records);

  for (int epoch = start_epoch; epoch < config.stage1_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = scheduled_lr(config, epoch, config.stage1_epochs);
    set_lr(optimizer, lr);

    Rng batch_rng = Rng::derive(
        config.seed, {hash_tag("batches"), hash_tag(stage_tag), static_cast<std::uint64_t>(epoch)});
    const auto batches = supcon
                             ? balanced_batches(train_records, config.batch_size, batch_rng)
                             : shuffled_batches(train_records.size(), config.batch_size, batch_rng);

    encoder->train();
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (const auto& batch : batches) {
      if (!supcon && batch.size() < 2) continue;  // a lone sample has no contrastive signal
      optimizer.zero_grad();
      torch::Tensor loss;
      if (supcon) {
        torch::Tensor x =
            augmented_batch(train_records, batch, config.augment, config.seed, stage_tag, epoch, 0);
        loss = losses::supcon_loss(encoder->forward(x), labels_of(train_records, batch, "supcon"),
                                   config.temperature);
      } else {
        torch::Tensor xa =
            augmented_batch(train_records, batch, config.augment, config.seed, stage_tag, epoch, 0);
        torch::Tensor xb =
            augmented_batch(train_records, batch, config.augment, config.seed, stage_tag, epoch, 1);
        loss = losses::ntxent_loss(encoder->forward(xa), encoder->forward(xb), config.temperature);
      }
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>();
      ++used;
    }
    const double train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, used));
    append_log(config.checkpoint_dir, log_file, result.log,
               {method_name, epoch, "train", train_loss, std::nullopt, lr, seconds_since(t0)});

    const double val_loss = stage1_val_loss(encoder, config, val_records, val_pre);
    append_log(config.checkpoint_dir, log_file, result.log,
               {method_name, epoch, "val", val_loss, std::nullopt, lr, seconds_since(t0)});

    const nlohmann::json extra{{"stage", "stage1"}, {"method", method_name},
                               {"epoch", epoch},    {"val_loss", val_loss}};
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      save_encoder_checkpoint(best_path, encoder, extra);
    }
    save_encoder_checkpoint(last_path, encoder, extra);
    torch::save(optimizer, opt_path);
    {
      nlohmann::json state{{"completed_epochs", epoch + 1},
                           {"best_epoch", best_epoch},
                           {"best_val_loss", best_val}};
      std::ofstream out(state_path);
      out << state.dump(2) << "\n";
    }

    if (config.stop_after_epoch && epoch + 1 >= *config.stop_after_epoch &&
        epoch + 1 < config.stage1_epochs) {
      result.stopped_early = true;
      break;
    }
  }

  result.log.best_epoch = best_epoch;
  result.log.best_metric = best_val;
  result.encoder = load_encoder_checkpoint(best_path).encoder;
  return result;
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

Stage2Result train_stage2(Encoder& encoder, const TrainConfig& config,
                          const std::vector<SliceRecord>& train_records,
                          const std::vector<SliceRecord>& val_records) {
  validate_train_config(config);
  if (train_records.empty() || val_records.empty())
    throw DataError("stage-2 training needs non-empty train and val record lists");

  const std::string fp_before = fingerprint(*encoder);
  fs::create_directories(config.checkpoint_dir);
  const std::string head_path =
      (fs::path(config.checkpoint_dir) / "stage2_head.ckpt").string();
  const std::string log_file = "stage2_log.jsonl";

  const torch::Tensor train_labels =
      labels_of(train_records, all_indices(train_records.size()), "stage-2");
  const torch::Tensor val_labels =
      labels_of(val_records, all_indices(val_records.size()), "stage-2");

  // The head sees frozen, augmentation-free embeddings; caching them is a pure
  // speed choice and must not change the result.
  std::vector<PreprocessedImage> train_pre = preprocess_all(train_records);
  const torch::Tensor val_emb = eval_embeddings(encoder, preprocess_all(val_records));
  torch::Tensor train_emb;
  if (config.stage2_cached_embeddings) {
    train_emb = eval_embeddings(encoder, train_pre);
    train_pre.clear();
    train_pre.shrink_to_fit();
  }

  torch::manual_seed(Rng::derive(config.seed, {hash_tag("head_init")}).next_u64());
  GradeHead head(encoder->config.embedding_dim());
  torch::optim::Adam optimizer(head->parameters(), torch::optim::AdamOptions(config.lr));

  Stage2Result result;
  int best_epoch = -1;
  double best_acc = -1.0;
  std::vector<torch::Tensor> best_state;

  for (int epoch = 0; epoch < config.stage2_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = scheduled_lr(config, epoch, config.stage2_epochs);
    set_lr(optimizer, lr);

    Rng batch_rng = Rng::derive(
        config.seed, {hash_tag("batches"), hash_tag("stage2"), static_cast<std::uint64_t>(epoch)});
    const auto batches = shuffled_batches(train_records.size(), config.batch_size, batch_rng);

    head->train();
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (const auto& batch : batches) {
      const torch::Tensor sel = index_tensor(batch);
      torch::Tensor xb;
      if (config.stage2_cached_embeddings) {
        xb = train_emb.index_select(0, sel);
      } else {
        std::vector<PreprocessedImage> sub;
        sub.reserve(batch.size());
        for (std::size_t i : batch) sub.push_back(train_pre[i]);
        xb = eval_embeddings(encoder, sub);
      }
      const torch::Tensor yb = train_labels.index_select(0, sel);
      optimizer.zero_grad();
      torch::Tensor logits = head->forward(xb);
      torch::Tensor loss = losses::cross_entropy_loss(logits, yb);
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>() * static_cast<double>(batch.size());
      correct += logits.argmax(1).eq(yb).sum().item<std::int64_t>();
    }
    const double train_loss = loss_sum / static_cast<double>(train_records.size());
    const double train_acc =
        static_cast<double>(correct) / static_cast<double>(train_records.size());
    append_log(config.checkpoint_dir, log_file, result.log,
               {"stage2", epoch, "train", train_loss, train_acc, lr, seconds_since(t0)});

    head->eval();
    double val_loss = 0.0;
    double val_acc = 0.0;
    {
      torch::NoGradGuard guard;
      torch::Tensor logits = head->forward(val_emb);
      val_loss = losses::cross_entropy_loss(logits, val_labels).item<double>();
      val_acc = accuracy_of(logits, val_labels);
    }
    append_log(config.checkpoint_dir, log_file, result.log,
               {"stage2", epoch, "val", val_loss, val_acc, lr, seconds_since(t0)});

    if (val_acc > best_acc) {
      best_acc = val_acc;
      best_epoch = epoch;
      best_state = snapshot_state(*head);
    }
  }

  restore_state(*head, best_state);
  head->eval();

  const std::string fp_after = fingerprint(*encoder);
  if (fp_after != fp_before)
    throw ContractError("stage-2 training mutated the frozen encoder (fingerprint " + fp_before +
                        " -> " + fp_after + ")");

  save_head(head_path, head, fp_before,
            {{"stage", "stage2"}, {"best_epoch", best_epoch}, {"val_accuracy", best_acc}});
  result.head = head;
  result.head_checkpoint = head_path;
  result.log.best_epoch = best_epoch;
  result.log.best_metric = best_acc;
  return result;
}

// ---------------------------------------------------------------------------
// Supervised baseline
// ---------------------------------------------------------------------------

SupervisedResult train_supervised_baseline(const EncoderConfig& encoder_config,
                                           const TrainConfig& config,
                                           const std::vector<SliceRecord>& train_records,
                                           const std::vector<SliceRecord>& val_records) {
  validate_train_config(config);
  validate_encoder_config(encoder_config);
  if (train_records.empty() || val_records.empty())
    throw DataError("supervised training needs non-empty train and val record lists");

  fs::create_directories(config.checkpoint_dir);
  const fs::path dir(config.checkpoint_dir);
  const std::string enc_path = (dir / "supervised_encoder.ckpt").string();
  const std::string head_path = (dir / "supervised_head.ckpt").string();
  const std::string log_file = "supervised_log.jsonl";
  const char* stage_tag = "supervised";

  labels_of(train_records, all_indices(train_records.size()), "supervised");
  const torch::Tensor val_labels =
      labels_of(val_records, all_indices(val_records.size()), "supervised");

  // Same init stream as stage 1, so the arms start from identical weights.
  EncoderConfig enc_cfg = encoder_config;
  enc_cfg.init_seed = Rng::derive(config.seed, {hash_tag("encoder_init")}).next_u64();
  Encoder encoder = build_encoder(enc_cfg);
  torch::manual_seed(Rng::derive(config.seed, {hash_tag("head_init")}).next_u64());
  GradeHead head(encoder->config.embedding_dim());

  std::vector<torch::Tensor> params = encoder->parameters();
  for (const torch::Tensor& p : head->parameters()) params.push_back(p);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(config.lr));

  const std::vector<PreprocessedImage> val_pre = preprocess_all(val_records);

  SupervisedResult result;
  // The end-to-end arm gets the stage-1 epoch budget: it is the encoder
  // training of this arm.
  const int epochs = config.stage1_epochs;
  int best_epoch = -1;
  double best_acc = -1.0;
  std::vector<torch::Tensor> best_enc_state, best_head_state;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = scheduled_lr(config, epoch, epochs);
    set_lr(optimizer, lr);

    Rng batch_rng = Rng::derive(config.seed, {hash_tag("batches"), hash_tag(stage_tag),
                                              static_cast<std::uint64_t>(epoch)});
    const auto batches = shuffled_batches(train_records.size(), config.batch_size, batch_rng);

    encoder->train();
    head->train();
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (const auto& batch : batches) {
      torch::Tensor x =
          augmented_batch(train_records, batch, config.augment, config.seed, stage_tag, epoch, 0);
      const torch::Tensor yb = labels_of(train_records, batch, "supervised");
      optimizer.zero_grad();
      torch::Tensor logits = head->forward(encoder->forward(x));
      torch::Tensor loss = losses::cross_entropy_loss(logits, yb);
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>() * static_cast<double>(batch.size());
      correct += logits.argmax(1).eq(yb).sum().item<std::int64_t>();
    }
    const double train_loss = loss_sum / static_cast<double>(train_records.size());
    const double train_acc =
        static_cast<double>(correct) / static_cast<double>(train_records.size());
    append_log(config.checkpoint_dir, log_file, result.log,
               {stage_tag, epoch, "train", train_loss, train_acc, lr, seconds_since(t0)});

    double val_loss = 0.0;
    double val_acc = 0.0;
    {
      torch::NoGradGuard guard;
      head->eval();
      torch::Tensor logits = head->forward(eval_embeddings(encoder, val_pre));
      val_loss = losses::cross_entropy_loss(logits, val_labels).item<double>();
      val_acc = accuracy_of(logits, val_labels);
    }
    append_log(config.checkpoint_dir, log_file, result.log,
               {stage_tag, epoch, "val", val_loss, val_acc, lr, seconds_since(t0)});

    if (val_acc > best_acc) {
      best_acc = val_acc;
      best_epoch = epoch;
      best_enc_state = snapshot_state(*encoder);
      best_head_state = snapshot_state(*head);
    }
  }

  restore_state(*encoder, best_enc_state);
  restore_state(*head, best_head_state);
  encoder->eval();
  head->eval();

  save_encoder_checkpoint(enc_path, encoder,
                          {{"stage", "supervised"},
                           {"best_epoch", best_epoch},
                           {"val_accuracy", best_acc}});
  save_head(head_path, head, fingerprint(*encoder),
            {{"stage", "supervised"}, {"best_epoch", best_epoch}, {"val_accuracy", best_acc}});

  result.encoder = encoder;
  result.head = head;
  result.encoder_checkpoint = enc_path;
  result.head_checkpoint = head_path;
  result.log.best_epoch = best_epoch;
  result.log.best_metric = best_acc;
  return result;
}

// ---------------------------------------------------------------------------
// Head artifact
// ---------------------------------------------------------------------------

void save_head(const std::string& path, GradeHead& head, const std::string& encoder_fingerprint,
               const nlohmann::json& extra_meta) {
  nlohmann::json meta{{"kind", "grade_head"},
                      {"encoder_fingerprint", encoder_fingerprint},
                      {"embedding_dim", head->fc->weight.size(1)},
                      {"classes", kNumGrades}};
  for (const auto& [key, value] : extra_meta.items()) meta[key] = value;
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& p : head->named_parameters())
    tensors[p.key()] = p.value().detach().cpu().contiguous();
  save_tensor_archive(path, "AMHD", meta, tensors);
}

LoadedHead load_head(const std::string& path) {
  TensorArchive archive = load_tensor_archive(path, "AMHD");
  if (archive.meta.value("kind", "") != "grade_head")
    throw DataError("'" + path + "' is not a grade-head checkpoint");
  LoadedHead out;
  try {
    out.encoder_fingerprint = archive.meta.at("encoder_fingerprint").get<std::string>();
    const std::int64_t dim = archive.meta.at("embedding_dim").get<std::int64_t>();
    out.head = GradeHead(dim);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt grade-head metadata in '" + path + "': " + e.what());
  }
  out.meta = archive.meta;
  torch::NoGradGuard guard;
  for (const auto& p : out.head->named_parameters()) {
    auto it = archive.tensors.find(p.key());
    if (it == archive.tensors.end())
      throw DataError("grade-head checkpoint '" + path + "' is missing tensor '" + p.key() + "'");
    if (!p.value().sizes().equals(it->second.sizes()))
      throw DataError("grade-head tensor '" + p.key() + "' in '" + path +
                      "' has the wrong shape");
    p.value().copy_(it->second);
  }
  out.head->eval();
  return out;
}

}  // namespace automac

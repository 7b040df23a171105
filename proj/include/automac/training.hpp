#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "automac/encoder.hpp"
#include "automac/ingestion.hpp"
#include "automac/rng.hpp"
#include "automac/types.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Stage1Method { Supcon, Simclr, None };

Stage1Method stage1_method_from_string(const std::string& name);
std::string to_string(Stage1Method method);

// Geometry- and intensity-preserving view augmentations. Intensity jitter is
// applied as a gamma perturbation because the per-image standardization in
// preprocessing cancels any purely affine intensity change.
struct AugmentSpec {
  bool hflip = true;
  double max_rotation_deg = 10.0;
  double crop_scale_min = 0.8;     // crop scale drawn from [crop_scale_min, 1]
  double intensity_jitter = 0.1;   // gamma in [1 - j, 1 + j]
};

struct TrainConfig {
  Stage1Method stage1_method = Stage1Method::Supcon;
  int stage1_epochs = 50;
  int stage2_epochs = 30;
  int batch_size = 30;
  double lr = 1e-4;
  std::string lr_schedule = "cosine";  // "cosine" or "constant"
  double temperature = 0.07;
  AugmentSpec augment;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;
  bool stage2_cached_embeddings = true;
  bool resume = false;  // continue from the last per-epoch checkpoint if present

  // Stop after this many completed epochs (checkpoint is still written).
  // Exists so the resume path can be exercised deterministically.
  std::optional<int> stop_after_epoch;
};

void validate_train_config(const TrainConfig& config);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Logs
// ---------------------------------------------------------------------------

struct EpochLog {
  std::string stage;  // "stage1", "stage2", "supervised"
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  std::optional<double> accuracy;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_metric = 0.0;  // val loss (stage 1) or val accuracy (stage 2 / baseline)
};

nlohmann::json epoch_log_to_json(const EpochLog& entry);

// ---------------------------------------------------------------------------
// Sampling and augmentation
// ---------------------------------------------------------------------------

// Class-balanced batches: floor(batch_size / #grades) samples of every grade
// per batch, so every supcon anchor is guaranteed a positive. Classes shorter
// than the epoch demand are cycled with a reshuffle. A grade with fewer than
// two samples makes the sampler infeasible.
std::vector<std::vector<std::size_t>> balanced_batches(const std::vector<SliceRecord>& records,
                                                       int batch_size, Rng& rng);

// Plain shuffled batches of batch_size (the remainder batch is kept).
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t count, int batch_size,
                                                       Rng& rng);

// One stochastic view: rotate, crop, flip, gamma-jitter. Draws come only from
// `rng`, so a derived (seed, epoch, index, view) stream reproduces the view.
ImageF augment_image(const ImageF& img, const AugmentSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Training entry points
// ---------------------------------------------------------------------------

struct Stage1Result {
  Encoder encoder{nullptr};  // weights of the best-validation epoch
  TrainLog log;
  std::string best_checkpoint;
  std::string last_checkpoint;
  bool stopped_early = false;  // hit stop_after_epoch before the last epoch
};

// Contrastive encoder training (supcon or simclr), checkpoint selected by
// validation loss. With stage1_method = none the encoder is built, saved and
// returned untrained.
Stage1Result train_stage1(const EncoderConfig& encoder_config, const TrainConfig& config,
                          const std::vector<SliceRecord>& train_records,
                          const std::vector<SliceRecord>& val_records);

struct Stage2Result {
  GradeHead head{nullptr};  // weights of the best-validation epoch
  TrainLog log;
  std::string head_checkpoint;
};

// Frozen-encoder head training with cross-entropy; the encoder fingerprint is
// taken before and after and any drift is a contract violation.
Stage2Result train_stage2(Encoder& encoder, const TrainConfig& config,
                          const std::vector<SliceRecord>& train_records,
                          const std::vector<SliceRecord>& val_records);

struct SupervisedResult {
  Encoder encoder{nullptr};
  GradeHead head{nullptr};
  TrainLog log;
  std::string encoder_checkpoint;
  std::string head_checkpoint;
};

// End-to-end cross-entropy training of the identical encoder + head
// architecture, checkpoint selected by validation accuracy.
SupervisedResult train_supervised_baseline(const EncoderConfig& encoder_config,
                                           const TrainConfig& config,
                                           const std::vector<SliceRecord>& train_records,
                                           const std::vector<SliceRecord>& val_records);

// ---------------------------------------------------------------------------
// Head artifact
// ---------------------------------------------------------------------------

// Grade-head checkpoint carrying the fingerprint of the encoder it was
// trained against; loading verifies shape and returns both.
void save_head(const std::string& path, GradeHead& head, const std::string& encoder_fingerprint,
               const nlohmann::json& extra_meta = nlohmann::json::object());

struct LoadedHead {
  GradeHead head{nullptr};
  std::string encoder_fingerprint;
  nlohmann::json meta;
};

LoadedHead load_head(const std::string& path);

}  // namespace automac

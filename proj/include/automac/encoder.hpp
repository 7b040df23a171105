#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "automac/ingestion.hpp"
#include "automac/types.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct EncoderConfig {
  std::string backbone = "resnet18";      // "resnet18" or "tiny" (test-only)
  std::vector<std::int64_t> fc_widths = {512, 512};
  bool pretrained = true;
  std::string pretrained_weights;         // optional explicit weight-file path
  std::string final_activation = "none";  // "none" or "relu" after the last fc
  std::uint64_t init_seed = 0;            // drives random weight init

  std::int64_t embedding_dim() const { return fc_widths.back(); }
};

void validate_encoder_config(const EncoderConfig& config);

nlohmann::json encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// Environment variable consulted when `pretrained` is set but no explicit
// weight path is given.
inline constexpr const char* kWeightsEnvVar = "AMAC_RESNET18_WEIGHTS";

// ---------------------------------------------------------------------------
// Network modules
// ---------------------------------------------------------------------------

// One residual unit of the 18-layer backbone (two 3x3 convolutions plus an
// optional projection shortcut). Submodule names mirror the torchvision
// layout so exported reference weights map one-to-one.
struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t stride);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

// 18-layer residual backbone with the classification layer removed; forward
// yields the 512-wide pooled feature vector.
struct ResNet18BackboneImpl : torch::nn::Module {
  ResNet18BackboneImpl();
  torch::Tensor forward(torch::Tensor x);
  std::int64_t out_features() const { return 512; }

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr}, layer4{nullptr};
};
TORCH_MODULE(ResNet18Backbone);

// Small convolutional stand-in so unit tests do not pay ResNet prices.
struct TinyBackboneImpl : torch::nn::Module {
  TinyBackboneImpl();
  torch::Tensor forward(torch::Tensor x);
  std::int64_t out_features() const { return 32; }

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(TinyBackbone);

// Backbone plus the fc stack; forward maps 3x224x224 inputs to embeddings.
struct EncoderImpl : torch::nn::Module {
  explicit EncoderImpl(const EncoderConfig& config);
  torch::Tensor forward(torch::Tensor x);

  EncoderConfig config;
  ResNet18Backbone resnet{nullptr};
  TinyBackbone tiny{nullptr};
  torch::nn::Sequential head{nullptr};
};
TORCH_MODULE(Encoder);

// Linear grade head used by the stage-2 classifier.
struct GradeHeadImpl : torch::nn::Module {
  explicit GradeHeadImpl(std::int64_t embedding_dim);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(GradeHead);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Builds the network with deterministic initialization. With
// config.pretrained set, reference backbone weights are loaded from
// config.pretrained_weights or $AMAC_RESNET18_WEIGHTS; a missing file is a
// hard ConfigError, never a silent random init.
Encoder build_encoder(const EncoderConfig& config);

// SHA-256 over all parameters and buffers in name order (name, shape, bytes).
// Any parameter change produces a different string.
std::string fingerprint(const torch::nn::Module& module);

// Stacks preprocessed images into a batch tensor (N x 3 x 224 x 224).
torch::Tensor batch_from_preprocessed(const std::vector<PreprocessedImage>& batch);

// Inference-mode embeddings, deterministic and batch-size independent.
std::vector<Embedding> embed(Encoder& encoder, const std::vector<PreprocessedImage>& images,
                             std::int64_t batch_size = 32);

// Packs embeddings into an N x D float32 tensor.
torch::Tensor embeddings_to_tensor(const std::vector<Embedding>& embeddings);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Encoder checkpoint: architecture config, every parameter and buffer, and
// the fingerprint; loading rebuilds the network and verifies the fingerprint.
void save_encoder_checkpoint(const std::string& path, Encoder& encoder,
                             const nlohmann::json& extra_meta = nlohmann::json::object());

struct LoadedEncoder {
  Encoder encoder{nullptr};
  nlohmann::json meta;
};

LoadedEncoder load_encoder_checkpoint(const std::string& path);

}  // namespace automac

#include "automac/encoder.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <utility>

#include "automac/errors.hpp"
#include "automac/serialize.hpp"

namespace automac {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void validate_encoder_config(const EncoderConfig& config) {
  if (config.backbone != "resnet18" && config.backbone != "tiny") {
    throw ConfigError("unsupported backbone '" + config.backbone + "' (expected resnet18 or tiny)");
  }
  if (config.fc_widths.empty()) throw ConfigError("fc_widths must not be empty");
  for (auto w : config.fc_widths) {
    if (w < 1) throw ConfigError("fc_widths entries must be positive");
  }
  if (config.final_activation != "none" && config.final_activation != "relu") {
    throw ConfigError("final_activation must be 'none' or 'relu'");
  }
  if (config.pretrained && config.backbone != "resnet18") {
    throw ConfigError("pretrained weights exist only for the resnet18 backbone");
  }
}

nlohmann::json encoder_config_to_json(const EncoderConfig& config) {
  return nlohmann::json{{"backbone", config.backbone},
                        {"fc_widths", config.fc_widths},
                        {"pretrained", config.pretrained},
                        {"pretrained_weights", config.pretrained_weights},
                        {"final_activation", config.final_activation},
                        {"init_seed", config.init_seed}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  static const std::array<const char*, 6> known = {
      "backbone", "fc_widths", "pretrained", "pretrained_weights", "final_activation", "init_seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return key == k; }) == known.end()) {
      throw ConfigError("unknown encoder config key: '" + key + "'");
    }
  }
  EncoderConfig config;
  config.backbone = j.value("backbone", config.backbone);
  if (j.contains("fc_widths")) config.fc_widths = j.at("fc_widths").get<std::vector<std::int64_t>>();
  config.pretrained = j.value("pretrained", config.pretrained);
  config.pretrained_weights = j.value("pretrained_weights", config.pretrained_weights);
  config.final_activation = j.value("final_activation", config.final_activation);
  config.init_seed = j.value("init_seed", config.init_seed);
  validate_encoder_config(config);
  return config;
}

// ---------------------------------------------------------------------------
// Network modules
// ---------------------------------------------------------------------------

BasicBlockImpl::BasicBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t stride) {
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(
                   torch::nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1).bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(out_ch));
  conv2 = register_module(
      "conv2",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).stride(1).padding(1).bias(false)));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(out_ch));
  if (stride != 1 || in_ch != out_ch) {
    downsample = torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1).stride(stride).bias(false)),
        torch::nn::BatchNorm2d(out_ch));
    register_module("downsample", downsample);
  }
}

torch::Tensor BasicBlockImpl::forward(torch::Tensor x) {
  auto out = torch::relu(bn1->forward(conv1->forward(x)));
  out = bn2->forward(conv2->forward(out));
  const auto identity = downsample.is_empty() ? x : downsample->forward(x);
  return torch::relu(out + identity);
}

namespace {

torch::nn::Sequential make_stage(std::int64_t in_ch, std::int64_t out_ch, std::int64_t stride) {
  return torch::nn::Sequential(BasicBlock(in_ch, out_ch, stride), BasicBlock(out_ch, out_ch, 1));
}

}  // namespace

ResNet18BackboneImpl::ResNet18BackboneImpl() {
  conv1 = register_module(
      "conv1",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(64));
  layer1 = register_module("layer1", make_stage(64, 64, 1));
  layer2 = register_module("layer2", make_stage(64, 128, 2));
  layer3 = register_module("layer3", make_stage(128, 256, 2));
  layer4 = register_module("layer4", make_stage(256, 512, 2));
}

torch::Tensor ResNet18BackboneImpl::forward(torch::Tensor x) {
  x = torch::relu(bn1->forward(conv1->forward(x)));
  x = torch::max_pool2d(x, /*kernel_size=*/3, /*stride=*/2, /*padding=*/1);
  x = layer1->forward(x);
  x = layer2->forward(x);
  x = layer3->forward(x);
  x = layer4->forward(x);
  x = torch::adaptive_avg_pool2d(x, {1, 1});
  return x.flatten(1);
}

TinyBackboneImpl::TinyBackboneImpl() {
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 16, 5).stride(4).padding(2).bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(16));
  conv2 = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 32, 3).stride(4).padding(1).bias(false)));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(32));
}

torch::Tensor TinyBackboneImpl::forward(torch::Tensor x) {
  x = torch::relu(bn1->forward(conv1->forward(x)));
  x = torch::relu(bn2->forward(conv2->forward(x)));
  x = torch::adaptive_avg_pool2d(x, {1, 1});
  return x.flatten(1);
}

EncoderImpl::EncoderImpl(const EncoderConfig& cfg) : config(cfg) {
  validate_encoder_config(config);
  std::int64_t features = 0;
  if (config.backbone == "resnet18") {
    resnet = register_module("backbone", ResNet18Backbone());
    features = resnet->out_features();
  } else {
    tiny = register_module("backbone", TinyBackbone());
    features = tiny->out_features();
  }

  head = torch::nn::Sequential();
  std::int64_t prev = features;
  for (std::size_t i = 0; i < config.fc_widths.size(); ++i) {
    head->push_back(torch::nn::Linear(prev, config.fc_widths[i]));
    const bool last = i + 1 == config.fc_widths.size();
    if (!last || config.final_activation == "relu") {
      head->push_back(torch::nn::Functional(torch::relu));
    }
    prev = config.fc_widths[i];
  }
  register_module("head", head);
}

torch::Tensor EncoderImpl::forward(torch::Tensor x) {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw ValidationError("encoder expects N x 3 x H x W input");
  }
  const auto features = resnet.is_empty() ? tiny->forward(x) : resnet->forward(x);
  return head->forward(features);
}

GradeHeadImpl::GradeHeadImpl(std::int64_t embedding_dim) {
  fc = register_module("fc", torch::nn::Linear(embedding_dim, kNumGrades));
}

torch::Tensor GradeHeadImpl::forward(torch::Tensor x) { return fc->forward(x); }

// ---------------------------------------------------------------------------
// Pretrained weights
// ---------------------------------------------------------------------------

namespace {

std::string resolve_weights_path(const EncoderConfig& config) {
  if (!config.pretrained_weights.empty()) return config.pretrained_weights;
  if (const char* env = std::getenv(kWeightsEnvVar)) return env;
  return {};
}

void load_backbone_weights(Encoder& encoder, const std::string& path) {
  const TensorArchive archive = load_tensor_archive(path, "AMWT");
  torch::NoGradGuard no_grad;

  auto copy_into = [&](const std::string& name, torch::Tensor dest) {
    const auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) {
      throw DataError("weight file " + path + " is missing tensor '" + name + "'");
    }
    if (it->second.sizes() != dest.sizes()) {
      throw DataError("weight file " + path + " has wrong shape for '" + name + "'");
    }
    dest.copy_(it->second.to(dest.scalar_type()));
  };

  std::size_t used = 0;
  const std::string prefix = "backbone.";
  for (auto& p : encoder->named_parameters()) {
    if (p.key().rfind(prefix, 0) == 0) {
      copy_into(p.key().substr(prefix.size()), p.value());
      ++used;
    }
  }
  for (auto& b : encoder->named_buffers()) {
    if (b.key().rfind(prefix, 0) == 0) {
      copy_into(b.key().substr(prefix.size()), b.value());
      ++used;
    }
  }
  if (used != archive.tensors.size()) {
    throw DataError("weight file " + path + " contains tensors the backbone does not use");
  }
}

}  // namespace

Encoder build_encoder(const EncoderConfig& config) {
  validate_encoder_config(config);
  torch::manual_seed(static_cast<std::uint64_t>(config.init_seed));
  Encoder encoder(config);

  if (config.pretrained) {
    const std::string path = resolve_weights_path(config);
    if (path.empty() || !std::filesystem::exists(path)) {
      throw ConfigError(
          "pretrained=true but no reference weights are available" +
          (path.empty() ? std::string() : " at " + path) +
          ". Export them on a machine with network access via tools/export_resnet18_weights.py, "
          "then point pretrained_weights (or $" + std::string(kWeightsEnvVar) +
          ") at the file, or set pretrained=false for random initialization.");
    }
    load_backbone_weights(encoder, path);
  }
  return encoder;
}

// ---------------------------------------------------------------------------
// Fingerprint
// ---------------------------------------------------------------------------

std::string fingerprint(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> entries;
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    entries.emplace_back(p.key(), p.value());
  }
  for (const auto& b : module.named_buffers(/*recurse=*/true)) {
    entries.emplace_back("buffer/" + b.key(), b.value());
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("failed to initialize SHA-256");
  }
  for (const auto& [name, tensor] : entries) {
    EVP_DigestUpdate(ctx, name.data(), name.size());
    const char sep = '\0';
    EVP_DigestUpdate(ctx, &sep, 1);
    const auto t = tensor.detach().cpu().contiguous();
    const auto sizes = t.sizes();
    EVP_DigestUpdate(ctx, sizes.data(), sizes.size() * sizeof(std::int64_t));
    EVP_DigestUpdate(ctx, t.const_data_ptr(),
                     static_cast<std::size_t>(t.numel()) * t.element_size());
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding inference
// ---------------------------------------------------------------------------

torch::Tensor batch_from_preprocessed(const std::vector<PreprocessedImage>& batch) {
  if (batch.empty()) throw ValidationError("empty batch");
  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  auto out = torch::empty({n, 3, kInputSize, kInputSize});
  const std::size_t plane = static_cast<std::size_t>(3) * kInputSize * kInputSize;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& t = batch[static_cast<std::size_t>(i)].tensor;
    if (t.size() != plane) throw ValidationError("preprocessed tensor has the wrong size");
    std::copy(t.begin(), t.end(), out[i].data_ptr<float>());
  }
  return out;
}

std::vector<Embedding> embed(Encoder& encoder, const std::vector<PreprocessedImage>& images,
                             std::int64_t batch_size) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  const bool was_training = encoder->is_training();
  encoder->eval();
  torch::NoGradGuard no_grad;

  std::vector<Embedding> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<PreprocessedImage> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                               images.begin() + static_cast<std::ptrdiff_t>(stop));
    const auto emb = encoder->forward(batch_from_preprocessed(chunk)).contiguous();
    if (!emb.isfinite().all().item<bool>()) {
      throw ValidationError("encoder produced a non-finite embedding");
    }
    const auto acc = emb.accessor<float, 2>();
    for (std::int64_t i = 0; i < emb.size(0); ++i) {
      std::vector<float> values(static_cast<std::size_t>(emb.size(1)));
      for (std::int64_t j = 0; j < emb.size(1); ++j) values[static_cast<std::size_t>(j)] = acc[i][j];
      if (emb.size(1) == kEmbeddingDim) {
        out.push_back(make_embedding(std::move(values)));
      } else {
        out.push_back(Embedding{std::move(values)});
      }
    }
  }
  if (was_training) encoder->train();
  return out;
}

torch::Tensor embeddings_to_tensor(const std::vector<Embedding>& embeddings) {
  const std::int64_t n = static_cast<std::int64_t>(embeddings.size());
  const std::int64_t d =
      n == 0 ? 0 : static_cast<std::int64_t>(embeddings[0].values.size());
  torch::Tensor t = torch::empty({n, d}, torch::kFloat32);
  for (std::int64_t i = 0; i < n; ++i) {
    if (static_cast<std::int64_t>(embeddings[static_cast<std::size_t>(i)].values.size()) != d)
      throw ValidationError("embeddings_to_tensor: ragged embedding dimensions");
    std::memcpy(t[i].data_ptr<float>(), embeddings[static_cast<std::size_t>(i)].values.data(),
                static_cast<std::size_t>(d) * sizeof(float));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_encoder_checkpoint(const std::string& path, Encoder& encoder,
                             const nlohmann::json& extra_meta) {
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& p : encoder->named_parameters()) tensors.emplace(p.key(), p.value());
  for (const auto& b : encoder->named_buffers()) tensors.emplace(b.key(), b.value());

  nlohmann::json meta;
  meta["kind"] = "encoder_checkpoint";
  meta["config"] = encoder_config_to_json(encoder->config);
  meta["fingerprint"] = fingerprint(*encoder);
  meta["extra"] = extra_meta;
  save_tensor_archive(path, "AMCK", meta, tensors);
}

LoadedEncoder load_encoder_checkpoint(const std::string& path) {
  const TensorArchive archive = load_tensor_archive(path, "AMCK");
  if (archive.meta.value("kind", "") != "encoder_checkpoint") {
    throw DataError("not an encoder checkpoint: " + path);
  }
  EncoderConfig config = encoder_config_from_json(archive.meta.at("config"));

  // construct directly (skipping the pretrained path: the checkpoint carries
  // every tensor) and overwrite all state
  Encoder encoder(config);
  torch::NoGradGuard no_grad;
  std::size_t restored = 0;
  auto restore = [&](const std::string& name, torch::Tensor dest) {
    const auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) {
      throw DataError("checkpoint " + path + " is missing tensor '" + name + "'");
    }
    if (it->second.sizes() != dest.sizes()) {
      throw DataError("checkpoint " + path + " has wrong shape for '" + name + "'");
    }
    dest.copy_(it->second);
    ++restored;
  };
  for (auto& p : encoder->named_parameters()) restore(p.key(), p.value());
  for (auto& b : encoder->named_buffers()) restore(b.key(), b.value());
  if (restored != archive.tensors.size()) {
    throw DataError("checkpoint " + path + " carries unused tensors");
  }

  const std::string expect = archive.meta.value("fingerprint", "");
  const std::string got = fingerprint(*encoder);
  if (expect.empty() || expect != got) {
    throw ContractError("checkpoint fingerprint mismatch for " + path +
                        " (stored " + expect + ", rebuilt " + got + ")");
  }
  LoadedEncoder out;
  out.encoder = encoder;
  out.meta = archive.meta;
  return out;
}

}  // namespace automac

#include <torch/torch.h>

#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <random>

#include "automac/encoder.hpp"
#include "automac/errors.hpp"
#include "automac/serialize.hpp"

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
    path = fs::temp_directory_path() / ("automac_enc_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

EncoderConfig tiny_config(std::uint64_t seed = 0) {
  EncoderConfig cfg;
  cfg.backbone = "tiny";
  cfg.fc_widths = {16, 8};
  cfg.pretrained = false;
  cfg.init_seed = seed;
  return cfg;
}

PreprocessedImage fake_input(std::uint64_t seed) {
  torch::manual_seed(seed);
  const auto t = torch::randn({3LL * kInputSize * kInputSize});
  PreprocessedImage img;
  img.source_id = "fake_" + std::to_string(seed);
  img.tensor.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  return img;
}

// What the weight exporter would produce: the backbone state under
// torchvision-style names (no wrapper prefix).
std::string write_reference_weights(const fs::path& dir) {
  torch::manual_seed(4242);
  ResNet18Backbone backbone;
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& p : backbone->named_parameters()) tensors.emplace(p.key(), p.value());
  for (const auto& b : backbone->named_buffers()) tensors.emplace(b.key(), b.value());
  const std::string path = (dir / "resnet18_ref.amwt").string();
  save_tensor_archive(path, "AMWT", {{"source", "test"}}, tensors);
  return path;
}

}  // namespace

TEST_CASE("default config produces 512-D embeddings") {
  EncoderConfig cfg;
  cfg.pretrained = false;
  REQUIRE(cfg.fc_widths == std::vector<std::int64_t>({512, 512}));
  auto enc = build_encoder(cfg);
  enc->eval();
  torch::NoGradGuard ng;
  const auto out = enc->forward(torch::randn({2, 3, kInputSize, kInputSize}));
  CHECK(out.sizes() == torch::IntArrayRef({2, 512}));
  CHECK(out.isfinite().all().item<bool>());
}

TEST_CASE("tiny backbone with fc_widths ending in 8 gives 8-D output") {
  auto enc = build_encoder(tiny_config());
  enc->eval();
  torch::NoGradGuard ng;
  const auto out = enc->forward(torch::randn({7, 3, kInputSize, kInputSize}));
  CHECK(out.sizes() == torch::IntArrayRef({7, 8}));
  CHECK(out.isfinite().all().item<bool>());
}

TEST_CASE("config validation and json round-trip") {
  EncoderConfig cfg = tiny_config(3);
  cfg.final_activation = "relu";
  const auto j = encoder_config_to_json(cfg);
  const EncoderConfig back = encoder_config_from_json(j);
  CHECK(back.backbone == cfg.backbone);
  CHECK(back.fc_widths == cfg.fc_widths);
  CHECK(back.final_activation == "relu");
  CHECK(back.init_seed == 3);

  auto bad = j;
  bad["hidden_units"] = 4;
  CHECK_THROWS_AS(encoder_config_from_json(bad), ConfigError);

  EncoderConfig nonsense;
  nonsense.backbone = "vgg";
  CHECK_THROWS_AS(validate_encoder_config(nonsense), ConfigError);
  nonsense = tiny_config();
  nonsense.fc_widths = {};
  CHECK_THROWS_AS(validate_encoder_config(nonsense), ConfigError);
  nonsense = tiny_config();
  nonsense.pretrained = true;  // no reference weights exist for the test net
  CHECK_THROWS_AS(validate_encoder_config(nonsense), ConfigError);
}

TEST_CASE("fingerprint is stable, seed-sensitive, and perturbation-sensitive") {
  auto a = build_encoder(tiny_config(1));
  auto b = build_encoder(tiny_config(1));
  auto c = build_encoder(tiny_config(2));
  const auto fa = fingerprint(*a);
  CHECK(fa == fingerprint(*a));
  CHECK(fa == fingerprint(*b));
  CHECK(fa != fingerprint(*c));
  CHECK(fa.size() == 64);

  {
    torch::NoGradGuard ng;
    auto params = a->parameters();
    params.front().view(-1)[0] += 1e-3;
  }
  CHECK(fingerprint(*a) != fa);
}

TEST_CASE("fingerprint also covers buffers") {
  auto a = build_encoder(tiny_config(5));
  const auto before = fingerprint(*a);
  // run one training-mode forward so batch-norm statistics move
  a->train();
  a->forward(torch::randn({4, 3, kInputSize, kInputSize}));
  CHECK(fingerprint(*a) != before);
}

TEST_CASE("embed is deterministic and batch-size independent") {
  auto enc = build_encoder(tiny_config(7));
  std::vector<PreprocessedImage> images;
  for (std::uint64_t i = 0; i < 16; ++i) images.push_back(fake_input(i));

  const auto all = embed(enc, images, 16);
  REQUIRE(all.size() == 16);
  const auto single = embed(enc, {images[5]}, 1);
  REQUIRE(single.size() == 1);
  REQUIRE(single[0].values.size() == 8);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(std::abs(single[0].values[j] - all[5].values[j]) < 1e-5f);
  }

  // same image twice in one batch -> identical rows
  const auto twice = embed(enc, {images[3], images[3]}, 2);
  CHECK(twice[0].values == twice[1].values);

  // chunked vs whole
  const auto chunked = embed(enc, images, 5);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(std::abs(chunked[i].values[j] - all[i].values[j]) < 1e-5f);
    }
  }
}

TEST_CASE("embeddings of distinct phantom-like inputs are non-degenerate") {
  auto enc = build_encoder(tiny_config(9));
  std::vector<PreprocessedImage> images;
  for (std::uint64_t i = 100; i < 110; ++i) images.push_back(fake_input(i));
  const auto embs = embed(enc, images, 4);
  for (const auto& e : embs) {
    double norm = 0.0;
    for (float v : e.values) norm += static_cast<double>(v) * v;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("checkpoint round-trip preserves embeddings and fingerprint") {
  TempDir tmp;
  auto enc = build_encoder(tiny_config(11));
  const auto fp = fingerprint(*enc);
  const std::string path = (tmp.path / "enc.amck").string();
  save_encoder_checkpoint(path, enc, {{"epoch", 3}});

  auto loaded = load_encoder_checkpoint(path);
  CHECK(fingerprint(*loaded.encoder) == fp);
  CHECK(loaded.meta.at("extra").at("epoch") == 3);

  std::vector<PreprocessedImage> images = {fake_input(1), fake_input(2)};
  const auto want = embed(enc, images, 2);
  const auto got = embed(loaded.encoder, images, 2);
  for (std::size_t i = 0; i < want.size(); ++i) {
    for (std::size_t j = 0; j < want[i].values.size(); ++j) {
      CHECK(std::abs(want[i].values[j] - got[i].values[j]) < 1e-6f);
    }
  }
}

TEST_CASE("checkpoint loading rejects foreign or tampered files") {
  TempDir tmp;
  auto enc = build_encoder(tiny_config(13));
  const std::string path = (tmp.path / "enc.amck").string();
  save_encoder_checkpoint(path, enc);

  // a template-style magic is not a checkpoint
  CHECK_THROWS_AS(load_tensor_archive(path, "AMTC"), ContractError);

  // flip one payload byte: the rebuilt fingerprint must diverge
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-4, std::ios::end);
    char b = 0;
    f.read(&b, 1);
    f.seekp(-4, std::ios::end);
    b = static_cast<char>(b ^ 0x40);
    f.write(&b, 1);
  }
  CHECK_THROWS_AS(load_encoder_checkpoint(path), ContractError);
}

TEST_CASE("pretrained without an available weight file fails actionably") {
  EncoderConfig cfg;  // resnet18, pretrained=true by default
  cfg.pretrained_weights = "/nonexistent/resnet18.amwt";
  try {
    build_encoder(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("export_resnet18_weights.py") != std::string::npos);
    CHECK(msg.find(kWeightsEnvVar) != std::string::npos);
  }
}

TEST_CASE("pretrained builds from a reference file are reproducible") {
  TempDir tmp;
  const std::string weights = write_reference_weights(tmp.path);

  EncoderConfig cfg;
  cfg.pretrained = true;
  cfg.pretrained_weights = weights;
  auto a = build_encoder(cfg);
  auto b = build_encoder(cfg);
  CHECK(fingerprint(*a) == fingerprint(*b));

  // the backbone now matches the file, not the seed-0 random init
  EncoderConfig random_cfg = cfg;
  random_cfg.pretrained = false;
  auto r = build_encoder(random_cfg);
  CHECK(fingerprint(*a) != fingerprint(*r));

  // env-var resolution path
  ::setenv(kWeightsEnvVar, weights.c_str(), 1);
  EncoderConfig env_cfg;
  env_cfg.pretrained = true;
  auto c = build_encoder(env_cfg);
  ::unsetenv(kWeightsEnvVar);
  CHECK(fingerprint(*c) == fingerprint(*a));
}

TEST_CASE("grade head maps embeddings to three logits") {
  torch::manual_seed(0);
  GradeHead head(8);
  const auto logits = head->forward(torch::randn({5, 8}));
  CHECK(logits.sizes() == torch::IntArrayRef({5, 3}));
}

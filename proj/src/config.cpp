#include "automac/config.hpp"

#include <filesystem>
#include <fstream>

#include "automac/errors.hpp"
#include "automac/ingestion.hpp"

namespace automac {

namespace fs = std::filesystem;

namespace {

DataSection data_from_json(const nlohmann::json& j) {
  DataSection section;
  for (const auto& [key, value] : j.items()) {
    if (key == "manifest") {
      section.manifest = value.get<std::string>();
    } else if (key == "split") {
      for (const auto& [skey, svalue] : value.items()) {
        if (skey == "train") {
          section.train_ratio = svalue.get<double>();
        } else if (skey == "val") {
          section.val_ratio = svalue.get<double>();
        } else if (skey == "test") {
          section.test_ratio = svalue.get<double>();
        } else {
          throw ConfigError("unknown data.split key '" + skey + "'");
        }
      }
    } else {
      throw ConfigError("unknown data key '" + key + "'");
    }
  }
  return section;
}

SimulatorSection simulator_from_json(const nlohmann::json& j) {
  SimulatorSection section;
  for (const auto& [key, value] : j.items()) {
    if (key == "source_count") {
      section.source_count = value.get<int>();
    } else if (key == "source_size") {
      section.source_size = value.get<int>();
    } else if (key == "per_grade_counts") {
      const auto counts = value.get<std::vector<std::int64_t>>();
      if (counts.size() != kNumGrades)
        throw ConfigError("simulator.per_grade_counts needs exactly " +
                          std::to_string(kNumGrades) + " entries");
      std::copy(counts.begin(), counts.end(), section.per_grade_counts.begin());
    } else if (key == "thresholds") {
      for (const auto& [tkey, tvalue] : value.items()) {
        if (tkey == "subtle_min") {
          section.thresholds.subtle_min = tvalue.get<double>();
        } else if (tkey == "severe_min") {
          section.thresholds.severe_min = tvalue.get<double>();
        } else {
          throw ConfigError("unknown simulator.thresholds key '" + tkey + "'");
        }
      }
    } else if (key == "max_rotation_deg") {
      section.max_rotation_deg = value.get<double>();
    } else if (key == "max_shift_px") {
      section.max_shift_px = value.get<double>();
    } else if (key == "n_motion_states") {
      section.n_motion_states = value.get<int>();
    } else if (key == "image_format") {
      section.image_format = value.get<std::string>();
    } else if (key == "out_dir") {
      section.out_dir = value.get<std::string>();
    } else {
      throw ConfigError("unknown simulator key '" + key + "'");
    }
  }
  return section;
}

EvaluationSection evaluation_from_json(const nlohmann::json& j) {
  EvaluationSection section;
  for (const auto& [key, value] : j.items()) {
    if (key == "perplexity") {
      section.perplexity = value.get<double>();
    } else if (key == "iterations") {
      section.iterations = value.get<int>();
    } else if (key == "figures") {
      section.figures = value.get<bool>();
    } else {
      throw ConfigError("unknown evaluation key '" + key + "'");
    }
  }
  return section;
}

std::string absolute_path(const std::string& path) {
  return fs::absolute(fs::path(path)).lexically_normal().string();
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig config;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") {
        config.seed = value.get<std::uint64_t>();
      } else if (key == "threads") {
        config.threads = value.get<int>();
      } else if (key == "output_root") {
        config.output_root = value.get<std::string>();
      } else if (key == "data") {
        config.data = data_from_json(value);
      } else if (key == "simulator") {
        config.simulator = simulator_from_json(value);
      } else if (key == "encoder") {
        config.encoder = encoder_config_from_json(value);
      } else if (key == "loss") {
        for (const auto& [lkey, lvalue] : value.items()) {
          if (lkey == "temperature") {
            config.loss_temperature = lvalue.get<double>();
          } else {
            throw ConfigError("unknown loss key '" + lkey + "'");
          }
        }
      } else if (key == "training") {
        config.training = train_config_from_json(value);
      } else if (key == "evaluation") {
        config.evaluation = evaluation_from_json(value);
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return config;
}

nlohmann::json run_config_to_json(const RunConfig& config) {
  nlohmann::json j;
  j["seed"] = config.seed;
  j["threads"] = config.threads;
  j["output_root"] = config.output_root;
  j["data"] = {{"manifest", config.data.manifest},
               {"split",
                {{"train", config.data.train_ratio},
                 {"val", config.data.val_ratio},
                 {"test", config.data.test_ratio}}}};
  j["simulator"] = {{"source_count", config.simulator.source_count},
                    {"source_size", config.simulator.source_size},
                    {"per_grade_counts", config.simulator.per_grade_counts},
                    {"thresholds",
                     {{"subtle_min", config.simulator.thresholds.subtle_min},
                      {"severe_min", config.simulator.thresholds.severe_min}}},
                    {"max_rotation_deg", config.simulator.max_rotation_deg},
                    {"max_shift_px", config.simulator.max_shift_px},
                    {"n_motion_states", config.simulator.n_motion_states},
                    {"image_format", config.simulator.image_format},
                    {"out_dir", config.simulator.out_dir}};
  j["encoder"] = encoder_config_to_json(config.encoder);
  j["loss"] = {{"temperature", config.loss_temperature}};
  j["training"] = train_config_to_json(config.training);
  j["evaluation"] = {{"perplexity", config.evaluation.perplexity},
                     {"iterations", config.evaluation.iterations},
                     {"figures", config.evaluation.figures}};
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void finalize_run_config(RunConfig& config) {
  if (config.output_root.empty()) throw ConfigError("output_root must not be empty");
  if (config.threads < 1) throw ConfigError("threads must be >= 1");
  if (config.loss_temperature <= 0.0) throw ConfigError("loss.temperature must be positive");
  if (config.evaluation.perplexity <= 0.0)
    throw ConfigError("evaluation.perplexity must be positive");
  if (config.evaluation.iterations < 1)
    throw ConfigError("evaluation.iterations must be >= 1");

  config.output_root = absolute_path(config.output_root);
  config.simulator.out_dir = config.simulator.out_dir.empty()
                                 ? (fs::path(config.output_root) / "dataset").string()
                                 : absolute_path(config.simulator.out_dir);
  config.data.manifest = config.data.manifest.empty()
                             ? (fs::path(config.simulator.out_dir) / "manifest.csv").string()
                             : absolute_path(config.data.manifest);
  config.training.checkpoint_dir =
      config.training.checkpoint_dir.empty()
          ? (fs::path(config.output_root) / "checkpoints").string()
          : absolute_path(config.training.checkpoint_dir);
  if (!config.encoder.pretrained_weights.empty())
    config.encoder.pretrained_weights = absolute_path(config.encoder.pretrained_weights);

  // One top-level seed and one temperature knob flow into the stages.
  config.training.seed = config.seed;
  config.training.temperature = config.loss_temperature;

  // The split and threshold validators live with the data layer and throw
  // ValidationError; surfaced from a config file they are config mistakes.
  try {
    SplitSpec spec;
    spec.train = config.data.train_ratio;
    spec.val = config.data.val_ratio;
    spec.test = config.data.test_ratio;
    validate_split_spec(spec);
    validate_thresholds(config.simulator.thresholds);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  validate_encoder_config(config.encoder);
  validate_train_config(config.training);
  if (config.simulator.source_count < 1) throw ConfigError("simulator.source_count must be >= 1");
  if (config.simulator.source_size < kMinSliceDim)
    throw ConfigError("simulator.source_size must be >= " + std::to_string(kMinSliceDim));
  if (config.simulator.image_format != "amac" && config.simulator.image_format != "png")
    throw ConfigError("simulator.image_format must be 'amac' or 'png'");
}

}  // namespace automac

#include "automac/cli.hpp"

#include <torch/torch.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "automac/errors.hpp"
#include "automac/ingestion.hpp"
#include "automac/mogras.hpp"
#include "automac/motion_sim.hpp"
#include "automac/rng.hpp"
#include "automac/serialize.hpp"
#include "automac/training.hpp"

namespace automac {

namespace fs = std::filesystem;

bool is_valid_arm(const std::string& arm) {
  return arm == "proposed" || arm == "simclr" || arm == "supervised";
}

namespace {

void require_arm(const std::string& arm) {
  if (!is_valid_arm(arm))
    throw ConfigError("unknown arm '" + arm + "' (expected proposed, simclr or supervised)");
}

fs::path arm_checkpoint_dir(const RunConfig& config, const std::string& arm) {
  return fs::path(config.training.checkpoint_dir) / arm;
}

struct ArmArtifacts {
  std::string encoder_ckpt;
  std::string head_ckpt;
  std::string templates_file;
};

ArmArtifacts artifact_paths(const RunConfig& config, const std::string& arm) {
  const fs::path dir = arm_checkpoint_dir(config, arm);
  ArmArtifacts a;
  if (arm == "supervised") {
    a.encoder_ckpt = (dir / "supervised_encoder.ckpt").string();
    a.head_ckpt = (dir / "supervised_head.ckpt").string();
  } else {
    a.encoder_ckpt = (dir / "stage1_best.ckpt").string();
    a.head_ckpt = (dir / "stage2_head.ckpt").string();
  }
  a.templates_file = (dir / "templates.tpl").string();
  return a;
}

struct SplitRecords {
  std::vector<SliceRecord> train, val, test;
};

// Manifest -> stratified split -> loaded slices. The split stream depends only
// on (seed, ratios, entries), so train and score agree on membership.
SplitRecords load_split_records(const RunConfig& config) {
  const Manifest manifest = load_manifest(config.data.manifest);
  SplitSpec spec;
  spec.train = config.data.train_ratio;
  spec.val = config.data.val_ratio;
  spec.test = config.data.test_ratio;
  spec.seed = Rng::derive(config.seed, {hash_tag("split")}).next_u64();
  const SplitResult split = stratified_split(manifest.entries, spec);

  SplitRecords out;
  const auto load = [&](const std::vector<std::size_t>& idxs, std::vector<SliceRecord>& dst) {
    dst.reserve(idxs.size());
    for (std::size_t i : idxs) dst.push_back(load_slice(manifest, manifest.entries[i]));
  };
  load(split.train, out.train);
  load(split.val, out.val);
  load(split.test, out.test);
  return out;
}

std::string grade_field(const std::optional<MotionGrade>& grade) {
  return grade ? grade_name(*grade) : std::string();
}

std::string four_places(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_score_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write scores to " + path);
  out << "id,predicted,truth,mogras_no_motion,mogras_subtle_motion,mogras_severe_motion\n";
  for (const ScoreRow& row : rows) {
    out << row.id << ',' << grade_name(row.predicted) << ',' << grade_field(row.truth);
    for (int g = 0; g < kNumGrades; ++g)
      out << ',' << four_places(row.scores[static_cast<std::size_t>(g)]);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

void write_embedding_sidecar(const std::string& path, const std::string& arm,
                             const std::string& split, const std::string& fp,
                             const std::vector<ScoreRow>& rows,
                             const std::vector<Embedding>& embeddings) {
  nlohmann::json ids = nlohmann::json::array();
  nlohmann::json truths = nlohmann::json::array();
  for (const ScoreRow& row : rows) {
    ids.push_back(row.id);
    truths.push_back(grade_field(row.truth));
  }
  const nlohmann::json meta{{"kind", "score_embeddings"}, {"arm", arm},
                            {"split", split},            {"encoder_fingerprint", fp},
                            {"ids", ids},                {"truths", truths}};
  std::map<std::string, torch::Tensor> tensors;
  if (!embeddings.empty()) tensors["embeddings"] = embeddings_to_tensor(embeddings);
  save_tensor_archive(path, "AMEB", meta, tensors);
}

std::vector<Embedding> load_embedding_sidecar(const std::string& path,
                                              const std::vector<ScoreRow>& rows) {
  const TensorArchive archive = load_tensor_archive(path, "AMEB");
  const auto ids = archive.meta.value("ids", nlohmann::json::array());
  if (ids.size() != rows.size())
    throw DataError("embedding sidecar " + path + " covers " + std::to_string(ids.size()) +
                    " records but the score file has " + std::to_string(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (ids[i].get<std::string>() != rows[i].id)
      throw DataError("embedding sidecar " + path + " is out of step with the score file at row " +
                      std::to_string(i + 1));
  }
  std::vector<Embedding> out;
  if (rows.empty()) return out;
  const auto it = archive.tensors.find("embeddings");
  if (it == archive.tensors.end())
    throw DataError("embedding sidecar " + path + " is missing the embeddings tensor");
  const torch::Tensor t = it->second.contiguous();
  const auto acc = t.accessor<float, 2>();
  out.reserve(static_cast<std::size_t>(t.size(0)));
  for (std::int64_t i = 0; i < t.size(0); ++i) {
    std::vector<float> values(static_cast<std::size_t>(t.size(1)));
    for (std::int64_t j = 0; j < t.size(1); ++j) values[static_cast<std::size_t>(j)] = acc[i][j];
    out.push_back(Embedding{std::move(values)});
  }
  return out;
}

fs::path scores_dir(const RunConfig& config) { return fs::path(config.output_root) / "scores"; }

std::string scores_csv_path(const RunConfig& config, const std::string& arm,
                            const std::string& split) {
  return (scores_dir(config) / (arm + "_" + split + ".csv")).string();
}

std::string scores_sidecar_path(const RunConfig& config, const std::string& arm,
                                const std::string& split) {
  return (scores_dir(config) / (arm + "_" + split + "_embeddings.amac")).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

std::string cmd_simulate(const RunConfig& config) {
  const SimulatorSection& sim = config.simulator;
  const std::vector<SourceImage> sources =
      synthesize_sources(sim.source_count, sim.source_size,
                         Rng::derive(config.seed, {hash_tag("sources")}).next_u64());

  GenerateConfig gen;
  gen.per_grade_counts = sim.per_grade_counts;
  gen.thresholds = sim.thresholds;
  gen.max_rotation_deg = sim.max_rotation_deg;
  gen.max_shift_px = sim.max_shift_px;
  gen.n_motion_states = sim.n_motion_states;
  gen.seed = Rng::derive(config.seed, {hash_tag("simulate")}).next_u64();
  gen.out_dir = sim.out_dir;
  gen.image_format = sim.image_format;

  const Manifest manifest = generate_dataset(sources, gen);
  const std::string manifest_path = (fs::path(sim.out_dir) / "manifest.csv").string();
  save_manifest(manifest_path, manifest);
  return manifest_path;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TrainOutcome cmd_train(const RunConfig& config, const std::string& arm) {
  require_arm(arm);
  SplitRecords records = load_split_records(config);
  if (records.train.empty() || records.val.empty())
    throw DataError("the split left train or val empty; check data.split and the manifest size");

  TrainConfig tcfg = config.training;
  tcfg.checkpoint_dir = arm_checkpoint_dir(config, arm).string();

  TrainOutcome outcome;
  outcome.arm = arm;
  Encoder encoder{nullptr};
  nlohmann::json stages = nlohmann::json::object();

  if (arm == "supervised") {
    SupervisedResult sup =
        train_supervised_baseline(config.encoder, tcfg, records.train, records.val);
    encoder = sup.encoder;
    outcome.encoder_checkpoint = sup.encoder_checkpoint;
    outcome.head_checkpoint = sup.head_checkpoint;
    stages["supervised"] = {{"best_epoch", sup.log.best_epoch},
                            {"best_val_accuracy", sup.log.best_metric}};
  } else {
    tcfg.stage1_method = arm == "proposed" ? Stage1Method::Supcon : Stage1Method::Simclr;
    Stage1Result s1 = train_stage1(config.encoder, tcfg, records.train, records.val);
    Stage2Result s2 = train_stage2(s1.encoder, tcfg, records.train, records.val);
    encoder = s1.encoder;
    outcome.encoder_checkpoint = s1.best_checkpoint;
    outcome.head_checkpoint = s2.head_checkpoint;
    stages["stage1"] = {{"method", to_string(tcfg.stage1_method)},
                        {"best_epoch", s1.log.best_epoch},
                        {"best_val_loss", s1.log.best_metric}};
    stages["stage2"] = {{"best_epoch", s2.log.best_epoch},
                        {"best_val_accuracy", s2.log.best_metric}};
  }

  const GradeTemplateSet templates = build_templates(encoder, records.train);
  outcome.templates_file = (arm_checkpoint_dir(config, arm) / "templates.tpl").string();
  save_templates(outcome.templates_file, templates);

  outcome.summary = {{"arm", arm},
                     {"seed", config.seed},
                     {"counts",
                      {{"train", records.train.size()},
                       {"val", records.val.size()},
                       {"test", records.test.size()}}},
                     {"encoder_fingerprint", fingerprint(*encoder)},
                     {"stages", stages},
                     {"artifacts",
                      {{"encoder", outcome.encoder_checkpoint},
                       {"head", outcome.head_checkpoint},
                       {"templates", outcome.templates_file}}}};
  outcome.summary_file = (arm_checkpoint_dir(config, arm) / "train_summary.json").string();
  std::ofstream out(outcome.summary_file);
  out << outcome.summary.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + outcome.summary_file);
  return outcome;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

ScoreOutput cmd_score(const RunConfig& config, const std::string& arm, const std::string& split) {
  require_arm(arm);
  const ArmArtifacts artifacts = artifact_paths(config, arm);
  for (const std::string* p :
       {&artifacts.encoder_ckpt, &artifacts.head_ckpt, &artifacts.templates_file}) {
    if (!fs::exists(*p))
      throw DataError("missing artifact " + *p + "; run 'automac train --arm " + arm + "' first");
  }

  LoadedEncoder loaded = load_encoder_checkpoint(artifacts.encoder_ckpt);
  LoadedHead head = load_head(artifacts.head_ckpt);
  GradeTemplateSet templates = load_templates(artifacts.templates_file);
  const std::string fp = fingerprint(*loaded.encoder);
  if (head.encoder_fingerprint != fp)
    throw ContractError("head checkpoint " + artifacts.head_ckpt +
                        " was trained against a different encoder than " +
                        artifacts.encoder_ckpt);
  if (templates.encoder_fingerprint != fp)
    throw ContractError("templates " + artifacts.templates_file +
                        " were built with a different encoder than " + artifacts.encoder_ckpt);

  SplitRecords records = load_split_records(config);
  std::vector<SliceRecord> chosen;
  if (split == "train") {
    chosen = std::move(records.train);
  } else if (split == "val") {
    chosen = std::move(records.val);
  } else if (split == "test") {
    chosen = std::move(records.test);
  } else if (split == "all") {
    chosen = std::move(records.train);
    chosen.insert(chosen.end(), std::make_move_iterator(records.val.begin()),
                  std::make_move_iterator(records.val.end()));
    chosen.insert(chosen.end(), std::make_move_iterator(records.test.begin()),
                  std::make_move_iterator(records.test.end()));
  } else {
    throw ConfigError("unknown split '" + split + "' (expected train, val, test or all)");
  }

  ScoreOutput output;
  output.csv_file = scores_csv_path(config, arm, split);
  output.embeddings_file = scores_sidecar_path(config, arm, split);
  fs::create_directories(scores_dir(config));

  std::vector<Embedding> embeddings;
  if (chosen.empty()) {
    std::cerr << "warning: split '" << split << "' has no records; writing empty outputs\n";
  } else {
    std::vector<PreprocessedImage> pre;
    pre.reserve(chosen.size());
    for (const SliceRecord& r : chosen) pre.push_back(preprocess(r));
    embeddings = embed(loaded.encoder, pre);

    torch::NoGradGuard guard;
    head.head->eval();
    const torch::Tensor probs =
        torch::softmax(head.head->forward(embeddings_to_tensor(embeddings)), 1).to(torch::kFloat64);
    const auto acc = probs.accessor<double, 2>();
    output.rows.reserve(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const MoGrASTriple triple = score(embeddings[i], templates);
      const GradePrediction pred = make_grade_prediction(
          {acc[static_cast<std::int64_t>(i)][0], acc[static_cast<std::int64_t>(i)][1],
           acc[static_cast<std::int64_t>(i)][2]});
      output.rows.push_back(ScoreRow{chosen[i].id, pred.grade, chosen[i].grade, triple.scores});
    }
  }

  write_score_csv(output.csv_file, output.rows);
  write_embedding_sidecar(output.embeddings_file, arm, split, fp, output.rows, embeddings);
  return output;
}

std::vector<ScoreRow> load_score_rows(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot read score file: " + csv_path);
  std::string line;
  if (!std::getline(in, line))
    throw DataError("score file " + csv_path + " is empty (missing header)");
  if (line != "id,predicted,truth,mogras_no_motion,mogras_subtle_motion,mogras_severe_motion")
    throw DataError("score file " + csv_path + " has an unexpected header");

  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw DataError("score file " + csv_path + " row " + std::to_string(line_no) +
                      " has " + std::to_string(fields.size()) + " fields, expected 6");
    ScoreRow row;
    row.id = fields[0];
    row.predicted = grade_from_name(fields[1]);
    if (!fields[2].empty()) row.truth = grade_from_name(fields[2]);
    try {
      for (int g = 0; g < kNumGrades; ++g)
        row.scores[static_cast<std::size_t>(g)] = std::stod(fields[3 + static_cast<std::size_t>(g)]);
    } catch (const std::exception&) {
      throw DataError("score file " + csv_path + " row " + std::to_string(line_no) +
                      " has a malformed score value");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

EvalReport evaluate_rows(const RunConfig& config, const std::string& arm,
                         const std::string& split, const std::vector<ScoreRow>& rows,
                         const std::vector<Embedding>& embeddings) {
  if (rows.empty()) throw DataError("nothing to evaluate: the score set is empty");
  std::vector<MotionGrade> preds, truths;
  std::vector<MoGrASTriple> triples;
  preds.reserve(rows.size());
  truths.reserve(rows.size());
  triples.reserve(rows.size());
  for (const ScoreRow& row : rows) {
    if (!row.truth)
      throw DataError("record '" + row.id + "' has no truth grade; evaluation needs ground truth");
    preds.push_back(row.predicted);
    truths.push_back(*row.truth);
    triples.push_back(make_mogras_triple(row.scores[0], row.scores[1], row.scores[2]));
  }

  std::array<std::int64_t, kNumGrades> counts{};
  for (MotionGrade g : truths) ++counts[static_cast<std::size_t>(g)];

  EvalReport report;
  report.confusion = confusion(preds, truths);
  report.metrics = metrics(report.confusion);
  // The distribution table and the silhouette are only defined on populated
  // grade sets; a partial split simply drops them from the report.
  if (counts[0] > 0 && counts[1] > 0 && counts[2] > 0)
    report.mogras = mogras_distribution(triples, truths);
  if (!embeddings.empty()) {
    int usable = 0;
    bool degenerate = false;
    for (std::int64_t c : counts) {
      if (c == 1) degenerate = true;
      if (c >= 2) ++usable;
    }
    if (!degenerate && usable >= 2) report.silhouette = silhouette(embeddings, truths);
  }

  report.config_echo = nlohmann::ordered_json::parse(run_config_to_json(config).dump());
  report.config_echo["arm"] = arm;
  report.config_echo["split"] = split;
  return report;
}

EvaluateOutcome cmd_evaluate(const RunConfig& config, const std::string& arm,
                             const std::string& split) {
  require_arm(arm);
  const std::string csv = scores_csv_path(config, arm, split);
  const std::vector<ScoreRow> rows = load_score_rows(csv);
  const std::vector<Embedding> embeddings =
      load_embedding_sidecar(scores_sidecar_path(config, arm, split), rows);

  EvaluateOutcome outcome;
  outcome.report = evaluate_rows(config, arm, split, rows, embeddings);

  const fs::path dir = fs::path(config.output_root) / "eval" / (arm + "_" + split);
  fs::create_directories(dir);
  outcome.report_json_file = (dir / "report.json").string();
  outcome.report_text_file = (dir / "report.txt").string();
  {
    std::ofstream out(outcome.report_json_file);
    out << report_to_json(outcome.report).dump(2) << "\n";
    if (!out) throw DataError("cannot write " + outcome.report_json_file);
  }
  {
    std::ofstream out(outcome.report_text_file);
    out << render_report_text(outcome.report);
    if (!out) throw DataError("cannot write " + outcome.report_text_file);
  }

  if (config.evaluation.figures) {
    const std::string confusion_png = (dir / "confusion.png").string();
    render_confusion_png(confusion_png, outcome.report.confusion);
    outcome.figure_files.push_back(confusion_png);

    if (outcome.report.mogras) {
      const std::string dist_png = (dir / "mogras_distribution.png").string();
      render_distribution_png(dist_png, *outcome.report.mogras);
      outcome.figure_files.push_back(dist_png);
    }

    if (embeddings.size() >= 5) {
      ProjectionConfig proj;
      proj.perplexity = config.evaluation.perplexity;
      proj.iterations = config.evaluation.iterations;
      proj.seed = Rng::derive(config.seed, {hash_tag("projection")}).next_u64();
      std::vector<MotionGrade> truths;
      truths.reserve(rows.size());
      for (const ScoreRow& row : rows) truths.push_back(*row.truth);
      const std::string scatter_png = (dir / "embedding_scatter.png").string();
      render_scatter_png(scatter_png, project_2d(embeddings, proj), truths);
      outcome.figure_files.push_back(scatter_png);
    }
  }
  return outcome;
}

}  // namespace automac

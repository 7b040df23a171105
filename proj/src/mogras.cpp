#include "automac/mogras.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

#include "automac/errors.hpp"
#include "automac/serialize.hpp"

namespace automac {

namespace {

float median_inplace(std::vector<float>& values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const float hi = values[mid];
  if (n % 2 == 1) return hi;
  const float lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return static_cast<float>((static_cast<double>(lo) + static_cast<double>(hi)) * 0.5);
}

double l2_norm(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

GradeTemplateSet build_templates_from_embeddings(
    const std::array<std::vector<Embedding>, kNumGrades>& per_grade,
    const std::string& encoder_fingerprint, bool normalize) {
  if (encoder_fingerprint.empty()) {
    throw ValidationError("templates need the encoder fingerprint they belong to");
  }

  std::size_t dim = 0;
  for (const auto& grade_embeddings : per_grade) {
    for (const auto& e : grade_embeddings) {
      if (dim == 0) dim = e.values.size();
      if (e.values.size() != dim) {
        throw ValidationError("inconsistent embedding dimensions while building templates");
      }
    }
  }

  GradeTemplateSet set;
  set.encoder_fingerprint = encoder_fingerprint;
  for (MotionGrade grade : kAllGrades) {
    const int g = static_cast<int>(grade);
    const auto& embeddings = per_grade[static_cast<std::size_t>(g)];
    if (embeddings.empty()) {
      throw DataError("cannot build a template for grade '" + grade_name(grade) +
                      "': no training samples");
    }
    set.created_from[static_cast<std::size_t>(g)] = static_cast<std::int64_t>(embeddings.size());

    std::vector<std::vector<float>> rows;
    if (normalize) {
      rows.reserve(embeddings.size());
      for (const auto& e : embeddings) {
        const double n = l2_norm(e.values);
        if (n == 0.0) throw DataError("zero-norm embedding cannot be normalized for templates");
        std::vector<float> r = e.values;
        for (float& v : r) v = static_cast<float>(v / n);
        rows.push_back(std::move(r));
      }
    }

    std::vector<float>& tmpl = set.templates[static_cast<std::size_t>(g)];
    tmpl.resize(dim);
    std::vector<float> column(embeddings.size());
    for (std::size_t j = 0; j < dim; ++j) {
      for (std::size_t i = 0; i < embeddings.size(); ++i) {
        column[i] = normalize ? rows[i][j] : embeddings[i].values[j];
      }
      tmpl[j] = median_inplace(column);
    }
  }
  validate_templates(set);
  return set;
}

GradeTemplateSet build_templates(Encoder& encoder, const std::vector<SliceRecord>& records,
                                 std::int64_t batch_size, bool normalize) {
  std::vector<PreprocessedImage> inputs;
  std::vector<int> grades;
  inputs.reserve(records.size());
  for (const auto& r : records) {
    if (!r.grade) throw DataError("record '" + r.id + "' has no grade label");
    inputs.push_back(preprocess(r));
    grades.push_back(static_cast<int>(*r.grade));
  }
  const auto embeddings = embed(encoder, inputs, batch_size);

  std::array<std::vector<Embedding>, kNumGrades> per_grade;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    per_grade[static_cast<std::size_t>(grades[i])].push_back(embeddings[i]);
  }
  return build_templates_from_embeddings(per_grade, fingerprint(*encoder), normalize);
}

MoGrASTriple score(const Embedding& embedding, const GradeTemplateSet& templates) {
  const double test_norm = l2_norm(embedding.values);
  if (test_norm == 0.0) throw DataError("zero-norm embedding cannot be scored");

  std::array<double, kNumGrades> scores{};
  for (MotionGrade grade : kAllGrades) {
    const auto& tmpl = templates.templates[static_cast<std::size_t>(static_cast<int>(grade))];
    if (tmpl.size() != embedding.values.size()) {
      throw ValidationError("embedding/template dimension mismatch");
    }
    const double tmpl_norm = l2_norm(tmpl);
    if (tmpl_norm == 0.0) {
      throw DataError("zero-norm template for grade '" + grade_name(grade) + "'");
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < tmpl.size(); ++j) {
      dot += static_cast<double>(tmpl[j]) * embedding.values[j];
    }
    scores[static_cast<std::size_t>(static_cast<int>(grade))] = dot / (tmpl_norm * test_norm);
  }
  return make_mogras_triple(scores[0], scores[1], scores[2]);
}

std::pair<GradePrediction, MoGrASTriple> score_and_grade(const SliceRecord& record,
                                                         Encoder& encoder,
                                                         const GradeTemplateSet& templates,
                                                         GradeHead& head) {
  const std::string fp = fingerprint(*encoder);
  if (templates.encoder_fingerprint != fp) {
    throw ContractError("templates were built with encoder " + templates.encoder_fingerprint +
                        " but scoring uses encoder " + fp);
  }
  validate(record);

  const auto inputs = std::vector<PreprocessedImage>{preprocess(record)};
  const auto embeddings = embed(encoder, inputs, 1);

  head->eval();
  torch::NoGradGuard no_grad;
  auto emb_tensor = torch::from_blob(const_cast<float*>(embeddings[0].values.data()),
                                     {1, static_cast<std::int64_t>(embeddings[0].values.size())});
  const auto probs = torch::softmax(head->forward(emb_tensor), /*dim=*/1).to(torch::kFloat64);
  const auto acc = probs.accessor<double, 2>();
  GradePrediction prediction = make_grade_prediction({acc[0][0], acc[0][1], acc[0][2]});

  return {prediction, score(embeddings[0], templates)};
}

void save_templates(const std::string& path, const GradeTemplateSet& templates) {
  validate_templates(templates);
  nlohmann::json grade_order = nlohmann::json::array();
  for (MotionGrade g : kAllGrades) grade_order.push_back(grade_name(g));

  nlohmann::json meta;
  meta["kind"] = "grade_templates";
  meta["grade_order"] = grade_order;
  meta["fingerprint"] = templates.encoder_fingerprint;
  meta["created_from"] = templates.created_from;
  meta["created_at"] = utc_timestamp();

  const std::int64_t dim = static_cast<std::int64_t>(templates.templates[0].size());
  auto matrix = torch::empty({kNumGrades, dim});
  for (int g = 0; g < kNumGrades; ++g) {
    std::copy(templates.templates[static_cast<std::size_t>(g)].begin(),
              templates.templates[static_cast<std::size_t>(g)].end(),
              matrix[g].data_ptr<float>());
  }
  save_tensor_archive(path, "AMTC", meta, {{"templates", matrix}});
}

GradeTemplateSet load_templates(const std::string& path) {
  const TensorArchive archive = load_tensor_archive(path, "AMTC");
  if (archive.meta.value("kind", "") != "grade_templates") {
    throw DataError("not a grade-template file: " + path);
  }
  nlohmann::json expected_order = nlohmann::json::array();
  for (MotionGrade g : kAllGrades) expected_order.push_back(grade_name(g));
  if (archive.meta.value("grade_order", nlohmann::json::array()) != expected_order) {
    throw DataError("unexpected grade order in template file: " + path);
  }

  const auto it = archive.tensors.find("templates");
  if (it == archive.tensors.end()) throw DataError("template matrix missing in " + path);
  const auto matrix = it->second;
  if (matrix.dim() != 2 || matrix.size(0) != kNumGrades) {
    throw DataError("template matrix has the wrong shape in " + path);
  }

  GradeTemplateSet set;
  set.encoder_fingerprint = archive.meta.value("fingerprint", "");
  const auto counts = archive.meta.value("created_from", std::vector<std::int64_t>{});
  if (counts.size() == static_cast<std::size_t>(kNumGrades)) {
    std::copy(counts.begin(), counts.end(), set.created_from.begin());
  }
  const auto acc = matrix.accessor<float, 2>();
  for (int g = 0; g < kNumGrades; ++g) {
    auto& tmpl = set.templates[static_cast<std::size_t>(g)];
    tmpl.resize(static_cast<std::size_t>(matrix.size(1)));
    for (std::int64_t j = 0; j < matrix.size(1); ++j) {
      tmpl[static_cast<std::size_t>(j)] = acc[g][j];
    }
  }
  validate_templates(set);
  return set;
}

}  // namespace automac

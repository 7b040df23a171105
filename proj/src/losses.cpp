#include "automac/losses.hpp"

#include <string>

#include "automac/errors.hpp"
#include "automac/types.hpp"

namespace automac::losses {

namespace {

torch::Tensor l2_normalize_rows(const torch::Tensor& x, const char* what) {
  const auto norms = x.norm(2, /*dim=*/1, /*keepdim=*/true);
  if ((norms == 0).any().item<bool>()) {
    throw ValidationError(std::string(what) + ": zero-norm row cannot be normalized");
  }
  return x / norms;
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
}

// Mean of -log( exp(s_ip)/sum_{a != i} exp(s_ia) ) over the positive mask,
// averaged per anchor first. `sim` is the full similarity matrix already
// divided by the temperature.
torch::Tensor masked_contrastive_mean(const torch::Tensor& sim, const torch::Tensor& pos_mask) {
  const auto n = sim.size(0);
  const auto not_self = 1.0 - torch::eye(n, sim.options());
  // stabilize the log-sum-exp against the largest non-self similarity
  const auto row_max =
      std::get<0>((sim * not_self + (not_self - 1.0) * 1e30).max(/*dim=*/1, /*keepdim=*/true))
          .detach();
  const auto shifted = sim - row_max;
  const auto denom = (shifted.exp() * not_self).sum(/*dim=*/1, /*keepdim=*/true).log();
  const auto log_prob = shifted - denom;
  const auto pos_counts = pos_mask.sum(/*dim=*/1);
  const auto mean_log_prob = (log_prob * pos_mask).sum(/*dim=*/1) / pos_counts;
  return -mean_log_prob.mean();
}

}  // namespace

torch::Tensor supcon_loss(const torch::Tensor& embeddings, const torch::Tensor& labels,
                          double temperature) {
  check_temperature(temperature);
  if (embeddings.dim() != 2) throw ValidationError("supcon_loss expects an N x D matrix");
  const auto n = embeddings.size(0);
  if (n < 2) throw ValidationError("supcon_loss needs at least 2 samples");
  if (labels.dim() != 1 || labels.size(0) != n) {
    throw ValidationError("supcon_loss labels must be a length-N vector");
  }

  const auto lab = labels.to(torch::kLong);
  const auto eye = torch::eye(n, embeddings.options());
  const auto same = (lab.unsqueeze(0) == lab.unsqueeze(1)).to(embeddings.dtype());
  const auto pos_mask = same - eye;

  const auto pos_counts = pos_mask.sum(/*dim=*/1);
  if ((pos_counts == 0).any().item<bool>()) {
    const auto bad = (pos_counts == 0).nonzero()[0].item<int64_t>();
    const auto bad_label = lab[bad].item<int64_t>();
    std::string name = std::to_string(bad_label);
    if (bad_label >= 0 && bad_label < kNumGrades) {
      name += " (" + grade_name(static_cast<MotionGrade>(bad_label)) + ")";
    }
    throw ValidationError("supcon_loss: anchor with label " + name + " has no positives in the batch");
  }

  const auto z = l2_normalize_rows(embeddings, "supcon_loss");
  const auto sim = torch::mm(z, z.t()) / temperature;
  return masked_contrastive_mean(sim, pos_mask);
}

torch::Tensor ntxent_loss(const torch::Tensor& view_a, const torch::Tensor& view_b,
                          double temperature) {
  check_temperature(temperature);
  if (view_a.dim() != 2 || view_b.dim() != 2 || view_a.sizes() != view_b.sizes()) {
    throw ValidationError("ntxent_loss views must be two N x D matrices of equal shape");
  }
  const auto n = view_a.size(0);
  if (n < 1) throw ValidationError("ntxent_loss needs at least 1 pair");

  const auto z = l2_normalize_rows(torch::cat({view_a, view_b}, 0), "ntxent_loss");
  const auto sim = torch::mm(z, z.t()) / temperature;

  // positive of i is i+N (and of i+N is i)
  auto pos_mask = torch::zeros({2 * n, 2 * n}, z.options());
  const auto idx = torch::arange(n, torch::kLong);
  pos_mask.index_put_({idx, idx + n}, 1.0);
  pos_mask.index_put_({idx + n, idx}, 1.0);

  return masked_contrastive_mean(sim, pos_mask);
}

torch::Tensor cross_entropy_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 2) throw ValidationError("cross_entropy_loss expects an N x C matrix");
  const auto n = logits.size(0);
  const auto c = logits.size(1);
  if (n < 1) throw ValidationError("cross_entropy_loss needs at least 1 sample");
  const auto lab = labels.to(torch::kLong);
  if (lab.dim() != 1 || lab.size(0) != n) {
    throw ValidationError("cross_entropy_loss labels must be a length-N vector");
  }
  if ((lab < 0).any().item<bool>() || (lab >= c).any().item<bool>()) {
    throw ValidationError("cross_entropy_loss label outside [0, " + std::to_string(c - 1) + "]");
  }
  const auto log_probs = torch::log_softmax(logits, /*dim=*/1);
  return -log_probs.gather(1, lab.unsqueeze(1)).mean();
}

}  // namespace automac::losses

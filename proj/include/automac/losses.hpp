#pragma once

#include <torch/torch.h>

namespace automac::losses {

struct LossConfig {
  double temperature = 0.07;
  enum class Variant { SupConOut, NtXent, CrossEntropy } variant = Variant::SupConOut;
};

// Supervised contrastive loss, "out" form: for each anchor the log-ratio is
// averaged over that anchor's positives, then averaged over anchors. Rows are
// L2-normalized internally. Every anchor must have at least one other sample
// with the same label; violations raise an error naming the label.
torch::Tensor supcon_loss(const torch::Tensor& embeddings, const torch::Tensor& labels,
                          double temperature);

// Instance-level contrastive loss over 2N views; each anchor's positive is its
// paired view, the denominator runs over the other 2N-1 samples.
torch::Tensor ntxent_loss(const torch::Tensor& view_a, const torch::Tensor& view_b,
                          double temperature);

// Mean negative log-softmax of the true class. Labels must be in {0, 1, 2}.
torch::Tensor cross_entropy_loss(const torch::Tensor& logits, const torch::Tensor& labels);

}  // namespace automac::losses

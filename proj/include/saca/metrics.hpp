#pragma once

#include <cstdint>
#include <vector>

#include "saca/tensor.hpp"

namespace saca {

// Rows index ground truth, columns index prediction.
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::int64_t> counts;  // k*k, row-major

  explicit ConfusionMatrix(int k_classes);
  std::int64_t& at(int truth, int pred);
  std::int64_t at(int truth, int pred) const;
  std::int64_t total() const;

  // Labels hold class ids or the ignore value; shapes must match.
  void add(const Tensor& pred, const Tensor& truth, int ignore_value = 255);
};

struct SegMetrics {
  double af = 0.0;    // mean F1 over classes present in ground truth
  double miou = 0.0;  // mean IoU over classes present in ground truth
  double oa = 0.0;    // trace / total
  std::vector<double> class_iou;  // NaN for classes absent from both
  std::vector<double> class_f1;
};

SegMetrics compute_metrics(const ConfusionMatrix& cm);

// Per-pixel argmax over the trailing class axis of [H, W, K] logits.
Tensor argmax_classes(const Tensor& logits);

}  // namespace saca

#include "saca/metrics.hpp"

#include <cmath>
#include <limits>

#include "saca/errors.hpp"

namespace saca {

ConfusionMatrix::ConfusionMatrix(int k_classes) : k(k_classes) {
  if (k_classes < 1) throw ValueError("ConfusionMatrix: class count must be >= 1");
  counts.assign(static_cast<std::size_t>(k) * k, 0);
}

std::int64_t& ConfusionMatrix::at(int truth, int pred) {
  return counts[static_cast<std::size_t>(truth) * k + pred];
}

std::int64_t ConfusionMatrix::at(int truth, int pred) const {
  return counts[static_cast<std::size_t>(truth) * k + pred];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t v : counts) t += v;
  return t;
}

void ConfusionMatrix::add(const Tensor& pred, const Tensor& truth, int ignore_value) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError("ConfusionMatrix::add: shapes disagree, " + shape_str(pred.shape()) +
                         " vs " + shape_str(truth.shape()));
  }
  const auto& pv = pred.values();
  const auto& tv = truth.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const long long t = std::llround(tv[i]);
    if (static_cast<double>(t) != tv[i]) throw ValueError("ConfusionMatrix::add: non-integer label");
    if (t == ignore_value) continue;
    const long long p = std::llround(pv[i]);
    if (static_cast<double>(p) != pv[i]) {
      throw ValueError("ConfusionMatrix::add: non-integer prediction");
    }
    if (t < 0 || t >= k || p < 0 || p >= k) {
      throw ValueError("ConfusionMatrix::add: class id out of range");
    }
    ++at(static_cast<int>(t), static_cast<int>(p));
  }
}

SegMetrics compute_metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw ValueError("compute_metrics: no scored pixels");
  const int k = cm.k;

  SegMetrics m;
  m.class_iou.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  m.class_f1.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());

  std::int64_t trace = 0;
  double iou_sum = 0.0, f1_sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t tp = cm.at(c, c), row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    trace += tp;
    if (row == 0 && col == 0) continue;  // class never appears; keep NaN
    const std::int64_t fp = col - tp, fn = row - tp;
    const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    const double f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
    m.class_iou[static_cast<std::size_t>(c)] = iou;
    m.class_f1[static_cast<std::size_t>(c)] = f1;
    if (row > 0) {  // means run over classes present in ground truth
      iou_sum += iou;
      f1_sum += f1;
      ++present;
    }
  }
  m.oa = static_cast<double>(trace) / static_cast<double>(total);
  m.miou = present ? iou_sum / present : 0.0;
  m.af = present ? f1_sum / present : 0.0;
  return m;
}

Tensor argmax_classes(const Tensor& logits) {
  if (logits.rank() != 3) {
    throw DimensionError("argmax_classes: rank-3 [H,W,K] logits required, shape is " +
                         shape_str(logits.shape()));
  }
  const int H = logits.dim(0), W = logits.dim(1), k = logits.dim(2);
  Tensor out({H, W});
  const auto& lv = logits.values();
  auto& ov = out.values();
  const std::size_t n = static_cast<std::size_t>(H) * W;
  for (std::size_t p = 0; p < n; ++p) {
    const double* row = lv.data() + p * k;
    int arg = 0;
    for (int d = 1; d < k; ++d) {
      if (row[d] > row[arg]) arg = d;
    }
    ov[p] = static_cast<double>(arg);
  }
  return out;
}

}  // namespace saca

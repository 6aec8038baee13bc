#include "saca/class_center.hpp"

#include <cmath>

#include "saca/attention.hpp"
#include "saca/errors.hpp"
#include "saca/ops.hpp"
#include "saca/tape.hpp"

namespace saca {

PreClassifier PreClassifier::init(int c_in, int k_classes, Rng& rng) {
  if (c_in < 1 || k_classes < 1) throw ValueError("PreClassifier: dims must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in));
  PreClassifier pc;
  pc.k_classes = k_classes;
  pc.conv1 = Tensor::uniform({c_in, c_in}, -bound, bound, rng);
  pc.conv2 = Tensor::uniform({c_in, k_classes}, -bound, bound, rng);
  return pc;
}

PatchGrid PatchGrid::build(int height, int width, int h, int w) {
  if (height < 1 || width < 1 || h < 1 || w < 1) {
    throw ValueError("PatchGrid: extents and patch size must be >= 1");
  }
  PatchGrid g;
  g.height = height;
  g.width = width;
  g.h = h;
  g.w = w;
  g.pad_h = (h - height % h) % h;
  g.pad_w = (w - width % w) % w;
  g.n_h = (height + g.pad_h) / h;
  g.n_w = (width + g.pad_w) / w;
  return g;
}

Tensor pre_classify(const Tensor& r, const PreClassifier& pc) {
  return project(relu(project(r, pc.conv1)), pc.conv2);
}

ClassCenters class_centers(const Tensor& r, const Tensor& logits) {
  if (r.rank() != 3 || logits.rank() != 3 || r.dim(0) != logits.dim(0) ||
      r.dim(1) != logits.dim(1)) {
    throw DimensionError("class_centers: spatial dims disagree, " + shape_str(r.shape()) +
                         " vs " + shape_str(logits.shape()));
  }
  const int n = r.dim(0) * r.dim(1);
  const int c = r.dim(2), k = logits.dim(2);
  // assignment: per class, a distribution over pixels
  Tensor a = softmax(transpose(reshape(logits, {n, k})), 1);  // [K, n]
  ClassCenters out;
  out.centers = matmul(a, reshape(r, {n, c}));  // [K, c]
  out.weights_used = Tensor::ones({k});
  return out;
}

Tensor scatter_centers(const ClassCenters& centers, const Tensor& logits) {
  if (logits.rank() != 3 || centers.centers.rank() != 2 ||
      logits.dim(2) != centers.centers.dim(0)) {
    throw DimensionError("scatter_centers: class counts disagree, " +
                         shape_str(centers.centers.shape()) + " vs " +
                         shape_str(logits.shape()));
  }
  const int H = logits.dim(0), W = logits.dim(1), k = logits.dim(2);
  const int c = centers.centers.dim(1);
  const std::size_t n = static_cast<std::size_t>(H) * W;

  std::vector<int> pick(n);
  const auto& lv = logits.values();
  for (std::size_t p = 0; p < n; ++p) {
    const double* row = lv.data() + p * k;
    int arg = 0;
    for (int d = 1; d < k; ++d) {
      if (row[d] > row[arg]) arg = d;  // strict: ties keep the lowest class
    }
    pick[p] = arg;
  }

  Tensor out({H, W, c});
  const auto& cv = centers.centers.values();
  auto& ov = out.values();
  for (std::size_t p = 0; p < n; ++p) {
    const double* src = cv.data() + static_cast<std::size_t>(pick[p]) * c;
    double* dst = ov.data() + p * c;
    for (int d = 0; d < c; ++d) dst[d] = src[d];
  }

  if (GradTape* tape = GradTape::active(); tape && centers.centers.requires_grad()) {
    out.set_requires_grad(true);
    auto og = out.grad_ptr();
    auto gc = centers.centers.grad_ptr();
    tape->record([og, gc, pick, n, c] {
      for (std::size_t p = 0; p < n; ++p) {
        const double* src = og->data() + p * c;
        double* dst = gc->data() + static_cast<std::size_t>(pick[p]) * c;
        for (int d = 0; d < c; ++d) dst[d] += src[d];
      }
    });
  }
  return out;
}

Tensor split_patches(const Tensor& x, const PatchGrid& grid) {
  if (x.rank() != 3 || x.dim(0) != grid.height || x.dim(1) != grid.width) {
    throw DimensionError("split_patches: input " + shape_str(x.shape()) +
                         " does not match grid extent " + std::to_string(grid.height) + "x" +
                         std::to_string(grid.width));
  }
  return saca::split_patches(pad_hw(x, grid.pad_h, grid.pad_w), grid.h, grid.w);
}

Tensor stitch_patches(const Tensor& patches, const PatchGrid& grid) {
  return crop_hw(saca::stitch_patches(patches, grid.n_h, grid.n_w), grid.height, grid.width);
}

Tensor local_class_centers(const Tensor& r_l, const Tensor& d_l) {
  if (r_l.rank() != 4 || d_l.rank() != 4 || r_l.dim(0) != d_l.dim(0) ||
      r_l.dim(1) != d_l.dim(1) || r_l.dim(2) != d_l.dim(2)) {
    throw DimensionError("local_class_centers: patch stacks disagree, " +
                         shape_str(r_l.shape()) + " vs " + shape_str(d_l.shape()));
  }
  const int n = r_l.dim(0), h = r_l.dim(1), w = r_l.dim(2), c = r_l.dim(3);
  std::vector<Tensor> maps;
  maps.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    Tensor r = take0(r_l, t);
    Tensor d = take0(d_l, t);
    Tensor s = scatter_centers(class_centers(r, d), d);
    maps.push_back(reshape(s, {1, h, w, c}));
  }
  return concat(maps, 0);
}

AttentionInputs attention_inputs(const Tensor& r_l, const Tensor& s_l, const Tensor& s_g) {
  if (r_l.shape() != s_l.shape() || r_l.shape() != s_g.shape()) {
    throw DimensionError("attention_inputs: stream shapes disagree, " + shape_str(r_l.shape()) +
                         " / " + shape_str(s_l.shape()) + " / " + shape_str(s_g.shape()));
  }
  return {r_l, s_l, s_g};
}

}  // namespace saca

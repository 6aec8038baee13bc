#pragma once

#include "saca/rng.hpp"
#include "saca/tensor.hpp"

namespace saca {

// Per-pixel class logits from two chained 1x1 convolutions.
struct PreClassifier {
  Tensor conv1;  // [c_in, c_in]
  Tensor conv2;  // [c_in, k_classes]
  int k_classes = 0;

  static PreClassifier init(int c_in, int k_classes, Rng& rng);
};

struct ClassCenters {
  Tensor centers;       // [K, c]
  Tensor weights_used;  // [K] soft mass per class; 1 by construction here
};

// Non-overlapping h x w tiling of an H x W map, padded bottom/right so the
// tile size divides evenly; the original extent is kept for cropping back.
struct PatchGrid {
  int height = 0, width = 0;  // unpadded extent
  int h = 0, w = 0;
  int n_h = 0, n_w = 0;
  int pad_h = 0, pad_w = 0;

  static PatchGrid build(int height, int width, int h, int w);
  int patches() const { return n_h * n_w; }
};

// conv2(relu(conv1(pixel))) per pixel; raw logits.
Tensor pre_classify(const Tensor& r, const PreClassifier& pc);

// Spatial softmax per class over all pixels, then weighted feature average.
ClassCenters class_centers(const Tensor& r, const Tensor& logits);

// out[p] = centers[argmax_d logits[p][d]]; ties go to the lowest class index.
// The selection is non-differentiable; gradient flows into the center values.
Tensor scatter_centers(const ClassCenters& centers, const Tensor& logits);

// [H, W, C] -> [n_h*n_w, h, w, C] with bottom/right zero padding.
Tensor split_patches(const Tensor& x, const PatchGrid& grid);

// Inverse of split_patches: reassemble and crop to the unpadded extent.
Tensor stitch_patches(const Tensor& patches, const PatchGrid& grid);

// Per patch independently: class_centers then scatter_centers with that
// patch's own logits. r_l [N, h, w, c], d_l [N, h, w, K] -> [N, h, w, c].
Tensor local_class_centers(const Tensor& r_l, const Tensor& d_l);

struct AttentionInputs {
  Tensor xq;  // pixel features, per patch
  Tensor xk;  // patch-local scattered centers
  Tensor xv;  // globally computed scattered centers, split by the same grid
};

// Identity packaging of the query/key/value contract; no copies.
AttentionInputs attention_inputs(const Tensor& r_l, const Tensor& s_l, const Tensor& s_g);

}  // namespace saca

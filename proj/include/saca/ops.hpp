#pragma once

#include <vector>

#include "saca/tape.hpp"
#include "saca/tensor.hpp"

namespace saca {

// Differentiable primitives. Each op computes eagerly; when a GradTape is
// active and any input requires a gradient, the output is marked
// requires_grad and a vector-Jacobian closure is recorded.

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Per-row application of a length-C vector to x of shape [..., C].
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
Tensor add_rowvec(const Tensor& x, const Tensor& v);

// ---- shape ----
// reshape aliases the input payload (and gradient buffer); it records no
// tape entry and round-trips bit-exactly.
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // rank-2
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor take0(const Tensor& x, int index);  // [N, ...] -> [...]

// Non-overlapping tiling of [H, W, C] into [n_h*n_w, h, w, C] in row-major
// tile order, and its exact inverse. Dimensions must divide evenly here;
// padding for ragged sizes lives at the patch-grid level.
Tensor split_patches(const Tensor& x, int h, int w);
Tensor stitch_patches(const Tensor& patches, int n_h, int n_w);
Tensor pad_hw(const Tensor& x, int pad_h, int pad_w);  // zero pad bottom/right
Tensor crop_hw(const Tensor& x, int h, int w);         // top-left crop

// ---- reductions / nonlinear ----
Tensor softmax(const Tensor& x, int axis);

enum class PoolKind { average, max };
// [H, W, C] -> [C]. Average pooling sums each channel in a canonical value
// order, so spatially permuted inputs pool bit-identically. Max routes its
// gradient to the lowest flat index among ties.
Tensor pool_spatial(const Tensor& x, PoolKind kind);
Tensor pool_avg(const Tensor& x);
Tensor pool_max(const Tensor& x);
Tensor sum_all(const Tensor& x);  // -> [1]

// ---- linear algebra ----
// [B..., M, K] @ [B..., K, N] -> [B..., M, N]. Batch dimensions must match
// exactly, or either operand may be an unbatched rank-2 matrix shared
// across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- structured ----
Tensor bilinear_upsample(const Tensor& x, int factor);  // [H,W,C] -> [fH,fW,C], align corners false

// Mean cross entropy over scored positions. logits [..., K], labels match
// the leading dims and hold integer class ids or the ignore value. With no
// scored positions the loss is 0 with zero gradients.
Tensor cross_entropy(const Tensor& logits, const Tensor& labels, int ignore_value = 255);

Tensor im2col(const Tensor& x, int kh, int kw, int stride, int pad);
// x [H,W,Cin], w [kh,kw,Cin,Cout], b [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

}  // namespace saca

#pragma once

#include "saca/rng.hpp"
#include "saca/tensor.hpp"

namespace saca {

// Plain scaled dot-product attention: per-pixel linear projections, affinity
// over flattened positions, softmax over keys, weighted value sum.

struct AttentionProjections {
  Tensor wq;  // [c_in, c_out]
  Tensor wk;
  Tensor wv;
  int c_in = 0;
  int c_out = 0;

  static AttentionProjections init(int c_in, int c_out, Rng& rng);
};

// [H, W, c_in] @ [c_in, c_out] applied per pixel.
Tensor project(const Tensor& x, const Tensor& w);

// e[i][j] = dot(q_i, k_j) / sqrt(C)
Tensor affinity(const Tensor& q, const Tensor& k);

// Z_i = sum_j alpha[i][j] v_j; alpha rows must already be normalized.
Tensor aggregate(const Tensor& alpha, const Tensor& v);

Tensor general_attention(const Tensor& xq, const Tensor& xk, const Tensor& xv,
                         const AttentionProjections& params);

}  // namespace saca

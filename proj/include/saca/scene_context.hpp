#pragma once

#include "saca/rng.hpp"
#include "saca/tensor.hpp"

namespace saca {

// Channel gate derived from pooled query statistics: a bottleneck MLP applied
// to the average- and max-pooled query map, summed, squashed by sigmoid.

struct ContextMLP {
  Tensor w0;  // [C, C/epsilon]
  Tensor w1;  // [C/epsilon, C]
  int epsilon = 16;
  bool hidden_relu = true;  // ablation switch for the bottleneck activation

  static ContextMLP init(int c, int epsilon, Rng& rng, bool hidden_relu = true);
};

// [H, W, C] -> [C], every entry strictly in (0, 1).
Tensor context_vector(const Tensor& q_map, const ContextMLP& mlp);

// out[i][d] = q[i][d] * c_vec[d]
Tensor gate_queries(const Tensor& q, const Tensor& c_vec);

}  // namespace saca

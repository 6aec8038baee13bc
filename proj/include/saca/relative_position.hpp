#pragma once

#include <vector>

#include "saca/tensor.hpp"

namespace saca {

struct GridPos {
  int x = 0;  // column
  int y = 0;  // row
};

// Row-major positions of an h x w grid, matching flattened pixel order.
std::vector<GridPos> grid_positions(int h, int w);

// Trainable bucket of relative-offset vectors, indexed by clamped coordinate
// differences. One bucket is shared across all patches.
struct PositionBucket {
  Tensor p;   // [2*xi+1, 2*xi+1, C], axis 0 = x offset, axis 1 = y offset
  int xi = 7;

  static PositionBucket zeros(int xi, int c);
};

// Saturating clamp of a coordinate difference into [-xi, xi].
int clamp_index(int d, int xi);

// p[g(xi_diff)+xi][g(yi_diff)+xi][:]
Tensor lookup(const PositionBucket& bucket, GridPos pos_i, GridPos pos_j);

// bias[i][j] = dot(q_i, lookup(bucket, qpos[i], kpos[j])); unscaled.
Tensor position_bias(const PositionBucket& bucket, const Tensor& q,
                     const std::vector<GridPos>& qpos, const std::vector<GridPos>& kpos);

// e[i][j] = (dot(q_i * c_vec, k_j) + dot(q_i, r_ij)) / sqrt(C)
Tensor scene_aware_affinity(const Tensor& q, const Tensor& k, const Tensor& c_vec,
                            const PositionBucket& bucket, const std::vector<GridPos>& qpos,
                            const std::vector<GridPos>& kpos);

}  // namespace saca

#include "saca/relative_position.hpp"

#include <cmath>

#include "saca/errors.hpp"
#include "saca/ops.hpp"
#include "saca/scene_context.hpp"
#include "saca/tape.hpp"

namespace saca {

std::vector<GridPos> grid_positions(int h, int w) {
  if (h < 1 || w < 1) throw ValueError("grid_positions: empty grid");
  std::vector<GridPos> out;
  out.reserve(static_cast<std::size_t>(h) * w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) out.push_back({col, row});
  }
  return out;
}

PositionBucket PositionBucket::zeros(int xi, int c) {
  if (xi < 0 || c < 1) throw ValueError("PositionBucket: xi must be >= 0 and C >= 1");
  PositionBucket b;
  b.xi = xi;
  b.p = Tensor::zeros({2 * xi + 1, 2 * xi + 1, c});
  return b;
}

int clamp_index(int d, int xi) {
  if (xi < 0) throw ValueError("clamp_index: xi must be >= 0");
  return std::max(-xi, std::min(d, xi));
}

namespace {

// Flat offset of the bucket cell addressed by the pair of positions.
std::size_t cell_offset(const PositionBucket& bucket, GridPos pos_i, GridPos pos_j, int c) {
  const int xi = bucket.xi;
  const int side = 2 * xi + 1;
  const int ix = clamp_index(pos_i.x - pos_j.x, xi) + xi;
  const int iy = clamp_index(pos_i.y - pos_j.y, xi) + xi;
  return (static_cast<std::size_t>(ix) * side + iy) * static_cast<std::size_t>(c);
}

}  // namespace

Tensor lookup(const PositionBucket& bucket, GridPos pos_i, GridPos pos_j) {
  const int c = bucket.p.dim(2);
  const std::size_t base = cell_offset(bucket, pos_i, pos_j, c);
  Tensor out({c});
  const auto& pv = bucket.p.values();
  auto& ov = out.values();
  for (int d = 0; d < c; ++d) ov[d] = pv[base + d];
  if (GradTape* tape = GradTape::active(); tape && bucket.p.requires_grad()) {
    out.set_requires_grad(true);
    auto og = out.grad_ptr();
    auto gp = bucket.p.grad_ptr();
    tape->record([og, gp, base, c] {
      for (int d = 0; d < c; ++d) (*gp)[base + d] += (*og)[d];
    });
  }
  return out;
}

Tensor position_bias(const PositionBucket& bucket, const Tensor& q,
                     const std::vector<GridPos>& qpos, const std::vector<GridPos>& kpos) {
  if (q.rank() != 2) {
    throw DimensionError("position_bias: rank-2 [N,C] queries required, shape is " +
                         shape_str(q.shape()));
  }
  const int nq = q.dim(0), c = q.dim(1);
  if (bucket.p.dim(2) != c) {
    throw DimensionError("position_bias: bucket channels " + shape_str(bucket.p.shape()) +
                         " do not match queries " + shape_str(q.shape()));
  }
  if (static_cast<int>(qpos.size()) != nq) {
    throw DimensionError("position_bias: " + std::to_string(qpos.size()) +
                         " query positions for " + std::to_string(nq) + " queries");
  }
  const int nk = static_cast<int>(kpos.size());
  if (nk < 1) throw DimensionError("position_bias: empty key position list");

  std::vector<std::size_t> cells(static_cast<std::size_t>(nq) * nk);
  for (int i = 0; i < nq; ++i) {
    for (int j = 0; j < nk; ++j) {
      cells[static_cast<std::size_t>(i) * nk + j] = cell_offset(bucket, qpos[i], kpos[j], c);
    }
  }

  Tensor out({nq, nk});
  const auto& qv = q.values();
  const auto& pv = bucket.p.values();
  auto& ov = out.values();
  for (int i = 0; i < nq; ++i) {
    const double* qrow = qv.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < nk; ++j) {
      const double* cell = pv.data() + cells[static_cast<std::size_t>(i) * nk + j];
      double acc = 0.0;
      for (int d = 0; d < c; ++d) acc += qrow[d] * cell[d];
      ov[static_cast<std::size_t>(i) * nk + j] = acc;
    }
  }

  GradTape* tape = GradTape::active();
  if (tape && (q.requires_grad() || bucket.p.requires_grad())) {
    out.set_requires_grad(true);
    auto og = out.grad_ptr();
    auto gq = q.requires_grad() ? q.grad_ptr() : nullptr;
    auto gp = bucket.p.requires_grad() ? bucket.p.grad_ptr() : nullptr;
    auto qd = q.data_ptr();
    auto pd = bucket.p.data_ptr();
    tape->record([og, gq, gp, qd, pd, cells, nq, nk, c] {
      for (int i = 0; i < nq; ++i) {
        const double* qrow = qd->data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < nk; ++j) {
          const double g = (*og)[static_cast<std::size_t>(i) * nk + j];
          const std::size_t base = cells[static_cast<std::size_t>(i) * nk + j];
          if (gq) {
            const double* cell = pd->data() + base;
            double* row = gq->data() + static_cast<std::size_t>(i) * c;
            for (int d = 0; d < c; ++d) row[d] += g * cell[d];
          }
          if (gp) {
            double* cell = gp->data() + base;
            for (int d = 0; d < c; ++d) cell[d] += g * qrow[d];
          }
        }
      }
    });
  }
  return out;
}

Tensor scene_aware_affinity(const Tensor& q, const Tensor& k, const Tensor& c_vec,
                            const PositionBucket& bucket, const std::vector<GridPos>& qpos,
                            const std::vector<GridPos>& kpos) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1)) {
    throw DimensionError("scene_aware_affinity: channel dims disagree, " + shape_str(q.shape()) +
                         " vs " + shape_str(k.shape()));
  }
  const int c = q.dim(1);
  Tensor content = matmul(gate_queries(q, c_vec), transpose(k));
  Tensor bias = position_bias(bucket, q, qpos, kpos);
  return scale(add(content, bias), 1.0 / std::sqrt(static_cast<double>(c)));
}

}  // namespace saca

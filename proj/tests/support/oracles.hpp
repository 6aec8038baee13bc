#pragma once

// Loop-coded reference implementations for the test suites. Everything here
// reads raw value buffers and computes with plain loops, independent of the
// op layer it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "saca/relative_position.hpp"
#include "saca/tensor.hpp"

namespace oracle {

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return 1e300;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const saca::Tensor& a, const saca::Tensor& b) {
  return max_abs_diff(a.values(), b.values());
}

inline bool bit_equal(const saca::Tensor& a, const saca::Tensor& b) {
  return a.shape() == b.shape() && a.values() == b.values();
}

// x [H,W,Cin] @ w [Cin,Cout] per pixel.
inline std::vector<double> project(const saca::Tensor& x, const saca::Tensor& w) {
  const int hgt = x.dim(0), wid = x.dim(1), cin = x.dim(2), cout = w.dim(1);
  std::vector<double> out(static_cast<std::size_t>(hgt) * wid * cout, 0.0);
  const auto& xs = x.values();
  const auto& ws = w.values();
  for (int p = 0; p < hgt * wid; ++p)
    for (int d = 0; d < cout; ++d) {
      double s = 0.0;
      for (int c = 0; c < cin; ++c)
        s += xs[static_cast<std::size_t>(p) * cin + c] * ws[static_cast<std::size_t>(c) * cout + d];
      out[static_cast<std::size_t>(p) * cout + d] = s;
    }
  return out;
}

// e[i][j] = dot(q_i, k_j) / sqrt(C) for q [Nq,C], k [Nk,C].
inline std::vector<double> affinity(const saca::Tensor& q, const saca::Tensor& k) {
  const int nq = q.dim(0), nk = k.dim(0), c = q.dim(1);
  std::vector<double> e(static_cast<std::size_t>(nq) * nk, 0.0);
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < nk; ++j) {
      double s = 0.0;
      for (int d = 0; d < c; ++d)
        s += q.values()[static_cast<std::size_t>(i) * c + d] *
             k.values()[static_cast<std::size_t>(j) * c + d];
      e[static_cast<std::size_t>(i) * nk + j] = s / std::sqrt(static_cast<double>(c));
    }
  return e;
}

inline void softmax_row(double* row, int n) {
  double mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  for (int j = 0; j < n; ++j) row[j] /= sum;
}

// Full scaled dot-product attention on [H,W,Cin] streams, O((HW)^2 C).
inline std::vector<double> general_attention(const saca::Tensor& xq, const saca::Tensor& xk,
                                             const saca::Tensor& xv, const saca::Tensor& wq,
                                             const saca::Tensor& wk, const saca::Tensor& wv) {
  const int hgt = xq.dim(0), wid = xq.dim(1), cout = wq.dim(1);
  const int n = hgt * wid;
  saca::Tensor q({n, cout}, oracle::project(xq, wq));
  saca::Tensor k({n, cout}, oracle::project(xk, wk));
  const std::vector<double> v = oracle::project(xv, wv);
  std::vector<double> e = oracle::affinity(q, k);
  for (int i = 0; i < n; ++i) softmax_row(e.data() + static_cast<std::size_t>(i) * n, n);
  std::vector<double> out(static_cast<std::size_t>(n) * cout, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int d = 0; d < cout; ++d)
        out[static_cast<std::size_t>(i) * cout + d] +=
            e[static_cast<std::size_t>(i) * n + j] * v[static_cast<std::size_t>(j) * cout + d];
  return out;
}

// Bottleneck gate: sigmoid(w1*act(w0*avg) + w1*act(w0*max)).
inline std::vector<double> context_vector(const saca::Tensor& q_map, const saca::Tensor& w0,
                                          const saca::Tensor& w1, bool hidden_relu) {
  const int hgt = q_map.dim(0), wid = q_map.dim(1), c = q_map.dim(2);
  const int hid = w0.dim(1);
  std::vector<double> avg(static_cast<std::size_t>(c), 0.0), mx(static_cast<std::size_t>(c), 0.0);
  for (int d = 0; d < c; ++d) {
    double s = 0.0, m = q_map.values()[static_cast<std::size_t>(d)];
    for (int p = 0; p < hgt * wid; ++p) {
      const double v = q_map.values()[static_cast<std::size_t>(p) * c + d];
      s += v;
      m = std::max(m, v);
    }
    avg[static_cast<std::size_t>(d)] = s / (hgt * wid);
    mx[static_cast<std::size_t>(d)] = m;
  }
  auto branch = [&](const std::vector<double>& pooled) {
    std::vector<double> hmid(static_cast<std::size_t>(hid), 0.0);
    for (int j = 0; j < hid; ++j) {
      double s = 0.0;
      for (int d = 0; d < c; ++d)
        s += pooled[static_cast<std::size_t>(d)] * w0.values()[static_cast<std::size_t>(d) * hid + j];
      hmid[static_cast<std::size_t>(j)] = hidden_relu ? std::max(0.0, s) : s;
    }
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (int d = 0; d < c; ++d) {
      double s = 0.0;
      for (int j = 0; j < hid; ++j)
        s += hmid[static_cast<std::size_t>(j)] * w1.values()[static_cast<std::size_t>(j) * c + d];
      out[static_cast<std::size_t>(d)] = s;
    }
    return out;
  };
  const std::vector<double> a = branch(avg), b = branch(mx);
  std::vector<double> v(static_cast<std::size_t>(c), 0.0);
  for (int d = 0; d < c; ++d)
    v[static_cast<std::size_t>(d)] =
        1.0 / (1.0 + std::exp(-(a[static_cast<std::size_t>(d)] + b[static_cast<std::size_t>(d)])));
  return v;
}

inline int clamp_offset(int d, int xi) { return std::max(-xi, std::min(d, xi)); }

// bias[i][j] = dot(q_i, bucket[g(dx)+xi][g(dy)+xi][:]).
inline std::vector<double> position_bias(const saca::Tensor& bucket, int xi, const saca::Tensor& q,
                                         const std::vector<saca::GridPos>& qpos,
                                         const std::vector<saca::GridPos>& kpos) {
  const int nq = static_cast<int>(qpos.size()), nk = static_cast<int>(kpos.size());
  const int c = q.dim(1), side = 2 * xi + 1;
  std::vector<double> bias(static_cast<std::size_t>(nq) * nk, 0.0);
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < nk; ++j) {
      const int ax = clamp_offset(qpos[static_cast<std::size_t>(i)].x - kpos[static_cast<std::size_t>(j)].x, xi) + xi;
      const int ay = clamp_offset(qpos[static_cast<std::size_t>(i)].y - kpos[static_cast<std::size_t>(j)].y, xi) + xi;
      double s = 0.0;
      for (int d = 0; d < c; ++d)
        s += q.values()[static_cast<std::size_t>(i) * c + d] *
             bucket.values()[(static_cast<std::size_t>(ax) * side + ay) * c + d];
      bias[static_cast<std::size_t>(i) * nk + j] = s;
    }
  return bias;
}

// e[i][j] = (dot(q_i * c_vec, k_j) + dot(q_i, r_ij)) / sqrt(C).
inline std::vector<double> scene_affinity(const saca::Tensor& q, const saca::Tensor& k,
                                          const saca::Tensor& c_vec, const saca::Tensor& bucket,
                                          int xi, const std::vector<saca::GridPos>& qpos,
                                          const std::vector<saca::GridPos>& kpos) {
  const int nq = q.dim(0), c = q.dim(1);
  std::vector<double> gated(static_cast<std::size_t>(nq) * c, 0.0);
  for (int i = 0; i < nq; ++i)
    for (int d = 0; d < c; ++d)
      gated[static_cast<std::size_t>(i) * c + d] =
          q.values()[static_cast<std::size_t>(i) * c + d] * c_vec.values()[static_cast<std::size_t>(d)];
  saca::Tensor gq({nq, c}, gated);
  std::vector<double> e = oracle::affinity(gq, k);
  const std::vector<double> bias = oracle::position_bias(bucket, xi, q, qpos, kpos);
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  for (std::size_t i = 0; i < e.size(); ++i) e[i] += bias[i] * scale;
  return e;
}

// Spatial-softmax class centers followed by argmax scatter, on one map.
// r [H,W,C], logits [H,W,K]; returns the scattered [H,W,C] map.
inline std::vector<double> center_scatter_map(const saca::Tensor& r, const saca::Tensor& logits) {
  const int hgt = r.dim(0), wid = r.dim(1), c = r.dim(2), k = logits.dim(2);
  const int n = hgt * wid;
  std::vector<double> centers(static_cast<std::size_t>(k) * c, 0.0);
  for (int d = 0; d < k; ++d) {
    std::vector<double> col(static_cast<std::size_t>(n), 0.0);
    for (int p = 0; p < n; ++p) col[static_cast<std::size_t>(p)] = logits.values()[static_cast<std::size_t>(p) * k + d];
    softmax_row(col.data(), n);
    for (int p = 0; p < n; ++p)
      for (int cc = 0; cc < c; ++cc)
        centers[static_cast<std::size_t>(d) * c + cc] +=
            col[static_cast<std::size_t>(p)] * r.values()[static_cast<std::size_t>(p) * c + cc];
  }
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  for (int p = 0; p < n; ++p) {
    int best = 0;
    for (int d = 1; d < k; ++d)
      if (logits.values()[static_cast<std::size_t>(p) * k + d] >
          logits.values()[static_cast<std::size_t>(p) * k + best])
        best = d;
    for (int cc = 0; cc < c; ++cc)
      out[static_cast<std::size_t>(p) * c + cc] = centers[static_cast<std::size_t>(best) * c + cc];
  }
  return out;
}

}  // namespace oracle

#include "saca/attention.hpp"

#include <cmath>

#include "saca/errors.hpp"
#include "saca/ops.hpp"

namespace saca {

AttentionProjections AttentionProjections::init(int c_in, int c_out, Rng& rng) {
  if (c_in < 1 || c_out < 1) throw ValueError("AttentionProjections: channel counts must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in));
  AttentionProjections p;
  p.c_in = c_in;
  p.c_out = c_out;
  p.wq = Tensor::uniform({c_in, c_out}, -bound, bound, rng);
  p.wk = Tensor::uniform({c_in, c_out}, -bound, bound, rng);
  p.wv = Tensor::uniform({c_in, c_out}, -bound, bound, rng);
  return p;
}

Tensor project(const Tensor& x, const Tensor& w) {
  if (x.rank() != 3) {
    throw DimensionError("project: rank-3 [H,W,C] input required, shape is " +
                         shape_str(x.shape()));
  }
  if (w.rank() != 2 || x.dim(2) != w.dim(0)) {
    throw DimensionError("project: channels " + shape_str(x.shape()) + " do not match weights " +
                         shape_str(w.shape()));
  }
  const int H = x.dim(0), W = x.dim(1);
  Tensor flat = reshape(x, {H * W, x.dim(2)});
  return reshape(matmul(flat, w), {H, W, w.dim(1)});
}

Tensor affinity(const Tensor& q, const Tensor& k) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1)) {
    throw DimensionError("affinity: channel dims disagree, " + shape_str(q.shape()) + " vs " +
                         shape_str(k.shape()));
  }
  const int C = q.dim(1);
  Tensor e = matmul(q, transpose(k));
  return scale(e, 1.0 / std::sqrt(static_cast<double>(C)));
}

Tensor aggregate(const Tensor& alpha, const Tensor& v) {
  if (alpha.rank() != 2 || v.rank() != 2 || alpha.dim(1) != v.dim(0)) {
    throw DimensionError("aggregate: inner dims disagree, " + shape_str(alpha.shape()) + " vs " +
                         shape_str(v.shape()));
  }
  const auto& av = alpha.values();
  const int nq = alpha.dim(0), nk = alpha.dim(1);
  for (int i = 0; i < nq; ++i) {
    double s = 0.0;
    for (int j = 0; j < nk; ++j) s += av[static_cast<std::size_t>(i) * nk + j];
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValueError("aggregate: weight row " + std::to_string(i) + " sums to " +
                       std::to_string(s) + ", expected 1");
    }
  }
  return matmul(alpha, v);
}

Tensor general_attention(const Tensor& xq, const Tensor& xk, const Tensor& xv,
                         const AttentionProjections& params) {
  if (xq.shape() != xk.shape() || xq.shape() != xv.shape()) {
    throw DimensionError("general_attention: input shapes disagree");
  }
  const int H = xq.dim(0), W = xq.dim(1);
  const int n = H * W, c = params.c_out;
  Tensor q = reshape(project(xq, params.wq), {n, c});
  Tensor k = reshape(project(xk, params.wk), {n, c});
  Tensor v = reshape(project(xv, params.wv), {n, c});
  Tensor alpha = softmax(affinity(q, k), 1);
  return reshape(aggregate(alpha, v), {H, W, c});
}

}  // namespace saca

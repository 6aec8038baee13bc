#include "saca/scene_context.hpp"

#include <cmath>

#include "saca/errors.hpp"
#include "saca/ops.hpp"

namespace saca {

ContextMLP ContextMLP::init(int c, int epsilon, Rng& rng, bool hidden_relu) {
  if (c < 1 || epsilon < 1 || c % epsilon != 0) {
    throw ValueError("ContextMLP: reduction ratio " + std::to_string(epsilon) +
                     " must divide channel count " + std::to_string(c));
  }
  const int hidden = c / epsilon;
  ContextMLP mlp;
  mlp.epsilon = epsilon;
  mlp.hidden_relu = hidden_relu;
  const double b0 = 1.0 / std::sqrt(static_cast<double>(c));
  const double b1 = 1.0 / std::sqrt(static_cast<double>(hidden));
  mlp.w0 = Tensor::uniform({c, hidden}, -b0, b0, rng);
  mlp.w1 = Tensor::uniform({hidden, c}, -b1, b1, rng);
  return mlp;
}

Tensor context_vector(const Tensor& q_map, const ContextMLP& mlp) {
  if (q_map.rank() != 3) {
    throw DimensionError("context_vector: rank-3 [H,W,C] input required, shape is " +
                         shape_str(q_map.shape()));
  }
  const int c = mlp.w0.dim(0);
  if (q_map.dim(2) != c) {
    throw DimensionError("context_vector: channels " + shape_str(q_map.shape()) +
                         " do not match mlp width " + std::to_string(c));
  }
  auto branch = [&](const Tensor& pooled) {
    Tensor h = matmul(reshape(pooled, {1, c}), mlp.w0);
    if (mlp.hidden_relu) h = relu(h);
    return matmul(h, mlp.w1);
  };
  Tensor summed = add(branch(pool_avg(q_map)), branch(pool_max(q_map)));
  return reshape(sigmoid(summed), {c});
}

Tensor gate_queries(const Tensor& q, const Tensor& c_vec) {
  if (c_vec.rank() != 1 || q.rank() < 1 || q.shape().back() != c_vec.dim(0)) {
    throw DimensionError("gate_queries: channel dims disagree, " + shape_str(q.shape()) + " vs " +
                         shape_str(c_vec.shape()));
  }
  return mul_rowvec(q, c_vec);
}

}  // namespace saca

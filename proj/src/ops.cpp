#include "saca/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace saca {

namespace {

using Buf = std::shared_ptr<std::vector<double>>;

// Active tape, but only if some input wants gradients.
GradTape* tape_for(std::initializer_list<const Tensor*> ins) {
  GradTape* t = GradTape::active();
  if (!t) return nullptr;
  for (const Tensor* x : ins) {
    if (x->requires_grad()) return t;
  }
  return nullptr;
}

Buf grad_or_null(const Tensor& t) { return t.requires_grad() ? t.grad_ptr() : nullptr; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// C(MxN) += A(MxK) @ B(KxN)
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(MxN) += A(MxK) @ B^T, with B stored as (NxK)
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double* arow = a + i * k;
      const double* brow = b + j * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C(KxN) += A^T @ G, with A stored as (MxK) and G as (MxN)
void mm_tn(const double* a, const double* g, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* grow = g + i * n;
      double* crow = c + p * n;
      for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  Tensor out(a.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (GradTape* tape = tape_for({&a, &b})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), ga = grad_or_null(a), gb = grad_or_null(b);
    tape->record([og, ga, gb] {
      for (std::size_t i = 0; i < og->size(); ++i) {
        if (ga) (*ga)[i] += (*og)[i];
        if (gb) (*gb)[i] += (*og)[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& av = a.values();
  const auto& bv = b.values();
  Tensor out(a.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (GradTape* tape = tape_for({&a, &b})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), ga = grad_or_null(a), gb = grad_or_null(b);
    tape->record([og, ga, gb] {
      for (std::size_t i = 0; i < og->size(); ++i) {
        if (ga) (*ga)[i] += (*og)[i];
        if (gb) (*gb)[i] -= (*og)[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  Tensor out(a.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (GradTape* tape = tape_for({&a, &b})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), ga = grad_or_null(a), gb = grad_or_null(b);
    Buf ad = a.data_ptr(), bd = b.data_ptr();
    tape->record([og, ga, gb, ad, bd] {
      for (std::size_t i = 0; i < og->size(); ++i) {
        if (ga) (*ga)[i] += (*og)[i] * (*bd)[i];
        if (gb) (*gb)[i] += (*og)[i] * (*ad)[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double s) {
  const auto& xv = x.values();
  Tensor out(x.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = s * xv[i];
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, s] {
      for (std::size_t i = 0; i < og->size(); ++i) (*gx)[i] += s * (*og)[i];
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double s) {
  const auto& xv = x.values();
  Tensor out(x.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + s;
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx] {
      for (std::size_t i = 0; i < og->size(); ++i) (*gx)[i] += (*og)[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const auto& xv = x.values();
  Tensor out(x.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr(), xd = x.data_ptr();
    tape->record([og, gx, xd] {
      for (std::size_t i = 0; i < og->size(); ++i) {
        if ((*xd)[i] > 0.0) (*gx)[i] += (*og)[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  const auto& xv = x.values();
  Tensor out(x.shape());
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      ov[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      ov[i] = e / (1.0 + e);
    }
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr(), od = out.data_ptr();
    tape->record([og, gx, od] {
      for (std::size_t i = 0; i < og->size(); ++i) {
        const double s = (*od)[i];
        (*gx)[i] += (*og)[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  if (v.rank() != 1 || x.rank() < 1 || x.shape().back() != v.dim(0)) {
    throw DimensionError("mul_rowvec: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(v.shape()));
  }
  const int c = v.dim(0);
  const std::size_t rows = x.size() / static_cast<std::size_t>(c);
  const auto& xv = x.values();
  const auto& vv = v.values();
  Tensor out(x.shape());
  auto& ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (int d = 0; d < c; ++d) ov[r * c + d] = xv[r * c + d] * vv[d];
  }
  if (GradTape* tape = tape_for({&x, &v})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = grad_or_null(x), gv = grad_or_null(v);
    Buf xd = x.data_ptr(), vd = v.data_ptr();
    tape->record([og, gx, gv, xd, vd, rows, c] {
      for (std::size_t r = 0; r < rows; ++r) {
        for (int d = 0; d < c; ++d) {
          const std::size_t i = r * c + d;
          if (gx) (*gx)[i] += (*og)[i] * (*vd)[d];
          if (gv) (*gv)[d] += (*og)[i] * (*xd)[i];
        }
      }
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  if (v.rank() != 1 || x.rank() < 1 || x.shape().back() != v.dim(0)) {
    throw DimensionError("add_rowvec: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(v.shape()));
  }
  const int c = v.dim(0);
  const std::size_t rows = x.size() / static_cast<std::size_t>(c);
  const auto& xv = x.values();
  const auto& vv = v.values();
  Tensor out(x.shape());
  auto& ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (int d = 0; d < c; ++d) ov[r * c + d] = xv[r * c + d] + vv[d];
  }
  if (GradTape* tape = tape_for({&x, &v})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = grad_or_null(x), gv = grad_or_null(v);
    tape->record([og, gx, gv, rows, c] {
      for (std::size_t r = 0; r < rows; ++r) {
        for (int d = 0; d < c; ++d) {
          const std::size_t i = r * c + d;
          if (gx) (*gx)[i] += (*og)[i];
          if (gv) (*gv)[d] += (*og)[i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------- shape

Tensor reshape(const Tensor& x, Shape shape) { return x.reshaped_view(std::move(shape)); }

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) {
    throw DimensionError("transpose: rank-2 tensor required, shape is " + shape_str(x.shape()));
  }
  return permute(x, {1, 0});
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw DimensionError("permute: axis list size does not match rank of " + shape_str(x.shape()));
  }
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) {
      throw DimensionError("permute: invalid axis permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  Shape out_shape(perm.size());
  for (int i = 0; i < r; ++i) out_shape[i] = x.dim(perm[static_cast<std::size_t>(i)]);
  Tensor out(out_shape);

  const Shape in_shape = x.shape();
  const auto out_strides = row_major_strides(out_shape);
  // out axis i walks in axis perm[i]; precompute the out stride of each in axis
  std::vector<std::size_t> out_stride_of_in(perm.size(), 0);
  for (int i = 0; i < r; ++i) out_stride_of_in[static_cast<std::size_t>(perm[i])] = out_strides[i];

  const auto& xv = x.values();
  auto& ov = out.values();
  std::vector<int> idx(in_shape.size(), 0);
  std::size_t out_off = 0;
  for (std::size_t flat = 0; flat < xv.size(); ++flat) {
    ov[out_off] = xv[flat];
    for (int ax = r - 1; ax >= 0; --ax) {
      if (++idx[ax] < in_shape[ax]) {
        out_off += out_stride_of_in[ax];
        break;
      }
      out_off -= out_stride_of_in[ax] * static_cast<std::size_t>(in_shape[ax] - 1);
      idx[ax] = 0;
    }
  }

  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, in_shape, out_stride_of_in] {
      const int rr = static_cast<int>(in_shape.size());
      std::vector<int> it(in_shape.size(), 0);
      std::size_t ooff = 0;
      for (std::size_t flat = 0; flat < gx->size(); ++flat) {
        (*gx)[flat] += (*og)[ooff];
        for (int ax = rr - 1; ax >= 0; --ax) {
          if (++it[ax] < in_shape[ax]) {
            ooff += out_stride_of_in[ax];
            break;
          }
          ooff -= out_stride_of_in[ax] * static_cast<std::size_t>(in_shape[ax] - 1);
          it[ax] = 0;
        }
      }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ValueError("concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0 || axis >= r) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(parts[0].shape()));
  }
  int axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch");
    for (int d = 0; d < r; ++d) {
      if (d != axis && p.dim(d) != parts[0].dim(d)) {
        throw DimensionError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                             shape_str(parts[0].shape()));
      }
    }
    axis_total += p.dim(axis);
  }
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  Tensor out(out_shape);

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[d]);
  for (int d = axis + 1; d < r; ++d) inner *= static_cast<std::size_t>(out_shape[d]);

  auto& ov = out.values();
  std::size_t axis_off = 0;
  for (const Tensor& p : parts) {
    const std::size_t na = static_cast<std::size_t>(p.dim(axis));
    const auto& pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(ov.data() + (o * static_cast<std::size_t>(axis_total) + axis_off) * inner,
                  pv.data() + o * na * inner, na * inner * sizeof(double));
    }
    axis_off += na;
  }

  GradTape* tape = GradTape::active();
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr();
    std::vector<Buf> gparts;
    std::vector<std::size_t> sizes;
    for (const Tensor& p : parts) {
      gparts.push_back(grad_or_null(p));
      sizes.push_back(static_cast<std::size_t>(p.dim(axis)));
    }
    const std::size_t total = static_cast<std::size_t>(axis_total);
    tape->record([og, gparts, sizes, outer, inner, total] {
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < gparts.size(); ++pi) {
        const std::size_t na = sizes[pi];
        if (gparts[pi]) {
          auto& g = *gparts[pi];
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = og->data() + (o * total + off) * inner;
            double* dst = g.data() + o * na * inner;
            for (std::size_t i = 0; i < na * inner; ++i) dst[i] += src[i];
          }
        }
        off += na;
      }
    });
  }
  return out;
}

Tensor take0(const Tensor& x, int index) {
  if (x.rank() < 1) throw DimensionError("take0: rank-1+ tensor required");
  const int n = x.dim(0);
  if (index < 0 || index >= n) {
    throw DimensionError("take0: index " + std::to_string(index) + " out of range for shape " +
                         shape_str(x.shape()));
  }
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const std::size_t block = out.size();
  const std::size_t base = static_cast<std::size_t>(index) * block;
  std::memcpy(out.values().data(), x.values().data() + base, block * sizeof(double));
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, base, block] {
      for (std::size_t i = 0; i < block; ++i) (*gx)[base + i] += (*og)[i];
    });
  }
  return out;
}

namespace {

void require_rank3(const Tensor& x, const char* op) {
  if (x.rank() != 3) {
    throw DimensionError(std::string(op) + ": rank-3 [H,W,C] tensor required, shape is " +
                         shape_str(x.shape()));
  }
}

}  // namespace

Tensor split_patches(const Tensor& x, int h, int w) {
  require_rank3(x, "split_patches");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (h <= 0 || w <= 0 || H % h != 0 || W % w != 0) {
    throw DimensionError("split_patches: patch " + std::to_string(h) + "x" + std::to_string(w) +
                         " does not tile " + shape_str(x.shape()));
  }
  const int nh = H / h, nw = W / w;
  Tensor out({nh * nw, h, w, C});
  const auto& xv = x.values();
  auto& ov = out.values();
  const std::size_t seg = static_cast<std::size_t>(w) * C;
  for (int th = 0; th < nh; ++th) {
    for (int tw = 0; tw < nw; ++tw) {
      const int t = th * nw + tw;
      for (int r = 0; r < h; ++r) {
        const std::size_t src = (static_cast<std::size_t>(th * h + r) * W + tw * w) * C;
        const std::size_t dst = (static_cast<std::size_t>(t) * h + r) * seg;
        std::memcpy(ov.data() + dst, xv.data() + src, seg * sizeof(double));
      }
    }
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, nh, nw, h, w, W, C, seg] {
      for (int th = 0; th < nh; ++th) {
        for (int tw = 0; tw < nw; ++tw) {
          const int t = th * nw + tw;
          for (int r = 0; r < h; ++r) {
            const std::size_t src = (static_cast<std::size_t>(th * h + r) * W + tw * w) * C;
            const std::size_t dst = (static_cast<std::size_t>(t) * h + r) * seg;
            for (std::size_t i = 0; i < seg; ++i) (*gx)[src + i] += (*og)[dst + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor stitch_patches(const Tensor& patches, int n_h, int n_w) {
  if (patches.rank() != 4) {
    throw DimensionError("stitch_patches: rank-4 [N,h,w,C] tensor required, shape is " +
                         shape_str(patches.shape()));
  }
  const int N = patches.dim(0), h = patches.dim(1), w = patches.dim(2), C = patches.dim(3);
  if (n_h <= 0 || n_w <= 0 || N != n_h * n_w) {
    throw DimensionError("stitch_patches: tile count " + std::to_string(N) + " does not match " +
                         std::to_string(n_h) + "x" + std::to_string(n_w));
  }
  const int W = n_w * w;
  Tensor out({n_h * h, W, C});
  const auto& pv = patches.values();
  auto& ov = out.values();
  const std::size_t seg = static_cast<std::size_t>(w) * C;
  for (int th = 0; th < n_h; ++th) {
    for (int tw = 0; tw < n_w; ++tw) {
      const int t = th * n_w + tw;
      for (int r = 0; r < h; ++r) {
        const std::size_t dst = (static_cast<std::size_t>(th * h + r) * W + tw * w) * C;
        const std::size_t src = (static_cast<std::size_t>(t) * h + r) * seg;
        std::memcpy(ov.data() + dst, pv.data() + src, seg * sizeof(double));
      }
    }
  }
  if (GradTape* tape = tape_for({&patches})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gp = patches.grad_ptr();
    tape->record([og, gp, n_h, n_w, h, w, W, C, seg] {
      for (int th = 0; th < n_h; ++th) {
        for (int tw = 0; tw < n_w; ++tw) {
          const int t = th * n_w + tw;
          for (int r = 0; r < h; ++r) {
            const std::size_t dst = (static_cast<std::size_t>(th * h + r) * W + tw * w) * C;
            const std::size_t src = (static_cast<std::size_t>(t) * h + r) * seg;
            for (std::size_t i = 0; i < seg; ++i) (*gp)[src + i] += (*og)[dst + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor pad_hw(const Tensor& x, int pad_h, int pad_w) {
  require_rank3(x, "pad_hw");
  if (pad_h < 0 || pad_w < 0) throw ValueError("pad_hw: negative padding");
  if (pad_h == 0 && pad_w == 0) return x;
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int Ho = H + pad_h, Wo = W + pad_w;
  Tensor out({Ho, Wo, C});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int i = 0; i < H; ++i) {
    std::memcpy(ov.data() + static_cast<std::size_t>(i) * Wo * C,
                xv.data() + static_cast<std::size_t>(i) * W * C,
                static_cast<std::size_t>(W) * C * sizeof(double));
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, H, W, Wo, C] {
      for (int i = 0; i < H; ++i) {
        const double* src = og->data() + static_cast<std::size_t>(i) * Wo * C;
        double* dst = gx->data() + static_cast<std::size_t>(i) * W * C;
        for (std::size_t j = 0; j < static_cast<std::size_t>(W) * C; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor crop_hw(const Tensor& x, int h, int w) {
  require_rank3(x, "crop_hw");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (h <= 0 || w <= 0 || h > H || w > W) {
    throw DimensionError("crop_hw: crop " + std::to_string(h) + "x" + std::to_string(w) +
                         " invalid for shape " + shape_str(x.shape()));
  }
  if (h == H && w == W) return x;
  Tensor out({h, w, C});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int i = 0; i < h; ++i) {
    std::memcpy(ov.data() + static_cast<std::size_t>(i) * w * C,
                xv.data() + static_cast<std::size_t>(i) * W * C,
                static_cast<std::size_t>(w) * C * sizeof(double));
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, h, w, W, C] {
      for (int i = 0; i < h; ++i) {
        const double* src = og->data() + static_cast<std::size_t>(i) * w * C;
        double* dst = gx->data() + static_cast<std::size_t>(i) * W * C;
        for (std::size_t j = 0; j < static_cast<std::size_t>(w) * C; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// ----------------------------------------------------------------- reductions

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(s[d]);
  for (int d = axis + 1; d < x.rank(); ++d) inner *= static_cast<std::size_t>(s[d]);
  const std::size_t n = static_cast<std::size_t>(s[axis]);

  Tensor out(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double m = xv[base];
      for (std::size_t j = 1; j < n; ++j) m = std::max(m, xv[base + j * inner]);
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - m);
        ov[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < n; ++j) ov[base + j * inner] /= denom;
    }
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr(), od = out.data_ptr();
    tape->record([og, gx, od, outer, inner, n] {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dot += (*og)[base + j * inner] * (*od)[base + j * inner];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = base + j * inner;
            (*gx)[k] += (*od)[k] * ((*og)[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor pool_avg(const Tensor& x) {
  require_rank3(x, "pool_avg");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor out({C});
  const auto& xv = x.values();
  auto& ov = out.values();
  std::vector<double> scratch(hw);
  for (int c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < hw; ++p) scratch[p] = xv[p * C + c];
    std::sort(scratch.begin(), scratch.end());
    double acc = 0.0;
    for (double v : scratch) acc += v;
    ov[c] = acc / static_cast<double>(hw);
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    const int cc = C;
    tape->record([og, gx, hw, cc] {
      const double inv = 1.0 / static_cast<double>(hw);
      for (int c = 0; c < cc; ++c) {
        const double g = (*og)[c] * inv;
        for (std::size_t p = 0; p < hw; ++p) (*gx)[p * cc + c] += g;
      }
    });
  }
  return out;
}

Tensor pool_max(const Tensor& x) {
  require_rank3(x, "pool_max");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor out({C});
  const auto& xv = x.values();
  auto& ov = out.values();
  std::vector<std::size_t> args(static_cast<std::size_t>(C), 0);
  for (int c = 0; c < C; ++c) {
    double best = xv[c];
    std::size_t arg = 0;
    for (std::size_t p = 1; p < hw; ++p) {
      const double v = xv[p * C + c];
      if (v > best) {  // strict: ties keep the lowest flat index
        best = v;
        arg = p;
      }
    }
    ov[c] = best;
    args[static_cast<std::size_t>(c)] = arg;
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    const int cc = C;
    tape->record([og, gx, args, cc] {
      for (int c = 0; c < cc; ++c) (*gx)[args[static_cast<std::size_t>(c)] * cc + c] += (*og)[c];
    });
  }
  return out;
}

Tensor pool_spatial(const Tensor& x, PoolKind kind) {
  return kind == PoolKind::average ? pool_avg(x) : pool_max(x);
}

Tensor sum_all(const Tensor& x) {
  const auto& xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx] {
      const double g = (*og)[0];
      for (double& v : *gx) v += g;
    });
  }
  return out;
}

// ------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: rank-2+ tensors required, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const int M = a.dim(a.rank() - 2), K = a.dim(a.rank() - 1);
  const int Kb = b.dim(b.rank() - 2), N = b.dim(b.rank() - 1);
  if (K != Kb) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " @ " +
                         shape_str(b.shape()));
  }
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  if (!a_batch.empty() && !b_batch.empty() && a_batch != b_batch) {
    throw DimensionError("matmul: batch dimensions disagree, " + shape_str(a.shape()) + " @ " +
                         shape_str(b.shape()));
  }
  const Shape& batch = a_batch.empty() ? b_batch : a_batch;
  const std::size_t nb = shape_numel(batch);
  const bool a_batched = !a_batch.empty();
  const bool b_batched = !b_batch.empty();

  Shape out_shape = batch;
  out_shape.push_back(M);
  out_shape.push_back(N);
  Tensor out(out_shape);

  const std::size_t a_step = a_batched ? static_cast<std::size_t>(M) * K : 0;
  const std::size_t b_step = b_batched ? static_cast<std::size_t>(K) * N : 0;
  const std::size_t o_step = static_cast<std::size_t>(M) * N;

  const double* ad = a.values().data();
  const double* bd = b.values().data();
  double* od = out.values().data();
  for (std::size_t t = 0; t < nb; ++t) {
    mm_nn(ad + t * a_step, bd + t * b_step, od + t * o_step, M, K, N);
  }

  if (GradTape* tape = tape_for({&a, &b})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), ga = grad_or_null(a), gb = grad_or_null(b);
    Buf adp = a.data_ptr(), bdp = b.data_ptr();
    tape->record([og, ga, gb, adp, bdp, nb, a_step, b_step, o_step, M, K, N] {
      for (std::size_t t = 0; t < nb; ++t) {
        const double* g = og->data() + t * o_step;
        if (ga) {
          // dA(MxK) += G(MxN) @ B^T, B stored (KxN)
          mm_nt(g, bdp->data() + t * b_step, ga->data() + t * a_step, M, N, K);
        }
        if (gb) {
          // dB(KxN) += A^T @ G, A stored (MxK)
          mm_tn(adp->data() + t * a_step, g, gb->data() + t * b_step, M, K, N);
        }
      }
    });
  }
  return out;
}

// ----------------------------------------------------------------- structured

Tensor bilinear_upsample(const Tensor& x, int factor) {
  require_rank3(x, "bilinear_upsample");
  if (factor < 1) throw ValueError("bilinear_upsample: factor must be >= 1");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int Ho = H * factor, Wo = W * factor;

  // align_corners = false sampling grid
  auto make_axis = [factor](int in_n, int out_n) {
    std::vector<int> i0(out_n), i1(out_n);
    std::vector<double> frac(out_n);
    for (int i = 0; i < out_n; ++i) {
      double src = (i + 0.5) / factor - 0.5;
      if (src < 0.0) src = 0.0;
      if (src > in_n - 1) src = in_n - 1;
      int lo = static_cast<int>(src);
      if (lo > in_n - 1) lo = in_n - 1;
      i0[i] = lo;
      i1[i] = std::min(lo + 1, in_n - 1);
      frac[i] = src - lo;
    }
    return std::make_tuple(i0, i1, frac);
  };
  auto [y0, y1, fy] = make_axis(H, Ho);
  auto [x0, x1, fx] = make_axis(W, Wo);

  Tensor out({Ho, Wo, C});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int i = 0; i < Ho; ++i) {
    for (int j = 0; j < Wo; ++j) {
      const double wy = fy[i], wx = fx[j];
      const std::size_t p00 = (static_cast<std::size_t>(y0[i]) * W + x0[j]) * C;
      const std::size_t p01 = (static_cast<std::size_t>(y0[i]) * W + x1[j]) * C;
      const std::size_t p10 = (static_cast<std::size_t>(y1[i]) * W + x0[j]) * C;
      const std::size_t p11 = (static_cast<std::size_t>(y1[i]) * W + x1[j]) * C;
      double* orow = ov.data() + (static_cast<std::size_t>(i) * Wo + j) * C;
      for (int c = 0; c < C; ++c) {
        orow[c] = (1.0 - wy) * ((1.0 - wx) * xv[p00 + c] + wx * xv[p01 + c]) +
                  wy * ((1.0 - wx) * xv[p10 + c] + wx * xv[p11 + c]);
      }
    }
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, y0 = y0, y1 = y1, fy = fy, x0 = x0, x1 = x1, fx = fx, W, C, Ho, Wo] {
      for (int i = 0; i < Ho; ++i) {
        for (int j = 0; j < Wo; ++j) {
          const double wy = fy[i], wx = fx[j];
          const std::size_t p00 = (static_cast<std::size_t>(y0[i]) * W + x0[j]) * C;
          const std::size_t p01 = (static_cast<std::size_t>(y0[i]) * W + x1[j]) * C;
          const std::size_t p10 = (static_cast<std::size_t>(y1[i]) * W + x0[j]) * C;
          const std::size_t p11 = (static_cast<std::size_t>(y1[i]) * W + x1[j]) * C;
          const double* grow = og->data() + (static_cast<std::size_t>(i) * Wo + j) * C;
          for (int c = 0; c < C; ++c) {
            const double g = grow[c];
            (*gx)[p00 + c] += (1.0 - wy) * (1.0 - wx) * g;
            (*gx)[p01 + c] += (1.0 - wy) * wx * g;
            (*gx)[p10 + c] += wy * (1.0 - wx) * g;
            (*gx)[p11 + c] += wy * wx * g;
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const Tensor& labels, int ignore_value) {
  if (logits.rank() < 2) {
    throw DimensionError("cross_entropy: logits must be rank-2+, shape is " +
                         shape_str(logits.shape()));
  }
  Shape lead(logits.shape().begin(), logits.shape().end() - 1);
  if (labels.shape() != lead) {
    throw DimensionError("cross_entropy: labels " + shape_str(labels.shape()) +
                         " do not match logits " + shape_str(logits.shape()));
  }
  const int K = logits.shape().back();
  const std::size_t rows = labels.size();
  const auto& lv = logits.values();
  const auto& yv = labels.values();

  std::vector<int> ids(rows);
  std::size_t scored = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double v = yv[r];
    const long long iv = std::llround(v);
    if (static_cast<double>(iv) != v) {
      throw ValueError("cross_entropy: non-integer label value");
    }
    if (iv == ignore_value) {
      ids[r] = -1;
      continue;
    }
    if (iv < 0 || iv >= K) {
      throw ValueError("cross_entropy: label " + std::to_string(iv) + " out of range [0," +
                       std::to_string(K) + ")");
    }
    ids[r] = static_cast<int>(iv);
    ++scored;
  }

  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (ids[r] < 0) continue;
    const double* row = lv.data() + r * static_cast<std::size_t>(K);
    double m = row[0];
    for (int k = 1; k < K; ++k) m = std::max(m, row[k]);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(row[k] - m);
    total += (m + std::log(denom)) - row[ids[r]];
  }
  const double loss = scored ? total / static_cast<double>(scored) : 0.0;

  Tensor out = Tensor::scalar(loss);
  if (GradTape* tape = tape_for({&logits})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gl = logits.grad_ptr(), ld = logits.data_ptr();
    tape->record([og, gl, ld, ids, scored, K] {
      if (!scored) return;
      const double g = (*og)[0] / static_cast<double>(scored);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0) continue;
        const double* row = ld->data() + r * static_cast<std::size_t>(K);
        double m = row[0];
        for (int k = 1; k < K; ++k) m = std::max(m, row[k]);
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(row[k] - m);
        double* grow = gl->data() + r * static_cast<std::size_t>(K);
        for (int k = 0; k < K; ++k) {
          const double p = std::exp(row[k] - m) / denom;
          grow[k] += g * (p - (k == ids[r] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor im2col(const Tensor& x, int kh, int kw, int stride, int pad) {
  require_rank3(x, "im2col");
  if (kh < 1 || kw < 1 || stride < 1 || pad < 0) throw ValueError("im2col: bad geometry");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H + 2 * pad < kh || W + 2 * pad < kw) {
    throw DimensionError("im2col: kernel larger than padded input " + shape_str(x.shape()));
  }
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  const int cols = kh * kw * C;
  Tensor out({Ho * Wo, cols});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      double* row = ov.data() + (static_cast<std::size_t>(oy) * Wo + ox) * cols;
      std::size_t q = 0;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
            const double* src = xv.data() + (static_cast<std::size_t>(iy) * W + ix) * C;
            for (int c = 0; c < C; ++c) row[q++] = src[c];
          } else {
            for (int c = 0; c < C; ++c) row[q++] = 0.0;
          }
        }
      }
    }
  }
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    Buf og = out.grad_ptr(), gx = x.grad_ptr();
    tape->record([og, gx, H, W, C, kh, kw, stride, pad, Ho, Wo, cols] {
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          const double* row = og->data() + (static_cast<std::size_t>(oy) * Wo + ox) * cols;
          std::size_t q = 0;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - pad + ky;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                double* dst = gx->data() + (static_cast<std::size_t>(iy) * W + ix) * C;
                for (int c = 0; c < C; ++c) dst[c] += row[q++];
              } else {
                q += static_cast<std::size_t>(C);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (w.rank() != 4) {
    throw DimensionError("conv2d: weights must be [kh,kw,Cin,Cout], shape is " +
                         shape_str(w.shape()));
  }
  const int kh = w.dim(0), kw = w.dim(1), cin = w.dim(2), cout = w.dim(3);
  require_rank3(x, "conv2d");
  if (x.dim(2) != cin) {
    throw DimensionError("conv2d: input channels " + shape_str(x.shape()) +
                         " do not match weights " + shape_str(w.shape()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != cout)) {
    throw DimensionError("conv2d: bias " + shape_str(b.shape()) + " does not match weights " +
                         shape_str(w.shape()));
  }
  const int H = x.dim(0), W = x.dim(1);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;

  Tensor cols = im2col(x, kh, kw, stride, pad);
  Tensor wmat = reshape(w, {kh * kw * cin, cout});
  Tensor out = matmul(cols, wmat);
  if (b.defined()) out = add_rowvec(out, b);
  return reshape(out, {Ho, Wo, cout});
}

}  // namespace saca

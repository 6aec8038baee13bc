#include "saca/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace saca {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> strides(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * static_cast<std::size_t>(s[i + 1]);
  }
  return strides;
}

namespace {

std::size_t checked_numel(const Shape& s) {
  if (s.empty()) throw ValueError("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ValueError("tensor shape entries must be positive, got " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  const std::size_t n = checked_numel(shape_);
  data_ = std::make_shared<std::vector<double>>(n, 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  const std::size_t n = checked_numel(shape_);
  if (n != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape_));
  }
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = v;
  return t;
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::size() const { return data_ ? data_->size() : 0; }

std::vector<double>& Tensor::values() {
  if (!data_) throw ValueError("use of an undefined tensor");
  return *data_;
}

const std::vector<double>& Tensor::values() const {
  if (!data_) throw ValueError("use of an undefined tensor");
  return *data_;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() needs a size-1 tensor, shape is " + shape_str(shape_));
  return (*data_)[0];
}

namespace {

std::size_t index_offset(const Shape& shape, std::initializer_list<int> idx) {
  if (idx.size() != shape.size()) {
    throw DimensionError("index rank " + std::to_string(idx.size()) + " does not match shape " +
                         shape_str(shape));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  const auto strides = row_major_strides(shape);
  for (int i : idx) {
    if (i < 0 || i >= shape[axis]) {
      throw DimensionError("index " + std::to_string(i) + " out of range for shape " +
                           shape_str(shape));
    }
    off += static_cast<std::size_t>(i) * strides[axis];
    ++axis;
  }
  return off;
}

}  // namespace

double& Tensor::at(std::initializer_list<int> idx) { return values()[index_offset(shape_, idx)]; }

double Tensor::at(std::initializer_list<int> idx) const {
  return values()[index_offset(shape_, idx)];
}

Tensor& Tensor::set_requires_grad(bool rg) {
  requires_grad_ = rg;
  if (rg) {
    if (!data_) throw ValueError("cannot track gradients of an undefined tensor");
    if (!grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
  } else {
    grad_.reset();
  }
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (!grad_) throw ValueError("tensor has no gradient buffer (requires_grad not set)");
  return *grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) throw ValueError("tensor has no gradient buffer (requires_grad not set)");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::reshaped_view(Shape shape) const {
  const std::size_t n = checked_numel(shape);
  if (n != size()) {
    throw DimensionError("cannot view shape " + shape_str(shape_) + " as " + shape_str(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  out.grad_ = grad_;
  out.requires_grad_ = requires_grad_;
  return out;
}

}  // namespace saca

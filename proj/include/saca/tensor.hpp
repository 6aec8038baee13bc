#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "saca/errors.hpp"
#include "saca/rng.hpp"

namespace saca {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);
std::vector<std::size_t> row_major_strides(const Shape& s);

// Dense row-major float64 tensor. The value buffer is shared between
// copies, so copying a Tensor aliases its payload; values are treated as
// immutable once the tensor participates in a recorded operation, and the
// gradient buffer is the only thing that is mutated afterwards.
//
// Setting requires_grad allocates the gradient buffer immediately, so every
// copy made afterwards accumulates into the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double item() const;  // size-1 tensors only

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool rg);
  bool has_grad() const { return grad_ != nullptr; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // Shared-payload internals used by the op layer.
  const std::shared_ptr<std::vector<double>>& data_ptr() const { return data_; }
  const std::shared_ptr<std::vector<double>>& grad_ptr() const { return grad_; }

  // Aliasing view with the same flat payload (used by reshape).
  Tensor reshaped_view(Shape shape) const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

}  // namespace saca

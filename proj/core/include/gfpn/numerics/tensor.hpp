#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gfpn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major f64 array. Immutable once constructed, so copies share
/// storage and are safe to read from several threads.
///
/// Construction rejects NaN and infinities; every tensor in the system is
/// finite.
class Tensor {
 public:
  /// Rank-0 tensor holding 0.
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_->size(); }
  bool is_scalar() const { return data_->size() == 1 && shape_.size() <= 1; }

  std::span<const double> data() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor with_requires_grad(bool flag) const;
  Tensor reshaped(Shape shape) const;

  /// Exact element-wise and shape equality.
  bool equals(const Tensor& other) const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  bool requires_grad_ = false;
};

}  // namespace gfpn

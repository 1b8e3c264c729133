#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "auxvae/error.hpp"

namespace auxvae::tensor {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

// Dense row-major array. A rank-0 tensor (empty shape) holds one scalar.
// Zero extents are allowed so that empty latent blocks (d = 0) stay
// representable.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{}) {}
  explicit Tensor(Shape shape, T fill = T{});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  // Builds a 2-D tensor from nested rows, mostly for tests.
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // 2-D element access; no bounds checks beyond debug asserts.
  T& at(std::size_t row, std::size_t col) noexcept;
  const T& at(std::size_t row, std::size_t col) const noexcept;

  // Value of a single-element tensor.
  T item() const;

  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  void fill(T value);

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace auxvae::tensor

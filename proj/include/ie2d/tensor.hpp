#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ie2d {

// NCHW extent of a dense activation tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  T operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  std::span<T> sample(int n) {
    return {data_.data() + n * shape_.sample_size(), shape_.sample_size()};
  }
  std::span<const T> sample(int n) const {
    return {data_.data() + n * shape_.sample_size(), shape_.sample_size()};
  }
  std::span<T> plane(int n, int c) {
    return {data_.data() + (n * shape_.c + c) * shape_.plane_size(), shape_.plane_size()};
  }
  std::span<const T> plane(int n, int c) const {
    return {data_.data() + (n * shape_.c + c) * shape_.plane_size(), shape_.plane_size()};
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace ie2d

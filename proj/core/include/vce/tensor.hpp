#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vce/image.hpp"

namespace vce {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense NCHW batch of feature maps.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  [[nodiscard]] int n() const noexcept { return n_; }
  [[nodiscard]] int c() const noexcept { return c_; }
  [[nodiscard]] int h() const noexcept { return h_; }
  [[nodiscard]] int w() const noexcept { return w_; }
  [[nodiscard]] std::array<int, 4> shape() const noexcept { return {n_, c_, h_, w_}; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h_) * static_cast<std::size_t>(w_);
  }
  [[nodiscard]] std::size_t sample_size() const noexcept { return plane() * c_; }

  double* data() noexcept { return data_.data(); }
  [[nodiscard]] const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }

  double* sample(int i) noexcept { return data_.data() + sample_size() * i; }
  [[nodiscard]] const double* sample(int i) const noexcept {
    return data_.data() + sample_size() * i;
  }

  double& at(int n, int c, int h, int w) noexcept { return data_[index(n, c, h, w)]; }
  [[nodiscard]] double at(int n, int c, int h, int w) const noexcept {
    return data_[index(n, c, h, w)];
  }

  void fill(double value);
  [[nodiscard]] bool same_shape(const Tensor& other) const noexcept {
    return shape() == other.shape();
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  [[nodiscard]] std::size_t index(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + h) * w_ + w;
  }

  int n_ = 0;
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Tensor& t);

/// Batches equally sized images into an N x 3 x H x W tensor.
Tensor stack_images(std::span<const ImageTensor> images);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, begin + count) of `t`.
Tensor slice_channels(const Tensor& t, int begin, int count);

/// N x (C*H*W) row-major copy.
Matrix flatten(const Tensor& t);
/// N x C x 1 x 1 view of a matrix.
Tensor unflatten(const Matrix& m);

}  // namespace vce

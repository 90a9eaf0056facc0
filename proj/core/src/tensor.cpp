#include "vce/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "vce/error.hpp"

namespace vce {

Tensor::Tensor(int n, int c, int h, int w, double fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw Error(ErrorKind::InvalidArgument, "negative tensor dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_string(const Tensor& t) {
  return std::to_string(t.n()) + "x" + std::to_string(t.c()) + "x" + std::to_string(t.h()) + "x" +
         std::to_string(t.w());
}

Tensor stack_images(std::span<const ImageTensor> images) {
  if (images.empty()) throw Error(ErrorKind::InvalidArgument, "cannot stack an empty batch");
  const int h = images.front().height;
  const int w = images.front().width;
  Tensor out(static_cast<int>(images.size()), ImageTensor::kChannels, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height != h || images[i].width != w) {
      throw Error(ErrorKind::ShapeMismatch, "batch images differ in size");
    }
    std::copy(images[i].data.begin(), images[i].data.end(), out.sample(static_cast<int>(i)));
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw Error(ErrorKind::ShapeMismatch, "concat of " + shape_string(a) + " and " + shape_string(b));
  }
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.sample(n), a.sample_size(), out.sample(n));
    std::copy_n(b.sample(n), b.sample_size(), out.sample(n) + a.sample_size());
  }
  return out;
}

Tensor slice_channels(const Tensor& t, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > t.c()) {
    throw Error(ErrorKind::ShapeMismatch, "channel slice out of range for " + shape_string(t));
  }
  Tensor out(t.n(), count, t.h(), t.w());
  for (int n = 0; n < t.n(); ++n) {
    std::copy_n(t.sample(n) + t.plane() * begin, out.sample_size(), out.sample(n));
  }
  return out;
}

Matrix flatten(const Tensor& t) {
  Matrix m(t.n(), static_cast<Eigen::Index>(t.sample_size()));
  std::copy(t.data(), t.data() + t.size(), m.data());
  return m;
}

Tensor unflatten(const Matrix& m) {
  Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 1, 1);
  std::copy(m.data(), m.data() + m.size(), t.data());
  return t;
}

}  // namespace vce

#include "vce/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vce/error.hpp"

namespace vce {

namespace {

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

void require_cached(const Tensor& cache, const char* layer) {
  if (cache.empty()) {
    throw Error(ErrorKind::InvalidArgument,
                std::string(layer) + ": backward() requires a preceding Train-mode forward()");
  }
}

void require_channels(const Tensor& x, int channels, const char* layer) {
  if (x.c() != channels) {
    throw Error(ErrorKind::ShapeMismatch, std::string(layer) + " expects " + std::to_string(channels) +
                                              " channels, got " + shape_string(x));
  }
}

}  // namespace

void Module::collect(const std::string&, std::vector<ParamRef>&) {}

std::vector<ParamRef> Module::parameters(const std::string& prefix) {
  std::vector<ParamRef> out;
  collect(prefix, out);
  return out;
}

void Module::zero_grad() {
  for (auto& p : parameters()) {
    if (p.grad) p.grad->fill(0.0);
  }
}

// --- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(padding),
      weight_(out_channels, in_channels, kernel, kernel),
      weight_grad_(out_channels, in_channels, kernel, kernel) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || padding < 0) {
    throw Error(ErrorKind::InvalidArgument, "invalid Conv2d geometry");
  }
}

void Conv2d::init(Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_ * kernel_ * kernel_));
  for (double& w : weight_.values()) w = rng.uniform(-bound, bound);
}

void Conv2d::im2col(const double* image, int h, int w, Matrix& cols) const {
  const int ho = output_size(h);
  const int wo = output_size(w);
  cols.resize(static_cast<Eigen::Index>(in_) * kernel_ * kernel_, static_cast<Eigen::Index>(ho) * wo);
  double* dst = cols.data();
  for (int ci = 0; ci < in_; ++ci) {
    const double* plane = image + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, 0.0);
            dst += wo;
            continue;
          }
          const double* row = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            *dst++ = (ix >= 0 && ix < w) ? row[ix] : 0.0;
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const Matrix& cols, int h, int w, double* image) const {
  const int ho = output_size(h);
  const int wo = output_size(w);
  const double* src = cols.data();
  for (int ci = 0; ci < in_; ++ci) {
    double* plane = image + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) {
            src += wo;
            continue;
          }
          double* row = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox, ++src) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < w) row[ix] += *src;
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
  require_channels(x, in_, "Conv2d");
  const int ho = output_size(x.h());
  const int wo = output_size(x.w());
  if (ho <= 0 || wo <= 0) throw Error(ErrorKind::ShapeMismatch, "Conv2d input too small: " + shape_string(x));

  Tensor out(x.n(), out_, ho, wo);
  ConstMatrixMap weight(weight_.data(), out_, static_cast<Eigen::Index>(in_) * kernel_ * kernel_);
  Matrix cols;
  for (int n = 0; n < x.n(); ++n) {
    MatrixMap y(out.sample(n), out_, static_cast<Eigen::Index>(ho) * wo);
    if (is_pointwise()) {
      y.noalias() = weight * ConstMatrixMap(x.sample(n), in_, static_cast<Eigen::Index>(x.plane()));
    } else {
      im2col(x.sample(n), x.h(), x.w(), cols);
      y.noalias() = weight * cols;
    }
  }
  input_ = mode == Mode::Train ? x : Tensor{};
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  require_cached(input_, "Conv2d");
  const Tensor& x = input_;
  const int ho = output_size(x.h());
  const int wo = output_size(x.w());
  if (grad_out.n() != x.n() || grad_out.c() != out_ || grad_out.h() != ho || grad_out.w() != wo) {
    throw Error(ErrorKind::ShapeMismatch, "Conv2d backward got " + shape_string(grad_out));
  }

  const Eigen::Index patch = static_cast<Eigen::Index>(in_) * kernel_ * kernel_;
  ConstMatrixMap weight(weight_.data(), out_, patch);
  MatrixMap dweight(weight_grad_.data(), out_, patch);
  Tensor dx(x.n(), x.c(), x.h(), x.w());
  Matrix cols;
  Matrix dcols;
  for (int n = 0; n < x.n(); ++n) {
    ConstMatrixMap dy(grad_out.sample(n), out_, static_cast<Eigen::Index>(ho) * wo);
    if (is_pointwise()) {
      ConstMatrixMap xin(x.sample(n), in_, static_cast<Eigen::Index>(x.plane()));
      dweight.noalias() += dy * xin.transpose();
      MatrixMap(dx.sample(n), in_, static_cast<Eigen::Index>(x.plane())).noalias() = weight.transpose() * dy;
    } else {
      im2col(x.sample(n), x.h(), x.w(), cols);
      dweight.noalias() += dy * cols.transpose();
      dcols.noalias() = weight.transpose() * dy;
      col2im(dcols, x.h(), x.w(), dx.sample(n));
    }
  }
  return dx;
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "weight", &weight_, &weight_grad_});
}

// --- BatchNorm2d ------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels)
    : channels_(channels), gamma_(1, channels, 1, 1, 1.0), beta_(1, channels, 1, 1),
      gamma_grad_(1, channels, 1, 1), beta_grad_(1, channels, 1, 1),
      running_mean_(1, channels, 1, 1), running_var_(1, channels, 1, 1, 1.0) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  require_channels(x, channels_, "BatchNorm2d");
  Tensor out(x.n(), x.c(), x.h(), x.w());
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(plane) * x.n();

  if (mode == Mode::Eval) {
    for (int c = 0; c < channels_; ++c) {
      const double inv_std = 1.0 / std::sqrt(running_var_.data()[c] + kEps);
      const double scale = gamma_.data()[c] * inv_std;
      const double shift = beta_.data()[c] - running_mean_.data()[c] * scale;
      for (int n = 0; n < x.n(); ++n) {
        const double* src = x.sample(n) + plane * c;
        double* dst = out.sample(n) + plane * c;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
      }
    }
    normalized_ = Tensor{};
    return out;
  }

  normalized_ = Tensor(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const double* src = x.sample(n) + plane * c;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const double* src = x.sample(n) + plane * c;
      for (std::size_t i = 0; i < plane; ++i) sq += (src[i] - mean) * (src[i] - mean);
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + kEps);
    inv_std_[static_cast<std::size_t>(c)] = inv_std;
    const double g = gamma_.data()[c];
    const double b = beta_.data()[c];
    for (int n = 0; n < x.n(); ++n) {
      const double* src = x.sample(n) + plane * c;
      double* xhat = normalized_.sample(n) + plane * c;
      double* dst = out.sample(n) + plane * c;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[i] = (src[i] - mean) * inv_std;
        dst[i] = g * xhat[i] + b;
      }
    }
    const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
    running_mean_.data()[c] = (1.0 - kMomentum) * running_mean_.data()[c] + kMomentum * mean;
    running_var_.data()[c] = (1.0 - kMomentum) * running_var_.data()[c] + kMomentum * unbiased;
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  require_cached(normalized_, "BatchNorm2d");
  if (!grad_out.same_shape(normalized_)) {
    throw Error(ErrorKind::ShapeMismatch, "BatchNorm2d backward got " + shape_string(grad_out));
  }
  const std::size_t plane = grad_out.plane();
  const double count = static_cast<double>(plane) * grad_out.n();
  Tensor dx(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < grad_out.n(); ++n) {
      const double* dy = grad_out.sample(n) + plane * c;
      const double* xhat = normalized_.sample(n) + plane * c;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xhat[i];
      }
    }
    gamma_grad_.data()[c] += sum_dy_xhat;
    beta_grad_.data()[c] += sum_dy;
    const double k = gamma_.data()[c] * inv_std_[static_cast<std::size_t>(c)] / count;
    for (int n = 0; n < grad_out.n(); ++n) {
      const double* dy = grad_out.sample(n) + plane * c;
      const double* xhat = normalized_.sample(n) + plane * c;
      double* dst = dx.sample(n) + plane * c;
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] = k * (count * dy[i] - sum_dy - xhat[i] * sum_dy_xhat);
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "gamma", &gamma_, &gamma_grad_});
  out.push_back({prefix + "beta", &beta_, &beta_grad_});
  out.push_back({prefix + "running_mean", &running_mean_, nullptr});
  out.push_back({prefix + "running_var", &running_var_, nullptr});
}

// --- ReLU -------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Mode mode) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  output_ = mode == Mode::Train ? out : Tensor{};
  return out;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  require_cached(output_, "ReLU");
  if (!grad_out.same_shape(output_)) throw Error(ErrorKind::ShapeMismatch, "ReLU backward shape");
  Tensor dx = grad_out;
  const double* y = output_.data();
  double* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y[i] > 0.0)) d[i] = 0.0;
  }
  return dx;
}

// --- pooling ----------------------------------------------------------------

MaxPool2d::MaxPool2d(int kernel, int stride, int padding) : kernel_(kernel), stride_(stride), pad_(padding) {}

Tensor MaxPool2d::forward(const Tensor& x, Mode mode) {
  const int ho = (x.h() + 2 * pad_ - kernel_) / stride_ + 1;
  const int wo = (x.w() + 2 * pad_ - kernel_) / stride_ + 1;
  if (ho <= 0 || wo <= 0) throw Error(ErrorKind::ShapeMismatch, "MaxPool2d input too small: " + shape_string(x));
  Tensor out(x.n(), x.c(), ho, wo);
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * x.c() + c) * x.plane();
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = base;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.h()) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.w()) continue;
              const std::size_t idx = base + static_cast<std::size_t>(iy) * x.w() + ix;
              if (x.data()[idx] > best) {
                best = x.data()[idx];
                best_idx = idx;
              }
            }
          }
          out.data()[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  }
  input_shape_ = x.shape();
  argmax_ = mode == Mode::Train ? std::move(argmax) : std::vector<std::size_t>{};
  return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  if (argmax_.empty() || argmax_.size() != grad_out.size()) {
    throw Error(ErrorKind::InvalidArgument, "MaxPool2d: backward() requires a matching Train-mode forward()");
  }
  Tensor dx(input_shape_[0], input_shape_[1], input_shape_[2], input_shape_[3]);
  for (std::size_t i = 0; i < grad_out.size(); ++i) dx.data()[argmax_[i]] += grad_out.data()[i];
  return dx;
}

AvgPool2d::AvgPool2d(int kernel) : kernel_(kernel) {}

Tensor AvgPool2d::forward(const Tensor& x, Mode) {
  const int ho = x.h() / kernel_;
  const int wo = x.w() / kernel_;
  if (ho <= 0 || wo <= 0) throw Error(ErrorKind::ShapeMismatch, "AvgPool2d input too small: " + shape_string(x));
  Tensor out(x.n(), x.c(), ho, wo);
  const double scale = 1.0 / (kernel_ * kernel_);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double sum = 0.0;
          for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx) sum += x.at(n, c, oy * kernel_ + ky, ox * kernel_ + kx);
          }
          out.at(n, c, oy, ox) = sum * scale;
        }
      }
    }
  }
  input_shape_ = x.shape();
  return out;
}

Tensor AvgPool2d::backward(const Tensor& grad_out) {
  Tensor dx(input_shape_[0], input_shape_[1], input_shape_[2], input_shape_[3]);
  const double scale = 1.0 / (kernel_ * kernel_);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      for (int oy = 0; oy < grad_out.h(); ++oy) {
        for (int ox = 0; ox < grad_out.w(); ++ox) {
          const double g = grad_out.at(n, c, oy, ox) * scale;
          for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx) dx.at(n, c, oy * kernel_ + ky, ox * kernel_ + kx) += g;
          }
        }
      }
    }
  }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  Tensor out(x.n(), x.c(), 1, 1);
  const std::size_t plane = x.plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.sample(n) + plane * c;
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      out.at(n, c, 0, 0) = sum / static_cast<double>(plane);
    }
  }
  input_shape_ = x.shape();
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor dx(input_shape_[0], input_shape_[1], input_shape_[2], input_shape_[3]);
  const std::size_t plane = dx.plane();
  for (int n = 0; n < dx.n(); ++n) {
    for (int c = 0; c < dx.c(); ++c) {
      const double g = grad_out.at(n, c, 0, 0) / static_cast<double>(plane);
      std::fill_n(dx.sample(n) + plane * c, plane, g);
    }
  }
  return dx;
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(int in_features, int out_features)
    : in_(in_features), out_(out_features), weight_(out_features, in_features, 1, 1),
      bias_(1, out_features, 1, 1), weight_grad_(out_features, in_features, 1, 1),
      bias_grad_(1, out_features, 1, 1) {}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (double& w : weight_.values()) w = rng.uniform(-bound, bound);
  bias_.fill(0.0);
}

Tensor Linear::forward(const Tensor& x, Mode mode) {
  if (x.sample_size() != static_cast<std::size_t>(in_)) {
    throw Error(ErrorKind::ShapeMismatch, "Linear expects " + std::to_string(in_) + " features, got " +
                                              shape_string(x));
  }
  ConstMatrixMap xin(x.data(), x.n(), in_);
  ConstMatrixMap w(weight_.data(), out_, in_);
  Eigen::Map<const Eigen::RowVectorXd> b(bias_.data(), out_);
  Matrix y = xin * w.transpose();
  y.rowwise() += b;
  input_ = mode == Mode::Train ? x : Tensor{};
  return unflatten(y);
}

Tensor Linear::backward(const Tensor& grad_out) {
  require_cached(input_, "Linear");
  ConstMatrixMap dy(grad_out.data(), grad_out.n(), out_);
  ConstMatrixMap xin(input_.data(), input_.n(), in_);
  ConstMatrixMap w(weight_.data(), out_, in_);
  MatrixMap(weight_grad_.data(), out_, in_).noalias() += dy.transpose() * xin;
  Eigen::Map<Eigen::RowVectorXd>(bias_grad_.data(), out_) += dy.colwise().sum();
  Tensor dx(input_.n(), input_.c(), input_.h(), input_.w());
  MatrixMap(dx.data(), input_.n(), in_).noalias() = dy * w;
  return dx;
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "weight", &weight_, &weight_grad_});
  out.push_back({prefix + "bias", &bias_, &bias_grad_});
}

// --- Sequential -------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (auto& [name, layer] : layers_) layer->collect(prefix + name + ".", out);
}

}  // namespace vce

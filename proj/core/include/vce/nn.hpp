#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vce/rng.hpp"
#include "vce/tensor.hpp"

namespace vce {

enum class Mode { Train, Eval };

/// Handle to a named array owned by a module. Buffers (batch-norm running
/// statistics) have no gradient and are not trainable.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;

  [[nodiscard]] bool trainable() const noexcept { return grad != nullptr; }
};

/// Layer with an explicit forward/backward pair. forward() in Train mode
/// caches what backward() needs; backward() accumulates into parameter
/// gradients and returns the gradient with respect to the input.
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef>& out);

  std::vector<ParamRef> parameters(const std::string& prefix = "");
  void zero_grad();
};

class Conv2d final : public Module {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding);

  /// He-uniform, bound sqrt(6 / fan_in).
  void init(Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

  [[nodiscard]] int in_channels() const noexcept { return in_; }
  [[nodiscard]] int out_channels() const noexcept { return out_; }
  [[nodiscard]] int output_size(int input) const noexcept {
    return (input + 2 * pad_ - kernel_) / stride_ + 1;
  }
  Tensor& weight() noexcept { return weight_; }

 private:
  [[nodiscard]] bool is_pointwise() const noexcept {
    return kernel_ == 1 && stride_ == 1 && pad_ == 0;
  }
  void im2col(const double* image, int h, int w, Matrix& cols) const;
  void col2im(const Matrix& cols, int h, int w, double* image) const;

  int in_;
  int out_;
  int kernel_;
  int stride_;
  int pad_;
  Tensor weight_;
  Tensor weight_grad_;
  Tensor input_;
};

class BatchNorm2d final : public Module {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  explicit BatchNorm2d(int channels);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

  Tensor& gamma() noexcept { return gamma_; }
  Tensor& beta() noexcept { return beta_; }

 private:
  int channels_;
  Tensor gamma_;
  Tensor beta_;
  Tensor gamma_grad_;
  Tensor beta_grad_;
  Tensor running_mean_;
  Tensor running_var_;
  Tensor normalized_;
  std::vector<double> inv_std_;
};

class ReLU final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

class MaxPool2d final : public Module {
 public:
  MaxPool2d(int kernel, int stride, int padding);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int kernel_;
  int stride_;
  int pad_;
  std::array<int, 4> input_shape_{};
  std::vector<std::size_t> argmax_;
};

/// Non-overlapping average pooling (kernel == stride), floor semantics.
class AvgPool2d final : public Module {
 public:
  explicit AvgPool2d(int kernel);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int kernel_;
  std::array<int, 4> input_shape_{};
};

class GlobalAvgPool final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::array<int, 4> input_shape_{};
};

/// Affine map over N x C x 1 x 1 inputs.
class Linear final : public Module {
 public:
  Linear(int in_features, int out_features);

  /// Uniform in +-1/sqrt(fan_in); zero bias.
  void init(Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

  Tensor& weight() noexcept { return weight_; }
  Tensor& bias() noexcept { return bias_; }

 private:
  int in_;
  int out_;
  Tensor weight_;
  Tensor bias_;
  Tensor weight_grad_;
  Tensor bias_grad_;
  Tensor input_;
};

class Sequential final : public Module {
 public:
  Sequential() = default;

  template <typename M>
  M& add(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    layers_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

  [[nodiscard]] std::size_t size() const noexcept { return layers_.size(); }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> layers_;
};

}  // namespace vce

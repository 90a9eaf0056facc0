#pragma once

#include <memory>
#include <vector>

#include "vce/nn.hpp"

namespace vce {

struct ResidualBlockConfig {
  int in_channels = 64;
  int out_channels = 64;
  int stride = 1;
  bool bottleneck = false;

  static constexpr int kExpansion = 4;

  [[nodiscard]] bool has_projection() const noexcept {
    return stride != 1 || in_channels != out_channels;
  }
  void validate() const;
};

/// out = relu(F(x) + shortcut(x)).
/// Basic F: conv3x3(stride)-bn-relu-conv3x3-bn.
/// Bottleneck F: conv1x1-bn-relu-conv3x3(stride)-bn-relu-conv1x1-bn, inner
/// width out_channels / 4.
/// Projection shortcut: conv1x1(stride)-bn.
class ResidualBlock final : public Module {
 public:
  ResidualBlock(const ResidualBlockConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

  [[nodiscard]] const ResidualBlockConfig& config() const noexcept { return cfg_; }

 private:
  ResidualBlockConfig cfg_;
  Sequential body_;
  std::unique_ptr<Sequential> projection_;
  ReLU activation_;
};

struct DenseBlockConfig {
  int num_layers = 6;
  int growth_rate = 32;
  int in_channels = 64;
  int bottleneck_factor = 4;  // inner width = factor * growth_rate

  [[nodiscard]] int out_channels() const noexcept {
    return in_channels + num_layers * growth_rate;
  }
  void validate() const;
};

/// bn-relu-conv1x1(factor*k)-bn-relu-conv3x3(k).
class DenseLayer final : public Module {
 public:
  DenseLayer(int in_channels, int growth_rate, int bottleneck_factor, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

 private:
  Sequential body_;
};

/// Each layer consumes the concatenation of the block input and every earlier
/// layer's output and appends growth_rate channels.
class DenseBlock final : public Module {
 public:
  DenseBlock(const DenseBlockConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

  [[nodiscard]] const DenseBlockConfig& config() const noexcept { return cfg_; }

 private:
  DenseBlockConfig cfg_;
  std::vector<std::unique_ptr<DenseLayer>> layers_;
};

/// bn-relu-conv1x1-avgpool2x2 between dense blocks.
class Transition final : public Module {
 public:
  Transition(int in_channels, int out_channels, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;

 private:
  Sequential body_;
};

}  // namespace vce

#include "vce/blocks.hpp"

#include "vce/error.hpp"

namespace vce {

namespace {

std::unique_ptr<Conv2d> make_conv(int in, int out, int kernel, int stride, int pad, Rng& rng) {
  auto conv = std::make_unique<Conv2d>(in, out, kernel, stride, pad);
  conv->init(rng);
  return conv;
}

void add_tensor(Tensor& acc, const Tensor& other) {
  if (!acc.same_shape(other)) {
    throw Error(ErrorKind::ShapeMismatch, "cannot add " + shape_string(other) + " to " + shape_string(acc));
  }
  double* a = acc.data();
  const double* b = other.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

}  // namespace

void ResidualBlockConfig::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw Error(ErrorKind::InvalidArgument, "residual block channels must be positive");
  }
  if (stride != 1 && stride != 2) throw Error(ErrorKind::InvalidArgument, "residual block stride must be 1 or 2");
  if (bottleneck && out_channels % kExpansion != 0) {
    throw Error(ErrorKind::InvalidArgument, "bottleneck output channels must be divisible by 4");
  }
}

ResidualBlock::ResidualBlock(const ResidualBlockConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.bottleneck) {
    const int width = cfg_.out_channels / ResidualBlockConfig::kExpansion;
    body_.add("conv1", make_conv(cfg_.in_channels, width, 1, 1, 0, rng));
    body_.add("bn1", std::make_unique<BatchNorm2d>(width));
    body_.add("relu1", std::make_unique<ReLU>());
    body_.add("conv2", make_conv(width, width, 3, cfg_.stride, 1, rng));
    body_.add("bn2", std::make_unique<BatchNorm2d>(width));
    body_.add("relu2", std::make_unique<ReLU>());
    body_.add("conv3", make_conv(width, cfg_.out_channels, 1, 1, 0, rng));
    body_.add("bn3", std::make_unique<BatchNorm2d>(cfg_.out_channels));
  } else {
    body_.add("conv1", make_conv(cfg_.in_channels, cfg_.out_channels, 3, cfg_.stride, 1, rng));
    body_.add("bn1", std::make_unique<BatchNorm2d>(cfg_.out_channels));
    body_.add("relu1", std::make_unique<ReLU>());
    body_.add("conv2", make_conv(cfg_.out_channels, cfg_.out_channels, 3, 1, 1, rng));
    body_.add("bn2", std::make_unique<BatchNorm2d>(cfg_.out_channels));
  }
  if (cfg_.has_projection()) {
    projection_ = std::make_unique<Sequential>();
    projection_->add("conv", make_conv(cfg_.in_channels, cfg_.out_channels, 1, cfg_.stride, 0, rng));
    projection_->add("bn", std::make_unique<BatchNorm2d>(cfg_.out_channels));
  }
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) {
  if (x.c() != cfg_.in_channels) {
    throw Error(ErrorKind::ShapeMismatch, "residual block expects " + std::to_string(cfg_.in_channels) +
                                              " channels, got " + shape_string(x));
  }
  Tensor sum = body_.forward(x, mode);
  add_tensor(sum, projection_ ? projection_->forward(x, mode) : x);
  return activation_.forward(sum, mode);
}

Tensor ResidualBlock::backward(const Tensor& grad_out) {
  const Tensor g = activation_.backward(grad_out);
  Tensor dx = body_.backward(g);
  add_tensor(dx, projection_ ? projection_->backward(g) : g);
  return dx;
}

void ResidualBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  body_.collect(prefix + "body.", out);
  if (projection_) projection_->collect(prefix + "projection.", out);
}

void DenseBlockConfig::validate() const {
  if (num_layers <= 0 || growth_rate <= 0 || in_channels <= 0 || bottleneck_factor <= 0) {
    throw Error(ErrorKind::InvalidArgument, "dense block sizes must be positive");
  }
}

DenseLayer::DenseLayer(int in_channels, int growth_rate, int bottleneck_factor, Rng& rng) {
  const int inner = bottleneck_factor * growth_rate;
  body_.add("bn1", std::make_unique<BatchNorm2d>(in_channels));
  body_.add("relu1", std::make_unique<ReLU>());
  body_.add("conv1", make_conv(in_channels, inner, 1, 1, 0, rng));
  body_.add("bn2", std::make_unique<BatchNorm2d>(inner));
  body_.add("relu2", std::make_unique<ReLU>());
  body_.add("conv2", make_conv(inner, growth_rate, 3, 1, 1, rng));
}

Tensor DenseLayer::forward(const Tensor& x, Mode mode) { return body_.forward(x, mode); }
Tensor DenseLayer::backward(const Tensor& grad_out) { return body_.backward(grad_out); }
void DenseLayer::collect(const std::string& prefix, std::vector<ParamRef>& out) { body_.collect(prefix, out); }

DenseBlock::DenseBlock(const DenseBlockConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (int i = 0; i < cfg_.num_layers; ++i) {
    layers_.push_back(std::make_unique<DenseLayer>(cfg_.in_channels + i * cfg_.growth_rate,
                                                   cfg_.growth_rate, cfg_.bottleneck_factor, rng));
  }
}

Tensor DenseBlock::forward(const Tensor& x, Mode mode) {
  if (x.c() != cfg_.in_channels) {
    throw Error(ErrorKind::ShapeMismatch, "dense block expects " + std::to_string(cfg_.in_channels) +
                                              " channels, got " + shape_string(x));
  }
  Tensor features = x;
  for (auto& layer : layers_) features = concat_channels(features, layer->forward(features, mode));
  return features;
}

Tensor DenseBlock::backward(const Tensor& grad_out) {
  if (grad_out.c() != cfg_.out_channels()) {
    throw Error(ErrorKind::ShapeMismatch, "dense block backward got " + shape_string(grad_out));
  }
  Tensor g = grad_out;
  for (int i = cfg_.num_layers - 1; i >= 0; --i) {
    const int prev = cfg_.in_channels + i * cfg_.growth_rate;
    const Tensor dy = slice_channels(g, prev, cfg_.growth_rate);
    Tensor g_prev = slice_channels(g, 0, prev);
    add_tensor(g_prev, layers_[static_cast<std::size_t>(i)]->backward(dy));
    g = std::move(g_prev);
  }
  return g;
}

void DenseBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect(prefix + "layer" + std::to_string(i + 1) + ".", out);
  }
}

Transition::Transition(int in_channels, int out_channels, Rng& rng) {
  body_.add("bn", std::make_unique<BatchNorm2d>(in_channels));
  body_.add("relu", std::make_unique<ReLU>());
  body_.add("conv", make_conv(in_channels, out_channels, 1, 1, 0, rng));
  body_.add("pool", std::make_unique<AvgPool2d>(2));
}

Tensor Transition::forward(const Tensor& x, Mode mode) { return body_.forward(x, mode); }
Tensor Transition::backward(const Tensor& grad_out) { return body_.backward(grad_out); }
void Transition::collect(const std::string& prefix, std::vector<ParamRef>& out) { body_.collect(prefix, out); }

}  // namespace vce

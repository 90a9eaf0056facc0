#include "vce/backbone.hpp"

#include <cmath>

#include "vce/blocks.hpp"
#include "vce/error.hpp"

namespace vce {

std::string_view to_string(BackboneKind kind) noexcept {
  return kind == BackboneKind::DenseNet ? "densenet" : "resnet";
}

namespace {

int compressed(int channels, double compression) {
  return static_cast<int>(std::floor(channels * compression));
}

}  // namespace

std::vector<int> BackboneConfig::channel_trace() const {
  std::vector<int> trace{stem_channels};
  int c = stem_channels;
  for (std::size_t i = 0; i < stage_sizes.size(); ++i) {
    if (kind == BackboneKind::DenseNet) {
      c += stage_sizes[i] * growth_rate;
      trace.push_back(c);
      if (i + 1 < stage_sizes.size()) {
        c = compressed(c, compression);
        trace.push_back(c);
      }
    } else {
      c = stage_channels[i];
      trace.push_back(c);
    }
  }
  return trace;
}

int BackboneConfig::feature_dim() const { return channel_trace().back(); }

void BackboneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
  if (stage_sizes.empty()) fail("backbone needs at least one stage");
  for (int s : stage_sizes) {
    if (s <= 0) fail("stage sizes must be positive");
  }
  if (num_classes < 2) fail("backbone needs at least two classes");
  if (stem_channels <= 0 || stem_kernel <= 0 || stem_stride <= 0) fail("invalid stem geometry");
  if (kind == BackboneKind::DenseNet) {
    if (growth_rate <= 0) fail("growth rate must be positive");
    if (!(compression > 0.0 && compression <= 1.0)) fail("compression must lie in (0, 1]");
  } else {
    if (stage_channels.size() != stage_sizes.size()) fail("resnet needs one channel width per stage");
    for (int c : stage_channels) {
      if (c <= 0 || (bottleneck && c % ResidualBlockConfig::kExpansion != 0)) fail("invalid resnet stage width");
    }
  }
}

BackboneConfig BackboneConfig::densenet121(int num_classes) {
  BackboneConfig cfg;
  cfg.kind = BackboneKind::DenseNet;
  cfg.stage_sizes = {6, 12, 24, 16};
  cfg.growth_rate = 32;
  cfg.num_classes = num_classes;
  return cfg;
}

BackboneConfig BackboneConfig::resnet50(int num_classes) {
  BackboneConfig cfg;
  cfg.kind = BackboneKind::ResNet;
  cfg.stage_sizes = {3, 4, 6, 3};
  cfg.stage_channels = {256, 512, 1024, 2048};
  cfg.bottleneck = true;
  cfg.num_classes = num_classes;
  return cfg;
}

BackboneConfig BackboneConfig::tiny_densenet(int num_classes) {
  BackboneConfig cfg;
  cfg.kind = BackboneKind::DenseNet;
  cfg.stage_sizes = {1, 1};
  cfg.growth_rate = 8;
  cfg.stem_channels = 8;
  cfg.stem_kernel = 3;
  cfg.stem_stride = 2;
  cfg.stem_pool = false;
  cfg.num_classes = num_classes;
  return cfg;
}

BackboneConfig BackboneConfig::tiny_resnet(int num_classes) {
  BackboneConfig cfg;
  cfg.kind = BackboneKind::ResNet;
  cfg.stage_sizes = {1, 1};
  cfg.stage_channels = {8, 16};
  cfg.bottleneck = false;
  cfg.stem_channels = 8;
  cfg.stem_kernel = 3;
  cfg.stem_stride = 2;
  cfg.stem_pool = false;
  cfg.num_classes = num_classes;
  return cfg;
}

void to_json(nlohmann::json& j, const BackboneConfig& cfg) {
  j = nlohmann::json{{"kind", to_string(cfg.kind)},
                     {"stage_sizes", cfg.stage_sizes},
                     {"growth_rate", cfg.growth_rate},
                     {"compression", cfg.compression},
                     {"stage_channels", cfg.stage_channels},
                     {"bottleneck", cfg.bottleneck},
                     {"stem_channels", cfg.stem_channels},
                     {"stem_kernel", cfg.stem_kernel},
                     {"stem_stride", cfg.stem_stride},
                     {"stem_pool", cfg.stem_pool},
                     {"num_classes", cfg.num_classes},
                     {"feature_dim", cfg.feature_dim()}};
}

void from_json(const nlohmann::json& j, BackboneConfig& cfg) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "densenet" && kind != "resnet") {
    throw Error(ErrorKind::InvalidArgument, "unknown backbone kind '" + kind + "'");
  }
  cfg.kind = kind == "densenet" ? BackboneKind::DenseNet : BackboneKind::ResNet;
  j.at("stage_sizes").get_to(cfg.stage_sizes);
  j.at("growth_rate").get_to(cfg.growth_rate);
  j.at("compression").get_to(cfg.compression);
  j.at("stage_channels").get_to(cfg.stage_channels);
  j.at("bottleneck").get_to(cfg.bottleneck);
  j.at("stem_channels").get_to(cfg.stem_channels);
  j.at("stem_kernel").get_to(cfg.stem_kernel);
  j.at("stem_stride").get_to(cfg.stem_stride);
  j.at("stem_pool").get_to(cfg.stem_pool);
  j.at("num_classes").get_to(cfg.num_classes);
}

Backbone::Backbone(BackboneConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();

  auto stem = std::make_unique<Conv2d>(3, cfg_.stem_channels, cfg_.stem_kernel, cfg_.stem_stride,
                                       cfg_.stem_kernel / 2);
  stem->init(rng);
  trunk_.add("stem.conv", std::move(stem));
  trunk_.add("stem.bn", std::make_unique<BatchNorm2d>(cfg_.stem_channels));
  trunk_.add("stem.relu", std::make_unique<ReLU>());
  if (cfg_.stem_pool) trunk_.add("stem.pool", std::make_unique<MaxPool2d>(3, 2, 1));

  int c = cfg_.stem_channels;
  const auto stages = cfg_.stage_sizes.size();
  for (std::size_t i = 0; i < stages; ++i) {
    const std::string idx = std::to_string(i + 1);
    if (cfg_.kind == BackboneKind::DenseNet) {
      DenseBlockConfig block{cfg_.stage_sizes[i], cfg_.growth_rate, c};
      trunk_.add("denseblock" + idx, std::make_unique<DenseBlock>(block, rng));
      c = block.out_channels();
      if (i + 1 < stages) {
        const int out = compressed(c, cfg_.compression);
        trunk_.add("transition" + idx, std::make_unique<Transition>(c, out, rng));
        c = out;
      }
    } else {
      for (int b = 0; b < cfg_.stage_sizes[i]; ++b) {
        ResidualBlockConfig block{c, cfg_.stage_channels[i], (b == 0 && i > 0) ? 2 : 1, cfg_.bottleneck};
        trunk_.add("layer" + idx + "." + std::to_string(b), std::make_unique<ResidualBlock>(block, rng));
        c = block.out_channels;
      }
    }
  }
  if (cfg_.kind == BackboneKind::DenseNet) {
    trunk_.add("final.bn", std::make_unique<BatchNorm2d>(c));
    trunk_.add("final.relu", std::make_unique<ReLU>());
  }
  classifier_ = std::make_unique<Linear>(c, cfg_.num_classes);
  classifier_->init(rng);
}

BackboneOutput Backbone::forward(const Tensor& x, Mode mode) {
  if (x.c() != 3) throw Error(ErrorKind::ShapeMismatch, "backbone expects 3-channel input, got " + shape_string(x));
  const Tensor pooled = pool_.forward(trunk_.forward(x, mode), mode);
  const Tensor logits = classifier_->forward(pooled, mode);
  return {flatten(logits), flatten(pooled)};
}

Tensor Backbone::backward(const Matrix& grad_logits, const Matrix& grad_features) {
  Tensor dpooled = classifier_->backward(unflatten(grad_logits));
  if (grad_features.size() > 0) {
    if (static_cast<std::size_t>(grad_features.size()) != dpooled.size()) {
      throw Error(ErrorKind::ShapeMismatch, "feature gradient has the wrong size");
    }
    for (std::size_t i = 0; i < dpooled.size(); ++i) dpooled.data()[i] += grad_features.data()[i];
  }
  return trunk_.backward(pool_.backward(dpooled));
}

void Backbone::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  trunk_.collect(prefix, out);
  classifier_->collect(prefix + "classifier.", out);
}

}  // namespace vce

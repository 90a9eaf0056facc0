#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vce/nn.hpp"

namespace vce {

enum class BackboneKind { DenseNet, ResNet };

std::string_view to_string(BackboneKind kind) noexcept;

struct BackboneConfig {
  BackboneKind kind = BackboneKind::DenseNet;
  std::vector<int> stage_sizes;
  int growth_rate = 32;              // densenet
  double compression = 0.5;          // densenet transitions
  std::vector<int> stage_channels;   // resnet stage output widths
  bool bottleneck = true;            // resnet block type
  int stem_channels = 64;
  int stem_kernel = 7;
  int stem_stride = 2;
  bool stem_pool = true;             // 3x3/2 max pool after the stem
  int num_classes = 10;

  /// Width of the pooled penultimate features, derived from the layout.
  [[nodiscard]] int feature_dim() const;
  /// Channel count after the stem and after every block and transition.
  [[nodiscard]] std::vector<int> channel_trace() const;
  void validate() const;

  static BackboneConfig densenet121(int num_classes);
  static BackboneConfig resnet50(int num_classes);
  static BackboneConfig tiny_densenet(int num_classes);
  static BackboneConfig tiny_resnet(int num_classes);

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

void to_json(nlohmann::json& j, const BackboneConfig& cfg);
void from_json(const nlohmann::json& j, BackboneConfig& cfg);

struct BackboneOutput {
  Matrix logits;    // B x K
  Matrix features;  // B x feature_dim
};

/// stem -> stages -> [final bn-relu for densenet] -> global average pool ->
/// linear classifier.
class Backbone {
 public:
  Backbone(BackboneConfig cfg, Rng& rng);

  BackboneOutput forward(const Tensor& x, Mode mode);
  /// Gradient w.r.t. the input batch; `grad_features` may be empty.
  Tensor backward(const Matrix& grad_logits, const Matrix& grad_features = {});
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  [[nodiscard]] const BackboneConfig& config() const noexcept { return cfg_; }
  Linear& classifier() noexcept { return *classifier_; }

 private:
  BackboneConfig cfg_;
  Sequential trunk_;
  GlobalAvgPool pool_;
  std::unique_ptr<Linear> classifier_;
};

}  // namespace vce

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vce/backbone.hpp"
#include "vce/dataset.hpp"

namespace vce {

enum class Fusion { MeanProb, MeanLogit };

std::string_view to_string(Fusion fusion) noexcept;
Fusion parse_fusion(std::string_view text);

enum class ModelVariant { Full, Tiny };

std::string_view to_string(ModelVariant variant) noexcept;
ModelVariant parse_variant(std::string_view text);

struct ModelConfig {
  BackboneConfig densenet;
  BackboneConfig resnet;
  Fusion fusion = Fusion::MeanProb;
  ClassSet class_set;
  int input_size = 224;

  /// DenseNet-121 + ResNet-50 (Full) or the tiny test layouts.
  static ModelConfig make(ModelVariant variant, const ClassSet& classes, Fusion fusion,
                          int input_size);

  [[nodiscard]] int num_classes() const noexcept { return class_set.size(); }
  [[nodiscard]] int feature_dim() const { return densenet.feature_dim() + resnet.feature_dim(); }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);
/// Fused class probabilities; symmetric in its two arguments.
Matrix fuse(const Matrix& logits_a, const Matrix& logits_b, Fusion fusion);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> row);
std::vector<int> argmax_rows(const Matrix& m);

struct EnsembleOutput {
  Matrix probs;
  Matrix logits_a;
  Matrix logits_b;
  Matrix features;  // [densenet | resnet]
};

/// Anything that maps a preprocessed batch to class probabilities.
class ProbabilityModel {
 public:
  virtual ~ProbabilityModel() = default;
  virtual Matrix predict_proba(const Tensor& batch) = 0;
  [[nodiscard]] virtual int num_classes() const = 0;
};

class EnsembleModel final : public ProbabilityModel {
 public:
  EnsembleModel(ModelConfig cfg, std::uint64_t init_seed);

  EnsembleOutput forward(const Tensor& batch, Mode mode);
  void backward(const Matrix& grad_logits_a, const Matrix& grad_logits_b);

  Matrix predict_proba(const Tensor& batch) override;
  [[nodiscard]] int num_classes() const override { return cfg_.num_classes(); }

  /// Parameters and buffers with stable dotted names ("densenet.", "resnet.").
  std::vector<ParamRef> parameters();
  std::vector<ParamRef> trainable_parameters();
  void zero_grad();

  [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
  Backbone& densenet() noexcept { return densenet_; }
  Backbone& resnet() noexcept { return resnet_; }

 private:
  ModelConfig cfg_;
  Rng init_rng_;
  Backbone densenet_;
  Backbone resnet_;
};

}  // namespace vce

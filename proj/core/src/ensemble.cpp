#include "vce/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "vce/error.hpp"

namespace vce {

std::string_view to_string(Fusion fusion) noexcept {
  return fusion == Fusion::MeanProb ? "mean_prob" : "mean_logit";
}

Fusion parse_fusion(std::string_view text) {
  if (text == "mean_prob") return Fusion::MeanProb;
  if (text == "mean_logit") return Fusion::MeanLogit;
  throw Error(ErrorKind::InvalidArgument, "unknown fusion '" + std::string(text) + "'");
}

std::string_view to_string(ModelVariant variant) noexcept {
  return variant == ModelVariant::Full ? "full" : "tiny";
}

ModelVariant parse_variant(std::string_view text) {
  if (text == "full") return ModelVariant::Full;
  if (text == "tiny") return ModelVariant::Tiny;
  throw Error(ErrorKind::InvalidArgument, "unknown model variant '" + std::string(text) + "'");
}

ModelConfig ModelConfig::make(ModelVariant variant, const ClassSet& classes, Fusion fusion, int input_size) {
  const int k = classes.size();
  if (variant == ModelVariant::Full) {
    return {BackboneConfig::densenet121(k), BackboneConfig::resnet50(k), fusion, classes, input_size};
  }
  return {BackboneConfig::tiny_densenet(k), BackboneConfig::tiny_resnet(k), fusion, classes, input_size};
}

void ModelConfig::validate() const {
  if (densenet.kind != BackboneKind::DenseNet || resnet.kind != BackboneKind::ResNet) {
    throw Error(ErrorKind::InvalidArgument, "ensemble needs a densenet and a resnet backbone");
  }
  if (densenet.num_classes != resnet.num_classes) {
    throw Error(ErrorKind::FusionMismatch, "backbones disagree on the number of classes (" +
                                               std::to_string(densenet.num_classes) + " vs " +
                                               std::to_string(resnet.num_classes) + ")");
  }
  if (densenet.num_classes != class_set.size()) {
    throw Error(ErrorKind::IncompatibleConfig, "backbone class count differs from the class set");
  }
  if (input_size <= 0) throw Error(ErrorKind::InvalidArgument, "input size must be positive");
  densenet.validate();
  resnet.validate();
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"densenet", cfg.densenet},
                     {"resnet", cfg.resnet},
                     {"fusion", to_string(cfg.fusion)},
                     {"classes", cfg.class_set.names()},
                     {"input_size", cfg.input_size}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  return {j.at("densenet").get<BackboneConfig>(), j.at("resnet").get<BackboneConfig>(),
          parse_fusion(j.at("fusion").get<std::string>()),
          ClassSet(j.at("classes").get<std::vector<std::string>>()), j.at("input_size").get<int>()};
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto row = softmax(std::span<const double>(logits.row(r).data(), static_cast<std::size_t>(logits.cols())));
    std::copy(row.begin(), row.end(), out.row(r).data());
  }
  return out;
}

Matrix fuse(const Matrix& logits_a, const Matrix& logits_b, Fusion fusion) {
  if (logits_a.rows() != logits_b.rows() || logits_a.cols() != logits_b.cols()) {
    throw Error(ErrorKind::FusionMismatch, "cannot fuse logits of shape " + std::to_string(logits_a.rows()) +
                                               "x" + std::to_string(logits_a.cols()) + " and " +
                                               std::to_string(logits_b.rows()) + "x" +
                                               std::to_string(logits_b.cols()));
  }
  if (fusion == Fusion::MeanProb) return 0.5 * (softmax_rows(logits_a) + softmax_rows(logits_b));
  return softmax_rows(0.5 * (logits_a + logits_b));
}

int argmax(std::span<const double> row) {
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out[static_cast<std::size_t>(r)] =
        argmax(std::span<const double>(m.row(r).data(), static_cast<std::size_t>(m.cols())));
  }
  return out;
}

EnsembleModel::EnsembleModel(ModelConfig cfg, std::uint64_t init_seed)
    : cfg_((cfg.validate(), std::move(cfg))),
      init_rng_(mix_seed(init_seed)),
      densenet_(cfg_.densenet, init_rng_),
      resnet_(cfg_.resnet, init_rng_) {}

EnsembleOutput EnsembleModel::forward(const Tensor& batch, Mode mode) {
  BackboneOutput a = densenet_.forward(batch, mode);
  BackboneOutput b = resnet_.forward(batch, mode);
  EnsembleOutput out;
  out.probs = fuse(a.logits, b.logits, cfg_.fusion);
  out.features.resize(a.features.rows(), a.features.cols() + b.features.cols());
  out.features << a.features, b.features;
  out.logits_a = std::move(a.logits);
  out.logits_b = std::move(b.logits);
  return out;
}

void EnsembleModel::backward(const Matrix& grad_logits_a, const Matrix& grad_logits_b) {
  densenet_.backward(grad_logits_a);
  resnet_.backward(grad_logits_b);
}

Matrix EnsembleModel::predict_proba(const Tensor& batch) { return forward(batch, Mode::Eval).probs; }

std::vector<ParamRef> EnsembleModel::parameters() {
  std::vector<ParamRef> out;
  densenet_.collect("densenet.", out);
  resnet_.collect("resnet.", out);
  return out;
}

std::vector<ParamRef> EnsembleModel::trainable_parameters() {
  auto all = parameters();
  std::erase_if(all, [](const ParamRef& p) { return !p.trainable(); });
  return all;
}

void EnsembleModel::zero_grad() {
  for (auto& p : trainable_parameters()) p.grad->fill(0.0);
}

}  // namespace vce

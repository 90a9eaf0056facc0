#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vce/checkpoint.hpp"
#include "vce/dataset.hpp"
#include "vce/ensemble.hpp"
#include "vce/error.hpp"
#include "vce/preprocess.hpp"

namespace vce {

struct TrainingConfig {
  double lr = 1e-4;
  int batch_size = 32;
  int epochs = 50;
  double weight_decay = 1e-4;
  std::string optimizer = "adam";
  std::string loss = "cross_entropy";
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool joint_training = true;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

// history interchange: CSV `epoch,train_loss,val_loss,train_acc,val_acc`
std::string history_to_csv(std::span<const EpochMetrics> history);
std::vector<EpochMetrics> history_from_csv(const std::string& text);
nlohmann::json history_to_json(std::span<const EpochMetrics> history);

/// Mean of -log softmax(logits)[label], via log-sum-exp.
double cross_entropy(const Matrix& logits, std::span<const int> labels);
/// Mean of -log max(p[label], 1e-12).
double cross_entropy_probs(const Matrix& probs, std::span<const int> labels);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad_a;  // d loss / d logits_a
  Matrix grad_b;
};

/// Loss of the fused output (reported) and the logit gradients that drive
/// the update. Joint training differentiates the fused loss; otherwise each
/// backbone gets the gradient of its own cross-entropy.
LossAndGrad ensemble_loss(const EnsembleOutput& out, std::span<const int> labels, Fusion fusion,
                          bool joint_training);

/// One Adam update of a flat array with L2 weight decay folded into the
/// gradient. `step` is the 1-based update index.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const TrainingConfig& cfg, long step);

class Adam {
 public:
  explicit Adam(TrainingConfig cfg) : cfg_(std::move(cfg)) {}

  /// Throws NonFiniteGradient (before touching anything) if any gradient
  /// entry is NaN or infinite.
  void step(std::span<const ParamRef> params);

  [[nodiscard]] long steps() const noexcept { return step_; }

 private:
  TrainingConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long step_ = 0;
};

struct EpochResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Seeded shuffle, batches of at most batch_size (last partial batch kept),
/// one Adam step per batch. Loss and accuracy are sample-weighted means.
EpochResult train_epoch(EnsembleModel& model, Adam& optimizer, FrameLoader& loader,
                        std::span<const LabeledFrame> frames, const TrainingConfig& cfg,
                        int epoch);

/// Eval-mode pass without augmentation; never mutates the model.
EpochResult validate_epoch(EnsembleModel& model, FrameLoader& loader,
                           std::span<const LabeledFrame> frames, int batch_size);

/// Index of the first epoch with the highest validation accuracy.
std::size_t best_epoch_index(std::span<const EpochMetrics> history);

struct FitResult {
  std::vector<EpochMetrics> history;
  Checkpoint best;
};

/// Invoked after every epoch; `improved` is set when the epoch produced a new
/// best checkpoint.
using EpochCallback = std::function<void(const EpochMetrics&, const Checkpoint* improved)>;

/// Raised by fit() when an epoch fails; keeps the epochs completed so far.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const Error& cause, std::vector<EpochMetrics> history,
                  std::optional<Checkpoint> best);

  [[nodiscard]] ErrorKind cause() const noexcept { return kind(); }
  std::vector<EpochMetrics> history;
  std::optional<Checkpoint> best;
};

/// Runs cfg.epochs epochs over the manifest's train/val split. A checkpoint is
/// taken whenever validation accuracy strictly exceeds the best so far.
FitResult fit(EnsembleModel& model, const DatasetManifest& manifest, const TrainingConfig& cfg,
              FrameLoader& loader, const nlohmann::json& run_config = nlohmann::json::object(),
              const EpochCallback& on_epoch = {});

}  // namespace vce

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vce/dataset.hpp"
#include "vce/ensemble.hpp"
#include "vce/preprocess.hpp"

namespace vce {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // row-major K x K

  [[nodiscard]] std::int64_t at(int truth, int predicted) const {
    return counts[static_cast<std::size_t>(truth) * num_classes + predicted];
  }
  [[nodiscard]] std::int64_t total() const;
  [[nodiscard]] std::int64_t trace() const;
  [[nodiscard]] std::int64_t row_sum(int c) const;
  [[nodiscard]] std::int64_t col_sum(int c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 int num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  bool precision_undefined = false;  // no predictions of this class
  bool recall_undefined = false;     // no true samples of this class
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  int macro_classes = 0;  // classes with support > 0 entering macro means
};

/// Zero denominators yield 0 with the matching *_undefined flag set. Macro
/// averages cover classes with support > 0.
ClassificationReport classification_report(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  int class_index = 0;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// One point per distinct score (ties grouped), descending thresholds,
/// anchored at (0,0) and (1,1); trapezoidal AUC. Throws DegenerateClass when
/// all samples share one label.
RocCurve roc_curve(std::span<const double> scores, std::span<const bool> is_positive,
                   int class_index = 0);

/// Mann-Whitney estimate: P(s_pos > s_neg) + 0.5 P(s_pos == s_neg), by
/// enumerating every positive/negative pair.
double auc_pairwise_oracle(std::span<const double> scores, std::span<const bool> is_positive);

struct Evaluation {
  ClassificationReport report;
  ConfusionMatrix confusion;
  std::vector<RocCurve> roc;         // non-degenerate classes only
  std::vector<int> omitted_classes;  // classes without positives or negatives
  Matrix probs;
  std::vector<int> labels;
  std::vector<int> predictions;
};

/// Metrics from a probability matrix: argmax predictions (ties to the lowest
/// index) and one-vs-rest ROC per class.
Evaluation evaluate_predictions(const Matrix& probs, std::span<const int> labels);

Matrix predict_frames(ProbabilityModel& model, FrameLoader& loader,
                      std::span<const LabeledFrame> frames, int batch_size);

/// Concatenated ensemble features (N x feature_dim), eval mode, no augmentation.
Matrix extract_features(EnsembleModel& model, FrameLoader& loader,
                        std::span<const LabeledFrame> frames, int batch_size);

Evaluation evaluate_model(ProbabilityModel& model, FrameLoader& loader,
                          std::span<const LabeledFrame> frames, const ClassSet& classes,
                          int batch_size = 32);

// Serialized forms of the evaluation artifacts.
nlohmann::json report_to_json(const Evaluation& eval, const ClassSet& classes);
std::string confusion_to_csv(const ConfusionMatrix& cm, const ClassSet& classes);
nlohmann::json roc_to_json(const Evaluation& eval, const ClassSet& classes);

}  // namespace vce

#include "vce/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "vce/error.hpp"

namespace vce {

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int c = 0; c < num_classes; ++c) t += at(c, c);
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int c) const {
  std::int64_t s = 0;
  for (int j = 0; j < num_classes; ++j) s += at(c, j);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int c) const {
  std::int64_t s = 0;
  for (int i = 0; i < num_classes; ++i) s += at(i, c);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int num_classes) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorKind::ShapeMismatch, "y_true and y_pred differ in length");
  if (y_true.empty()) throw Error(ErrorKind::InvalidArgument, "confusion matrix needs at least one sample");
  if (num_classes < 1) throw Error(ErrorKind::InvalidArgument, "num_classes must be positive");
  ConfusionMatrix cm{num_classes, std::vector<std::int64_t>(static_cast<std::size_t>(num_classes) * num_classes, 0)};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw Error(ErrorKind::LabelOutOfRange, "label pair (" + std::to_string(t) + ", " + std::to_string(p) +
                                                 ") outside [0, " + std::to_string(num_classes) + ")");
    }
    ++cm.counts[static_cast<std::size_t>(t) * num_classes + p];
  }
  return cm;
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total < 1) throw Error(ErrorKind::InvalidArgument, "classification report needs a non-empty matrix");

  ClassificationReport r;
  r.per_class.resize(static_cast<std::size_t>(cm.num_classes));
  for (int c = 0; c < cm.num_classes; ++c) {
    auto& m = r.per_class[static_cast<std::size_t>(c)];
    const auto tp = static_cast<double>(cm.at(c, c));
    const std::int64_t predicted = cm.col_sum(c);
    m.support = cm.row_sum(c);
    m.precision_undefined = predicted == 0;
    m.recall_undefined = m.support == 0;
    m.precision = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
    m.recall = m.support == 0 ? 0.0 : tp / static_cast<double>(m.support);
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (m.support > 0) {
      r.macro_precision += m.precision;
      r.macro_recall += m.recall;
      r.macro_f1 += m.f1;
      ++r.macro_classes;
    }
  }
  if (r.macro_classes > 0) {
    r.macro_precision /= r.macro_classes;
    r.macro_recall /= r.macro_classes;
    r.macro_f1 /= r.macro_classes;
  }

  // Pooled counts: every error is one FP (its predicted class) and one FN
  // (its true class), so pooled FP == pooled FN == total - trace.
  const auto tp = static_cast<double>(cm.trace());
  const auto errors = static_cast<double>(total - cm.trace());
  r.accuracy = tp / static_cast<double>(total);
  r.micro_precision = tp / (tp + errors);
  r.micro_recall = tp / (tp + errors);
  r.micro_f1 = 2.0 * tp / (2.0 * tp + errors + errors);
  return r;
}

namespace {

std::pair<std::size_t, std::size_t> count_classes(std::span<const double> scores, std::span<const bool> is_positive) {
  if (scores.size() != is_positive.size()) throw Error(ErrorKind::ShapeMismatch, "scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw Error(ErrorKind::InvalidArgument, "NaN score");
    pos += is_positive[i] ? 1 : 0;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) {
    throw Error(ErrorKind::DegenerateClass, pos == 0 ? "no positive samples" : "no negative samples");
  }
  return {pos, neg};
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const bool> is_positive, int class_index) {
  const auto [pos, neg] = count_classes(scores, is_positive);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve{class_index, {{0.0, 0.0}}, 0.0};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (is_positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const RocPoint point{static_cast<double>(fp) / static_cast<double>(neg),
                         static_cast<double>(tp) / static_cast<double>(pos)};
    const RocPoint& prev = curve.points.back();
    curve.auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) * 0.5;
    curve.points.push_back(point);
  }
  return curve;
}

double auc_pairwise_oracle(std::span<const double> scores, std::span<const bool> is_positive) {
  const auto [pos, neg] = count_classes(scores, is_positive);
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!is_positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (is_positive[j]) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

Evaluation evaluate_predictions(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw Error(ErrorKind::ShapeMismatch, "probability rows differ from label count");
  }
  const int k = static_cast<int>(probs.cols());
  Evaluation eval;
  eval.probs = probs;
  eval.labels.assign(labels.begin(), labels.end());
  eval.predictions = argmax_rows(probs);
  eval.confusion = confusion_matrix(eval.labels, eval.predictions, k);
  eval.report = classification_report(eval.confusion);

  const std::size_t n = labels.size();
  std::vector<double> scores(n);
  // std::vector<bool> cannot back a span.
  auto positive = std::make_unique<bool[]>(n);
  for (int c = 0; c < k; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs(static_cast<Eigen::Index>(i), c);
      positive[i] = labels[i] == c;
      pos += positive[i] ? 1 : 0;
    }
    if (pos == 0 || pos == n) {
      eval.omitted_classes.push_back(c);
      continue;
    }
    eval.roc.push_back(roc_curve(scores, std::span<const bool>(positive.get(), n), c));
  }
  return eval;
}

Matrix predict_frames(ProbabilityModel& model, FrameLoader& loader, std::span<const LabeledFrame> frames,
                      int batch_size) {
  const int k = model.num_classes();
  Matrix probs(static_cast<Eigen::Index>(frames.size()), k);
  const auto batch = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < frames.size(); start += batch) {
    const std::size_t end = std::min(frames.size(), start + batch);
    std::vector<ImageTensor> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(loader.load(frames[i], Split::Val, 0));
    const Matrix p = model.predict_proba(stack_images(images));
    probs.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = p;
  }
  return probs;
}

Matrix extract_features(EnsembleModel& model, FrameLoader& loader, std::span<const LabeledFrame> frames,
                        int batch_size) {
  Matrix features(static_cast<Eigen::Index>(frames.size()), model.config().feature_dim());
  const auto batch = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < frames.size(); start += batch) {
    const std::size_t end = std::min(frames.size(), start + batch);
    std::vector<ImageTensor> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(loader.load(frames[i], Split::Val, 0));
    features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        model.forward(stack_images(images), Mode::Eval).features;
  }
  return features;
}

Evaluation evaluate_model(ProbabilityModel& model, FrameLoader& loader, std::span<const LabeledFrame> frames,
                          const ClassSet& classes, int batch_size) {
  if (frames.empty()) throw Error(ErrorKind::TooFewSamples, "nothing to evaluate");
  if (model.num_classes() != classes.size()) {
    throw Error(ErrorKind::IncompatibleConfig, "model predicts " + std::to_string(model.num_classes()) +
                                                   " classes, class set has " + std::to_string(classes.size()));
  }
  std::vector<int> labels;
  for (const auto& f : frames) labels.push_back(f.label);
  return evaluate_predictions(predict_frames(model, loader, frames, batch_size), labels);
}

nlohmann::json report_to_json(const Evaluation& eval, const ClassSet& classes) {
  const auto& r = eval.report;
  nlohmann::json per_class = nlohmann::json::object();
  nlohmann::json notes = nlohmann::json::array();
  for (int c = 0; c < classes.size(); ++c) {
    const auto& m = r.per_class[static_cast<std::size_t>(c)];
    per_class[classes.name(c)] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    if (m.precision_undefined) notes.push_back(classes.name(c) + ": no predictions, precision set to 0");
    if (m.recall_undefined) notes.push_back(classes.name(c) + ": no samples, recall set to 0 and excluded from macro averages");
  }
  nlohmann::json auc = nlohmann::json::object();
  for (const auto& curve : eval.roc) auc[classes.name(curve.class_index)] = curve.auc;
  for (int c : eval.omitted_classes) notes.push_back(classes.name(c) + ": ROC omitted (single-label split)");
  return {{"classes", per_class},
          {"accuracy", r.accuracy},
          {"macro_f1", r.macro_f1},
          {"micro_f1", r.micro_f1},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"auc", auc},
          {"notes", notes}};
}

std::string confusion_to_csv(const ConfusionMatrix& cm, const ClassSet& classes) {
  std::string out = "true\\predicted";
  for (const auto& name : classes.names()) out += "," + name;
  out += "\n";
  for (int i = 0; i < cm.num_classes; ++i) {
    out += classes.name(i);
    for (int j = 0; j < cm.num_classes; ++j) out += "," + std::to_string(cm.at(i, j));
    out += "\n";
  }
  return out;
}

nlohmann::json roc_to_json(const Evaluation& eval, const ClassSet& classes) {
  nlohmann::json curves = nlohmann::json::object();
  for (const auto& curve : eval.roc) {
    std::vector<double> fpr;
    std::vector<double> tpr;
    for (const auto& p : curve.points) {
      fpr.push_back(p.fpr);
      tpr.push_back(p.tpr);
    }
    curves[classes.name(curve.class_index)] = {{"auc", curve.auc}, {"fpr", fpr}, {"tpr", tpr}};
  }
  nlohmann::json omitted = nlohmann::json::array();
  for (int c : eval.omitted_classes) omitted.push_back(classes.name(c));
  return {{"curves", curves}, {"omitted", omitted}};
}

}  // namespace vce

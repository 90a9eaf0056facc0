#include "vce/training.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "vce/io.hpp"

namespace vce {

void TrainingConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("train.lr must be positive");
  if (batch_size < 1) fail("train.batch_size must be >= 1");
  if (epochs < 1) fail("train.epochs must be >= 1");
  if (!(weight_decay >= 0.0)) fail("train.weight_decay must be >= 0");
  if (optimizer != "adam") fail("train.optimizer must be \"adam\"");
  if (loss != "cross_entropy") fail("train.loss must be \"cross_entropy\"");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) fail("train.eps must be positive");
}

std::string history_to_csv(std::span<const EpochMetrics> history) {
  std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
  for (const auto& m : history) {
    out += std::to_string(m.epoch) + "," + format_double(m.train_loss) + "," + format_double(m.val_loss) + "," +
           format_double(m.train_acc) + "," + format_double(m.val_acc) + "\n";
  }
  return out;
}

std::vector<EpochMetrics> history_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "epoch,train_loss,val_loss,train_acc,val_acc") {
    throw Error(ErrorKind::IoError, "unexpected history header '" + line + "'");
  }
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 5> v{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto [next, ec] = std::from_chars(p, end, v[i]);
      if (ec != std::errc{}) throw Error(ErrorKind::IoError, "malformed history row '" + line + "'");
      p = next;
      if (i + 1 < v.size()) {
        if (p == end || *p != ',') throw Error(ErrorKind::IoError, "malformed history row '" + line + "'");
        ++p;
      }
    }
    out.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4]});
  }
  return out;
}

nlohmann::json history_to_json(std::span<const EpochMetrics> history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : history) {
    arr.push_back({{"epoch", m.epoch},
                   {"train_loss", m.train_loss},
                   {"val_loss", m.val_loss},
                   {"train_acc", m.train_acc},
                   {"val_acc", m.val_acc}});
  }
  return arr;
}

namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index k) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw Error(ErrorKind::ShapeMismatch, "label count differs from batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= k) throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(y));
  }
}

constexpr double kProbFloor = 1e-12;

double fused_loss(const EnsembleOutput& out, std::span<const int> labels, Fusion fusion) {
  if (fusion == Fusion::MeanProb) return cross_entropy_probs(out.probs, labels);
  return cross_entropy(0.5 * (out.logits_a + out.logits_b), labels);
}

}  // namespace

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double max = logits.row(r).maxCoeff();
    const double lse = max + std::log((logits.row(r).array() - max).exp().sum());
    total += lse - logits(r, labels[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

double cross_entropy_probs(const Matrix& probs, std::span<const int> labels) {
  check_labels(labels, probs.rows(), probs.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    total -= std::log(std::max(probs(r, labels[static_cast<std::size_t>(r)]), kProbFloor));
  }
  return total / static_cast<double>(probs.rows());
}

LossAndGrad ensemble_loss(const EnsembleOutput& out, std::span<const int> labels, Fusion fusion,
                          bool joint_training) {
  const Eigen::Index b = out.probs.rows();
  const Eigen::Index k = out.probs.cols();
  LossAndGrad result{fused_loss(out, labels, fusion), Matrix::Zero(b, k), Matrix::Zero(b, k)};
  const double inv_b = 1.0 / static_cast<double>(b);

  if (!joint_training) {
    result.grad_a = softmax_rows(out.logits_a);
    result.grad_b = softmax_rows(out.logits_b);
    for (Eigen::Index r = 0; r < b; ++r) {
      result.grad_a(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
      result.grad_b(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    }
    result.grad_a *= inv_b;
    result.grad_b *= inv_b;
    return result;
  }

  if (fusion == Fusion::MeanLogit) {
    Matrix g = out.probs;
    for (Eigen::Index r = 0; r < b; ++r) g(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    g *= 0.5 * inv_b;
    result.grad_a = g;
    result.grad_b = std::move(g);
    return result;
  }

  // p = (sa + sb) / 2, loss = -log p_y; d loss / d za_k = -(sa_y / 2p_y)(delta_yk - sa_k).
  const Matrix sa = softmax_rows(out.logits_a);
  const Matrix sb = softmax_rows(out.logits_b);
  for (Eigen::Index r = 0; r < b; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    const double p = out.probs(r, y);
    if (p <= kProbFloor) continue;  // clamped: zero gradient
    const double ca = -0.5 * sa(r, y) / p * inv_b;
    const double cb = -0.5 * sb(r, y) / p * inv_b;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double delta = c == y ? 1.0 : 0.0;
      result.grad_a(r, c) = ca * (delta - sa(r, c));
      result.grad_b(r, c) = cb * (delta - sb(r, c));
    }
  }
  return result;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const TrainingConfig& cfg, long step) {
  if (step < 1) throw Error(ErrorKind::InvalidArgument, "Adam step index starts at 1");
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw Error(ErrorKind::ShapeMismatch, "Adam state does not match parameter size");
  }
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + cfg.weight_decay * param[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void Adam::step(std::span<const ParamRef> params) {
  for (const auto& p : params) {
    if (!p.trainable()) continue;
    for (double g : p.grad->values()) {
      if (!std::isfinite(g)) {
        throw Error(ErrorKind::NonFiniteGradient, "non-finite gradient in '" + p.name + "' at step " +
                                                      std::to_string(step_ + 1));
      }
    }
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.trainable() ? p.value->size() : 0, 0.0);
      v_.emplace_back(p.trainable() ? p.value->size() : 0, 0.0);
    }
  }
  if (m_.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "parameter list changed between steps");
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable()) continue;
    adam_update(params[i].value->values(), params[i].grad->values(), m_[i], v_[i], cfg_, step_);
  }
}

EpochResult train_epoch(EnsembleModel& model, Adam& optimizer, FrameLoader& loader,
                        std::span<const LabeledFrame> frames, const TrainingConfig& cfg, int epoch) {
  if (frames.empty()) throw Error(ErrorKind::TooFewSamples, "empty training split");
  if (cfg.batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");

  const std::uint64_t epoch_seed = mix_seed(cfg.seed ^ mix_seed(static_cast<std::uint64_t>(epoch)));
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(epoch_seed);
  shuffle_rng.shuffle(std::span<std::size_t>(order));

  const auto params = model.trainable_parameters();
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    for (std::size_t i = start; i < end; ++i) {
      const auto& frame = frames[order[i]];
      images.push_back(loader.load(frame, Split::Train, sample_seed(epoch_seed, order[i])));
      labels.push_back(frame.label);
    }
    model.zero_grad();
    const EnsembleOutput out = model.forward(stack_images(images), Mode::Train);
    const LossAndGrad lg = ensemble_loss(out, labels, model.config().fusion, cfg.joint_training);
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorKind::NonFiniteGradient, "non-finite loss in epoch " + std::to_string(epoch));
    }
    model.backward(lg.grad_a, lg.grad_b);
    optimizer.step(params);

    loss_sum += lg.loss * static_cast<double>(labels.size());
    const auto pred = argmax_rows(out.probs);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  }
  const auto n = static_cast<double>(frames.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

EpochResult validate_epoch(EnsembleModel& model, FrameLoader& loader, std::span<const LabeledFrame> frames,
                           int batch_size) {
  if (frames.empty()) throw Error(ErrorKind::TooFewSamples, "empty validation split");
  const auto batch = static_cast<std::size_t>(std::max(batch_size, 1));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < frames.size(); start += batch) {
    const std::size_t end = std::min(frames.size(), start + batch);
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(loader.load(frames[i], Split::Val, 0));
      labels.push_back(frames[i].label);
    }
    const EnsembleOutput out = model.forward(stack_images(images), Mode::Eval);
    loss_sum += fused_loss(out, labels, model.config().fusion) * static_cast<double>(labels.size());
    const auto pred = argmax_rows(out.probs);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  }
  const auto n = static_cast<double>(frames.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainingAborted::TrainingAborted(const Error& cause, std::vector<EpochMetrics> history_so_far,
                                 std::optional<Checkpoint> best_so_far)
    : Error(cause.kind(), std::string("training aborted after ") + std::to_string(history_so_far.size()) +
                              " epoch(s): " + cause.what()),
      history(std::move(history_so_far)), best(std::move(best_so_far)) {}

std::size_t best_epoch_index(std::span<const EpochMetrics> history) {
  if (history.empty()) throw Error(ErrorKind::EmptyHistory, "no epochs recorded");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].val_acc > history[best].val_acc) best = i;
  }
  return best;
}

FitResult fit(EnsembleModel& model, const DatasetManifest& manifest, const TrainingConfig& cfg, FrameLoader& loader,
              const nlohmann::json& run_config, const EpochCallback& on_epoch) {
  cfg.validate();
  const auto train = manifest.frames_in(Split::Train);
  const auto val = manifest.frames_in(Split::Val);
  if (train.empty() || val.empty()) {
    throw Error(ErrorKind::TooFewSamples, "fit() needs a manifest with non-empty train and val splits");
  }

  Adam optimizer(cfg);
  std::vector<EpochMetrics> history;
  std::optional<Checkpoint> best;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics metrics{epoch, 0.0, 0.0, 0.0, 0.0};
    try {
      const auto tr = train_epoch(model, optimizer, loader, train, cfg, epoch);
      const auto va = validate_epoch(model, loader, val, cfg.batch_size);
      metrics = {epoch, tr.loss, va.loss, tr.accuracy, va.accuracy};
    } catch (const Error& e) {
      throw TrainingAborted(e, std::move(history), std::move(best));
    }
    history.push_back(metrics);
    const bool improved = !best || metrics.val_acc > best->best_val_acc;
    if (improved) best = make_checkpoint(model, run_config, metrics.val_acc, epoch);
    spdlog::info("epoch {:>3}/{}: train_loss={:.4f} train_acc={:.4f} val_loss={:.4f} val_acc={:.4f}{}", epoch,
                 cfg.epochs, metrics.train_loss, metrics.train_acc, metrics.val_loss, metrics.val_acc,
                 improved ? " *" : "");
    if (on_epoch) on_epoch(metrics, improved ? &*best : nullptr);
  }
  return {std::move(history), std::move(*best)};
}

}  // namespace vce

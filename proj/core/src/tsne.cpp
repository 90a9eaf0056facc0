#include "vce/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vce/error.hpp"
#include "vce/rng.hpp"

namespace vce {

namespace {

constexpr int kMaxSearchSteps = 64;
constexpr double kEntropyTolerance = 1e-5;

Matrix squared_distances(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

// Fills row i of the conditional distribution for bandwidth parameter beta and
// returns its entropy in nats. Distances are shifted by their minimum.
double conditional_row(const Matrix& d, Eigen::Index i, double d_min, double beta, Matrix& p) {
  const Eigen::Index n = d.rows();
  double sum = 0.0;
  double weighted = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) {
      p(i, j) = 0.0;
      continue;
    }
    const double shifted = d(i, j) - d_min;
    const double v = std::exp(-beta * shifted);
    p(i, j) = v;
    sum += v;
    weighted += shifted * v;
  }
  p.row(i) /= sum;
  return std::log(sum) + beta * weighted / sum;
}

}  // namespace

void TsneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
  if (!(perplexity > 0.0)) fail("tsne.perplexity must be positive");
  if (iterations < 250) fail("tsne.iterations must be >= 250");
  if (!(learning_rate > 0.0)) fail("tsne.learning_rate must be positive");
  if (!(early_exaggeration >= 1.0)) fail("tsne.early_exaggeration must be >= 1");
  if (exaggeration_iters < 0 || momentum_switch_iter < 0) fail("tsne iteration counts must be >= 0");
  if (!(init_stddev > 0.0)) fail("tsne.init_stddev must be positive");
}

double effective_perplexity(double perplexity, std::size_t n) {
  const double cap = (static_cast<double>(n) - 1.0) / 3.0;
  return std::min(perplexity, cap);
}

Matrix pairwise_affinities(const Matrix& features, double perplexity) {
  const Eigen::Index n = features.rows();
  if (n < 4) throw Error(ErrorKind::InvalidArgument, "affinities need at least 4 points");
  if (!(perplexity > 0.0) || perplexity >= static_cast<double>(n)) {
    throw Error(ErrorKind::InvalidArgument, "perplexity must lie in (0, N)");
  }
  const Matrix d = squared_distances(features);
  const double target = std::log(perplexity);
  Matrix p = Matrix::Zero(n, n);

  for (Eigen::Index i = 0; i < n; ++i) {
    double d_min = std::numeric_limits<double>::infinity();
    double d_mean = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      d_min = std::min(d_min, d(i, j));
      d_mean += d(i, j);
    }
    d_mean = d_mean / static_cast<double>(n - 1) - d_min;

    double beta = d_mean > 0.0 ? 1.0 / d_mean : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int step = 0; step < kMaxSearchSteps; ++step) {
      const double h = conditional_row(d, i, d_min, beta, p);
      if (std::abs(h - target) < kEntropyTolerance) {
        converged = true;
        break;
      }
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
      } else {
        hi = beta;
        beta = lo == 0.0 ? beta * 0.5 : 0.5 * (lo + hi);
      }
    }
    if (!converged) {
      throw Error(ErrorKind::PerplexityUnreachable,
                  "bandwidth search for point " + std::to_string(i) + " did not reach perplexity " +
                      std::to_string(perplexity) + " (duplicate points?)");
    }
  }

  Matrix joint = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  joint.diagonal().setZero();
  return joint;
}

namespace {

// Student-t kernel numerators 1 / (1 + |y_i - y_j|^2), zero diagonal.
Matrix student_kernel(const Matrix& y, double& total) {
  const Eigen::Index n = y.rows();
  Matrix num = Matrix::Zero(n, n);
  total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      num(i, j) = v;
      num(j, i) = v;
      total += 2.0 * v;
    }
  }
  return num;
}

}  // namespace

double kl_divergence(const Matrix& P, const Matrix& coords) {
  double total = 0.0;
  const Matrix num = student_kernel(coords, total);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      if (i == j || P(i, j) <= 0.0) continue;
      const double q = std::max(num(i, j) / total, std::numeric_limits<double>::min());
      kl += P(i, j) * std::log(P(i, j) / q);
    }
  }
  return std::max(kl, 0.0);
}

Embedding2D tsne_embed(const Matrix& features, std::span<const int> labels, const TsneConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = features.rows();
  if (n < 8) throw Error(ErrorKind::InvalidArgument, "t-SNE needs at least 8 points");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw Error(ErrorKind::ShapeMismatch, "one label per point required");

  const Matrix P = pairwise_affinities(features, effective_perplexity(cfg.perplexity, static_cast<std::size_t>(n)));

  Rng rng(mix_seed(cfg.seed));
  Matrix y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = rng.normal() * cfg.init_stddev;
    y(i, 1) = rng.normal() * cfg.init_stddev;
  }
  Matrix velocity = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);
  Matrix grad(n, 2);

  Embedding2D result;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    const double momentum = iter < cfg.momentum_switch_iter ? cfg.initial_momentum : cfg.final_momentum;

    double total = 0.0;
    const Matrix num = student_kernel(y, total);
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double coeff = (exaggeration * P(i, j) - num(i, j) / total) * num(i, j);
        grad(i, 0) += coeff * (y(i, 0) - y(j, 0));
        grad(i, 1) += coeff * (y(i, 1) - y(j, 1));
      }
    }
    grad *= 4.0;

    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0.0) == (velocity(i, k) > 0.0);
        gains(i, k) = std::max(same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2, 0.01);
        velocity(i, k) = momentum * velocity(i, k) - cfg.learning_rate * gains(i, k) * grad(i, k);
      }
    }
    y += velocity;
    y.rowwise() -= y.colwise().mean();

    if (iter == 0) result.initial_kl = kl_divergence(P, y);
  }

  result.final_kl = kl_divergence(P, y);
  result.coords = std::move(y);
  result.labels.assign(labels.begin(), labels.end());
  return result;
}

}  // namespace vce

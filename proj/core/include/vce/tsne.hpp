#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vce/tensor.hpp"

namespace vce {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 250;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double init_stddev = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Perplexity actually used for N points: min(perplexity, (N - 1) / 3).
double effective_perplexity(double perplexity, std::size_t n);

/// Symmetrized joint affinities (P_cond + P_cond^T) / 2N, where row i of
/// P_cond is a Gaussian over squared distances whose bandwidth is bisected
/// until 2^entropy matches `perplexity`.
Matrix pairwise_affinities(const Matrix& features, double perplexity);

/// KL(P || Q) for Student-t affinities Q of the embedding `coords` (N x 2).
double kl_divergence(const Matrix& P, const Matrix& coords);

struct Embedding2D {
  Matrix coords;  // N x 2, mean-centred
  std::vector<int> labels;
  double initial_kl = 0.0;  // after the first update, un-exaggerated objective
  double final_kl = 0.0;
};

/// Exact O(N^2) t-SNE: momentum gradient descent with per-coordinate gains,
/// early exaggeration and a momentum switch per `cfg`.
Embedding2D tsne_embed(const Matrix& features, std::span<const int> labels, const TsneConfig& cfg);

}  // namespace vce

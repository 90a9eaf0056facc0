#include <gtest/gtest.h>

#include <Eigen/QR>
#include <cmath>

#include "oracles.hpp"
#include "vce/error.hpp"
#include "vce/tsne.hpp"

namespace vce {
namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Two tight clusters far apart, first half label 0.
Matrix two_clusters(int n, int d, Rng& rng, std::vector<int>& labels) {
  Matrix x = random_matrix(n, d, rng, 0.1);
  labels.assign(static_cast<std::size_t>(n), 0);
  for (int i = n / 2; i < n; ++i) {
    x.row(i).array() += 5.0;
    labels[static_cast<std::size_t>(i)] = 1;
  }
  return x;
}

void expect_valid_affinities(const Matrix& P) {
  EXPECT_NEAR(P.sum(), 1.0, 1e-6);
  EXPECT_LE((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GE(P.minCoeff(), 0.0);
  for (Eigen::Index i = 0; i < P.rows(); ++i) EXPECT_EQ(P(i, i), 0.0);
}

TEST(Affinities, SquareSymmetry) {
  Matrix sq(4, 2);
  sq << 0, 0, 1, 0, 1, 1, 0, 1;
  // A corner sees distances {1, 1, 2}: reachable perplexities lie in (2, 3).
  for (double perp : {2.1, 2.5, 2.9}) {
    const Matrix P = pairwise_affinities(sq, perp);
    expect_valid_affinities(P);
    const double edge = P(0, 1);
    EXPECT_NEAR(P(1, 2), edge, 1e-12);
    EXPECT_NEAR(P(2, 3), edge, 1e-12);
    EXPECT_NEAR(P(3, 0), edge, 1e-12);
    EXPECT_NEAR(P(0, 2), P(1, 3), 1e-12);
    EXPECT_GT(edge, P(0, 2));
  }
}

TEST(Affinities, ContractOnRandomInputs) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto n = 4 + static_cast<Eigen::Index>(rng.below(40));
    const Matrix x = random_matrix(n, 5, rng);
    expect_valid_affinities(pairwise_affinities(x, effective_perplexity(30.0, static_cast<std::size_t>(n))));
  }
}

// Each conditional row should have perplexity 2^H equal to the target.
TEST(Affinities, ConditionalRowsHitTargetPerplexity) {
  Rng rng(2);
  const Matrix x = random_matrix(30, 4, rng);
  const double perp = 7.0;
  const Matrix P = pairwise_affinities(x, perp);
  // Recover each row's bandwidth by bisection independently and rebuild P.
  Matrix cond = Matrix::Zero(30, 30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < 30; ++j)
      if (j != i) d.push_back((x.row(i) - x.row(j)).squaredNorm());
    auto perplexity_at = [&](double beta) {
      double z = 0, h = 0;
      for (double v : d) z += std::exp(-beta * v);
      for (double v : d) {
        const double p = std::exp(-beta * v) / z;
        if (p > 0) h -= p * std::log2(p);
      }
      return std::pow(2.0, h);
    };
    double lo = 0, hi = 1e6;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (perplexity_at(mid) > perp ? lo : hi) = mid;
    }
    const double beta = 0.5 * (lo + hi);
    double z = 0;
    for (double v : d) z += std::exp(-beta * v);
    for (Eigen::Index j = 0; j < 30; ++j)
      if (j != i) cond(i, j) = std::exp(-beta * (x.row(i) - x.row(j)).squaredNorm()) / z;
  }
  const Matrix expected = (cond + cond.transpose()) / 60.0;
  EXPECT_LE((P - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Affinities, NearDuplicateClustersBindInternally) {
  Rng rng(3);
  Matrix x(8, 6);
  const Matrix a = random_matrix(1, 6, rng), b = random_matrix(1, 6, rng, 1.0).array() + 4.0;
  for (int i = 0; i < 8; ++i) x.row(i) = (i < 4 ? a : b) + random_matrix(1, 6, rng, 1e-3);
  const Matrix P = pairwise_affinities(x, 2.0);
  double min_within = 1.0, max_between = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      if (i == j) continue;
      if ((i < 4) == (j < 4))
        min_within = std::min(min_within, P(i, j));
      else
        max_between = std::max(max_between, P(i, j));
    }
  EXPECT_GT(min_within, max_between);
}

TEST(Affinities, RotationInvariant) {
  Rng rng(4);
  const Matrix x = random_matrix(20, 8, rng);
  const Eigen::HouseholderQR<Matrix> qr(random_matrix(8, 8, rng));
  const Matrix q = qr.householderQ();
  const Matrix P = pairwise_affinities(x, 5.0);
  const Matrix Pr = pairwise_affinities(x * q, 5.0);
  EXPECT_LE((P - Pr).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Affinities, SquareBelowNearestNeighbourCountIsUnreachable) {
  Matrix sq(4, 2);
  sq << 0, 0, 1, 0, 1, 1, 0, 1;
  EXPECT_THROW(pairwise_affinities(sq, 1.5), Error);
}

TEST(Affinities, ExactDuplicatesAreUnreachable) {
  const Matrix x = Matrix::Constant(6, 3, 1.5);
  try {
    pairwise_affinities(x, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PerplexityUnreachable);
  }
}

TEST(Affinities, Preconditions) {
  Rng rng(5);
  EXPECT_THROW(pairwise_affinities(random_matrix(3, 2, rng), 1.0), Error);
  EXPECT_THROW(pairwise_affinities(random_matrix(6, 2, rng), 6.0), Error);
  EXPECT_THROW(pairwise_affinities(random_matrix(6, 2, rng), 0.0), Error);
}

TEST(Tsne, EffectivePerplexityClamp) {
  EXPECT_DOUBLE_EQ(effective_perplexity(30.0, 8), 7.0 / 3.0);
  EXPECT_DOUBLE_EQ(effective_perplexity(30.0, 1000), 30.0);
}

TEST(Tsne, ConfigDefaultsAndValidation) {
  const TsneConfig cfg;
  EXPECT_EQ(cfg.perplexity, 30.0);
  EXPECT_EQ(cfg.iterations, 1000);
  EXPECT_EQ(cfg.learning_rate, 200.0);
  EXPECT_EQ(cfg.early_exaggeration, 12.0);
  EXPECT_EQ(cfg.exaggeration_iters, 250);
  EXPECT_EQ(cfg.momentum_switch_iter, 250);
  EXPECT_NO_THROW(cfg.validate());
  TsneConfig bad;
  bad.iterations = 100;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Tsne, TwoClustersSeparateInEmbedding) {
  Rng rng(6);
  std::vector<int> labels;
  const Matrix x = two_clusters(8, 16, rng, labels);
  const auto emb = tsne_embed(x, labels, TsneConfig{});
  EXPECT_GE(testing::two_means_purity(emb.coords, labels), 0.9);
}

TEST(Tsne, DuplicateRowsEmbedClose) {
  Rng rng(7);
  Matrix x = random_matrix(40, 10, rng);
  x.row(17) = x.row(5);
  const std::vector<int> labels(40, 0);
  const auto emb = tsne_embed(x, labels, TsneConfig{});
  std::vector<double> dists;
  for (int i = 0; i < 40; ++i)
    for (int j = i + 1; j < 40; ++j) dists.push_back((emb.coords.row(i) - emb.coords.row(j)).norm());
  std::nth_element(dists.begin(), dists.begin() + static_cast<long>(dists.size() / 2), dists.end());
  EXPECT_LT((emb.coords.row(5) - emb.coords.row(17)).norm(), dists[dists.size() / 2]);
}

TEST(Tsne, DeterministicUnderSeed) {
  Rng rng(8);
  std::vector<int> labels;
  const Matrix x = two_clusters(30, 6, rng, labels);
  TsneConfig cfg;
  cfg.iterations = 300;
  cfg.seed = 42;
  const auto a = tsne_embed(x, labels, cfg);
  const auto b = tsne_embed(x, labels, cfg);
  EXPECT_TRUE(a.coords == b.coords);
  EXPECT_EQ(a.final_kl, b.final_kl);
  cfg.seed = 43;
  EXPECT_FALSE(tsne_embed(x, labels, cfg).coords == a.coords);
}

TEST(Tsne, KlDecreasesAndCoordsCentred) {
  Rng rng(9);
  const Matrix x = random_matrix(60, 12, rng);
  const std::vector<int> labels(60, 1);
  const auto emb = tsne_embed(x, labels, TsneConfig{});
  EXPECT_LT(emb.final_kl, emb.initial_kl);
  EXPECT_GE(emb.final_kl, 0.0);
  EXPECT_TRUE(emb.coords.allFinite());
  EXPECT_LE(emb.coords.colwise().mean().cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(emb.labels, labels);
  const Matrix P = pairwise_affinities(x, effective_perplexity(30.0, 60));
  EXPECT_NEAR(kl_divergence(P, emb.coords), emb.final_kl, 1e-9);
}

TEST(Tsne, Preconditions) {
  Rng rng(10);
  EXPECT_THROW(tsne_embed(random_matrix(7, 3, rng), std::vector<int>(7, 0), TsneConfig{}), Error);
  EXPECT_THROW(tsne_embed(random_matrix(9, 3, rng), std::vector<int>(8, 0), TsneConfig{}), Error);
}

TEST(KlDivergence, ZeroForMatchingAffinities) {
  // Two points: Q is 1/2 on each off-diagonal entry whatever the distance.
  Matrix P(2, 2);
  P << 0, 0.5, 0.5, 0;
  Matrix y(2, 2);
  y << 0, 0, 3, 4;
  EXPECT_NEAR(kl_divergence(P, y), 0.0, 1e-15);
}

}  // namespace
}  // namespace vce

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bcdl;

namespace
{
  Matrix
  random_poses(Eigen::Index m, Eigen::Index n, std::uint64_t seed)
  {
    RngStream rng(seed);
    Matrix y(m, n);
    for (Eigen::Index i = 0; i < y.size(); ++i)
      y.data()[i] = rng.normal();
    return y;
  }
}

TEST(AutoEta, TwoPointHandExample)
{
  Matrix y(2, 2);
  y << 0, 3, 0, 4;
  EXPECT_DOUBLE_EQ(auto_eta(y), 25.0);
}

TEST(AutoEta, IdenticalPosesAreDegenerate)
{
  Matrix y = Matrix::Ones(3, 2);
  EXPECT_THROW(auto_eta(y), DegenerateBandwidth);
}

TEST(AutoEta, NeedsTwoPoses)
{
  EXPECT_THROW(auto_eta(Matrix::Ones(3, 1)), InvalidArgument);
}

TEST(AutoEta, QuadraticHomogeneity)
{
  Matrix y = random_poses(3, 7, 1);
  EXPECT_NEAR(auto_eta(2.5 * y), 6.25 * auto_eta(y), 1e-12 * auto_eta(y) * 6.25);
}

TEST(AutoEta, MatchesPairwiseFormula)
{
  Matrix y = random_poses(2, 5, 2);
  double sum = 0.0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j)
      sum += (y.col(i) - y.col(j)).squaredNorm();
  EXPECT_NEAR(auto_eta(y), 2.0 * sum / 20.0, 1e-12);
}

TEST(BuildGram, EntrywiseKernelFormula)
{
  Matrix y = random_poses(4, 3, 3);
  KernelGram g = build_gram(y, {});
  const double eta = auto_eta(y);
  EXPECT_DOUBLE_EQ(g.eta, eta);
  EXPECT_EQ(g.jitter_applied, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      EXPECT_NEAR(g.sigma(i, j), std::exp(-(y.col(i) - y.col(j)).norm() / eta), 1e-15);
}

TEST(BuildGram, UnitDiagonalSymmetricBoundedAndFactored)
{
  Matrix y = random_poses(3, 12, 4);
  KernelGram g = build_gram(y, {});
  const Eigen::Index n = g.size();
  for (Eigen::Index i = 0; i < n; ++i)
  {
    EXPECT_DOUBLE_EQ(g.sigma(i, i), 1.0 + g.jitter_applied);
    for (Eigen::Index j = 0; j < n; ++j)
    {
      EXPECT_EQ(g.sigma(i, j), g.sigma(j, i));
      EXPECT_GT(g.sigma(i, j), 0.0);
      EXPECT_LE(g.sigma(i, j), 1.0 + g.jitter_applied);
    }
  }
  EXPECT_LT((g.chol * g.chol.transpose() - g.sigma).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((g.inv * g.sigma - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(g.log_det, std::log(g.sigma.determinant()), 1e-9);
}

TEST(BuildGram, DecreasesWithDistance)
{
  Matrix y(1, 4);
  y << 0.0, 0.5, 1.5, 4.0;
  KernelGram g = build_gram(y, KernelSpec{KernelKind::exponential, 2.0});
  EXPECT_GT(g.sigma(0, 1), g.sigma(0, 2));
  EXPECT_GT(g.sigma(0, 2), g.sigma(0, 3));
  EXPECT_DOUBLE_EQ(g.eta, 2.0);
}

TEST(BuildGram, DuplicatePosesForceJitter)
{
  Matrix y = random_poses(2, 4, 5);
  y.col(3) = y.col(1);
  KernelGram g = build_gram(y, {});
  EXPECT_DOUBLE_EQ(g.sigma(1, 3), 1.0);
  EXPECT_GT(g.jitter_applied, 0.0);
  EXPECT_LE(g.jitter_applied, gram_max_jitter);
  EXPECT_DOUBLE_EQ(g.sigma(1, 1), 1.0 + g.jitter_applied);
}

TEST(BuildGram, HopelessMatrixIsIllConditioned)
{
  Matrix raw(2, 2);
  raw << 1, 2, 2, 1;
  EXPECT_THROW(factor_gram(raw, 1.0), IllConditionedGram);
}

TEST(BuildGram, RejectsInvalidBandwidth)
{
  Matrix y = random_poses(2, 3, 6);
  EXPECT_THROW(build_gram(y, KernelSpec{KernelKind::exponential, -1.0}), InvalidArgument);
  EXPECT_THROW(build_gram(y, KernelSpec{KernelKind::exponential, 0.0}), InvalidArgument);
}

TEST(BuildGram, SinglePose)
{
  KernelGram g = build_gram(Matrix::Ones(2, 1), {});
  EXPECT_EQ(g.size(), 1);
  EXPECT_DOUBLE_EQ(g.sigma(0, 0), 1.0);
}

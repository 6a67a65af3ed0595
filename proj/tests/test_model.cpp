#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bcdl;

namespace
{
  double
  lnorm(double x, double mean, double prec)
  {
    return -0.5 * std::log(2.0 * M_PI) + 0.5 * std::log(prec) - 0.5 * prec * (x - mean) * (x - mean);
  }

  double
  lgam(double x, double a, double b)
  {
    return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
  }

  double
  lsig(double v)
  {
    return -std::log1p(std::exp(-v));
  }

  /// N=2, K=1, M_x=M_y=1 state with every value chosen by hand.
  struct HandInstance
  {
    Dataset data;
    LatentState st;
    ModelConfig cfg;
    KernelGram gram;

    HandInstance()
    {
      data.x.resize(1, 2);
      data.x << 1.0, 0.2;
      data.y.resize(1, 2);
      data.y << -0.4, 0.1;
      st.z.resize(1, 2);
      st.z << 1, -1;
      st.s.resize(1, 2);
      st.s << 0.7, -1.2;
      st.w.resize(2, 1);
      st.w << 0.3, -0.8;
      st.dx.resize(1, 1);
      st.dx << 1.5;
      st.dy.resize(1, 1);
      st.dy << -0.5;
      st.gamma_s  = 2.0;
      st.gamma_xy = 3.0;
      st.gamma_x  = 0.5;
      st.gamma_y  = 4.0;
      cfg.dict_size = 1;
      cfg.hyper = HyperParams{2.0, 3.0, 1.5, 0.5, 1.2, 2.2, 0.8, 1.1};
      gram = build_gram(data.y, cfg.kernel);
    }
  };
}

TEST(SparseCode, Definition)
{
  IntVector z(2);
  z << 1, -1;
  Vector s(2);
  s << 2.5, 7.0;
  Vector a = sparse_code(z, s);
  EXPECT_EQ(a(0), 2.5);
  EXPECT_EQ(a(1), 0.0);
}

TEST(SparseCode, FullyInactiveAndFullyActive)
{
  Vector s(3);
  s << 1.0, -2.0, 3.0;
  EXPECT_EQ(sparse_code(IntVector::Constant(3, -1), s), Vector::Zero(3));
  EXPECT_EQ(sparse_code(IntVector::Constant(3, 1), s), s);
}

TEST(SparseCode, LengthMismatch)
{
  EXPECT_THROW(sparse_code(IntVector::Ones(2), Vector::Ones(3)), DimensionMismatch);
}

TEST(SparseCode, NonzerosMatchActiveEntries)
{
  RngStream rng(3);
  IntMatrix z(6, 9);
  Matrix s(6, 9);
  for (Eigen::Index i = 0; i < z.size(); ++i)
  {
    z.data()[i] = sample_bernoulli_pm1(0.4, rng);
    s.data()[i] = rng.normal();
  }
  Matrix a = sparse_codes(z, s);
  EXPECT_EQ((a.array() != 0.0).count(), (z.array() > 0).count());
}

TEST(Reconstruct, InactiveCodesGiveZero)
{
  Matrix d = Matrix::Ones(3, 2);
  EXPECT_EQ(reconstruct(d, IntMatrix::Constant(2, 4, -1), Matrix::Ones(2, 4)), Matrix::Zero(3, 4));
}

TEST(Reconstruct, SingleAtomScales)
{
  Matrix d(3, 1);
  d << 1, -2, 0.5;
  Matrix r = reconstruct(d, IntMatrix::Ones(1, 1), Matrix::Constant(1, 1, 3.0));
  EXPECT_EQ(r, 3.0 * d);
}

TEST(Reconstruct, MatchesTripleLoop)
{
  RngStream rng(4);
  const int m = 3, k = 4, n = 5;
  Matrix d(m, k);
  IntMatrix z(k, n);
  Matrix s(k, n);
  for (Eigen::Index i = 0; i < d.size(); ++i)
    d.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < z.size(); ++i)
  {
    z.data()[i] = sample_bernoulli_pm1(0.5, rng);
    s.data()[i] = rng.normal();
  }
  Matrix r = reconstruct(d, z, s);
  for (int row = 0; row < m; ++row)
    for (int col = 0; col < n; ++col)
    {
      double v = 0.0;
      for (int kk = 0; kk < k; ++kk)
        v += d(row, kk) * ((z(kk, col) + 1) / 2) * s(kk, col);
      EXPECT_NEAR(r(row, col), v, 1e-12);
    }
  EXPECT_THROW(reconstruct(Matrix::Ones(3, 2), z, s), DimensionMismatch);
}

TEST(JointLogDensity, PerFactorScalarOracle)
{
  HandInstance h;
  const LatentState& st = h.st;
  const HyperParams& hp = h.cfg.hyper;

  const double eta = 2.0 * 0.25 / 2.0;
  const double rho = std::exp(-0.5 / eta);
  const double det = 1.0 - rho * rho;
  const double w0 = 0.3, w1 = -0.8;
  const double w_prior =
    -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * (w0 * w0 - 2 * rho * w0 * w1 + w1 * w1) / det;
  const double logistic = lsig(0.3) + lsig(0.8);
  const double s_prior  = lnorm(0.7, 0, 2.0) + lnorm(-1.2, 0, 2.0);
  const double x_lik    = lnorm(1.0, 1.5 * 0.7, 3.0) + lnorm(0.2, 0.0, 3.0);
  const double y_lik    = lnorm(-0.4, -0.5 * 0.7, 3.0) + lnorm(0.1, 0.0, 3.0);
  const double d_priors = lnorm(1.5, 0, 0.5) + lnorm(-0.5, 0, 4.0);
  const double g_priors = lgam(2.0, hp.a_s, hp.b_s) + lgam(3.0, hp.a_xy, hp.b_xy)
                          + lgam(0.5, hp.a_x, hp.b_x) + lgam(4.0, hp.a_y, hp.b_y);

  LogDensityTerms t = joint_log_density_terms(st, h.data, hp, h.gram);
  EXPECT_NEAR(t.w_prior, w_prior, 1e-9);
  EXPECT_NEAR(t.z_logistic, logistic, 1e-12);
  EXPECT_NEAR(t.s_prior, s_prior, 1e-12);
  EXPECT_NEAR(t.x_likelihood, x_lik, 1e-12);
  EXPECT_NEAR(t.y_likelihood, y_lik, 1e-12);
  EXPECT_NEAR(t.dx_prior + t.dy_prior, d_priors, 1e-12);
  EXPECT_NEAR(t.gamma_s_prior + t.gamma_xy_prior + t.gamma_x_prior + t.gamma_y_prior, g_priors,
              1e-12);
  EXPECT_NEAR(joint_log_density(st, h.data, h.cfg, h.gram),
              w_prior + logistic + s_prior + x_lik + y_lik + d_priors + g_priors, 1e-9);
}

TEST(JointLogDensity, DoublingNoisePrecisionTouchesOnlyItsTerms)
{
  HandInstance h;
  LogDensityTerms a = joint_log_density_terms(h.st, h.data, h.cfg.hyper, h.gram);
  LatentState st2 = h.st;
  st2.gamma_xy *= 2.0;
  LogDensityTerms b = joint_log_density_terms(st2, h.data, h.cfg.hyper, h.gram);
  EXPECT_EQ(a.w_prior, b.w_prior);
  EXPECT_EQ(a.z_logistic, b.z_logistic);
  EXPECT_EQ(a.s_prior, b.s_prior);
  EXPECT_EQ(a.dx_prior, b.dx_prior);
  EXPECT_EQ(a.gamma_s_prior, b.gamma_s_prior);

  // 4 residuals total; each gains 0.5 ln 2 and loses 0.5 * gamma * r^2 more.
  const double rss = (h.data.x - reconstruct(h.st.dx, h.st.z, h.st.s)).squaredNorm()
                     + (h.data.y - reconstruct(h.st.dy, h.st.z, h.st.s)).squaredNorm();
  const double g = h.st.gamma_xy;
  const double lik_delta = 4 * 0.5 * std::log(2.0) - 0.5 * g * rss;
  const double prior_delta = (h.cfg.hyper.a_xy - 1.0) * std::log(2.0) - h.cfg.hyper.b_xy * g;
  EXPECT_NEAR(b.x_likelihood + b.y_likelihood - a.x_likelihood - a.y_likelihood, lik_delta, 1e-12);
  EXPECT_NEAR(b.gamma_xy_prior - a.gamma_xy_prior, prior_delta, 1e-12);
  EXPECT_NEAR(b.total() - a.total(), lik_delta + prior_delta, 1e-10);
}

TEST(JointLogDensity, FiniteAndDecreasesForOutlier)
{
  auto inst = bcdl::testing::tiny_instance(6, 3, 2, 21);
  double base = joint_log_density(inst.state, inst.data, inst.cfg, inst.gram);
  EXPECT_TRUE(std::isfinite(base));
  Dataset far = inst.data;
  far.x(0, 2) += 100.0;
  EXPECT_LT(joint_log_density(inst.state, far, inst.cfg, inst.gram), base);
}

TEST(JointLogDensity, RejectsWrongGram)
{
  auto inst = bcdl::testing::tiny_instance(4, 2, 2, 22);
  KernelGram other = build_gram(Matrix::Identity(2, 3), {});
  EXPECT_THROW(joint_log_density(inst.state, inst.data, inst.cfg, other), DimensionMismatch);
}

TEST(AncestralSample, NoiselessLimitReproducesDictionaryTimesCode)
{
  ModelConfig cfg;
  cfg.dict_size = 4;
  GenerativeOptions opts;
  opts.fixed = PrecisionOverrides{1.0, 1e16, 1.0, 1.0};
  RngStream rng(5);
  AncestralDraw d = ancestral_sample(cfg, 10, 3, 2, opts, rng);
  EXPECT_LT((d.data.x - reconstruct(d.state.dx, d.state.z, d.state.s)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((d.data.y - reconstruct(d.state.dy, d.state.z, d.state.s)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AncestralSample, SaturatedNegativeWeightsSwitchEverythingOff)
{
  ModelConfig cfg;
  cfg.dict_size = 3;
  GenerativeOptions opts;
  opts.fixed   = PrecisionOverrides{1.0, 100.0, 1.0, 1.0};
  opts.fixed_w = Matrix::Constant(8, 3, -800.0);
  RngStream rng(6);
  AncestralDraw d = ancestral_sample(cfg, 8, 2, 2, opts, rng);
  EXPECT_TRUE((d.state.z.array() == -1).all());
  // Pure noise with standard deviation 0.1.
  EXPECT_LT(d.data.x.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_LT(std::abs(d.data.y.mean()), 0.2);
}

TEST(AncestralSample, DeterministicAndValid)
{
  ModelConfig cfg;
  cfg.dict_size = 3;
  cfg.hyper     = HyperParams::uniform(2.0);
  RngStream a(7), b(7);
  AncestralDraw da = ancestral_sample(cfg, 5, 2, 3, {}, a);
  AncestralDraw db = ancestral_sample(cfg, 5, 2, 3, {}, b);
  EXPECT_TRUE(identical(da.state, db.state));
  EXPECT_EQ(da.data.x, db.data.x);
  EXPECT_EQ(da.data.y, db.data.y);
  EXPECT_NO_THROW(da.state.validate(5, 2, 3));
  EXPECT_NO_THROW(da.data.validate());
}

TEST(AncestralSample, UsesGivenKernelPoses)
{
  ModelConfig cfg;
  cfg.dict_size = 2;
  GenerativeOptions opts;
  opts.kernel_poses = Matrix::Identity(3, 3);
  RngStream rng(8);
  AncestralDraw d = ancestral_sample(cfg, 3, 2, 2, opts, rng);
  KernelGram expected = build_gram(Matrix::Identity(3, 3), cfg.kernel);
  EXPECT_EQ(d.gram.sigma, expected.sigma);
  opts.kernel_poses = Matrix::Identity(3, 4);
  EXPECT_THROW(ancestral_sample(cfg, 3, 2, 2, opts, rng), DimensionMismatch);
}

TEST(Dataset, Validation)
{
  Dataset d;
  d.x = Matrix::Ones(2, 3);
  d.y = Matrix::Ones(1, 2);
  EXPECT_THROW(d.validate(), DimensionMismatch);
  d.y = Matrix::Ones(1, 3);
  EXPECT_NO_THROW(d.validate());
  d.x(0, 0) = std::nan("");
  EXPECT_THROW(d.validate(), InvalidArgument);
}

TEST(HyperParams, UniformAndValidation)
{
  HyperParams h = HyperParams::uniform(1e-6);
  for (double v : {h.a_s, h.b_s, h.a_xy, h.b_xy, h.a_x, h.b_x, h.a_y, h.b_y})
    EXPECT_EQ(v, 1e-6);
  h.b_y = 0.0;
  EXPECT_THROW(h.validate(), InvalidArgument);
}

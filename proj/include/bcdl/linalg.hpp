#pragma once

#include "distributions.hpp"
#include "errors.hpp"
#include "rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace bcdl
{
  using Matrix    = Eigen::MatrixXd;
  using Vector    = Eigen::VectorXd;
  using IntMatrix = Eigen::MatrixXi;
  using IntVector = Eigen::VectorXi;

  inline void
  require_dims(bool ok, const std::string& what)
  {
    if (!ok)
      throw DimensionMismatch(what);
  }

  inline bool
  all_finite(const Eigen::Ref<const Matrix>& m)
  {
    return m.allFinite();
  }

  /// Lower Cholesky factor of a symmetric positive-definite matrix.
  /// Throws NotPositiveDefinite when the factorization breaks down.
  inline Matrix
  cholesky(const Matrix& m)
  {
    require_dims(m.rows() == m.cols(), "cholesky: matrix must be square");
    require_dims(m.rows() > 0, "cholesky: empty matrix");
    if (!m.allFinite())
      throw NotPositiveDefinite("cholesky: matrix has non-finite entries");
    double scale = m.cwiseAbs().maxCoeff();
    if (!((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale))
      throw InvalidArgument("cholesky: matrix is not symmetric");

    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite();
    Matrix l = llt.matrixL();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
      if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i)))
        throw NotPositiveDefinite();
    return l;
  }

  /// mean + chol_cov * eps with eps i.i.d. standard normal.
  inline Vector
  sample_mvn(const Vector& mean, const Matrix& chol_cov, RngStream& rng)
  {
    require_dims(chol_cov.rows() == mean.size() && chol_cov.cols() == mean.size(),
                 "sample_mvn: mean and covariance factor disagree");
    Vector eps(mean.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i)
      eps(i) = rng.normal();
    return mean + chol_cov.triangularView<Eigen::Lower>() * eps;
  }

  /// log N(x; mean, L L^T) given the lower factor L.
  inline double
  mvn_log_density(const Vector& x, const Vector& mean, const Matrix& chol_cov)
  {
    require_dims(x.size() == mean.size() && chol_cov.rows() == x.size(),
                 "mvn_log_density: dimension mismatch");
    Vector u = chol_cov.triangularView<Eigen::Lower>().solve(x - mean);
    double log_det = 2.0 * chol_cov.diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(x.size()) * log_two_pi + log_det + u.squaredNorm());
  }
}

#pragma once

#include "errors.hpp"
#include "linalg.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace bcdl
{
  enum class KernelKind
  {
    exponential
  };

  /// Pose-similarity kernel K(a, b) = exp(-||a - b|| / eta).
  /// An empty eta means the bandwidth is taken from auto_eta().
  struct KernelSpec
  {
    KernelKind kind = KernelKind::exponential;
    std::optional<double> eta;

    void
    validate() const
    {
      if (eta && !(*eta > 0.0 && std::isfinite(*eta)))
        throw InvalidArgument("kernel bandwidth must be positive");
    }
  };

  /// Gram matrix over the training poses with cached factorization.
  ///
  /// `sigma` is the matrix actually used by the model, i.e. the raw kernel
  /// matrix plus jitter_applied on the diagonal.
  struct KernelGram
  {
    Matrix sigma;
    Matrix chol;
    Matrix inv;
    double eta            = 1.0;
    double jitter_applied = 0.0;
    double log_det        = 0.0;

    Eigen::Index size() const noexcept { return sigma.rows(); }
  };

  inline constexpr double gram_initial_jitter = 1e-10;
  inline constexpr double gram_max_jitter     = 1e-2;

  /// Bandwidth: twice the mean squared pairwise distance between columns.
  inline double
  auto_eta(const Matrix& y)
  {
    const Eigen::Index n = y.cols();
    if (n < 2)
      throw InvalidArgument("auto_eta: need at least two poses");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j)
        total += (y.col(i) - y.col(j)).squaredNorm();
    double eta = 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
    if (!(eta > 0.0))
      throw DegenerateBandwidth("auto_eta: all poses are identical, bandwidth is zero");
    return eta;
  }

  inline double
  resolve_eta(const Matrix& y, const KernelSpec& spec)
  {
    spec.validate();
    return spec.eta ? *spec.eta : auto_eta(y);
  }

  inline double
  kernel_value(KernelKind kind, double distance, double eta)
  {
    switch (kind)
    {
      case KernelKind::exponential:
        return std::exp(-distance / eta);
    }
    return 0.0;
  }

  /// Factorizes a raw similarity matrix, escalating diagonal jitter by 10x
  /// from initial_jitter * N until the Cholesky factorization succeeds.
  inline KernelGram
  factor_gram(Matrix raw, double eta)
  {
    const Eigen::Index n = raw.rows();
    require_dims(n > 0 && raw.cols() == n, "factor_gram: matrix must be square");

    KernelGram gram;
    gram.eta    = eta;
    double jitter = 0.0;
    for (;;)
    {
      Matrix trial = raw;
      trial.diagonal().array() += jitter;
      try
      {
        gram.chol  = cholesky(trial);
        gram.sigma = std::move(trial);
        break;
      }
      catch (const NotPositiveDefinite&)
      {
        jitter = (jitter == 0.0) ? gram_initial_jitter * static_cast<double>(n) : jitter * 10.0;
        if (jitter > gram_max_jitter)
          throw IllConditionedGram("kernel Gram matrix needs jitter above "
                                   + std::to_string(gram_max_jitter));
      }
    }
    gram.jitter_applied = jitter;
    gram.log_det        = 2.0 * gram.chol.diagonal().array().log().sum();

    Eigen::LLT<Matrix> llt;
    llt.compute(gram.sigma);
    gram.inv = llt.solve(Matrix::Identity(n, n));
    gram.inv = 0.5 * (gram.inv + gram.inv.transpose()).eval();
    return gram;
  }

  inline Matrix
  kernel_matrix(const Matrix& y, KernelKind kind, double eta)
  {
    const Eigen::Index n = y.cols();
    Matrix raw(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
      raw(i, i) = 1.0;
      for (Eigen::Index j = i + 1; j < n; ++j)
      {
        double v  = kernel_value(kind, (y.col(i) - y.col(j)).norm(), eta);
        raw(i, j) = v;
        raw(j, i) = v;
      }
    }
    return raw;
  }

  /// Gram matrix of the columns of y; throws IllConditionedGram when the
  /// required jitter exceeds gram_max_jitter.
  inline KernelGram
  build_gram(const Matrix& y, const KernelSpec& spec)
  {
    require_dims(y.cols() >= 1, "build_gram: no poses");
    double eta = y.cols() == 1 && !spec.eta ? 1.0 : resolve_eta(y, spec);
    return factor_gram(kernel_matrix(y, spec.kind, eta), eta);
  }
}

#pragma once

#include "distributions.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

namespace bcdl
{
  /// Paired samples, one column per sample: x is M_x x N, y is M_y x N.
  struct Dataset
  {
    Matrix x;
    Matrix y;
    bool angles_in_degrees = true;

    Eigen::Index n() const noexcept { return x.cols(); }
    Eigen::Index m_x() const noexcept { return x.rows(); }
    Eigen::Index m_y() const noexcept { return y.rows(); }

    void
    validate() const
    {
      if (x.cols() != y.cols())
        throw DimensionMismatch("dataset: x has " + std::to_string(x.cols())
                                + " samples but y has " + std::to_string(y.cols()));
      if (x.cols() < 1)
        throw DimensionMismatch("dataset: no samples");
      if (!x.allFinite() || !y.allFinite())
        throw InvalidArgument("dataset: non-finite entries");
    }
  };

  /// Gamma shape/rate pairs for the four precisions.
  struct HyperParams
  {
    double a_s  = 1e-6, b_s  = 1e-6;
    double a_xy = 1e-6, b_xy = 1e-6;
    double a_x  = 1e-6, b_x  = 1e-6;
    double a_y  = 1e-6, b_y  = 1e-6;

    static HyperParams
    uniform(double v)
    {
      return HyperParams{v, v, v, v, v, v, v, v};
    }

    void
    validate() const
    {
      for (double v : {a_s, b_s, a_xy, b_xy, a_x, b_x, a_y, b_y})
        if (!(v > 0.0) || !std::isfinite(v))
          throw InvalidArgument("hyper-parameters must be positive and finite");
    }
  };

  /// One full assignment of the latent variables.
  ///
  /// z and s are K x N (column i is the code of sample i), w is N x K
  /// (column k is the logistic weight vector of atom k), dx and dy hold
  /// one atom per column.
  struct LatentState
  {
    IntMatrix z;
    Matrix s;
    Matrix w;
    Matrix dx;
    Matrix dy;
    double gamma_s  = 1.0;
    double gamma_xy = 1.0;
    double gamma_x  = 1.0;
    double gamma_y  = 1.0;

    Eigen::Index dict_size() const noexcept { return z.rows(); }
    Eigen::Index n() const noexcept { return z.cols(); }

    void
    validate(Eigen::Index n, Eigen::Index m_x, Eigen::Index m_y) const
    {
      const Eigen::Index k = z.rows();
      if (k < 1)
        throw DimensionMismatch("latent state: empty dictionary");
      if (z.cols() != n || s.rows() != k || s.cols() != n || w.rows() != n
          || w.cols() != k || dx.rows() != m_x || dx.cols() != k || dy.rows() != m_y
          || dy.cols() != k)
        throw DimensionMismatch("latent state: inconsistent dimensions");
      if (!((z.array() == 1) || (z.array() == -1)).all())
        throw InvalidArgument("latent state: z entries must be -1 or +1");
      for (double g : {gamma_s, gamma_xy, gamma_x, gamma_y})
        if (!(g > 0.0) || !std::isfinite(g))
          throw InvalidArgument("latent state: precisions must be positive");
      if (!s.allFinite() || !w.allFinite() || !dx.allFinite() || !dy.allFinite())
        throw InvalidArgument("latent state: non-finite entries");
    }
  };

  namespace detail
  {
    template <typename A, typename B>
    bool
    same_matrix(const A& a, const B& b)
    {
      return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
    }
  }

  /// Bitwise equality of two states.
  inline bool
  identical(const LatentState& a, const LatentState& b)
  {
    return detail::same_matrix(a.z, b.z) && detail::same_matrix(a.s, b.s)
           && detail::same_matrix(a.w, b.w) && detail::same_matrix(a.dx, b.dx)
           && detail::same_matrix(a.dy, b.dy) && a.gamma_s == b.gamma_s
           && a.gamma_xy == b.gamma_xy && a.gamma_x == b.gamma_x && a.gamma_y == b.gamma_y;
  }

  struct ModelConfig
  {
    Eigen::Index dict_size = 64;
    HyperParams hyper;
    KernelSpec kernel;

    void
    validate() const
    {
      if (dict_size < 1)
        throw InvalidArgument("dictionary size must be at least 1");
      hyper.validate();
      kernel.validate();
    }
  };

  /// alpha_k = ((z_k + 1) / 2) s_k
  inline Vector
  sparse_code(const IntVector& z_col, const Vector& s_col)
  {
    require_dims(z_col.size() == s_col.size(), "sparse_code: length mismatch");
    Vector a(s_col.size());
    for (Eigen::Index k = 0; k < a.size(); ++k)
      a(k) = z_col(k) > 0 ? s_col(k) : 0.0;
    return a;
  }

  /// Code matrix A (K x N).
  inline Matrix
  sparse_codes(const IntMatrix& z, const Matrix& s)
  {
    require_dims(z.rows() == s.rows() && z.cols() == s.cols(),
                 "sparse_codes: z and s shapes differ");
    return (z.array() > 0).select(s, 0.0);
  }

  inline Matrix
  reconstruct(const Matrix& d, const IntMatrix& z, const Matrix& s)
  {
    require_dims(d.cols() == z.rows(), "reconstruct: dictionary/code size mismatch");
    return d * sparse_codes(z, s);
  }

  /// Joint log density split by factor group.
  struct LogDensityTerms
  {
    double w_prior        = 0.0;
    double z_logistic     = 0.0;
    double s_prior        = 0.0;
    double gamma_s_prior  = 0.0;
    double x_likelihood   = 0.0;
    double y_likelihood   = 0.0;
    double gamma_xy_prior = 0.0;
    double dx_prior       = 0.0;
    double gamma_x_prior  = 0.0;
    double dy_prior       = 0.0;
    double gamma_y_prior  = 0.0;

    double
    total() const noexcept
    {
      return w_prior + z_logistic + s_prior + gamma_s_prior + x_likelihood + y_likelihood
             + gamma_xy_prior + dx_prior + gamma_x_prior + dy_prior + gamma_y_prior;
    }
  };

  namespace detail
  {
    /// Sum of log N(entry; 0, 1/precision) over all entries of m.
    inline double
    iid_normal_log_density(const Matrix& m, double precision)
    {
      double count = static_cast<double>(m.size());
      return 0.5 * count * (std::log(precision) - log_two_pi)
             - 0.5 * precision * m.squaredNorm();
    }
  }

  inline LogDensityTerms
  joint_log_density_terms(const LatentState& state, const Dataset& data,
                          const HyperParams& hyper, const KernelGram& gram)
  {
    const Eigen::Index n = data.n();
    const Eigen::Index k = state.dict_size();
    state.validate(n, data.m_x(), data.m_y());
    require_dims(gram.size() == n, "joint_log_density: Gram size differs from N");

    LogDensityTerms t;

    // W columns share the Gram covariance.
    Matrix u = gram.chol.triangularView<Eigen::Lower>().solve(state.w);
    t.w_prior = -0.5 * static_cast<double>(k)
                    * (static_cast<double>(n) * log_two_pi + gram.log_det)
                - 0.5 * u.squaredNorm();

    for (Eigen::Index kk = 0; kk < k; ++kk)
      for (Eigen::Index i = 0; i < n; ++i)
        t.z_logistic += log_sigmoid(static_cast<double>(state.z(kk, i)) * state.w(i, kk));

    t.s_prior       = detail::iid_normal_log_density(state.s, state.gamma_s);
    t.gamma_s_prior = gamma_log_density(state.gamma_s, hyper.a_s, hyper.b_s);

    Matrix a = sparse_codes(state.z, state.s);
    t.x_likelihood   = detail::iid_normal_log_density(data.x - state.dx * a, state.gamma_xy);
    t.y_likelihood   = detail::iid_normal_log_density(data.y - state.dy * a, state.gamma_xy);
    t.gamma_xy_prior = gamma_log_density(state.gamma_xy, hyper.a_xy, hyper.b_xy);

    t.dx_prior      = detail::iid_normal_log_density(state.dx, state.gamma_x);
    t.gamma_x_prior = gamma_log_density(state.gamma_x, hyper.a_x, hyper.b_x);
    t.dy_prior      = detail::iid_normal_log_density(state.dy, state.gamma_y);
    t.gamma_y_prior = gamma_log_density(state.gamma_y, hyper.a_y, hyper.b_y);
    return t;
  }

  /// Log of the full joint p(X, Y, Z, S, W, D^x, D^y, precisions | Sigma_w).
  inline double
  joint_log_density(const LatentState& state, const Dataset& data, const ModelConfig& cfg,
                    const KernelGram& gram)
  {
    return joint_log_density_terms(state, data, cfg.hyper, gram).total();
  }

  /// Precisions to hold fixed during generative sampling instead of drawing
  /// them from their Gamma priors.
  struct PrecisionOverrides
  {
    std::optional<double> gamma_s;
    std::optional<double> gamma_xy;
    std::optional<double> gamma_x;
    std::optional<double> gamma_y;
  };

  /// Draws (Z, S, W, D^x, D^y, precisions) from the prior given Sigma_w.
  /// A fixed_w, when given, replaces the W draw.
  inline LatentState
  sample_latent_prior(const ModelConfig& cfg, const KernelGram& gram, Eigen::Index m_x,
                      Eigen::Index m_y, const PrecisionOverrides& fixed,
                      const std::optional<Matrix>& fixed_w, RngStream& rng)
  {
    cfg.validate();
    const Eigen::Index n = gram.size();
    const Eigen::Index k = cfg.dict_size;
    const HyperParams& h = cfg.hyper;

    LatentState st;
    st.gamma_s  = fixed.gamma_s ? *fixed.gamma_s : sample_gamma(h.a_s, h.b_s, rng);
    st.gamma_xy = fixed.gamma_xy ? *fixed.gamma_xy : sample_gamma(h.a_xy, h.b_xy, rng);
    st.gamma_x  = fixed.gamma_x ? *fixed.gamma_x : sample_gamma(h.a_x, h.b_x, rng);
    st.gamma_y  = fixed.gamma_y ? *fixed.gamma_y : sample_gamma(h.a_y, h.b_y, rng);

    st.dx.resize(m_x, k);
    for (Eigen::Index c = 0; c < k; ++c)
      for (Eigen::Index r = 0; r < m_x; ++r)
        st.dx(r, c) = sample_normal(0.0, st.gamma_x, rng);
    st.dy.resize(m_y, k);
    for (Eigen::Index c = 0; c < k; ++c)
      for (Eigen::Index r = 0; r < m_y; ++r)
        st.dy(r, c) = sample_normal(0.0, st.gamma_y, rng);

    if (fixed_w)
    {
      require_dims(fixed_w->rows() == n && fixed_w->cols() == k,
                   "sample_latent_prior: fixed W has wrong shape");
      st.w = *fixed_w;
    }
    else
    {
      st.w.resize(n, k);
      const Vector zero = Vector::Zero(n);
      for (Eigen::Index c = 0; c < k; ++c)
        st.w.col(c) = sample_mvn(zero, gram.chol, rng);
    }

    st.z.resize(k, n);
    st.s.resize(k, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < k; ++c)
      {
        st.z(c, i) = sample_bernoulli_pm1(sigmoid(st.w(i, c)), rng);
        st.s(c, i) = sample_normal(0.0, st.gamma_s, rng);
      }
    return st;
  }

  /// Draws X and Y from the Gaussian likelihood given the latent state.
  inline Dataset
  sample_observations(const LatentState& st, RngStream& rng)
  {
    Matrix a = sparse_codes(st.z, st.s);
    Dataset data;
    data.x = st.dx * a;
    data.y = st.dy * a;
    const double sd = 1.0 / std::sqrt(st.gamma_xy);
    for (Eigen::Index i = 0; i < data.x.size(); ++i)
      data.x.data()[i] += sd * rng.normal();
    for (Eigen::Index i = 0; i < data.y.size(); ++i)
      data.y.data()[i] += sd * rng.normal();
    return data;
  }

  struct GenerativeOptions
  {
    PrecisionOverrides fixed;
    /// Poses that define Sigma_w for the W draw; when empty a surrogate pose
    /// set is drawn from a standard normal.
    std::optional<Matrix> kernel_poses;
    std::optional<Matrix> fixed_w;
  };

  struct AncestralDraw
  {
    Dataset data;
    LatentState state;
    /// Gram used to draw W (from the kernel poses, not from the generated y).
    KernelGram gram;
  };

  /// Runs the full generative cascade: precisions, dictionaries, W, Z, S, X, Y.
  inline AncestralDraw
  ancestral_sample(const ModelConfig& cfg, Eigen::Index n, Eigen::Index m_x, Eigen::Index m_y,
                   const GenerativeOptions& opts, RngStream& rng)
  {
    if (n < 1 || m_x < 1 || m_y < 1)
      throw InvalidArgument("ancestral_sample: dimensions must be positive");

    Matrix poses;
    if (opts.kernel_poses)
    {
      require_dims(opts.kernel_poses->cols() == n,
                   "ancestral_sample: kernel poses must have n columns");
      poses = *opts.kernel_poses;
    }
    else
    {
      poses.resize(m_y, n);
      for (Eigen::Index i = 0; i < poses.size(); ++i)
        poses.data()[i] = rng.normal();
    }

    AncestralDraw out;
    out.gram  = build_gram(poses, cfg.kernel);
    out.state = sample_latent_prior(cfg, out.gram, m_x, m_y, opts.fixed, opts.fixed_w, rng);
    out.data  = sample_observations(out.state, rng);
    return out;
  }
}

#pragma once

#include "distributions.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace bcdl
{
  struct SamplerConfig
  {
    std::size_t burn_in = 700;
    /// Post-burn-in sweeps; every thin-th one is retained.
    std::size_t collect = 500;
    std::size_t thin    = 1;
    std::uint64_t seed  = 0;

    void
    validate() const
    {
      if (collect < 1)
        throw InvalidArgument("sampler: collect must be at least 1");
      if (thin < 1)
        throw InvalidArgument("sampler: thin must be at least 1");
      if (collect < thin)
        throw InvalidArgument("sampler: collect must be at least thin");
    }

    std::size_t retained() const noexcept { return collect / thin; }
  };

  struct PosteriorSamples
  {
    std::vector<LatentState> states;
    /// MH acceptance per atom over the post-burn-in sweeps.
    std::vector<double> atom_accept_rate;
    double accept_rate = 0.0;
    /// One entry per sweep, burn-in included.
    std::vector<double> log_density_trace;
    std::vector<double> accept_trace;
    double eta            = 0.0;
    double jitter_applied = 0.0;
  };

  /// Variational parameters of the exponential bound on the logistic factors.
  struct VariationalBound
  {
    Vector lambdas;
    Vector g_values;
  };

  struct WProposal
  {
    Vector mean;
    /// Lambda_k = [lambda_i z_ki]; mean = Sigma_w Lambda_k.
    Vector signed_lambda;
    VariationalBound bound;
  };

  struct MhResult
  {
    Vector w;
    bool accepted = false;
    double log_ratio = 0.0;
  };

  struct GaussianParams
  {
    double mean      = 0.0;
    double precision = 1.0;
  };

  struct IsotropicGaussian
  {
    Vector mean;
    double precision = 1.0;
  };

  struct GammaParams
  {
    double shape = 1.0;
    double rate  = 1.0;
  };

  enum class DictSide
  {
    x,
    y
  };

  // ---------------------------------------------------------------------
  // Logistic bound

  /// g(lambda) = -lambda ln(lambda) - (1 - lambda) ln(1 - lambda), with 0 ln 0 = 0.
  inline double
  binary_entropy(double lambda) noexcept
  {
    auto xlogx = [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; };
    return -xlogx(lambda) - xlogx(1.0 - lambda);
  }

  /// log of exp(lambda * zw - g(lambda)), an upper bound on log sigmoid(zw)
  /// for every lambda in (0, 1).
  inline double
  logistic_bound_log(double lambda, double zw) noexcept
  {
    return lambda * zw - binary_entropy(lambda);
  }

  /// lambda at which the bound touches log sigmoid(zw): the stationary point
  /// of lambda * zw - g(lambda) is lambda = sigmoid(-zw).
  inline double
  tight_lambda(double zw) noexcept
  {
    return sigmoid(-zw);
  }

  inline VariationalBound
  fit_bound(const IntMatrix& z, Eigen::Index k, const Vector& w)
  {
    VariationalBound b;
    b.lambdas.resize(w.size());
    b.g_values.resize(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i)
    {
      b.lambdas(i)  = tight_lambda(static_cast<double>(z(k, i)) * w(i));
      b.g_values(i) = binary_entropy(b.lambdas(i));
    }
    return b;
  }

  // ---------------------------------------------------------------------
  // Conditional kernels shared by the naive and incremental sweep paths.
  //
  // rx and ry are residuals of sample i with atom k removed:
  // x_i - sum_{k' != k} d^x_{k'} alpha_{k'i}.

  namespace detail
  {
    template <typename Res, typename Atom>
    double
    slab_fit_gain(const Res& r, const Atom& d, double s)
    {
      // ||r||^2 - ||r - d s||^2
      return 2.0 * s * d.dot(r) - s * s * d.squaredNorm();
    }
  }

  /// log P(z=+1 | -) - log P(z=-1 | -).
  template <typename Rx, typename Ry, typename Dx, typename Dy>
  double
  z_log_odds(const Rx& rx, const Ry& ry, const Dx& dxk, const Dy& dyk, double s,
             double gamma_xy, double w)
  {
    double lik = 0.5 * gamma_xy * (detail::slab_fit_gain(rx, dxk, s) + detail::slab_fit_gain(ry, dyk, s));
    // log sigmoid(w) - log sigmoid(-w) = w
    return lik + w;
  }

  /// Default full conditionals. Policies with the same static interface can
  /// be substituted in gibbs_sweep.
  struct StandardConditionals
  {
    /// Conditional of an active slab weight s_ki.
    template <typename Rx, typename Ry, typename Dx, typename Dy>
    static GaussianParams
    slab(const Rx& rx, const Ry& ry, const Dx& dxk, const Dy& dyk, double gamma_s,
         double gamma_xy)
    {
      double precision = gamma_s + gamma_xy * (dxk.squaredNorm() + dyk.squaredNorm());
      double mean      = gamma_xy * (dxk.dot(rx) + dyk.dot(ry)) / precision;
      return {mean, precision};
    }
  };

  /// Conditional of atom d_k given sum_i alpha_ki r_i and sum_i alpha_ki^2.
  inline IsotropicGaussian
  dict_conditional_from_stats(const Vector& sum_ar, double sum_a2, double gamma_prior,
                              double gamma_xy)
  {
    double precision = gamma_prior + gamma_xy * sum_a2;
    return {gamma_xy * sum_ar / precision, precision};
  }

  // ---------------------------------------------------------------------
  // Naive per-entry conditionals (residuals recomputed from scratch).

  namespace detail
  {
    inline void
    check_indices(const LatentState& st, Eigen::Index k, Eigen::Index i)
    {
      if (k < 0 || k >= st.dict_size() || i < 0 || i >= st.n())
        throw InvalidArgument("conditional: index out of range");
    }

    /// Residual of column i of `obs` with every active atom except k removed.
    inline Vector
    residual_without(const Matrix& obs, const Matrix& d, const LatentState& st,
                     Eigen::Index k, Eigen::Index i)
    {
      Vector r = obs.col(i);
      for (Eigen::Index kk = 0; kk < st.dict_size(); ++kk)
        if (kk != k && st.z(kk, i) > 0)
          r -= d.col(kk) * st.s(kk, i);
      return r;
    }
  }

  /// theta = P(z_ki = +1 | everything else).
  inline double
  z_activation_probability(const LatentState& st, const Dataset& data, Eigen::Index k,
                           Eigen::Index i)
  {
    detail::check_indices(st, k, i);
    Vector rx = detail::residual_without(data.x, st.dx, st, k, i);
    Vector ry = detail::residual_without(data.y, st.dy, st, k, i);
    return sigmoid(z_log_odds(rx, ry, st.dx.col(k), st.dy.col(k), st.s(k, i), st.gamma_xy,
                              st.w(i, k)));
  }

  inline int
  cond_sample_z(const LatentState& st, const Dataset& data, Eigen::Index k, Eigen::Index i,
                RngStream& rng)
  {
    return sample_bernoulli_pm1(z_activation_probability(st, data, k, i), rng);
  }

  /// Conditional of s_ki: the N(0, 1/gamma_s) prior when z_ki = -1.
  template <typename Conditionals = StandardConditionals>
  GaussianParams
  s_conditional(const LatentState& st, const Dataset& data, Eigen::Index k, Eigen::Index i)
  {
    detail::check_indices(st, k, i);
    if (st.z(k, i) < 0)
      return {0.0, st.gamma_s};
    Vector rx = detail::residual_without(data.x, st.dx, st, k, i);
    Vector ry = detail::residual_without(data.y, st.dy, st, k, i);
    return Conditionals::slab(rx, ry, st.dx.col(k), st.dy.col(k), st.gamma_s, st.gamma_xy);
  }

  template <typename Conditionals = StandardConditionals>
  double
  cond_sample_s(const LatentState& st, const Dataset& data, Eigen::Index k, Eigen::Index i,
                RngStream& rng)
  {
    GaussianParams p = s_conditional<Conditionals>(st, data, k, i);
    return sample_normal(p.mean, p.precision, rng);
  }

  /// Conditional of dictionary atom k on one side.
  inline IsotropicGaussian
  dict_conditional(const LatentState& st, const Dataset& data, DictSide side, Eigen::Index k)
  {
    if (k < 0 || k >= st.dict_size())
      throw InvalidArgument("dict_conditional: atom index out of range");
    const Matrix& obs = side == DictSide::x ? data.x : data.y;
    const Matrix& d   = side == DictSide::x ? st.dx : st.dy;
    Vector sum_ar     = Vector::Zero(obs.rows());
    double sum_a2     = 0.0;
    for (Eigen::Index i = 0; i < st.n(); ++i)
    {
      if (st.z(k, i) < 0)
        continue;
      double a = st.s(k, i);
      sum_ar += a * detail::residual_without(obs, d, st, k, i);
      sum_a2 += a * a;
    }
    double gamma_prior = side == DictSide::x ? st.gamma_x : st.gamma_y;
    return dict_conditional_from_stats(sum_ar, sum_a2, gamma_prior, st.gamma_xy);
  }

  inline Vector
  cond_sample_dict(const LatentState& st, const Dataset& data, DictSide side, Eigen::Index k,
                   RngStream& rng)
  {
    IsotropicGaussian c = dict_conditional(st, data, side, k);
    Vector out(c.mean.size());
    for (Eigen::Index j = 0; j < out.size(); ++j)
      out(j) = sample_normal(c.mean(j), c.precision, rng);
    return out;
  }

  inline GammaParams
  gamma_s_conditional(const LatentState& st, const HyperParams& h)
  {
    return {h.a_s + 0.5 * static_cast<double>(st.s.size()),
            h.b_s + 0.5 * st.s.squaredNorm()};
  }

  inline GammaParams
  gamma_xy_conditional(const LatentState& st, const Dataset& data, const HyperParams& h)
  {
    Matrix a = sparse_codes(st.z, st.s);
    double sq = (data.x - st.dx * a).squaredNorm() + (data.y - st.dy * a).squaredNorm();
    return {h.a_xy + 0.5 * static_cast<double>(data.n() * (data.m_x() + data.m_y())),
            h.b_xy + 0.5 * sq};
  }

  inline GammaParams
  gamma_x_conditional(const LatentState& st, const HyperParams& h)
  {
    return {h.a_x + 0.5 * static_cast<double>(st.dx.size()), h.b_x + 0.5 * st.dx.squaredNorm()};
  }

  inline GammaParams
  gamma_y_conditional(const LatentState& st, const HyperParams& h)
  {
    return {h.a_y + 0.5 * static_cast<double>(st.dy.size()), h.b_y + 0.5 * st.dy.squaredNorm()};
  }

  inline double
  cond_sample_gamma_s(const LatentState& st, const HyperParams& h, RngStream& rng)
  {
    GammaParams p = gamma_s_conditional(st, h);
    return sample_gamma(p.shape, p.rate, rng);
  }

  inline double
  cond_sample_gamma_xy(const LatentState& st, const Dataset& data, const HyperParams& h,
                       RngStream& rng)
  {
    GammaParams p = gamma_xy_conditional(st, data, h);
    return sample_gamma(p.shape, p.rate, rng);
  }

  inline double
  cond_sample_gamma_x(const LatentState& st, const HyperParams& h, RngStream& rng)
  {
    GammaParams p = gamma_x_conditional(st, h);
    return sample_gamma(p.shape, p.rate, rng);
  }

  inline double
  cond_sample_gamma_y(const LatentState& st, const HyperParams& h, RngStream& rng)
  {
    GammaParams p = gamma_y_conditional(st, h);
    return sample_gamma(p.shape, p.rate, rng);
  }

  // ---------------------------------------------------------------------
  // W: Metropolis-Hastings with a Gaussian proposal built from the bound.

  namespace detail
  {
    /// Proposal for atom k with the bound fitted at weight vector w.
    inline WProposal
    w_proposal_at(const IntMatrix& z, Eigen::Index k, const Vector& w, const KernelGram& gram)
    {
      const Eigen::Index n = w.size();
      require_dims(gram.size() == n && z.cols() == n, "build_w_proposal: Gram size differs from N");
      WProposal p;
      p.bound = fit_bound(z, k, w);
      p.signed_lambda.resize(n);
      for (Eigen::Index i = 0; i < n; ++i)
        p.signed_lambda(i) = p.bound.lambdas(i) * static_cast<double>(z(k, i));
      p.mean = gram.sigma * p.signed_lambda;
      return p;
    }
  }

  /// Bound fitted at the current w_k; proposal N(Sigma_w Lambda_k, Sigma_w).
  inline WProposal
  build_w_proposal(const LatentState& st, const KernelGram& gram, Eigen::Index k)
  {
    return detail::w_proposal_at(st.z, k, st.w.col(k), gram);
  }

  /// log p_k = sum_i [log sigmoid(z w'_i) - log sigmoid(z w_i)]
  ///           - mu_w^T Sigma_w^{-1} (w' - w)
  inline double
  mh_log_ratio(const LatentState& st, const KernelGram& gram, Eigen::Index k,
               const WProposal& proposal, const Vector& w_prime)
  {
    const Eigen::Index n = st.n();
    double log_p = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
    {
      double z = static_cast<double>(st.z(k, i));
      log_p += log_sigmoid(z * w_prime(i)) - log_sigmoid(z * st.w(i, k));
    }
    Vector delta = w_prime - st.w.col(k);
    log_p -= proposal.mean.dot(gram.inv * delta);
    return log_p;
  }

  /// log Q'(w) - log Q(w), where Q' is the proposal refitted at w'.
  ///
  /// lambda is a function of the current point, so the proposal is not a
  /// fixed independence density and the reverse move must use the bound
  /// refitted at w'. Adding this term to mh_log_ratio gives the
  /// Metropolis-Hastings ratio pi(w') Q'(w) / (pi(w) Q(w')).
  inline double
  mh_reverse_correction(const LatentState& st, const KernelGram& gram, Eigen::Index k,
                        const WProposal& proposal, const Vector& w_prime)
  {
    WProposal back = detail::w_proposal_at(st.z, k, w_prime, gram);
    // Q_v(u) is proportional to exp(-u' S^-1 u / 2 + Lambda_v' u - Lambda_v' S Lambda_v / 2)
    const Vector w = st.w.col(k);
    return (back.signed_lambda - proposal.signed_lambda).dot(w)
           - 0.5 * back.signed_lambda.dot(back.mean)
           + 0.5 * proposal.signed_lambda.dot(proposal.mean);
  }

  inline MhResult
  mh_step_w(const LatentState& st, const KernelGram& gram, Eigen::Index k, RngStream& rng)
  {
    WProposal proposal = build_w_proposal(st, gram, k);
    Vector w_prime     = sample_mvn(proposal.mean, gram.chol, rng);
    double log_p       = mh_log_ratio(st, gram, k, proposal, w_prime);
    log_p += mh_reverse_correction(st, gram, k, proposal, w_prime);
    MhResult res;
    res.log_ratio = log_p;
    res.accepted  = log_p >= 0.0 || std::log(rng.uniform_open()) < log_p;
    res.w         = res.accepted ? std::move(w_prime) : Vector(st.w.col(k));
    return res;
  }

  // ---------------------------------------------------------------------
  // Sweep

  struct SweepDiagnostics
  {
    std::vector<bool> accepted;
    double accept_rate = 0.0;
    double log_density = 0.0;
  };

  /// One Gibbs sweep: W (MH per atom), Z, S, D^x, D^y, gamma_s, gamma_xy,
  /// gamma_x, gamma_y. Residuals X - D A and Y - D A are maintained
  /// incrementally through the Z and S passes; the dictionary pass works from
  /// the code Gram matrix A A^T.
  template <typename Conditionals = StandardConditionals>
  SweepDiagnostics
  gibbs_sweep(LatentState& st, const Dataset& data, const ModelConfig& cfg,
              const KernelGram& gram, RngStream& rng)
  {
    const Eigen::Index n = data.n();
    const Eigen::Index k = st.dict_size();
    const HyperParams& h = cfg.hyper;

    SweepDiagnostics diag;
    diag.accepted.resize(static_cast<std::size_t>(k));
    std::size_t n_accepted = 0;
    for (Eigen::Index kk = 0; kk < k; ++kk)
    {
      MhResult r = mh_step_w(st, gram, kk, rng);
      st.w.col(kk) = r.w;
      diag.accepted[static_cast<std::size_t>(kk)] = r.accepted;
      n_accepted += r.accepted ? 1 : 0;
    }
    diag.accept_rate = static_cast<double>(n_accepted) / static_cast<double>(k);

    Matrix res_x = data.x - reconstruct(st.dx, st.z, st.s);
    Matrix res_y = data.y - reconstruct(st.dy, st.z, st.s);
    Vector rx(data.m_x());
    Vector ry(data.m_y());

    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index kk = 0; kk < k; ++kk)
      {
        double a_old = st.z(kk, i) > 0 ? st.s(kk, i) : 0.0;
        rx           = res_x.col(i) + st.dx.col(kk) * a_old;
        ry           = res_y.col(i) + st.dy.col(kk) * a_old;
        double theta = sigmoid(z_log_odds(rx, ry, st.dx.col(kk), st.dy.col(kk), st.s(kk, i),
                                          st.gamma_xy, st.w(i, kk)));
        st.z(kk, i)  = sample_bernoulli_pm1(theta, rng);
        double a_new = st.z(kk, i) > 0 ? st.s(kk, i) : 0.0;
        res_x.col(i) = rx - st.dx.col(kk) * a_new;
        res_y.col(i) = ry - st.dy.col(kk) * a_new;
      }

    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index kk = 0; kk < k; ++kk)
      {
        if (st.z(kk, i) < 0)
        {
          st.s(kk, i) = sample_normal(0.0, st.gamma_s, rng);
          continue;
        }
        double a_old = st.s(kk, i);
        rx           = res_x.col(i) + st.dx.col(kk) * a_old;
        ry           = res_y.col(i) + st.dy.col(kk) * a_old;
        GaussianParams p = Conditionals::slab(rx, ry, st.dx.col(kk), st.dy.col(kk), st.gamma_s,
                                              st.gamma_xy);
        st.s(kk, i)  = sample_normal(p.mean, p.precision, rng);
        res_x.col(i) = rx - st.dx.col(kk) * st.s(kk, i);
        res_y.col(i) = ry - st.dy.col(kk) * st.s(kk, i);
      }

    Matrix a      = sparse_codes(st.z, st.s);
    Matrix code_g = a * a.transpose();
    auto update_dictionary = [&](Matrix& d, const Matrix& obs, double gamma_prior) {
      Matrix obs_a = obs * a.transpose();
      Vector sum_ar(d.rows());
      for (Eigen::Index kk = 0; kk < k; ++kk)
      {
        sum_ar = obs_a.col(kk);
        for (Eigen::Index other = 0; other < k; ++other)
          if (other != kk)
            sum_ar.noalias() -= d.col(other) * code_g(other, kk);
        IsotropicGaussian c =
          dict_conditional_from_stats(sum_ar, code_g(kk, kk), gamma_prior, st.gamma_xy);
        for (Eigen::Index j = 0; j < d.rows(); ++j)
          d(j, kk) = sample_normal(c.mean(j), c.precision, rng);
      }
    };
    update_dictionary(st.dx, data.x, st.gamma_x);
    update_dictionary(st.dy, data.y, st.gamma_y);

    st.gamma_s = cond_sample_gamma_s(st, h, rng);
    {
      double sq = (data.x - st.dx * a).squaredNorm() + (data.y - st.dy * a).squaredNorm();
      GammaParams p{h.a_xy + 0.5 * static_cast<double>(n * (data.m_x() + data.m_y())),
                    h.b_xy + 0.5 * sq};
      st.gamma_xy = sample_gamma(p.shape, p.rate, rng);
    }
    st.gamma_x = cond_sample_gamma_x(st, h, rng);
    st.gamma_y = cond_sample_gamma_y(st, h, rng);

    diag.log_density = joint_log_density(st, data, cfg, gram);
    return diag;
  }

  /// Same update order as gibbs_sweep, every conditional evaluated by the
  /// naive per-entry functions. Slow; used to check the incremental path.
  inline SweepDiagnostics
  gibbs_sweep_naive(LatentState& st, const Dataset& data, const ModelConfig& cfg,
                    const KernelGram& gram, RngStream& rng)
  {
    const Eigen::Index n = data.n();
    const Eigen::Index k = st.dict_size();
    SweepDiagnostics diag;
    diag.accepted.resize(static_cast<std::size_t>(k));
    std::size_t n_accepted = 0;
    for (Eigen::Index kk = 0; kk < k; ++kk)
    {
      MhResult r = mh_step_w(st, gram, kk, rng);
      st.w.col(kk) = r.w;
      diag.accepted[static_cast<std::size_t>(kk)] = r.accepted;
      n_accepted += r.accepted ? 1 : 0;
    }
    diag.accept_rate = static_cast<double>(n_accepted) / static_cast<double>(k);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index kk = 0; kk < k; ++kk)
        st.z(kk, i) = cond_sample_z(st, data, kk, i, rng);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index kk = 0; kk < k; ++kk)
        st.s(kk, i) = cond_sample_s(st, data, kk, i, rng);
    for (Eigen::Index kk = 0; kk < k; ++kk)
      st.dx.col(kk) = cond_sample_dict(st, data, DictSide::x, kk, rng);
    for (Eigen::Index kk = 0; kk < k; ++kk)
      st.dy.col(kk) = cond_sample_dict(st, data, DictSide::y, kk, rng);
    st.gamma_s  = cond_sample_gamma_s(st, cfg.hyper, rng);
    st.gamma_xy = cond_sample_gamma_xy(st, data, cfg.hyper, rng);
    st.gamma_x  = cond_sample_gamma_x(st, cfg.hyper, rng);
    st.gamma_y  = cond_sample_gamma_y(st, cfg.hyper, rng);
    diag.log_density = joint_log_density(st, data, cfg, gram);
    return diag;
  }

  /// Random start: unit precisions, N(0, 1) dictionaries and slab weights,
  /// fair-coin z, W columns from N(0, Sigma_w).
  inline LatentState
  initial_state(const Dataset& data, Eigen::Index dict_size, const KernelGram& gram,
                RngStream& rng)
  {
    const Eigen::Index n = data.n();
    LatentState st;
    st.dx.resize(data.m_x(), dict_size);
    st.dy.resize(data.m_y(), dict_size);
    for (Eigen::Index i = 0; i < st.dx.size(); ++i)
      st.dx.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < st.dy.size(); ++i)
      st.dy.data()[i] = rng.normal();
    st.s.resize(dict_size, n);
    for (Eigen::Index i = 0; i < st.s.size(); ++i)
      st.s.data()[i] = rng.normal();
    st.z.resize(dict_size, n);
    for (Eigen::Index i = 0; i < st.z.size(); ++i)
      st.z.data()[i] = sample_bernoulli_pm1(0.5, rng);
    st.w.resize(n, dict_size);
    const Vector zero = Vector::Zero(n);
    for (Eigen::Index kk = 0; kk < dict_size; ++kk)
      st.w.col(kk) = sample_mvn(zero, gram.chol, rng);
    return st;
  }

  /// Runs burn_in + collect sweeps from a random start against a prebuilt Gram.
  template <typename Conditionals = StandardConditionals>
  PosteriorSamples
  train_with_gram(const Dataset& data, const ModelConfig& cfg, const SamplerConfig& scfg,
                  const KernelGram& gram)
  {
    data.validate();
    cfg.validate();
    scfg.validate();
    require_dims(gram.size() == data.n(), "train: Gram size differs from N");

    RngStream rng(scfg.seed);
    RngStream init_rng = rng.split(0);
    RngStream sweep_rng = rng.split(1);
    LatentState st = initial_state(data, cfg.dict_size, gram, init_rng);

    PosteriorSamples out;
    out.eta            = gram.eta;
    out.jitter_applied = gram.jitter_applied;
    out.atom_accept_rate.assign(static_cast<std::size_t>(cfg.dict_size), 0.0);
    const std::size_t total = scfg.burn_in + scfg.collect;
    out.log_density_trace.reserve(total);
    out.accept_trace.reserve(total);
    out.states.reserve(scfg.retained());

    for (std::size_t sweep = 0; sweep < total; ++sweep)
    {
      SweepDiagnostics d = gibbs_sweep<Conditionals>(st, data, cfg, gram, sweep_rng);
      out.log_density_trace.push_back(d.log_density);
      out.accept_trace.push_back(d.accept_rate);
      if (sweep < scfg.burn_in)
        continue;
      for (std::size_t kk = 0; kk < d.accepted.size(); ++kk)
        out.atom_accept_rate[kk] += d.accepted[kk] ? 1.0 : 0.0;
      std::size_t post = sweep - scfg.burn_in + 1;
      if (post % scfg.thin == 0 && out.states.size() < scfg.retained())
        out.states.push_back(st);
    }

    double acc_total = 0.0;
    for (double& r : out.atom_accept_rate)
    {
      r /= static_cast<double>(scfg.collect);
      acc_total += r;
    }
    out.accept_rate = acc_total / static_cast<double>(out.atom_accept_rate.size());
    return out;
  }

  /// Builds Sigma_w from the training poses and runs the chain.
  inline PosteriorSamples
  train(const Dataset& data, const ModelConfig& cfg, const SamplerConfig& scfg)
  {
    data.validate();
    cfg.validate();
    KernelGram gram = build_gram(data.y, cfg.kernel);
    return train_with_gram(data, cfg, scfg, gram);
  }
}

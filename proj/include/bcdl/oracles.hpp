#pragma once

// Brute-force references for the samplers. Everything here evaluates the
// joint density directly; none of it reuses the conditional formulas in
// gibbs.hpp. geweke_run drives gibbs_sweep only as the system under test.

#include "distributions.hpp"
#include "errors.hpp"
#include "gibbs.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace bcdl
{
  struct GridSpec
  {
    double lo = -1.0;
    double hi = 1.0;
    std::size_t points = 2001;

    void
    validate() const
    {
      if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw InvalidArgument("grid: need lo < hi");
      if (points < 64)
        throw InvalidArgument("grid: need at least 64 points");
    }
  };

  /// Density tabulated on a uniform grid, normalized by the trapezoid rule.
  struct GridTable
  {
    std::vector<double> x;
    std::vector<double> density;
    std::vector<double> cumulative;

    double
    cdf(double v) const
    {
      if (v <= x.front())
        return 0.0;
      if (v >= x.back())
        return 1.0;
      double h   = x[1] - x[0];
      auto idx   = static_cast<std::size_t>((v - x.front()) / h);
      idx        = std::min(idx, x.size() - 2);
      double t   = v - x[idx];
      // exact integral of the linear interpolant over [x_idx, v]
      double slope = (density[idx + 1] - density[idx]) / h;
      return cumulative[idx] + density[idx] * t + 0.5 * slope * t * t;
    }

    double
    integral() const
    {
      return cumulative.back();
    }
  };

  /// Tabulates exp(log_density) on the grid and normalizes it.
  template <typename LogDensity>
  GridTable
  grid_conditional(LogDensity&& log_density, const GridSpec& grid)
  {
    grid.validate();
    GridTable t;
    t.x.resize(grid.points);
    std::vector<double> logs(grid.points);
    double h = (grid.hi - grid.lo) / static_cast<double>(grid.points - 1);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.points; ++g)
    {
      t.x[g]  = grid.lo + h * static_cast<double>(g);
      logs[g] = log_density(t.x[g]);
      peak    = std::max(peak, logs[g]);
    }
    if (!std::isfinite(peak))
      throw NumericalError("grid_conditional: density vanishes on the grid");

    t.density.resize(grid.points);
    for (std::size_t g = 0; g < grid.points; ++g)
      t.density[g] = std::exp(logs[g] - peak);

    t.cumulative.assign(grid.points, 0.0);
    for (std::size_t g = 1; g < grid.points; ++g)
      t.cumulative[g] = t.cumulative[g - 1] + 0.5 * h * (t.density[g - 1] + t.density[g]);
    double total = t.cumulative.back();
    for (std::size_t g = 0; g < grid.points; ++g)
    {
      t.density[g] /= total;
      t.cumulative[g] /= total;
    }
    return t;
  }

  enum class ScalarKind
  {
    s,
    dx,
    dy,
    w,
    gamma_s,
    gamma_xy,
    gamma_x,
    gamma_y
  };

  /// Selects one scalar latent variable. row/col index the underlying matrix.
  struct ScalarVariable
  {
    ScalarKind kind = ScalarKind::s;
    Eigen::Index row = 0;
    Eigen::Index col = 0;

    double&
    ref(LatentState& st) const
    {
      switch (kind)
      {
        case ScalarKind::s:        return st.s(row, col);
        case ScalarKind::dx:       return st.dx(row, col);
        case ScalarKind::dy:       return st.dy(row, col);
        case ScalarKind::w:        return st.w(row, col);
        case ScalarKind::gamma_s:  return st.gamma_s;
        case ScalarKind::gamma_xy: return st.gamma_xy;
        case ScalarKind::gamma_x:  return st.gamma_x;
        case ScalarKind::gamma_y:  return st.gamma_y;
      }
      throw InvalidArgument("unknown scalar variable");
    }

    double get(const LatentState& st) const { return ref(const_cast<LatentState&>(st)); }
    void set(LatentState& st, double v) const { ref(st) = v; }

    std::string
    name() const
    {
      static const char* names[] = {"s", "dx", "dy", "w", "gamma_s", "gamma_xy", "gamma_x",
                                    "gamma_y"};
      std::string out = names[static_cast<int>(kind)];
      if (kind <= ScalarKind::w)
        out += "(" + std::to_string(row) + "," + std::to_string(col) + ")";
      return out;
    }
  };

  /// Conditional density of one scalar variable from the joint, all other
  /// variables held at their values in `state`.
  inline GridTable
  grid_conditional(const LatentState& state, const Dataset& data, const ModelConfig& cfg,
                   const KernelGram& gram, const ScalarVariable& var, const GridSpec& grid)
  {
    LatentState probe = state;
    return grid_conditional(
      [&](double v) {
        var.set(probe, v);
        return joint_log_density(probe, data, cfg, gram);
      },
      grid);
  }

  /// P(z_ki = +1 | rest) by evaluating the joint at both values.
  inline double
  enumerate_binary_conditional(const LatentState& state, const Dataset& data,
                               const ModelConfig& cfg, const KernelGram& gram, Eigen::Index k,
                               Eigen::Index i)
  {
    LatentState probe = state;
    probe.z(k, i)   = +1;
    double log_plus = joint_log_density(probe, data, cfg, gram);
    probe.z(k, i)    = -1;
    double log_minus = joint_log_density(probe, data, cfg, gram);
    return std::exp(log_plus - log_sum_exp(log_plus, log_minus));
  }

  /// Two-point version for any log density over {-1, +1}.
  template <typename LogDensity>
  double
  enumerate_binary_conditional(LogDensity&& log_density)
  {
    double lp = log_density(+1);
    double lm = log_density(-1);
    return std::exp(lp - log_sum_exp(lp, lm));
  }

  /// One-sample Kolmogorov-Smirnov statistic against a tabulated CDF.
  inline double
  ks_statistic(std::vector<double> samples, const GridTable& table)
  {
    if (samples.empty())
      throw InvalidArgument("ks_statistic: no samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
    {
      double f = table.cdf(samples[i]);
      d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
  }

  // ---------------------------------------------------------------------
  // Conditional-oracle suite

  namespace detail
  {
    /// Mean and precision of a slice that is Gaussian in v, read off the
    /// joint at three points (the log density is exactly quadratic).
    template <typename LogDensity>
    GaussianParams
    quadratic_slice(LogDensity&& f, double v0)
    {
      double lm = f(v0 - 1.0), l0 = f(v0), lp = f(v0 + 1.0);
      double curvature = lm - 2.0 * l0 + lp;
      if (!(curvature < 0.0))
        throw NumericalError("oracle: slice is not concave");
      double precision = -curvature;
      double slope     = 0.5 * (lp - lm);
      return {v0 + slope / precision, precision};
    }

    /// Shape and rate of a slice of the form (a - 1) ln v - b v + c.
    template <typename LogDensity>
    GammaParams
    gamma_slice(LogDensity&& f, double scale)
    {
      double v[3] = {scale, 2.0 * scale, 4.0 * scale};
      Eigen::Matrix3d m;
      Eigen::Vector3d rhs;
      for (int r = 0; r < 3; ++r)
      {
        m(r, 0) = std::log(v[r]);
        m(r, 1) = -v[r];
        m(r, 2) = 1.0;
        rhs(r)  = f(v[r]);
      }
      Eigen::Vector3d sol = m.fullPivLu().solve(rhs);
      return {sol(0) + 1.0, sol(1)};
    }
  }

  struct OracleSuiteConfig
  {
    Eigen::Index n = 4;
    Eigen::Index k = 2;
    Eigen::Index m = 2;
    std::size_t draws  = 10000;
    std::size_t points = 2001;
    double ks_threshold    = 0.05;
    double theta_tolerance = 1e-10;
    std::uint64_t seed = 11;
  };

  struct OracleCheck
  {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool passed      = false;
  };

  /// Checks every continuous conditional sampler against the grid-normalized
  /// joint (KS statistic) and every z activation probability against
  /// two-point enumeration (relative error).
  inline std::vector<OracleCheck>
  conditional_oracle_suite(const OracleSuiteConfig& ocfg)
  {
    ModelConfig cfg;
    cfg.dict_size = ocfg.k;
    RngStream root(ocfg.seed);
    RngStream gen_rng = root.split(0);
    GenerativeOptions opts;
    opts.fixed = PrecisionOverrides{1.0, 4.0, 1.0, 1.0};
    AncestralDraw draw = ancestral_sample(cfg, ocfg.n, ocfg.m, ocfg.m, opts, gen_rng);
    // Inference conditions on the Gram of the observed poses.
    KernelGram gram = build_gram(draw.data.y, cfg.kernel);
    const Dataset& data = draw.data;
    LatentState st      = draw.state;
    // Make sure both branches of the slab conditional are exercised.
    st.z(0, 0) = +1;
    st.z(ocfg.k - 1, ocfg.n - 1) = -1;

    std::vector<OracleCheck> out;
    RngStream draw_rng = root.split(1);

    auto run_ks = [&](const ScalarVariable& var, GridSpec grid, auto&& sampler) {
      GridTable table = grid_conditional(st, data, cfg, gram, var, grid);
      std::vector<double> xs(ocfg.draws);
      for (double& v : xs)
        v = sampler();
      double d = ks_statistic(std::move(xs), table);
      out.push_back({"ks " + var.name(), d, ocfg.ks_threshold, d < ocfg.ks_threshold});
    };
    auto slice = [&](const ScalarVariable& var) {
      return [&, var](double v) {
        LatentState probe = st;
        var.set(probe, v);
        return joint_log_density(probe, data, cfg, gram);
      };
    };
    auto gaussian_grid = [&](const ScalarVariable& var) {
      GaussianParams p = detail::quadratic_slice(slice(var), var.get(st));
      double sd = 1.0 / std::sqrt(p.precision);
      return GridSpec{p.mean - 8.0 * sd, p.mean + 8.0 * sd, ocfg.points};
    };
    auto gamma_grid = [&](const ScalarVariable& var) {
      GammaParams p = detail::gamma_slice(slice(var), var.get(st));
      double mean = p.shape / p.rate;
      double sd   = std::sqrt(p.shape) / p.rate;
      return GridSpec{std::max(mean - 8.0 * sd, 1e-9 * mean), mean + 8.0 * sd, ocfg.points};
    };

    for (Eigen::Index i = 0; i < ocfg.n; ++i)
      for (Eigen::Index kk = 0; kk < ocfg.k; ++kk)
      {
        ScalarVariable var{ScalarKind::s, kk, i};
        run_ks(var, gaussian_grid(var), [&] { return cond_sample_s(st, data, kk, i, draw_rng); });
      }
    for (DictSide side : {DictSide::x, DictSide::y})
    {
      const Matrix& d = side == DictSide::x ? st.dx : st.dy;
      for (Eigen::Index kk = 0; kk < d.cols(); ++kk)
        for (Eigen::Index r = 0; r < d.rows(); ++r)
        {
          ScalarVariable var{side == DictSide::x ? ScalarKind::dx : ScalarKind::dy, r, kk};
          run_ks(var, gaussian_grid(var),
                 [&] { return cond_sample_dict(st, data, side, kk, draw_rng)(r); });
        }
    }
    const HyperParams& h = cfg.hyper;
    run_ks({ScalarKind::gamma_s}, gamma_grid({ScalarKind::gamma_s}),
           [&] { return cond_sample_gamma_s(st, h, draw_rng); });
    run_ks({ScalarKind::gamma_xy}, gamma_grid({ScalarKind::gamma_xy}),
           [&] { return cond_sample_gamma_xy(st, data, h, draw_rng); });
    run_ks({ScalarKind::gamma_x}, gamma_grid({ScalarKind::gamma_x}),
           [&] { return cond_sample_gamma_x(st, h, draw_rng); });
    run_ks({ScalarKind::gamma_y}, gamma_grid({ScalarKind::gamma_y}),
           [&] { return cond_sample_gamma_y(st, h, draw_rng); });

    for (Eigen::Index i = 0; i < ocfg.n; ++i)
      for (Eigen::Index kk = 0; kk < ocfg.k; ++kk)
      {
        double theta  = z_activation_probability(st, data, kk, i);
        double oracle = enumerate_binary_conditional(st, data, cfg, gram, kk, i);
        double rel    = std::abs(theta - oracle) / std::max(oracle, 1e-300);
        out.push_back({"theta z(" + std::to_string(kk) + "," + std::to_string(i) + ")", rel,
                       ocfg.theta_tolerance, rel <= ocfg.theta_tolerance});
      }
    return out;
  }

  // ---------------------------------------------------------------------
  // Geweke joint-distribution test

  struct GewekeConfig
  {
    std::size_t cycles = 20000;
    Eigen::Index n   = 8;
    Eigen::Index k   = 3;
    Eigen::Index m   = 2;
    /// Batches for the batch-means variance of the successive chain.
    std::size_t batches = 50;
    HyperParams hyper   = HyperParams::uniform(5.0);
    std::uint64_t seed  = 1;

    void
    validate() const
    {
      if (cycles < 10000)
        throw InvalidArgument("geweke: at least 1e4 cycles are required");
      if (n < 2 || n > 8 || k < 1 || k > 3 || m < 1 || m > 2)
        throw InvalidArgument("geweke: instance must satisfy N<=8, K<=3, M<=2");
      if (batches < 2 || cycles / batches < 2)
        throw InvalidArgument("geweke: invalid batch count");
    }
  };

  struct GewekeStatistic
  {
    std::string name;
    double marginal_mean   = 0.0;
    double successive_mean = 0.0;
    double z_score         = 0.0;
  };

  struct GewekeReport
  {
    std::vector<GewekeStatistic> statistics;
    /// The successive chain left the valid state space; all z-scores are
    /// reported as infinite.
    bool diverged = false;
    std::size_t cycles_completed = 0;

    double
    max_abs_z() const
    {
      double m = 0.0;
      for (const auto& s : statistics)
        m = std::max(m, std::abs(s.z_score));
      return m;
    }

    bool passed(double threshold = 4.0) const { return max_abs_z() < threshold; }
  };

  inline const std::vector<std::string>&
  geweke_statistic_names()
  {
    static const std::vector<std::string> names = {
      "gamma_s", "gamma_xy", "gamma_x", "gamma_y", "active_fraction", "mean_s_sq",
      "mean_dict_sq", "w_first"};
    return names;
  }

  inline std::vector<double>
  geweke_statistics(const LatentState& st)
  {
    double active = (st.z.array() > 0).cast<double>().mean();
    double dict_sq = (st.dx.squaredNorm() + st.dy.squaredNorm())
                     / static_cast<double>(st.dx.size() + st.dy.size());
    return {st.gamma_s,
            st.gamma_xy,
            st.gamma_x,
            st.gamma_y,
            active,
            st.s.squaredNorm() / static_cast<double>(st.s.size()),
            dict_sq,
            st.w(0, 0)};
  }

  namespace detail
  {
    inline double
    mean_of(const std::vector<double>& v)
    {
      double s = 0.0;
      for (double x : v)
        s += x;
      return s / static_cast<double>(v.size());
    }

    inline double
    variance_of(const std::vector<double>& v, double mean)
    {
      double s = 0.0;
      for (double x : v)
        s += (x - mean) * (x - mean);
      return s / static_cast<double>(v.size() - 1);
    }

    /// Variance of the sample mean of an autocorrelated series by batch means.
    inline double
    batch_means_variance(const std::vector<double>& v, std::size_t batches)
    {
      std::size_t len = v.size() / batches;
      std::vector<double> means(batches);
      for (std::size_t b = 0; b < batches; ++b)
      {
        double s = 0.0;
        for (std::size_t j = 0; j < len; ++j)
          s += v[b * len + j];
        means[b] = s / static_cast<double>(len);
      }
      double m = mean_of(means);
      return variance_of(means, m) / static_cast<double>(batches);
    }
  }

  /// Compares the marginal-conditional simulator (independent ancestral
  /// draws) with the successive-conditional simulator (gibbs_sweep followed
  /// by regeneration of X and Y). Sigma_w is fixed from a surrogate pose set.
  template <typename Conditionals = StandardConditionals>
  GewekeReport
  geweke_run(const GewekeConfig& gcfg, RngStream& rng)
  {
    gcfg.validate();
    ModelConfig mcfg;
    mcfg.dict_size = gcfg.k;
    mcfg.hyper     = gcfg.hyper;

    RngStream setup_rng = rng.split(0);
    Matrix poses(gcfg.m, gcfg.n);
    for (Eigen::Index i = 0; i < poses.size(); ++i)
      poses.data()[i] = setup_rng.normal();
    KernelGram gram = build_gram(poses, mcfg.kernel);

    const std::size_t n_stats = geweke_statistic_names().size();
    std::vector<std::vector<double>> marginal(n_stats), successive(n_stats);
    for (std::size_t s = 0; s < n_stats; ++s)
    {
      marginal[s].reserve(gcfg.cycles);
      successive[s].reserve(gcfg.cycles);
    }

    RngStream marginal_rng = rng.split(1);
    for (std::size_t c = 0; c < gcfg.cycles; ++c)
    {
      LatentState st =
        sample_latent_prior(mcfg, gram, gcfg.m, gcfg.m, {}, std::nullopt, marginal_rng);
      auto v = geweke_statistics(st);
      for (std::size_t s = 0; s < n_stats; ++s)
        marginal[s].push_back(v[s]);
    }

    RngStream chain_rng = rng.split(2);
    LatentState st = sample_latent_prior(mcfg, gram, gcfg.m, gcfg.m, {}, std::nullopt, chain_rng);
    Dataset data   = sample_observations(st, chain_rng);
    GewekeReport report;
    try
    {
      for (std::size_t c = 0; c < gcfg.cycles; ++c)
      {
        gibbs_sweep<Conditionals>(st, data, mcfg, gram, chain_rng);
        data   = sample_observations(st, chain_rng);
        auto v = geweke_statistics(st);
        for (std::size_t s = 0; s < n_stats; ++s)
          successive[s].push_back(v[s]);
        report.cycles_completed = c + 1;
      }
    }
    catch (const Error&)
    {
      report.diverged = true;
    }

    for (std::size_t s = 0; s < n_stats; ++s)
    {
      if (report.diverged)
      {
        report.statistics.push_back({geweke_statistic_names()[s], detail::mean_of(marginal[s]),
                                     std::numeric_limits<double>::quiet_NaN(),
                                     std::numeric_limits<double>::infinity()});
        continue;
      }
      GewekeStatistic g;
      g.name            = geweke_statistic_names()[s];
      g.marginal_mean   = detail::mean_of(marginal[s]);
      g.successive_mean = detail::mean_of(successive[s]);
      double var_m = detail::variance_of(marginal[s], g.marginal_mean)
                     / static_cast<double>(marginal[s].size());
      double var_s = detail::batch_means_variance(successive[s], gcfg.batches);
      g.z_score = (g.marginal_mean - g.successive_mean) / std::sqrt(var_m + var_s);
      report.statistics.push_back(std::move(g));
    }
    return report;
  }

  /// Deliberately broken slab conditional (mean sign flipped), used to check
  /// that the Geweke test has power.
  struct FlippedSlabMean
  {
    template <typename Rx, typename Ry, typename Dx, typename Dy>
    static GaussianParams
    slab(const Rx& rx, const Ry& ry, const Dx& dxk, const Dy& dyk, double gamma_s,
         double gamma_xy)
    {
      GaussianParams p = StandardConditionals::slab(rx, ry, dxk, dyk, gamma_s, gamma_xy);
      p.mean = -p.mean;
      return p;
    }
  };
}

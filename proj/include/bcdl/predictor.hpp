#pragma once

#include "distributions.hpp"
#include "errors.hpp"
#include "gibbs.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

namespace bcdl
{
  enum class MeanVariant
  {
    /// sum_l beta_l mu_l / sum_l beta_l
    normalized_mixture,
    /// sum_l beta_l mu_l / (L sum_l gamma_xy^l), raw beta
    raw_weights
  };

  struct PredictionConfig
  {
    std::size_t j_neighbors = 3;
    /// Use the last L retained samples; empty means all of them.
    std::optional<std::size_t> num_samples;
    MeanVariant mean_variant = MeanVariant::normalized_mixture;

    void
    validate(Eigen::Index n_train, std::size_t collected) const
    {
      if (j_neighbors < 1 || static_cast<Eigen::Index>(j_neighbors) > n_train)
        throw InvalidArgument("prediction: need 1 <= j <= N (N = " + std::to_string(n_train)
                              + ")");
      if (collected == 0)
        throw InvalidArgument("prediction: posterior has no samples");
      if (num_samples && (*num_samples < 1 || *num_samples > collected))
        throw InvalidArgument("prediction: L must be in [1, " + std::to_string(collected) + "]");
    }

    std::size_t samples_used(std::size_t collected) const
    {
      return num_samples ? *num_samples : collected;
    }
  };

  struct PredictiveResult
  {
    Vector y_hat;
    Vector log_beta;
    double effective_sample_size = 0.0;
  };

  struct TestCode
  {
    IntVector z;
    Vector s;
  };

  /// Indices of the j training inputs (columns) closest to x_t; ties at equal
  /// distance go to the lower index.
  inline std::vector<Eigen::Index>
  nearest_neighbors(const Matrix& train_x, const Vector& x_t, std::size_t j)
  {
    const Eigen::Index n = train_x.cols();
    require_dims(train_x.rows() == x_t.size(), "nearest_neighbors: feature length mismatch");
    if (j < 1 || static_cast<Eigen::Index>(j) > n)
      throw InvalidArgument("nearest_neighbors: need 1 <= j <= N");
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      dist[static_cast<std::size_t>(i)] = (train_x.col(i) - x_t).squaredNorm();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    });
    idx.resize(j);
    return idx;
  }

  /// Mean of the rows of W over the given training samples.
  inline Vector
  derive_w_t(const LatentState& sample, const std::vector<Eigen::Index>& neighbors)
  {
    if (neighbors.empty())
      throw InvalidArgument("derive_w_t: no neighbors");
    Vector w_t = Vector::Zero(sample.dict_size());
    for (Eigen::Index i : neighbors)
    {
      require_dims(i >= 0 && i < sample.w.rows(), "derive_w_t: neighbor index out of range");
      w_t += sample.w.row(i).transpose();
    }
    return w_t / static_cast<double>(neighbors.size());
  }

  /// w_t for posterior sample l: the mean of W^l over the j nearest training inputs.
  inline Vector
  derive_w_t(const PosteriorSamples& posterior, const Matrix& train_x, const Vector& x_t,
             std::size_t j, std::size_t l)
  {
    if (l >= posterior.states.size())
      throw InvalidArgument("derive_w_t: sample index out of range");
    return derive_w_t(posterior.states[l], nearest_neighbors(train_x, x_t, j));
  }

  /// z_tk = +1 with probability sigmoid(w_tk); s_t from N(0, 1/gamma_s).
  inline TestCode
  sample_test_code(const Vector& w_t, double gamma_s, RngStream& rng)
  {
    TestCode c;
    c.z.resize(w_t.size());
    c.s.resize(w_t.size());
    for (Eigen::Index k = 0; k < w_t.size(); ++k)
    {
      c.z(k) = sample_bernoulli_pm1(sigmoid(w_t(k)), rng);
      c.s(k) = sample_normal(0.0, gamma_s, rng);
    }
    return c;
  }

  /// log N(x_t; D^x alpha_t, I / gamma_xy).
  inline double
  log_beta(const Vector& x_t, const IntVector& z_t, const Vector& s_t, const Matrix& dx,
           double gamma_xy)
  {
    require_dims(dx.rows() == x_t.size() && dx.cols() == z_t.size(),
                 "log_beta: dimension mismatch");
    Vector r = x_t - dx * sparse_code(z_t, s_t);
    return detail::iid_normal_log_density(r, gamma_xy);
  }

  /// Importance-weighted predictive mean of the output for one test input.
  inline PredictiveResult
  predict(const PosteriorSamples& posterior, const Matrix& train_x, const Vector& x_t,
          const PredictionConfig& cfg, RngStream& rng)
  {
    const std::size_t collected = posterior.states.size();
    cfg.validate(train_x.cols(), collected);
    const std::size_t L     = cfg.samples_used(collected);
    const std::size_t first = collected - L;
    const auto neighbors    = nearest_neighbors(train_x, x_t, cfg.j_neighbors);

    const Eigen::Index m_y = posterior.states.front().dy.rows();
    Matrix mu(m_y, static_cast<Eigen::Index>(L));
    PredictiveResult out;
    out.log_beta.resize(static_cast<Eigen::Index>(L));
    double gamma_sum = 0.0;
    for (std::size_t l = 0; l < L; ++l)
    {
      const LatentState& st = posterior.states[first + l];
      require_dims(st.w.rows() == train_x.cols(), "predict: W rows differ from training N");
      Vector w_t = derive_w_t(st, neighbors);
      TestCode c = sample_test_code(w_t, st.gamma_s, rng);
      Vector a   = sparse_code(c.z, c.s);
      const auto col = static_cast<Eigen::Index>(l);
      mu.col(col)          = st.dy * a;
      out.log_beta(col)    = log_beta(x_t, c.z, c.s, st.dx, st.gamma_xy);
      gamma_sum           += st.gamma_xy;
    }

    double lse = log_sum_exp(std::span<const double>(out.log_beta.data(), L));
    if (!std::isfinite(lse))
      throw NoLikelihoodSupport("predict: every importance weight vanishes");
    Vector weights = (out.log_beta.array() - lse).exp().matrix();
    out.effective_sample_size = 1.0 / weights.squaredNorm();

    if (cfg.mean_variant == MeanVariant::normalized_mixture)
      out.y_hat = mu * weights;
    else
    {
      Vector beta = out.log_beta.array().exp().matrix();
      out.y_hat   = (mu * beta) / (static_cast<double>(L) * gamma_sum);
      if (beta.sum() == 0.0 || !out.y_hat.allFinite())
        throw NoLikelihoodSupport("predict: raw importance weights under- or overflow");
    }
    return out;
  }

  /// Predicts every column of test_x; frame f draws from RngStream(seed).split(f).
  inline Matrix
  predict_batch(const PosteriorSamples& posterior, const Matrix& train_x, const Matrix& test_x,
                const PredictionConfig& cfg, std::uint64_t seed)
  {
    if (posterior.states.empty())
      throw InvalidArgument("predict: posterior has no samples");
    RngStream root(seed);
    Matrix out(posterior.states.front().dy.rows(), test_x.cols());
    for (Eigen::Index f = 0; f < test_x.cols(); ++f)
    {
      RngStream rng = root.split(static_cast<std::uint64_t>(f));
      out.col(f)    = predict(posterior, train_x, test_x.col(f), cfg, rng).y_hat;
    }
    return out;
  }
}

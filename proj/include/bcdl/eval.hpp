#pragma once

#include "errors.hpp"
#include "gibbs.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "predictor.hpp"
#include "rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace bcdl
{
  /// Seed for the index-th independent sub-task of a run seeded with `base`.
  inline std::uint64_t
  derive_seed(std::uint64_t base, std::uint64_t index)
  {
    return RngStream(base).split(index)();
  }

  /// Root-mean-square error over the angles of one frame.
  inline double
  rms_degrees(const Vector& y_true, const Vector& y_pred)
  {
    require_dims(y_true.size() == y_pred.size(), "rms_degrees: length mismatch");
    if (y_true.size() == 0)
      throw InvalidArgument("rms_degrees: empty vectors");
    return std::sqrt((y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size()));
  }

  struct EvalReport
  {
    double mean_rms_degrees = 0.0;
    /// Sample standard deviation of the per-run means; zero for one run.
    double std_rms_degrees = 0.0;
    std::vector<double> per_frame_rms;
    std::size_t runs = 1;
  };

  /// Report for one run from stored predictions (one frame per column).
  inline EvalReport
  evaluate_predictions(const Matrix& y_true, const Matrix& y_pred)
  {
    require_dims(y_true.rows() == y_pred.rows() && y_true.cols() == y_pred.cols(),
                 "evaluate: prediction shape differs from ground truth");
    if (y_true.cols() == 0)
      throw InvalidArgument("evaluate: empty test set");
    EvalReport r;
    r.per_frame_rms.resize(static_cast<std::size_t>(y_true.cols()));
    double total = 0.0;
    for (Eigen::Index f = 0; f < y_true.cols(); ++f)
    {
      double v = rms_degrees(y_true.col(f), y_pred.col(f));
      r.per_frame_rms[static_cast<std::size_t>(f)] = v;
      total += v;
    }
    r.mean_rms_degrees = total / static_cast<double>(y_true.cols());
    return r;
  }

  /// Predicts the test inputs and scores them against the test poses.
  inline EvalReport
  evaluate(const PosteriorSamples& posterior, const Matrix& train_x, const Dataset& test,
           const PredictionConfig& cfg, std::uint64_t seed)
  {
    if (test.n() == 0)
      throw InvalidArgument("evaluate: empty test set");
    test.validate();
    return evaluate_predictions(test.y, predict_batch(posterior, train_x, test.x, cfg, seed));
  }

  /// Aggregates single-run reports: mean and sample std of the run means.
  /// Per-frame values are concatenated in run order.
  inline EvalReport
  combine_reports(const std::vector<EvalReport>& reports)
  {
    if (reports.empty())
      throw InvalidArgument("combine_reports: no reports");
    EvalReport out;
    out.runs = reports.size();
    double sum = 0.0;
    for (const auto& r : reports)
    {
      sum += r.mean_rms_degrees;
      out.per_frame_rms.insert(out.per_frame_rms.end(), r.per_frame_rms.begin(),
                               r.per_frame_rms.end());
    }
    out.mean_rms_degrees = sum / static_cast<double>(reports.size());
    if (reports.size() > 1)
    {
      double ss = 0.0;
      for (const auto& r : reports)
        ss += (r.mean_rms_degrees - out.mean_rms_degrees)
              * (r.mean_rms_degrees - out.mean_rms_degrees);
      out.std_rms_degrees = std::sqrt(ss / static_cast<double>(reports.size() - 1));
    }
    return out;
  }

  /// Columns of m selected by index.
  inline Matrix
  select_columns(const Matrix& m, const std::vector<Eigen::Index>& idx)
  {
    Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
      out.col(static_cast<Eigen::Index>(c)) = m.col(idx[c]);
    return out;
  }

  inline Dataset
  select_samples(const Dataset& data, const std::vector<Eigen::Index>& idx)
  {
    Dataset out;
    out.x                 = select_columns(data.x, idx);
    out.y                 = select_columns(data.y, idx);
    out.angles_in_degrees = data.angles_in_degrees;
    return out;
  }

  // ---------------------------------------------------------------------
  // Cross-validation

  struct CvGrid
  {
    std::vector<Eigen::Index> k_values{64, 128, 196, 256};
    std::vector<std::size_t> j_values{3, 5, 7};
    std::size_t folds = 5;

    void
    validate() const
    {
      if (k_values.empty() || j_values.empty())
        throw InvalidArgument("cv: empty grid");
      if (folds < 2)
        throw InvalidArgument("cv: need at least two folds");
      for (auto k : k_values)
        if (k < 1)
          throw InvalidArgument("cv: K must be positive");
      for (auto j : j_values)
        if (j < 1)
          throw InvalidArgument("cv: j must be positive");
    }
  };

  struct CvCell
  {
    Eigen::Index k = 0;
    std::size_t j  = 0;
    double mean_rms = 0.0;
    std::vector<double> fold_rms;
  };

  struct CvResult
  {
    Eigen::Index best_k = 0;
    std::size_t best_j  = 0;
    std::vector<CvCell> table;
    /// Validation indices of each fold.
    std::vector<std::vector<Eigen::Index>> folds;
  };

  /// Seeded Fisher-Yates shuffle of 0..n-1 cut into contiguous blocks.
  inline std::vector<std::vector<Eigen::Index>>
  fold_indices(Eigen::Index n, std::size_t folds, std::uint64_t seed)
  {
    if (folds < 2 || static_cast<Eigen::Index>(folds) > n)
      throw InvalidArgument("cv: need 2 <= folds <= N");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    RngStream rng(seed);
    for (std::size_t i = perm.size() - 1; i > 0; --i)
    {
      auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1));
      std::swap(perm[i], perm[std::min(j, i)]);
    }
    std::vector<std::vector<Eigen::Index>> out(folds);
    const std::size_t total = perm.size();
    for (std::size_t f = 0; f < folds; ++f)
    {
      std::size_t lo = f * total / folds;
      std::size_t hi = (f + 1) * total / folds;
      out[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                    perm.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    return out;
  }

  /// Lowest mean RMS; ties go to the smaller K, then the smaller j.
  inline const CvCell&
  best_cell(const std::vector<CvCell>& table)
  {
    if (table.empty())
      throw InvalidArgument("cv: empty score table");
    const CvCell* best = &table.front();
    for (const auto& c : table)
    {
      bool better = c.mean_rms < best->mean_rms
                    || (c.mean_rms == best->mean_rms
                        && (c.k < best->k || (c.k == best->k && c.j < best->j)));
      if (better)
        best = &c;
    }
    return *best;
  }

  /// Trains once per (K, fold) and scores every j on the held-out fold.
  inline CvResult
  cross_validate(const Dataset& data, const CvGrid& grid, const ModelConfig& base,
                 const SamplerConfig& scfg, const PredictionConfig& pbase)
  {
    data.validate();
    grid.validate();
    CvResult out;
    out.folds = fold_indices(data.n(), grid.folds, derive_seed(scfg.seed, 0));

    for (Eigen::Index k : grid.k_values)
      for (std::size_t j : grid.j_values)
        out.table.push_back({k, j, 0.0, std::vector<double>(grid.folds, 0.0)});

    for (std::size_t ki = 0; ki < grid.k_values.size(); ++ki)
      for (std::size_t f = 0; f < grid.folds; ++f)
      {
        std::vector<Eigen::Index> train_idx;
        for (std::size_t g = 0; g < grid.folds; ++g)
          if (g != f)
            train_idx.insert(train_idx.end(), out.folds[g].begin(), out.folds[g].end());
        std::sort(train_idx.begin(), train_idx.end());
        Dataset train_set = select_samples(data, train_idx);
        Dataset valid_set = select_samples(data, out.folds[f]);

        ModelConfig cfg = base;
        cfg.dict_size   = grid.k_values[ki];
        SamplerConfig s = scfg;
        s.seed = derive_seed(scfg.seed, 1 + ki * grid.folds + f);
        PosteriorSamples post = train(train_set, cfg, s);

        for (std::size_t ji = 0; ji < grid.j_values.size(); ++ji)
        {
          PredictionConfig p = pbase;
          p.j_neighbors      = grid.j_values[ji];
          EvalReport r = evaluate(post, train_set.x, valid_set, p, derive_seed(s.seed, ji));
          out.table[ki * grid.j_values.size() + ji].fold_rms[f] = r.mean_rms_degrees;
        }
      }

    for (auto& c : out.table)
      c.mean_rms = std::accumulate(c.fold_rms.begin(), c.fold_rms.end(), 0.0)
                   / static_cast<double>(grid.folds);
    const CvCell& b = best_cell(out.table);
    out.best_k = b.k;
    out.best_j = b.j;
    return out;
  }

  // ---------------------------------------------------------------------
  // Synthetic data and experiments

  struct SyntheticSpec
  {
    Eigen::Index m_x       = 10;
    Eigen::Index m_y       = 10;
    Eigen::Index dict_size = 8;
    /// Held fixed instead of drawn from the (very diffuse) Gamma priors.
    PrecisionOverrides fixed{1.0, 100.0, 1.0, 1.0};
    HyperParams hyper;
  };

  /// One synthetic dataset of n frames from the generative model.
  inline AncestralDraw
  generate_synthetic(const SyntheticSpec& spec, Eigen::Index n, std::uint64_t seed)
  {
    ModelConfig cfg;
    cfg.dict_size = spec.dict_size;
    cfg.hyper     = spec.hyper;
    GenerativeOptions opts;
    opts.fixed = spec.fixed;
    RngStream rng(seed);
    return ancestral_sample(cfg, n, spec.m_x, spec.m_y, opts, rng);
  }

  struct SyntheticExperimentConfig
  {
    std::vector<Eigen::Index> n_train{30, 60, 100, 200};
    Eigen::Index n_test = 100;
    std::size_t runs    = 10;
    SyntheticSpec data;
    ModelConfig model;
    SamplerConfig sampler;
    PredictionConfig prediction;
    std::uint64_t seed = 1;

    void
    validate() const
    {
      if (n_train.empty() || runs < 1 || n_test < 1)
        throw InvalidArgument("synthetic experiment: empty design");
      for (auto n : n_train)
        if (n < 2)
          throw InvalidArgument("synthetic experiment: training size must be at least 2");
    }
  };

  struct SyntheticTable
  {
    std::vector<Eigen::Index> n_train;
    /// run_means[r][c]: mean test RMS of run r at n_train[c].
    std::vector<std::vector<double>> run_means;
    /// Aggregate over runs for each training size.
    std::vector<EvalReport> reports;
  };

  /// Per run: one dataset of max(n_train) + n_test frames; the last n_test
  /// frames are the test set, the first n frames the training set.
  inline SyntheticTable
  synthetic_experiment(const SyntheticExperimentConfig& ecfg)
  {
    ecfg.validate();
    const Eigen::Index n_max = *std::max_element(ecfg.n_train.begin(), ecfg.n_train.end());
    SyntheticTable out;
    out.n_train = ecfg.n_train;
    std::vector<std::vector<EvalReport>> per_size(ecfg.n_train.size());

    for (std::size_t r = 0; r < ecfg.runs; ++r)
    {
      std::uint64_t run_seed = derive_seed(ecfg.seed, r);
      AncestralDraw draw = generate_synthetic(ecfg.data, n_max + ecfg.n_test, derive_seed(run_seed, 0));
      Dataset test;
      test.x = draw.data.x.rightCols(ecfg.n_test);
      test.y = draw.data.y.rightCols(ecfg.n_test);

      std::vector<double> means;
      for (std::size_t c = 0; c < ecfg.n_train.size(); ++c)
      {
        Dataset train_set;
        train_set.x = draw.data.x.leftCols(ecfg.n_train[c]);
        train_set.y = draw.data.y.leftCols(ecfg.n_train[c]);
        SamplerConfig s = ecfg.sampler;
        s.seed = derive_seed(run_seed, 1 + 2 * c);
        PosteriorSamples post = train(train_set, ecfg.model, s);
        EvalReport rep = evaluate(post, train_set.x, test, ecfg.prediction,
                                  derive_seed(run_seed, 2 + 2 * c));
        means.push_back(rep.mean_rms_degrees);
        per_size[c].push_back(std::move(rep));
      }
      out.run_means.push_back(std::move(means));
    }
    for (auto& reps : per_size)
      out.reports.push_back(combine_reports(reps));
    return out;
  }

  struct AcceptanceConfig
  {
    Eigen::Index n   = 60;
    Eigen::Index k   = 16;
    Eigen::Index m   = 10;
    SyntheticSpec data;
    SamplerConfig sampler;
    std::uint64_t seed = 5;
  };

  /// Trains on one synthetic dataset and returns the posterior (carrying
  /// the MH acceptance rates).
  inline PosteriorSamples
  acceptance_experiment(const AcceptanceConfig& acfg)
  {
    SyntheticSpec spec = acfg.data;
    spec.m_x = acfg.m;
    spec.m_y = acfg.m;
    AncestralDraw draw = generate_synthetic(spec, acfg.n, derive_seed(acfg.seed, 0));
    ModelConfig cfg;
    cfg.dict_size = acfg.k;
    cfg.hyper     = spec.hyper;
    SamplerConfig s = acfg.sampler;
    s.seed = derive_seed(acfg.seed, 1);
    return train(draw.data, cfg, s);
  }

  // ---------------------------------------------------------------------
  // Complexity benchmark

  struct BenchConfig
  {
    /// N values for the isolated Sigma_w factorization and inverse.
    std::vector<Eigen::Index> gram_sizes{500, 1000, 2000};
    /// K values for full sweeps at fixed sweep_n, sweep_m.
    std::vector<Eigen::Index> dict_sizes{512, 1024, 2048};
    Eigen::Index sweep_n = 8;
    Eigen::Index sweep_m = 2;
    std::size_t sweeps  = 3;
    std::size_t repeats = 3;
    std::uint64_t seed  = 3;
  };

  struct BenchRow
  {
    std::string kind;
    Eigen::Index size = 0;
    double seconds    = 0.0;
  };

  struct BenchResult
  {
    std::vector<BenchRow> rows;
    double n_slope = 0.0;
    double k_slope = 0.0;
  };

  /// Least-squares slope of log(y) against log(x).
  inline double
  log_log_slope(const std::vector<double>& x, const std::vector<double>& y)
  {
    require_dims(x.size() == y.size() && x.size() >= 2, "log_log_slope: need two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
      mx += std::log(x[i]);
      my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
      double dx = std::log(x[i]) - mx;
      sxy += dx * (std::log(y[i]) - my);
      sxx += dx * dx;
    }
    return sxy / sxx;
  }

  /// Times the Sigma_w factorization/inverse against N and one full sweep
  /// against K (minimum over repeats), and fits log-log slopes.
  inline BenchResult
  complexity_benchmark(const BenchConfig& bcfg)
  {
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::duration d) { return std::chrono::duration<double>(d).count(); };
    if (bcfg.repeats < 1 || bcfg.sweeps < 1)
      throw InvalidArgument("bench: repeats and sweeps must be positive");
    RngStream root(bcfg.seed);
    BenchResult out;

    std::vector<double> ns, n_times;
    for (std::size_t g = 0; g < bcfg.gram_sizes.size(); ++g)
    {
      const Eigen::Index n = bcfg.gram_sizes[g];
      RngStream rng = root.split(g);
      Matrix poses(3, n);
      for (Eigen::Index i = 0; i < poses.size(); ++i)
        poses.data()[i] = rng.normal();
      const double eta = n >= 2 ? auto_eta(poses) : 1.0;
      Matrix raw = kernel_matrix(poses, KernelKind::exponential, eta);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < bcfg.repeats; ++r)
      {
        auto t0 = clock::now();
        KernelGram gram = factor_gram(raw, eta);
        best = std::min(best, seconds(clock::now() - t0));
        if (!gram.inv.allFinite())
          throw NumericalError("bench: inverse is not finite");
      }
      out.rows.push_back({"gram_inverse", n, best});
      ns.push_back(static_cast<double>(n));
      n_times.push_back(best);
    }

    std::vector<double> ks, k_times;
    for (std::size_t c = 0; c < bcfg.dict_sizes.size(); ++c)
    {
      const Eigen::Index k = bcfg.dict_sizes[c];
      SyntheticSpec spec;
      spec.m_x       = bcfg.sweep_m;
      spec.m_y       = bcfg.sweep_m;
      spec.dict_size = std::min<Eigen::Index>(k, 8);
      AncestralDraw draw = generate_synthetic(spec, bcfg.sweep_n, derive_seed(bcfg.seed, 100 + c));
      ModelConfig cfg;
      cfg.dict_size   = k;
      KernelGram gram = build_gram(draw.data.y, cfg.kernel);
      RngStream rng   = root.split(1000 + c);
      LatentState st  = initial_state(draw.data, k, gram, rng);
      gibbs_sweep(st, draw.data, cfg, gram, rng);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < bcfg.repeats; ++r)
      {
        auto t0 = clock::now();
        for (std::size_t s = 0; s < bcfg.sweeps; ++s)
          gibbs_sweep(st, draw.data, cfg, gram, rng);
        best = std::min(best, seconds(clock::now() - t0) / static_cast<double>(bcfg.sweeps));
      }
      out.rows.push_back({"sweep", k, best});
      ks.push_back(static_cast<double>(k));
      k_times.push_back(best);
    }

    out.n_slope = ns.size() >= 2 ? log_log_slope(ns, n_times)
                                 : std::numeric_limits<double>::quiet_NaN();
    out.k_slope = ks.size() >= 2 ? log_log_slope(ks, k_times)
                                 : std::numeric_limits<double>::quiet_NaN();
    return out;
  }
}

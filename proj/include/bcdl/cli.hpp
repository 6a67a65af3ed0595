#pragma once

#include "errors.hpp"
#include "eval.hpp"
#include "gibbs.hpp"
#include "io.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "predictor.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace bcdl
{
  namespace exit_code
  {
    inline constexpr int ok        = 0;
    inline constexpr int usage     = 1;
    inline constexpr int data      = 2;
    inline constexpr int numerical = 3;
  }

  namespace detail
  {
    inline KernelSpec
    parse_eta(const std::string& text)
    {
      KernelSpec spec;
      if (text == "auto")
        return spec;
      auto v = parse_double(text);
      if (!v || !(*v > 0.0))
        throw InvalidArgument("--eta must be 'auto' or a positive number");
      spec.eta = *v;
      return spec;
    }

    inline MeanVariant
    parse_variant(const std::string& text)
    {
      return text == "raw-weights" ? MeanVariant::raw_weights
                                     : MeanVariant::normalized_mixture;
    }

    inline fs::path
    manifest_path_for(const fs::path& out)
    {
      return fs::path(out.string() + ".manifest.txt");
    }

    inline RunManifest
    base_manifest(const std::string& command)
    {
      RunManifest m;
      m.set("command", command);
      m.set("tool_version", std::string(tool_version));
      return m;
    }

    /// Loads an archive plus test inputs, applying the archive's input
    /// standardization.
    inline Matrix
    load_test_inputs(const ModelArchive& a, const fs::path& x_path)
    {
      Matrix x = load_inputs(x_path);
      if (a.standardizer)
        x = a.standardizer->apply(x);
      if (x.rows() != a.train_x.rows())
        throw DimensionMismatch(x_path.string() + ": has " + std::to_string(x.rows())
                                + " features, model expects " + std::to_string(a.train_x.rows()));
      return x;
    }
  }

  /// Entry point of the command-line tool. Returns 0 on success, 1 on usage
  /// errors, 2 on data errors, 3 on numerical failures.
  inline int
  cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
  {
    CLI::App app{"Bayesian coupled dictionary learning for multi-output regression", "bcdl"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version));

    // train
    std::string x_path, y_path, out_path, model_path, eta_text = "auto";
    Eigen::Index dict_size = 64;
    SamplerConfig scfg;
    double hyper = 1e-6;
    bool standardize = false;
    auto* train_cmd = app.add_subcommand("train", "Run the sampler and save a model archive");
    train_cmd->add_option("--x", x_path, "Input features CSV (one sample per row)")->required();
    train_cmd->add_option("--y", y_path, "Output poses CSV (one sample per row)")->required();
    train_cmd->add_option("--dict-size", dict_size, "Dictionary size K")->capture_default_str();
    train_cmd->add_option("--burn-in", scfg.burn_in, "Burn-in sweeps")->capture_default_str();
    train_cmd->add_option("--collect", scfg.collect, "Post-burn-in sweeps")->capture_default_str();
    train_cmd->add_option("--thin", scfg.thin, "Keep every thin-th sweep")->capture_default_str();
    train_cmd->add_option("--seed", scfg.seed, "Random seed")->capture_default_str();
    train_cmd->add_option("--eta", eta_text, "Kernel bandwidth: auto or a value")->capture_default_str();
    train_cmd->add_option("--hyper", hyper, "Value of all eight Gamma hyper-parameters")->capture_default_str();
    train_cmd->add_flag("--standardize-x", standardize, "Center and scale input features");
    train_cmd->add_option("--out", out_path, "Archive directory")->required();

    // predict / evaluate
    std::size_t neighbors = 3;
    std::size_t num_samples = 0;
    std::string variant = "normalized";
    std::uint64_t pred_seed = 0;
    auto add_prediction_opts = [&](CLI::App* c) {
      c->add_option("--model", model_path, "Archive directory")->required();
      c->add_option("--x", x_path, "Input features CSV")->required();
      c->add_option("--neighbors", neighbors, "Neighbor count j")->capture_default_str();
      c->add_option("--mean-variant", variant, "normalized or raw-weights")
        ->check(CLI::IsMember({"normalized", "raw-weights"}))
        ->capture_default_str();
      c->add_option("--samples", num_samples, "Use the last L samples (0 = all)")->capture_default_str();
      c->add_option("--seed", pred_seed, "Random seed")->capture_default_str();
      c->add_option("--out", out_path, "Output CSV")->required();
    };
    auto* predict_cmd = app.add_subcommand("predict", "Predict poses for new inputs");
    add_prediction_opts(predict_cmd);
    auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against true poses");
    add_prediction_opts(eval_cmd);
    eval_cmd->add_option("--y", y_path, "True poses CSV")->required();

    // cv
    std::vector<Eigen::Index> k_grid{64, 128, 196, 256};
    std::vector<std::size_t> j_grid{3, 5, 7};
    std::size_t folds = 5;
    auto* cv_cmd = app.add_subcommand("cv", "Cross-validate dictionary size and neighbor count");
    cv_cmd->add_option("--x", x_path, "Input features CSV")->required();
    cv_cmd->add_option("--y", y_path, "Output poses CSV")->required();
    cv_cmd->add_option("--k-grid", k_grid, "Dictionary sizes")->delimiter(',')->capture_default_str();
    cv_cmd->add_option("--j-grid", j_grid, "Neighbor counts")->delimiter(',')->capture_default_str();
    cv_cmd->add_option("--folds", folds, "Fold count")->capture_default_str();
    cv_cmd->add_option("--burn-in", scfg.burn_in, "Burn-in sweeps")->capture_default_str();
    cv_cmd->add_option("--collect", scfg.collect, "Post-burn-in sweeps")->capture_default_str();
    cv_cmd->add_option("--thin", scfg.thin, "Keep every thin-th sweep")->capture_default_str();
    cv_cmd->add_option("--seed", scfg.seed, "Random seed")->capture_default_str();
    cv_cmd->add_option("--eta", eta_text, "Kernel bandwidth: auto or a value")->capture_default_str();
    cv_cmd->add_option("--hyper", hyper, "Value of all eight Gamma hyper-parameters")->capture_default_str();
    cv_cmd->add_option("--mean-variant", variant, "normalized or raw-weights")
      ->check(CLI::IsMember({"normalized", "raw-weights"}))
      ->capture_default_str();
    cv_cmd->add_option("--out", out_path, "Score table CSV")->required();

    // synth
    Eigen::Index synth_n = 200, synth_mx = 10, synth_my = 10;
    SyntheticSpec synth;
    std::string prefix;
    std::uint64_t synth_seed = 0;
    bool prior_precisions = false;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth_cmd->add_option("--n", synth_n, "Sample count")->capture_default_str();
    synth_cmd->add_option("--mx", synth_mx, "Input dimension")->capture_default_str();
    synth_cmd->add_option("--my", synth_my, "Output dimension")->capture_default_str();
    synth_cmd->add_option("--dict-size", synth.dict_size, "Generating dictionary size")->capture_default_str();
    synth_cmd->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
    synth_cmd->add_option("--gamma-s", *synth.fixed.gamma_s, "Slab precision")->capture_default_str();
    synth_cmd->add_option("--gamma-xy", *synth.fixed.gamma_xy, "Noise precision")->capture_default_str();
    synth_cmd->add_option("--gamma-x", *synth.fixed.gamma_x, "Input dictionary precision")->capture_default_str();
    synth_cmd->add_option("--gamma-y", *synth.fixed.gamma_y, "Output dictionary precision")->capture_default_str();
    synth_cmd->add_flag("--prior-precisions", prior_precisions,
                        "Draw the precisions from their Gamma priors instead");
    synth_cmd->add_option("--hyper", hyper, "Value of all eight Gamma hyper-parameters")->capture_default_str();
    synth_cmd->add_option("--out-prefix", prefix, "Writes <P>_x.csv, <P>_y.csv")->required();

    // diagnose
    std::string mode;
    std::size_t cycles = 20000;
    std::uint64_t diag_seed = 1;
    auto* diag_cmd = app.add_subcommand("diagnose", "Sampler correctness and mixing checks");
    diag_cmd->add_option("--mode", mode, "geweke, oracle or acceptance")
      ->check(CLI::IsMember({"geweke", "oracle", "acceptance"}))
      ->required();
    diag_cmd->add_option("--cycles", cycles, "Geweke cycles")->capture_default_str();
    diag_cmd->add_option("--seed", diag_seed, "Random seed")->capture_default_str();
    diag_cmd->add_option("--burn-in", scfg.burn_in, "Burn-in sweeps (acceptance)")->capture_default_str();
    diag_cmd->add_option("--collect", scfg.collect, "Post-burn-in sweeps (acceptance)")->capture_default_str();
    diag_cmd->add_option("--out", out_path, "Result CSV")->required();

    // bench
    BenchConfig bench;
    auto* bench_cmd = app.add_subcommand("bench", "Time the Gram inverse and full sweeps");
    bench_cmd->add_option("--gram-sizes", bench.gram_sizes, "N values")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--dict-sizes", bench.dict_sizes, "K values")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--repeats", bench.repeats, "Timing repeats")->capture_default_str();
    bench_cmd->add_option("--out", out_path, "Timing CSV")->required();

    try
    {
      app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
      if (e.get_exit_code() == 0)
      {
        app.exit(e, out, err);
        return exit_code::ok;
      }
      err << "error: " << e.what() << "\n\n" << app.help();
      return exit_code::usage;
    }

    try
    {
      if (train_cmd->parsed())
      {
        Dataset data = load_dataset(x_path, y_path);
        ModelArchive archive;
        if (standardize)
        {
          archive.standardizer = Standardizer::fit(data.x);
          data.x = archive.standardizer->apply(data.x);
        }
        ModelConfig cfg;
        cfg.dict_size = dict_size;
        cfg.hyper     = HyperParams::uniform(hyper);
        cfg.kernel    = detail::parse_eta(eta_text);
        archive.posterior = train(data, cfg, scfg);
        archive.train_x   = data.x;
        archive.manifest  = detail::base_manifest("train");
        record_model_config(archive.manifest, cfg);
        record_sampler_config(archive.manifest, scfg);
        archive.manifest.set("x_digest", file_digest(x_path));
        archive.manifest.set("y_digest", file_digest(y_path));
        save_model(out_path, archive);
        out << "trained K=" << dict_size << " N=" << data.n() << " samples="
            << archive.posterior.states.size() << " eta=" << format_double(archive.posterior.eta)
            << " jitter=" << format_double(archive.posterior.jitter_applied)
            << " accept_rate=" << format_double(archive.posterior.accept_rate) << "\n";
        return exit_code::ok;
      }

      if (predict_cmd->parsed() || eval_cmd->parsed())
      {
        const bool scoring   = eval_cmd->parsed();
        ModelArchive archive = load_model(model_path);
        Matrix test_x        = detail::load_test_inputs(archive, x_path);
        PredictionConfig pcfg;
        pcfg.j_neighbors  = neighbors;
        pcfg.mean_variant = detail::parse_variant(variant);
        if (num_samples > 0)
          pcfg.num_samples = num_samples;
        Matrix y_hat = predict_batch(archive.posterior, archive.train_x, test_x, pcfg, pred_seed);

        RunManifest m = detail::base_manifest(scoring ? "evaluate" : "predict");
        m.set("model_digest", archive_digest(model_path));
        m.set("x_digest", file_digest(x_path));
        m.set("neighbors", static_cast<std::uint64_t>(neighbors));
        m.set("samples", static_cast<std::uint64_t>(pcfg.samples_used(archive.posterior.states.size())));
        m.set("mean_variant", variant);
        m.set("seed", pred_seed);
        m.set("frames", static_cast<std::int64_t>(test_x.cols()));

        if (!scoring)
        {
          write_csv(out_path, y_hat.transpose(), numbered_header("y", y_hat.rows()));
          write_text(detail::manifest_path_for(out_path), m.text());
          out << "predicted " << y_hat.cols() << " frames\n";
          return exit_code::ok;
        }

        Matrix y_true = read_csv(y_path).transpose();
        if (y_true.cols() != test_x.cols())
          throw PairingMismatch(static_cast<std::size_t>(test_x.cols()),
                                static_cast<std::size_t>(y_true.cols()));
        if (y_true.rows() != y_hat.rows())
          throw DimensionMismatch(y_path + ": pose length differs from the model");
        EvalReport rep = evaluate_predictions(y_true, y_hat);
        std::string table = "frame,rms_degrees\n";
        for (std::size_t f = 0; f < rep.per_frame_rms.size(); ++f)
          table += std::to_string(f) + "," + format_double(rep.per_frame_rms[f]) + "\n";
        write_text(out_path, table);
        m.set("y_digest", file_digest(y_path));
        m.set("mean_rms_degrees", rep.mean_rms_degrees);
        m.set("std_rms_degrees", rep.std_rms_degrees);
        write_text(detail::manifest_path_for(out_path), m.text());
        out << "frames=" << rep.per_frame_rms.size()
            << " mean_rms_degrees=" << format_double(rep.mean_rms_degrees) << "\n";
        return exit_code::ok;
      }

      if (cv_cmd->parsed())
      {
        Dataset data = load_dataset(x_path, y_path);
        CvGrid grid{k_grid, j_grid, folds};
        ModelConfig cfg;
        cfg.hyper  = HyperParams::uniform(hyper);
        cfg.kernel = detail::parse_eta(eta_text);
        PredictionConfig pcfg;
        pcfg.mean_variant = detail::parse_variant(variant);
        CvResult res = cross_validate(data, grid, cfg, scfg, pcfg);

        std::string table = "k,j,mean_rms";
        for (std::size_t f = 0; f < folds; ++f)
          table += ",fold" + std::to_string(f);
        table += "\n";
        for (const auto& c : res.table)
        {
          table += std::to_string(c.k) + "," + std::to_string(c.j) + "," + format_double(c.mean_rms);
          for (double v : c.fold_rms)
            table += "," + format_double(v);
          table += "\n";
        }
        write_text(out_path, table);
        RunManifest m = detail::base_manifest("cv");
        record_model_config(m, cfg);
        record_sampler_config(m, scfg);
        m.set("folds", static_cast<std::uint64_t>(folds));
        m.set("mean_variant", variant);
        m.set("x_digest", file_digest(x_path));
        m.set("y_digest", file_digest(y_path));
        m.set("best_k", static_cast<std::int64_t>(res.best_k));
        m.set("best_j", static_cast<std::uint64_t>(res.best_j));
        write_text(detail::manifest_path_for(out_path), m.text());
        out << "best K=" << res.best_k << " j=" << res.best_j << "\n";
        return exit_code::ok;
      }

      if (synth_cmd->parsed())
      {
        synth.m_x   = synth_mx;
        synth.m_y   = synth_my;
        synth.hyper = HyperParams::uniform(hyper);
        if (prior_precisions)
          synth.fixed = {};
        if (synth.dict_size < 1)
          throw InvalidArgument("--dict-size must be positive");
        AncestralDraw draw = generate_synthetic(synth, synth_n, synth_seed);
        write_csv(prefix + "_x.csv", draw.data.x.transpose());
        write_csv(prefix + "_y.csv", draw.data.y.transpose());
        RunManifest m = detail::base_manifest("synth");
        m.set("n", static_cast<std::int64_t>(synth_n));
        m.set("m_x", static_cast<std::int64_t>(synth_mx));
        m.set("m_y", static_cast<std::int64_t>(synth_my));
        m.set("dict_size", static_cast<std::int64_t>(synth.dict_size));
        m.set("seed", synth_seed);
        m.set("hyper", hyper);
        m.set("gamma_s", draw.state.gamma_s);
        m.set("gamma_xy", draw.state.gamma_xy);
        m.set("gamma_x", draw.state.gamma_x);
        m.set("gamma_y", draw.state.gamma_y);
        m.set("precisions", std::string(prior_precisions ? "prior" : "fixed"));
        m.set("x_digest", file_digest(prefix + "_x.csv"));
        m.set("y_digest", file_digest(prefix + "_y.csv"));
        write_text(prefix + "_manifest.txt", m.text());
        out << "wrote " << synth_n << " samples to " << prefix << "_x.csv and " << prefix
            << "_y.csv\n";
        return exit_code::ok;
      }

      if (diag_cmd->parsed())
      {
        RunManifest m = detail::base_manifest("diagnose");
        m.set("mode", mode);
        m.set("seed", diag_seed);
        std::string table;
        bool passed = true;
        if (mode == "geweke")
        {
          GewekeConfig g;
          g.cycles = cycles;
          g.seed   = diag_seed;
          RngStream rng(g.seed);
          GewekeReport rep = geweke_run(g, rng);
          table = "statistic,marginal_mean,successive_mean,z_score\n";
          for (const auto& s : rep.statistics)
            table += s.name + "," + format_double(s.marginal_mean) + ","
                     + format_double(s.successive_mean) + "," + format_double(s.z_score) + "\n";
          passed = rep.passed();
          m.set("cycles", static_cast<std::uint64_t>(cycles));
          m.set("max_abs_z", rep.max_abs_z());
        }
        else if (mode == "oracle")
        {
          OracleSuiteConfig o;
          o.seed = diag_seed;
          table  = "check,statistic,threshold,passed\n";
          for (const auto& c : conditional_oracle_suite(o))
          {
            table += c.name + "," + format_double(c.statistic) + "," + format_double(c.threshold)
                     + "," + (c.passed ? "1" : "0") + "\n";
            passed = passed && c.passed;
          }
        }
        else
        {
          AcceptanceConfig a;
          a.seed    = diag_seed;
          a.sampler = scfg;
          PosteriorSamples post = acceptance_experiment(a);
          table = "atom,accept_rate\n";
          for (std::size_t k = 0; k < post.atom_accept_rate.size(); ++k)
            table += std::to_string(k) + "," + format_double(post.atom_accept_rate[k]) + "\n";
          m.set("accept_rate", post.accept_rate);
          record_sampler_config(m, scfg);
          passed = post.accept_rate > 0.90;
        }
        write_text(out_path, table);
        m.set("passed", std::string(passed ? "1" : "0"));
        write_text(detail::manifest_path_for(out_path), m.text());
        out << mode << (passed ? " passed" : " failed") << "\n";
        return exit_code::ok;
      }

      if (bench_cmd->parsed())
      {
        BenchResult res = complexity_benchmark(bench);
        std::string table = "kind,size,seconds\n";
        for (const auto& r : res.rows)
          table += r.kind + "," + std::to_string(r.size) + "," + format_double(r.seconds) + "\n";
        write_text(out_path, table);
        RunManifest m = detail::base_manifest("bench");
        m.set("n_slope", res.n_slope);
        m.set("k_slope", res.k_slope);
        m.set("seed", bench.seed);
        write_text(detail::manifest_path_for(out_path), m.text());
        out << "n_slope=" << format_double(res.n_slope) << " k_slope=" << format_double(res.k_slope)
            << "\n";
        return exit_code::ok;
      }
    }
    catch (const InvalidArgument& e)
    {
      err << "error: " << e.what() << "\n";
      return exit_code::usage;
    }
    catch (const NumericalError& e)
    {
      err << "numerical failure: " << e.what() << "\n";
      return exit_code::numerical;
    }
    catch (const Error& e)
    {
      err << "data error: " << e.what() << "\n";
      return exit_code::data;
    }
    catch (const fs::filesystem_error& e)
    {
      err << "data error: " << e.what() << "\n";
      return exit_code::data;
    }
    catch (const std::exception& e)
    {
      err << "error: " << e.what() << "\n";
      return exit_code::data;
    }
    return exit_code::usage;
  }
}

#pragma once

#include <bcdl/bcdl.hpp>

#include <filesystem>
#include <string>

namespace bcdl::testing
{
  /// Small random instance drawn from the generative model with unit
  /// precisions, plus the Gram of its observed poses.
  struct Instance
  {
    ModelConfig cfg;
    Dataset data;
    LatentState state;
    KernelGram gram;
  };

  inline Instance
  tiny_instance(Eigen::Index n, Eigen::Index k, Eigen::Index m, std::uint64_t seed,
                double gamma_xy = 4.0)
  {
    Instance out;
    out.cfg.dict_size = k;
    RngStream rng(seed);
    GenerativeOptions opts;
    opts.fixed = PrecisionOverrides{1.0, gamma_xy, 1.0, 1.0};
    AncestralDraw d = ancestral_sample(out.cfg, n, m, m, opts, rng);
    out.data  = d.data;
    out.state = d.state;
    out.gram  = build_gram(d.data.y, out.cfg.kernel);
    return out;
  }

  /// Fresh scratch directory under the system temp path.
  inline std::filesystem::path
  scratch_dir(const std::string& name)
  {
    auto p = std::filesystem::temp_directory_path() / ("bcdl_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
  }
}

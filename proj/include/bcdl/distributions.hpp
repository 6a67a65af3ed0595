#pragma once

#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace bcdl
{
  inline constexpr double log_two_pi = 1.8378770664093454835606594728112;

  inline double
  sigmoid(double x) noexcept
  {
    if (x >= 0.0)
      return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  }

  /// log(1 / (1 + exp(-x))) without overflow.
  inline double
  log_sigmoid(double x) noexcept
  {
    if (x >= 0.0)
      return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
  }

  inline double
  log_sum_exp(double a, double b) noexcept
  {
    double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity())
      return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  inline double
  log_sum_exp(std::span<const double> xs) noexcept
  {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs)
      m = std::max(m, x);
    if (!std::isfinite(m))
      return m;
    double acc = 0.0;
    for (double x : xs)
      acc += std::exp(x - m);
    return m + std::log(acc);
  }

  /// log N(x; mean, 1/precision)
  inline double
  normal_log_density(double x, double mean, double precision) noexcept
  {
    double d = x - mean;
    return 0.5 * (std::log(precision) - log_two_pi)
           - 0.5 * precision * d * d;
  }

  /// log Gamma(x; shape, rate), density proportional to x^(shape-1) exp(-rate x).
  inline double
  gamma_log_density(double x, double shape, double rate) noexcept
  {
    if (!(x > 0.0))
      return -std::numeric_limits<double>::infinity();
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x)
           - rate * x;
  }

  inline double
  sample_normal(double mean, double precision, RngStream& rng)
  {
    return mean + rng.normal() / std::sqrt(precision);
  }

  /// Gamma draw in the rate parameterization (mean shape / rate).
  ///
  /// Marsaglia-Tsang squeeze for shape >= 1; smaller shapes are boosted by
  /// one and corrected with U^(1/shape). Draws that underflow are clamped to
  /// the smallest normal double so the result stays a valid precision.
  inline double
  sample_gamma(double shape, double rate, RngStream& rng)
  {
    if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
      throw InvalidArgument("sample_gamma: shape and rate must be positive and finite");

    double boost = 0.0;
    double a     = shape;
    if (shape < 1.0)
    {
      boost = std::log(rng.uniform_open()) / shape;
      a     = shape + 1.0;
    }

    double d = a - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    double g = 0.0;
    for (;;)
    {
      double x = rng.normal();
      double v = 1.0 + c * x;
      if (v <= 0.0)
        continue;
      v        = v * v * v;
      double u = rng.uniform_open();
      double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2
          || std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v)))
      {
        g = d * v;
        break;
      }
    }

    double value = std::exp(std::log(g) + boost - std::log(rate));
    return std::clamp(value, std::numeric_limits<double>::min(),
                      std::numeric_limits<double>::max());
  }

  /// Returns +1 with probability p_plus, otherwise -1.
  inline int
  sample_bernoulli_pm1(double p_plus, RngStream& rng)
  {
    if (!(p_plus >= 0.0 && p_plus <= 1.0))
      throw InvalidArgument("sample_bernoulli_pm1: probability outside [0, 1]");
    return rng.uniform() < p_plus ? +1 : -1;
  }
}

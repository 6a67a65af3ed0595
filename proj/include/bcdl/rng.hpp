#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bcdl
{
  namespace detail
  {
    inline std::uint64_t
    splitmix64(std::uint64_t x) noexcept
    {
      x += 0x9E3779B97F4A7C15ULL;
      x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
      x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
      return x ^ (x >> 31);
    }
  }

  /// Seedable random stream.
  ///
  /// The engine is std::mt19937_64, whose output sequence is fixed by the
  /// standard. Uniform and normal variates are produced here rather than by
  /// the <random> distributions, which are implementation defined, so a seed
  /// reproduces the same draws on every standard library. Child streams are
  /// derived with split(); streams with different (seed, path) never share
  /// an engine state.
  class RngStream
  {
  public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream)
    {
      std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
      engine_.seed(seq);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Independent child stream; split(i) on equal parents is identical.
    RngStream
    split(std::uint64_t index) const
    {
      std::uint64_t key = detail::splitmix64(seed_ ^ detail::splitmix64(stream_));
      return RngStream(key, detail::splitmix64(index + 0x632BE59BD9B4E019ULL));
    }

    std::uint64_t operator()() { return engine_(); }
    static constexpr std::uint64_t min() { return std::mt19937_64::min(); }
    static constexpr std::uint64_t max() { return std::mt19937_64::max(); }

    /// Uniform on [0, 1) with 53 random bits.
    double
    uniform()
    {
      return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1).
    double
    uniform_open()
    {
      return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Standard normal by the Marsaglia polar method.
    double
    normal()
    {
      for (;;)
      {
        double u = 2.0 * uniform() - 1.0;
        double v = 2.0 * uniform() - 1.0;
        double r = u * u + v * v;
        if (r > 0.0 && r < 1.0)
          return u * std::sqrt(-2.0 * std::log(r) / r);
      }
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
  };
}

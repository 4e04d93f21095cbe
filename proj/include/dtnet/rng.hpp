#ifndef DTNET_RNG_HPP
#define DTNET_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace dtnet {

// Counter-based generator: the n-th draw of stream s under seed k is a pure
// function of (k, s, n). Streams are keyed by purpose so that data, weight
// initialisation and shuffling never perturb each other.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  enum class Stream : std::uint64_t { data = 1, init = 2, shuffle = 3, augment = 4 };

  CounterRng() = default;
  CounterRng(std::uint64_t seed, Stream stream) : CounterRng(seed, static_cast<std::uint64_t>(stream)) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  // An independent generator derived from this one's key.
  CounterRng substream(std::uint64_t index) const {
    CounterRng r;
    r.key_ = mix(key_ ^ mix(index + 0xd1b54a32d192ed03ULL));
    return r;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace dtnet

#endif  // DTNET_RNG_HPP

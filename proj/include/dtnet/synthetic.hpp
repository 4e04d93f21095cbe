#ifndef DTNET_SYNTHETIC_HPP
#define DTNET_SYNTHETIC_HPP

// Synthetic two-domain segmentation data. Both domains draw masks from the
// same geometry family (unions of ellipses and ribbons); they differ only in
// appearance (intensity levels, gain/bias/gamma, texture and noise), so the
// labels transfer across domains.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dtnet {

enum class Domain { source, target };

std::string_view domain_name(Domain d);
Domain parse_domain(std::string_view name);

struct SyntheticDomainSpec {
  Domain domain = Domain::source;
  std::size_t size = 64;
  std::size_t min_blobs = 1;
  std::size_t max_blobs = 3;
  double min_area = 0.05;  // accepted foreground fraction range
  double max_area = 0.35;
  double foreground = 0.7;
  double background = 0.3;
  double gain = 1.0;
  double bias = 0.0;
  double gamma = 1.0;
  double noise = 0.02;
  double texture_amplitude = 0.05;
  double texture_frequency = 3.0;
  std::uint64_t seed = 1;

  void validate() const;
  // The default target appearance used by the experiments.
  static SyntheticDomainSpec default_target(std::uint64_t seed);
};

struct Sample {
  std::size_t size = 0;
  std::vector<double> image;  // size*size, values in [0,1]
  std::vector<int> mask;      // size*size, 0 or 1
};

using Dataset = std::vector<Sample>;

// Deterministic in (spec, count). Sample i uses geometry and appearance
// streams keyed by (seed, i) only.
Dataset generate_domain(const SyntheticDomainSpec& spec, std::size_t count);

// Geometry only, shared by both domains.
std::vector<int> generate_mask(const SyntheticDomainSpec& spec, std::uint64_t index);

}  // namespace dtnet

#endif  // DTNET_SYNTHETIC_HPP

#include "dtnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dtnet/rng.hpp"

namespace dtnet {

std::string_view domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain parse_domain(std::string_view name) {
  if (name == "source") return Domain::source;
  if (name == "target") return Domain::target;
  throw std::invalid_argument("unknown domain: " + std::string(name));
}

void SyntheticDomainSpec::validate() const {
  if (size < 8) throw std::invalid_argument("synthetic image size must be at least 8");
  if (min_blobs == 0 || min_blobs > max_blobs) throw std::invalid_argument("blob count range is empty");
  if (!(min_area >= 0.0 && min_area < max_area && max_area <= 1.0)) {
    throw std::invalid_argument("area bounds must satisfy 0 <= min < max <= 1");
  }
  if (gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
  if (noise < 0.0) throw std::invalid_argument("noise must be non-negative");
}

SyntheticDomainSpec SyntheticDomainSpec::default_target(std::uint64_t seed) {
  SyntheticDomainSpec s;
  s.domain = Domain::target;
  s.foreground = 0.55;
  s.background = 0.45;
  s.gain = 0.9;
  s.bias = 0.2;
  s.gamma = 1.6;
  s.noise = 0.04;
  s.texture_amplitude = 0.12;
  s.texture_frequency = 7.0;
  s.seed = seed;
  return s;
}

namespace {

constexpr std::size_t kMaxAttempts = 1000;

void draw_ellipse(std::vector<int>& mask, std::size_t size, CounterRng& rng) {
  const double s = static_cast<double>(size);
  const double cx = rng.uniform(0.15, 0.85) * s;
  const double cy = rng.uniform(0.15, 0.85) * s;
  const double ra = rng.uniform(0.08, 0.25) * s;
  const double rb = rng.uniform(0.08, 0.25) * s;
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double u = (dx * ct + dy * st) / ra;
      const double v = (-dx * st + dy * ct) / rb;
      if (u * u + v * v <= 1.0) mask[y * size + x] = 1;
    }
  }
}

// A thick sinusoidal band across the image.
void draw_ribbon(std::vector<int>& mask, std::size_t size, CounterRng& rng) {
  const double s = static_cast<double>(size);
  const double offset = rng.uniform(0.2, 0.8) * s;
  const double amplitude = rng.uniform(0.02, 0.12) * s;
  const double freq = rng.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / s;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double half = rng.uniform(0.03, 0.07) * s;
  const bool vertical = rng.uniform() < 0.5;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double along = static_cast<double>(vertical ? y : x) + 0.5;
      const double across = static_cast<double>(vertical ? x : y) + 0.5;
      const double centre = offset + amplitude * std::sin(freq * along + phase);
      if (std::abs(across - centre) <= half) mask[y * size + x] = 1;
    }
  }
}

}  // namespace

std::vector<int> generate_mask(const SyntheticDomainSpec& spec, std::uint64_t index) {
  CounterRng rng = CounterRng(spec.seed, CounterRng::Stream::data).substream(2 * index);
  const std::size_t n = spec.size * spec.size;
  std::vector<int> mask(n, 0);
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::fill(mask.begin(), mask.end(), 0);
    const std::size_t blobs = spec.min_blobs + rng.below(spec.max_blobs - spec.min_blobs + 1);
    for (std::size_t b = 0; b < blobs; ++b) {
      if (rng.uniform() < 0.7) {
        draw_ellipse(mask, spec.size, rng);
      } else {
        draw_ribbon(mask, spec.size, rng);
      }
    }
    const double fraction = static_cast<double>(std::count(mask.begin(), mask.end(), 1)) / static_cast<double>(n);
    if (fraction >= spec.min_area && fraction <= spec.max_area) return mask;
  }
  throw std::runtime_error("could not draw a mask within the configured area bounds");
}

Dataset generate_domain(const SyntheticDomainSpec& spec, std::size_t count) {
  spec.validate();
  Dataset out;
  out.reserve(count);
  const std::size_t size = spec.size;
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < count; ++i) {
    Sample sample;
    sample.size = size;
    sample.mask = generate_mask(spec, i);
    CounterRng rng = CounterRng(spec.seed, CounterRng::Stream::data).substream(2 * i + 1);
    const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double w = 2.0 * std::numbers::pi * spec.texture_frequency / s;
    sample.image.resize(size * size);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t k = y * size + x;
        double v = sample.mask[k] ? spec.foreground : spec.background;
        v += spec.texture_amplitude * std::sin(w * static_cast<double>(x) + phase_x) *
             std::sin(w * static_cast<double>(y) + phase_y);
        v = spec.gain * v + spec.bias;
        v = std::pow(std::clamp(v, 0.0, 1.0), spec.gamma);
        v += spec.noise * rng.normal();
        sample.image[k] = std::clamp(v, 0.0, 1.0);
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace dtnet

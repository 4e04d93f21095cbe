#include "dtnet/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "dtnet/layers.hpp"

namespace dtnet::cost {

double flops_mhsa(double h, double w, double c) {
  const double hw = h * w;
  return 4.0 * hw * c * c + 2.0 * hw * hw * c;
}

double flops_dispensed(double h, double w, double c, double lambda, double factor) {
  const double hw = h * w;
  return 4.0 / (lambda * lambda) * hw * c * c + 2.0 / (factor * lambda) * hw * hw * c;
}

double flops_transformer(double h, double w, double c) {
  return 2.0 * flops_mhsa(h, w, c) + flops_mhsa(h / 2.0, w / 2.0, 2.0 * c);
}

double flops_drt(double h, double w, double c, double lambda, double m, double n, double p) {
  return flops_nmhsa(h, w, c, lambda, m) + flops_dmhsa(h, w, c, lambda, n) +
         flops_cmhsa(h / 2.0, w / 2.0, 2.0 * c, lambda, p);
}

double flops_drt(const DispensedConfig& c) {
  return flops_drt(static_cast<double>(c.height), static_cast<double>(c.width), static_cast<double>(c.channels),
                   static_cast<double>(c.lambda), static_cast<double>(c.m), static_cast<double>(c.n),
                   static_cast<double>(c.p));
}

ReductionBound reduction_bound(double lambda, double m, double n, double p) {
  const double g1 = std::max({lambda, m, n, p});
  const double g2 = std::min({lambda, m, n, p});
  return {1.0 / (g1 * g1), 1.0 / (g2 * g2)};
}

double attention_memory(double h, double w, double heads, double maps, double bytes_per_element, double alpha) {
  const double hw = h * w;
  return alpha * hw * hw * heads * maps * bytes_per_element;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kCountSeed = 0x5eed;

Tensor random_input(const Shape& shape, CounterRng& rng) { return uniform_tensor(shape, 1.0, rng, false); }

}  // namespace

std::uint64_t count_mhsa_flops(std::size_t h, std::size_t w, std::size_t c, std::size_t heads, std::size_t batch) {
  CounterRng rng(kCountSeed, CounterRng::Stream::init);
  const auto params = MhsaParams::create(c, heads, h, w, rng);
  const Tensor x = random_input({batch, c, h, w}, rng);
  FlopCounter counter;
  mhsa_forward(x, params);
  return counter.multiplies(flop_category::attention);
}

std::uint64_t count_dispensed_flops(Policy policy, std::size_t factor, std::size_t lambda, std::size_t heads,
                                    std::size_t h, std::size_t w, std::size_t c) {
  CounterRng rng(kCountSeed, CounterRng::Stream::init);
  const auto params = DispensedMhsaParams::create(policy, factor, lambda, heads, h, w, c, rng);
  const Tensor x = random_input({1, c, h, w}, rng);
  FlopCounter counter;
  dispensed_mhsa(x, params);
  return counter.multiplies(flop_category::attention);
}

std::uint64_t count_drt_flops(const DispensedConfig& config) {
  CounterRng rng(kCountSeed, CounterRng::Stream::init);
  const auto params = DrtParams::create(config, rng);
  const Tensor low = random_input({1, config.channels, config.height, config.width}, rng);
  const Tensor bottom = random_input({1, config.deep_channels(), config.deep_height(), config.deep_width()}, rng);
  FlopCounter counter;
  drt_block(low, bottom, config, params);
  return counter.multiplies(flop_category::attention);
}

// ---------------------------------------------------------------------------

namespace {

CostReport mhsa_report(std::size_t s, std::size_t c, const SweepOptions& o) {
  CostReport r{.variant = "mhsa", .h = s, .w = s, .c = c};
  r.analytic_flops = flops_mhsa(s, s, c);
  r.attn_map_bytes = attention_memory(s, s, o.heads, o.maps, o.bytes_per_element);
  if (s * s <= o.count_token_limit && c <= o.count_channel_limit) r.counted_flops = count_mhsa_flops(s, s, c, o.heads);
  return r;
}

CostReport dispensed_report(std::size_t s, std::size_t c, const SweepOptions& o) {
  const std::size_t tiles = s / o.window;
  CostReport r{.variant = "dispensed", .h = s, .w = s, .c = c};
  r.m = tiles * tiles;
  r.analytic_flops = flops_nmhsa(s, s, c, 1.0, static_cast<double>(r.m));
  r.attn_map_bytes = static_cast<double>(r.m) * attention_memory(o.window, o.window, o.heads, o.maps, o.bytes_per_element);
  r.bound = reduction_bound(1.0, static_cast<double>(r.m), 1.0, 1.0);
  if (c <= o.count_channel_limit) r.counted_flops = count_dispensed_flops(Policy::neighbour, r.m, 1, o.heads, s, s, c);
  return r;
}

CostReport slice_report(std::size_t s, std::size_t c, const SweepOptions& o) {
  CostReport r{.variant = "slice_no_reshape", .h = s, .w = s, .c = c};
  r.p = o.slices;
  const double p = static_cast<double>(o.slices);
  r.analytic_flops = p * flops_mhsa(s, s, static_cast<double>(c) / p);
  r.attn_map_bytes = p * attention_memory(s, s, o.heads, o.maps, o.bytes_per_element);
  const std::size_t slice_channels = c / o.slices;
  if (s * s <= o.count_token_limit && c <= o.count_channel_limit && slice_channels % o.heads == 0) {
    r.counted_flops = count_mhsa_flops(s, s, slice_channels, o.heads, o.slices);
  }
  return r;
}

}  // namespace

std::vector<CostReport> size_sweep(std::size_t first, std::size_t last, std::size_t step, const SweepOptions& o) {
  std::vector<CostReport> out;
  if (step == 0) return out;
  constexpr std::size_t kChannels = 16;
  for (std::size_t s = first; s <= last; s += step) {
    if (s % o.window != 0) continue;
    out.push_back(mhsa_report(s, kChannels, o));
    out.push_back(dispensed_report(s, kChannels, o));
    out.push_back(slice_report(s, kChannels, o));
  }
  return out;
}

std::vector<CostReport> channel_sweep(std::size_t first, std::size_t last, const SweepOptions& o) {
  std::vector<CostReport> out;
  constexpr std::size_t kSize = 40;
  DispensedConfig drt;
  drt.lambda = 2;
  drt.m = 25;
  drt.n = 64;
  drt.p = 4;
  drt.heads = o.heads;
  drt.height = kSize;
  drt.width = kSize;
  for (std::size_t c = first; c != 0 && c <= last; c *= 2) {
    out.push_back(mhsa_report(kSize, c, o));
    out.push_back(dispensed_report(kSize, c, o));
    out.push_back(slice_report(kSize, c, o));

    CostReport t{.variant = "transformer", .h = kSize, .w = kSize, .c = c};
    t.analytic_flops = flops_transformer(kSize, kSize, static_cast<double>(c));
    t.attn_map_bytes = 2.0 * attention_memory(kSize, kSize, o.heads, o.maps, o.bytes_per_element) +
                       attention_memory(kSize / 2, kSize / 2, o.heads, o.maps, o.bytes_per_element);
    out.push_back(t);

    drt.channels = c;
    CostReport d{.variant = "drt", .h = kSize, .w = kSize, .c = c, .lambda = drt.lambda, .m = drt.m, .n = drt.n, .p = drt.p};
    d.analytic_flops = flops_drt(drt);
    const double sm = std::sqrt(static_cast<double>(drt.m));
    const double sn = std::sqrt(static_cast<double>(drt.n));
    const double sp = std::sqrt(static_cast<double>(drt.p));
    auto mem = [&](double side) { return attention_memory(side, side, o.heads, o.maps, o.bytes_per_element); };
    d.attn_map_bytes = drt.m * mem(kSize / sm) + drt.n * mem(kSize / sn) + drt.p * mem(kSize / 2.0 / sp);
    d.bound = reduction_bound(drt.lambda, drt.m, drt.n, drt.p);
    if (c <= o.count_channel_limit && drt.is_valid()) d.counted_flops = count_drt_flops(drt);
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_csv(std::ostream& os, std::span<const CostReport> reports) {
  os << kCsvHeader << '\n';
  os << std::setprecision(17);
  for (const auto& r : reports) {
    os << r.variant << ',' << r.h << ',' << r.w << ',' << r.c << ',' << r.lambda << ',' << r.m << ',' << r.n << ','
       << r.p << ',' << r.analytic_flops << ',';
    if (r.counted_flops) os << *r.counted_flops;
    os << ',' << r.attn_map_bytes << '\n';
  }
}

void write_csv(const std::filesystem::path& path, std::span<const CostReport> reports) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_csv(f, reports);
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

LinearQuadraticFit fit_linear_quadratic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit needs at least two paired points");
  // Normal equations for columns [x^2, x].
  double s44 = 0, s33 = 0, s22 = 0, s2y = 0, s1y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x1 = x[i];
    const double x2 = x1 * x1;
    s44 += x2 * x2;
    s33 += x2 * x1;
    s22 += x1 * x1;
    s2y += x2 * y[i];
    s1y += x1 * y[i];
  }
  const double det = s44 * s22 - s33 * s33;
  if (det == 0.0) throw std::invalid_argument("fit is singular");
  return {(s2y * s22 - s33 * s1y) / det, (s44 * s1y - s33 * s2y) / det};
}

MemoryFit fit_memory(std::span<const double> modelled, std::span<const double> measured) {
  if (modelled.size() != measured.size() || modelled.size() < 2) {
    throw std::invalid_argument("memory fit needs at least two paired points");
  }
  const double n = static_cast<double>(modelled.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < modelled.size(); ++i) {
    sx += modelled[i];
    sy += measured[i];
    sxx += modelled[i] * modelled[i];
    sxy += modelled[i] * measured[i];
  }
  const double det = n * sxx - sx * sx;
  if (det == 0.0) throw std::invalid_argument("memory fit is singular");
  const double alpha = (n * sxy - sx * sy) / det;
  return {(sy - alpha * sx) / n, alpha};
}

}  // namespace dtnet::cost

#ifndef DTNET_COST_MODEL_HPP
#define DTNET_COST_MODEL_HPP

// Closed-form attention cost model and its instrumented counterpart.
//
// Counting convention: one FLOP per scalar multiply, restricted to the six
// matrix products of an MHSA layer (q, k, v and output projections, q.k^T
// and attention.v). Position logits, softmax and convolutions are excluded.
// Under this convention an MHSA over HW tokens of C channels costs exactly
// 4*HW*C^2 + 2*(HW)^2*C.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dtnet/dispensed.hpp"

namespace dtnet::cost {

double flops_mhsa(double h, double w, double c);
// Bottlenecked, dispensed MHSA: 4/lambda^2 * HWC^2 + 2/(factor*lambda) * (HW)^2 C.
double flops_dispensed(double h, double w, double c, double lambda, double factor);
inline double flops_nmhsa(double h, double w, double c, double lambda, double m) { return flops_dispensed(h, w, c, lambda, m); }
inline double flops_dmhsa(double h, double w, double c, double lambda, double n) { return flops_dispensed(h, w, c, lambda, n); }
// Evaluated at the channel stage's own dims: callers pass (H/2, W/2, 2C).
inline double flops_cmhsa(double h, double w, double c, double lambda, double p) { return flops_dispensed(h, w, c, lambda, p); }

// Un-dispensed transformer: two MHSA at (H, W, C) plus one at (H/2, W/2, 2C).
double flops_transformer(double h, double w, double c);
// Dispensed residual transformer at the same three sites.
double flops_drt(double h, double w, double c, double lambda, double m, double n, double p);
double flops_drt(const DispensedConfig& config);

struct ReductionBound {
  double lower;  // 1 / max(lambda, m, n, p)^2
  double upper;  // 1 / min(lambda, m, n, p)^2
};
ReductionBound reduction_bound(double lambda, double m, double n, double p);

// Peak attention-map bytes: alpha * (HW)^2 * heads * maps * bytes_per_element.
double attention_memory(double h, double w, double heads, double maps, double bytes_per_element, double alpha = 1.0);

// Instrumented counts: run the real forward pass under a FlopCounter and
// return the attention-category multiplies.
std::uint64_t count_mhsa_flops(std::size_t h, std::size_t w, std::size_t c, std::size_t heads, std::size_t batch = 1);
std::uint64_t count_dispensed_flops(Policy policy, std::size_t factor, std::size_t lambda, std::size_t heads,
                                    std::size_t h, std::size_t w, std::size_t c);
std::uint64_t count_drt_flops(const DispensedConfig& config);

struct CostReport {
  std::string variant;
  std::size_t h = 0, w = 0, c = 0;
  std::size_t lambda = 1, m = 1, n = 1, p = 1;
  double analytic_flops = 0.0;
  std::optional<std::uint64_t> counted_flops{};
  double attn_map_bytes = 0.0;
  ReductionBound bound{1.0, 1.0};
};

struct SweepOptions {
  std::size_t heads = 4;
  double maps = 2.0;  // q.k^T and q.r^T
  double bytes_per_element = 8.0;
  std::size_t window = 8;            // block side of the dispensed variant in the size sweep
  std::size_t slices = 4;            // p of the slice-without-reshape variant
  std::size_t count_token_limit = 1024;  // run the instrumented counter only up to this many tokens per map
  std::size_t count_channel_limit = 128;
};

// Single-MHSA variants at C = 16 over square sizes [first, last] in `step`:
// "mhsa", "dispensed" (fixed window x window tiles, lambda 1) and
// "slice_no_reshape" (p channel slices at full resolution).
std::vector<CostReport> size_sweep(std::size_t first, std::size_t last, std::size_t step,
                                   const SweepOptions& options = {});
// Channel sweep at H = W = 40, C doubling from `first` to `last`: the single
// MHSA variants plus "transformer" and "drt" totals for the three-site block.
std::vector<CostReport> channel_sweep(std::size_t first, std::size_t last, const SweepOptions& options = {});

inline constexpr std::string_view kCsvHeader = "variant,H,W,C,lambda,m,n,p,analytic_flops,counted_flops,attn_map_bytes";
void write_csv(std::ostream& os, std::span<const CostReport> reports);
void write_csv(const std::filesystem::path& path, std::span<const CostReport> reports);

// y ~ quadratic * x^2 + linear * x by least squares.
struct LinearQuadraticFit {
  double quadratic = 0.0;
  double linear = 0.0;
  double operator()(double x) const { return quadratic * x * x + linear * x; }
};
LinearQuadraticFit fit_linear_quadratic(std::span<const double> x, std::span<const double> y);

// measured ~ baseline + alpha * modelled, by least squares.
struct MemoryFit {
  double baseline = 0.0;
  double alpha = 1.0;
};
MemoryFit fit_memory(std::span<const double> modelled, std::span<const double> measured);

}  // namespace dtnet::cost

#endif  // DTNET_COST_MODEL_HPP

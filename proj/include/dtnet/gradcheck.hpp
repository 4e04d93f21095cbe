#ifndef DTNET_GRADCHECK_HPP
#define DTNET_GRADCHECK_HPP

// Central finite-difference verification of the recorded backward rules.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dtnet/tensor.hpp"

namespace dtnet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error.
  double floor = 1e-8;
  // Entries probed per input; 0 probes all of them.
  std::size_t max_entries = 0;
  std::uint64_t seed = 7;
  // Step reductions (by 10x each) tried on a failing probe whose forward and
  // backward one-sided slopes disagree, i.e. one that straddles a kink.
  std::size_t refinements = 2;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::size_t kink_probes = 0;  // probes that needed a refined step
  double max_smooth_rel_error = 0.0;  // over probes with no kink in the stencil
  // Location of the largest error: index into the inputs and flat offset.
  std::size_t worst_input = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

// Compares the tape gradient of `loss()` with respect to every tensor in
// `inputs` against central differences. `loss` must build a scalar from the
// current values of `inputs`.
GradCheckResult gradcheck(std::string name, const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                          const GradCheckOptions& options = {});

// Names accepted by run_gradcheck_suite, "all" included.
std::vector<std::string> gradcheck_modules();
std::vector<GradCheckResult> run_gradcheck_suite(std::string_view module, const GradCheckOptions& options = {});

}  // namespace dtnet

#endif  // DTNET_GRADCHECK_HPP

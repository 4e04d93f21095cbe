#ifndef DTNET_SRC_DETAIL_HPP
#define DTNET_SRC_DETAIL_HPP

#include <span>

#include "dtnet/tensor.hpp"

namespace dtnet::detail {

// Debug builds assert that finite inputs produced a finite output.
void check_finite(const Tensor& out, const Tensor& in);

// grad(t) += g, when t requires a gradient.
void accumulate(const Tensor& t, std::span<const double> g);

}  // namespace dtnet::detail

#endif  // DTNET_SRC_DETAIL_HPP

#include "dtnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

#include "detail.hpp"

namespace dtnet {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using ConstMapR = Eigen::Map<const MatR>;

namespace {

Shape batch_dims(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto xs = x.data();
  Buffer out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  Tensor y(x.shape(), std::move(out));
  detail::check_finite(y, x);
  record(y, {x}, [x, y, df]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const auto g = y.grad();
    const auto xs = x.data();
    const auto ys = y.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * df(xs[i], ys[i]);
  });
  return y;
}

}  // namespace

namespace detail {

void check_finite([[maybe_unused]] const Tensor& out, [[maybe_unused]] const Tensor& in) {
#ifndef NDEBUG
  auto finite = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
  };
  if (finite(in.data())) assert(finite(out.data()) && "non-finite output from finite input");
#endif
}

void accumulate(const Tensor& t, std::span<const double> g) {
  if (!t.requires_grad()) return;
  auto& buf = t.grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands must have rank >= 2, got " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t k2 = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape()[b.rank() - 1];
  const Shape ba = batch_dims(a.shape());
  const Shape bb = batch_dims(b.shape());
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  Shape out_batch;
  if (ba == bb) {
    out_batch = ba;
  } else if (bb.empty()) {
    out_batch = ba;
  } else if (ba.empty()) {
    out_batch = bb;
  } else {
    throw DimensionError("matmul: batch dimensions not broadcastable, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const std::size_t batch = numel(out_batch);
  const bool a_shared = ba.empty() && batch > 1;
  const bool b_shared = bb.empty() && batch > 1;

  Shape out_shape = out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Buffer out(batch * m * n);

  const double* pa = a.data().data();
  const double* pb = b.data().data();
  if (b_shared) {
    // Stack the batch of `a` into one tall matrix.
    ConstMapR A(pa, batch * m, k);
    ConstMapR B(pb, k, n);
    MapR C(out.data(), batch * m, n);
    C.noalias() = A * B;
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMapR A(pa + (a_shared ? 0 : i * m * k), m, k);
      ConstMapR B(pb + i * k * n, k, n);
      MapR C(out.data() + i * m * n, m, n);
      C.noalias() = A * B;
    }
  }
  FlopCounter::add(static_cast<std::uint64_t>(batch) * m * k * n);

  Tensor y(out_shape, std::move(out));
  record(y, {a, b}, [a, b, y, batch, m, k, n, a_shared, b_shared]() mutable {
    const double* g = y.grad().data();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    if (a.requires_grad()) {
      auto& ga = a.grad_buffer();
      if (b_shared) {
        ConstMapR G(g, batch * m, n);
        ConstMapR B(pb, k, n);
        MapR GA(ga.data(), batch * m, k);
        GA.noalias() += G * B.transpose();
      } else {
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMapR G(g + i * m * n, m, n);
          ConstMapR B(pb + i * k * n, k, n);
          MapR GA(ga.data() + (a_shared ? 0 : i * m * k), m, k);
          GA.noalias() += G * B.transpose();
        }
      }
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_buffer();
      if (b_shared) {
        ConstMapR G(g, batch * m, n);
        ConstMapR A(pa, batch * m, k);
        MapR GB(gb.data(), k, n);
        GB.noalias() += A.transpose() * G;
      } else {
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMapR G(g + i * m * n, m, n);
          ConstMapR A(pa + (a_shared ? 0 : i * m * k), m, k);
          MapR GB(gb.data() + i * k * n, k, n);
          GB.noalias() += A.transpose() * G;
        }
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y(a.shape(), std::move(out));
  record(y, {a, b}, [a, b, y]() mutable {
    detail::accumulate(a, y.grad());
    detail::accumulate(b, y.grad());
  });
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor y(a.shape(), std::move(out));
  record(y, {a, b}, [a, b, y]() mutable {
    detail::accumulate(a, y.grad());
    if (b.requires_grad()) {
      auto& gb = b.grad_buffer();
      const auto g = y.grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y(a.shape(), std::move(out));
  record(y, {a, b}, [a, b, y]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
  return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  Tensor y(a.shape(), std::move(out));
  record(y, {a, b}, [a, b, y]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / b[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i] * a[i] / (b[i] * b[i]);
    }
  });
  return y;
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogEpsilon)); },
      [](double v, double) { return v > kLogEpsilon ? 1.0 / v : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto xs = x.data();
  Tensor y({1}, {std::accumulate(xs.begin(), xs.end(), 0.0)});
  record(y, {x}, [x, y]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const double g = y.grad()[0];
    for (auto& v : gx) v += g;
  });
  return y;
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw DimensionError("sum_axis: axis out of range for " + to_string(s));
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t len = s[axis];
  const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
  Shape os = s;
  os[axis] = 1;
  Buffer out(outer * inner, 0.0);
  const auto xs = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xs[(o * len + l) * inner + i];
  Tensor y(os, std::move(out));
  record(y, {x}, [x, y, outer, len, inner]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const auto g = y.grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) gx[(o * len + l) * inner + i] += g[o * inner + i];
  });
  return y;
}

Tensor l2_norm(const Tensor& x) {
  const auto xs = x.data();
  double ss = 0.0;
  for (double v : xs) ss += v * v;
  const double norm = std::sqrt(ss);
  Tensor y({1}, {norm});
  record(y, {x}, [x, y, norm]() mutable {
    if (!x.requires_grad() || norm == 0.0) return;
    auto& gx = x.grad_buffer();
    const double g = y.grad()[0] / norm;
    const auto xs = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * xs[i];
  });
  return y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + to_string(s));
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t len = s[axis];
  const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
  const auto xs = x.data();
  Buffer out(xs.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, xs[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(xs[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] *= inv;
    }
  }
  Tensor y(s, std::move(out));
  record(y, {x}, [x, y, outer, len, inner]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const auto g = y.grad();
    const auto ys = y.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * ys[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = base + l * inner;
          gx[idx] += ys[idx] * (g[idx] - dot);
        }
      }
    }
  });
  return y;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const auto& s = x.shape();
  if (s.size() != shape.size()) {
    throw DimensionError("broadcast_to: rank mismatch " + to_string(s) + " -> " + to_string(shape));
  }
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (s[d] != shape[d] && s[d] != 1) {
      throw DimensionError("broadcast_to: cannot expand " + to_string(s) + " to " + to_string(shape));
    }
  }
  const std::size_t n = numel(shape);
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> in_strides(s.size());
  std::size_t stride = 1;
  for (std::size_t d = s.size(); d-- > 0;) {
    in_strides[d] = s[d] == 1 ? 0 : stride;
    stride *= s[d];
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    std::size_t src = 0;
    for (std::size_t d = shape.size(); d-- > 0;) {
      src += (rem % shape[d]) * in_strides[d];
      rem /= shape[d];
    }
    source[i] = src;
  }
  return gather(x, shape, source);
}

// ---------------------------------------------------------------------------

Tensor max_pool2d(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("max_pool2d: expected [N,C,H,W], got " + to_string(x.shape()));
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("max_pool2d: spatial dims must be even, got " + to_string(x.shape()));
  }
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  Buffer out(nc * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto xs = x.data();
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * h * w + (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
            if (xs[idx] > xs[best]) best = idx;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = xs[best];
        argmax[o] = best;
      }
    }
  }
  Tensor y({x.dim(0), x.dim(1), oh, ow}, std::move(out));
  record(y, {x}, [x, y, argmax = std::move(argmax)]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const auto g = y.grad();
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
  });
  return y;
}

Tensor avg_pool2d(const Tensor& x, std::size_t factor) {
  if (x.rank() != 4) throw DimensionError("avg_pool2d: expected [N,C,H,W], got " + to_string(x.shape()));
  if (factor == 0 || x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
    throw DimensionError("avg_pool2d: spatial dims " + to_string(x.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  const std::size_t oh = h / factor;
  const std::size_t ow = w / factor;
  const double scale = 1.0 / static_cast<double>(factor * factor);
  Buffer out(nc * oh * ow, 0.0);
  const auto xs = x.data();
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) out[(p * oh + r / factor) * ow + c / factor] += xs[(p * h + r) * w + c];
  for (auto& v : out) v *= scale;
  Tensor y({x.dim(0), x.dim(1), oh, ow}, std::move(out));
  record(y, {x}, [x, y, nc, h, w, oh, ow, factor, scale]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const auto g = y.grad();
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
          gx[(p * h + r) * w + c] += scale * g[(p * oh + r / factor) * ow + c / factor];
  });
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool: expected [N,C,H,W], got " + to_string(x.shape()));
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  const auto xs = x.data();
  Buffer out(nc, 0.0);
  for (std::size_t p = 0; p < nc; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += xs[p * hw + i];
    out[p] = acc / static_cast<double>(hw);
  }
  Tensor y({x.dim(0), x.dim(1), 1, 1}, std::move(out));
  record(y, {x}, [x, y, nc, hw]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const auto g = y.grad();
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g[p] * inv;
  });
  return y;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  if (x.rank() != 4) throw DimensionError("upsample_nearest: expected [N,C,H,W], got " + to_string(x.shape()));
  if (factor == 0) throw DimensionError("upsample_nearest: factor must be positive");
  if (factor == 1) return x;
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  const std::size_t oh = h * factor;
  const std::size_t ow = w * factor;
  const auto xs = x.data();
  Buffer out(nc * oh * ow);
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) out[(p * oh + r) * ow + c] = xs[(p * h + r / factor) * w + c / factor];
  Tensor y({x.dim(0), x.dim(1), oh, ow}, std::move(out));
  record(y, {x}, [x, y, nc, h, w, oh, ow, factor]() mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    const auto g = y.grad();
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) gx[(p * h + r / factor) * w + c / factor] += g[(p * oh + r) * ow + c];
  });
  return y;
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: element count mismatch " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  const auto xs = x.data();
  Tensor y(shape, Buffer(xs.begin(), xs.end()));
  record(y, {x}, [x, y]() mutable { detail::accumulate(x, y.grad()); });
  return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& s = x.shape();
  if (axes.size() != s.size()) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for tensor " + to_string(s));
  }
  std::vector<bool> seen(s.size(), false);
  for (auto a : axes) {
    if (a >= s.size() || seen[a]) throw DimensionError("permute: invalid axis order for " + to_string(s));
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(s.size());
  std::size_t stride = 1;
  for (std::size_t d = s.size(); d-- > 0;) {
    in_strides[d] = stride;
    stride *= s[d];
  }
  Shape os(s.size());
  std::vector<std::size_t> strides(s.size());
  for (std::size_t d = 0; d < s.size(); ++d) {
    os[d] = s[axes[d]];
    strides[d] = in_strides[axes[d]];
  }
  const std::size_t n = x.numel();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(s.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    source[i] = src;
    for (std::size_t d = os.size(); d-- > 0;) {
      ++idx[d];
      src += strides[d];
      if (idx[d] < os[d]) break;
      src -= strides[d] * os[d];
      idx[d] = 0;
    }
  }
  return gather(x, os, source);
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + to_string(s0));
  Shape os = s0;
  os[axis] = 0;
  for (const auto& t : xs) {
    const auto& s = t.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == s0[d];
    if (!ok) throw DimensionError("concat: incompatible shapes " + to_string(s0) + " and " + to_string(s));
    os[axis] += s[axis];
  }
  const std::size_t outer = numel(Shape(s0.begin(), s0.begin() + axis));
  const std::size_t inner = numel(Shape(s0.begin() + axis + 1, s0.end()));
  const std::size_t out_block = os[axis] * inner;
  Buffer out(numel(os));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& t : xs) {
    offsets.push_back(offset);
    const std::size_t block = t.shape()[axis] * inner;
    const auto ts = t.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(ts.begin() + o * block, block, out.begin() + o * out_block + offset);
    offset += block;
  }
  Tensor y(os, std::move(out));
  record(y, xs, [xs, y, outer, inner, out_block, offsets, axis]() mutable {
    const auto g = y.grad();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (!xs[k].requires_grad()) continue;
      auto& gx = xs[k].grad_buffer();
      const std::size_t block = xs[k].shape()[axis] * inner;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < block; ++i) gx[o * block + i] += g[o * out_block + offsets[k] + i];
    }
  });
  return y;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw DimensionError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + to_string(s));
  }
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
  Shape os = s;
  os[axis] = end - begin;
  std::vector<std::size_t> source;
  source.reserve(numel(os));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = begin; l < end; ++l)
      for (std::size_t i = 0; i < inner; ++i) source.push_back((o * s[axis] + l) * inner + i);
  return gather(x, os, source);
}

Tensor gather(const Tensor& x, const Shape& shape, std::span<const std::size_t> source) {
  if (numel(shape) != source.size()) {
    throw DimensionError("gather: index count " + std::to_string(source.size()) + " does not match shape " +
                         to_string(shape));
  }
  const auto xs = x.data();
  Buffer out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= xs.size()) throw DimensionError("gather: source index out of range for " + to_string(x.shape()));
    out[i] = xs[source[i]];
  }
  Tensor y(shape, std::move(out));
  if (active_tape() != nullptr && x.requires_grad()) {
    record(y, {x}, [x, y, src = std::vector<std::size_t>(source.begin(), source.end())]() mutable {
      auto& gx = x.grad_buffer();
      const auto g = y.grad();
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
    });
  }
  return y;
}

Tensor gather_channels(const Tensor& x, std::span<const std::size_t> order) {
  if (x.rank() != 4) throw DimensionError("gather_channels: expected [N,C,H,W], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  if (order.size() % n != 0) throw DimensionError("gather_channels: order length not a multiple of batch");
  const std::size_t c_out = order.size() / n;
  std::vector<std::size_t> source;
  source.reserve(n * c_out * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < c_out; ++k) {
      const std::size_t ch = order[b * c_out + k];
      if (ch >= c) throw DimensionError("gather_channels: channel index out of range");
      for (std::size_t i = 0; i < hw; ++i) source.push_back((b * c + ch) * hw + i);
    }
  }
  return gather(x, {n, c_out, x.dim(2), x.dim(3)}, source);
}

}  // namespace dtnet

#include <Eigen/Core>
#include <algorithm>

#include "detail.hpp"
#include "dtnet/ops.hpp"

namespace dtnet {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using ConstMapR = Eigen::Map<const MatR>;

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* image) {
  const std::size_t k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4) throw DimensionError("conv2d: input must be [N,C,H,W], got " + to_string(x.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: weight must be [Cout,Cin,k,k], got " + to_string(weight.shape()));
  }
  if (weight.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: channel mismatch, input " + to_string(x.shape()) + " vs weight " +
                         to_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t k = weight.dim(2);
  if (x.dim(2) + 2 * padding < k || x.dim(3) + 2 * padding < k) {
    throw DimensionError("conv2d: kernel larger than padded input " + to_string(x.shape()));
  }
  ConvGeometry geo{x.dim(1),
                   x.dim(2),
                   x.dim(3),
                   k,
                   stride,
                   padding,
                   (x.dim(2) + 2 * padding - k) / stride + 1,
                   (x.dim(3) + 2 * padding - k) / stride + 1};
  const std::size_t batch = x.dim(0);
  const std::size_t c_out = weight.dim(0);
  const std::size_t in_plane = geo.channels * geo.height * geo.width;
  const std::size_t out_plane = c_out * geo.cols();

  Buffer out(batch * out_plane);
  Buffer cols(geo.is_pointwise() ? 0 : geo.rows() * geo.cols());
  ConstMapR wm(weight.data().data(), c_out, geo.rows());
  for (std::size_t n = 0; n < batch; ++n) {
    const double* image = x.data().data() + n * in_plane;
    const double* col_ptr = image;
    if (!geo.is_pointwise()) {
      im2col(image, geo, cols.data());
      col_ptr = cols.data();
    }
    MapR o(out.data() + n * out_plane, c_out, geo.cols());
    o.noalias() = wm * ConstMapR(col_ptr, geo.rows(), geo.cols());
    if (bias.defined()) {
      for (std::size_t co = 0; co < c_out; ++co) o.row(co).array() += bias[co];
    }
  }
  FlopCounter::add(static_cast<std::uint64_t>(batch) * c_out * geo.rows() * geo.cols(), flop_category::conv);

  Tensor y({batch, c_out, geo.out_h, geo.out_w}, std::move(out));
  detail::check_finite(y, x);
  record(y, {x, weight, bias}, [x, weight, bias, y, geo, batch, c_out, in_plane, out_plane]() mutable {
    const double* g = y.grad().data();
    ConstMapR wm(weight.data().data(), c_out, geo.rows());
    Buffer cols(geo.is_pointwise() ? 0 : geo.rows() * geo.cols());
    Buffer dcols(geo.rows() * geo.cols());
    double* gw = weight.requires_grad() ? weight.grad_buffer().data() : nullptr;
    double* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
    for (std::size_t n = 0; n < batch; ++n) {
      ConstMapR gn(g + n * out_plane, c_out, geo.cols());
      const double* image = x.data().data() + n * in_plane;
      if (gw != nullptr) {
        const double* col_ptr = image;
        if (!geo.is_pointwise()) {
          im2col(image, geo, cols.data());
          col_ptr = cols.data();
        }
        MapR(gw, c_out, geo.rows()).noalias() += gn * ConstMapR(col_ptr, geo.rows(), geo.cols()).transpose();
      }
      if (gx != nullptr) {
        if (geo.is_pointwise()) {
          MapR(gx + n * in_plane, geo.rows(), geo.cols()).noalias() += wm.transpose() * gn;
        } else {
          MapR(dcols.data(), geo.rows(), geo.cols()).noalias() = wm.transpose() * gn;
          col2im_add(dcols.data(), geo, gx + n * in_plane);
        }
      }
    }
    if (bias.defined() && bias.requires_grad()) {
      auto& gb = bias.grad_buffer();
      for (std::size_t n = 0; n < batch; ++n) {
        ConstMapR gn(g + n * out_plane, c_out, geo.cols());
        for (std::size_t co = 0; co < c_out; ++co) gb[co] += gn.row(co).sum();
      }
    }
  });
  return y;
}

}  // namespace dtnet

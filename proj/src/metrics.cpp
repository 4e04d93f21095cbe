#include "dtnet/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace dtnet {

namespace {

void check_same_size(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("mask size mismatch: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-dimensional squared distance transform of a sampled function
// (lower envelope of parabolas).
void dt_1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v, std::vector<double>& z) {
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (std::isfinite(f[q])) {
      first = q;
      break;
    }
  }
  if (first == n) {
    for (std::size_t q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    const double qd = static_cast<double>(q);
    auto intersect = [&](std::size_t j) {
      const double vk = static_cast<double>(v[j]);
      return ((f[q] + qd * qd) - (f[v[j]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
    };
    double s = intersect(k);
    while (s <= z[k]) {  // z[0] is -inf, so this stops at k == 0
      --k;
      s = intersect(k);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double diff = qd - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

ConfusionCounts confusion(std::span<const int> pred, std::span<const int> gt) {
  check_same_size(pred, gt);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
  }
  return c;
}

double iou(std::span<const int> pred, std::span<const int> gt, double empty_value) {
  const ConfusionCounts c = confusion(pred, gt);
  const std::size_t denom = c.tp + c.fp + c.fn;
  if (denom == 0) return empty_value;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double dice(std::span<const int> pred, std::span<const int> gt, double empty_value) {
  const ConfusionCounts c = confusion(pred, gt);
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return empty_value;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::vector<std::size_t> surface_pixels(std::span<const int> mask, std::size_t height, std::size_t width) {
  if (mask.size() != height * width) throw std::invalid_argument("mask does not match its height and width");
  std::vector<std::size_t> out;
  auto outside = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(height) || x >= static_cast<std::ptrdiff_t>(width)) {
      return true;
    }
    return mask[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] == 0;
  };
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (mask[y * width + x] == 0) continue;
      const auto iy = static_cast<std::ptrdiff_t>(y);
      const auto ix = static_cast<std::ptrdiff_t>(x);
      if (outside(iy - 1, ix) || outside(iy + 1, ix) || outside(iy, ix - 1) || outside(iy, ix + 1)) {
        out.push_back(y * width + x);
      }
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(std::span<const int> sites, std::size_t height, std::size_t width) {
  if (sites.size() != height * width) throw std::invalid_argument("site mask does not match its height and width");
  std::vector<double> grid(height * width);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites[i] != 0 ? 0.0 : kInf;

  const std::size_t longest = std::max(height, width);
  std::vector<double> f(longest), d(longest), z(longest + 1);
  std::vector<std::size_t> v(longest);
  for (std::size_t x = 0; x < width; ++x) {
    for (std::size_t y = 0; y < height; ++y) f[y] = grid[y * width + x];
    dt_1d(f.data(), height, d.data(), v, z);
    for (std::size_t y = 0; y < height; ++y) grid[y * width + x] = d[y];
  }
  for (std::size_t y = 0; y < height; ++y) {
    dt_1d(grid.data() + y * width, width, d.data(), v, z);
    std::copy_n(d.data(), width, grid.data() + y * width);
  }
  return grid;
}

std::optional<double> assd(std::span<const int> pred, std::span<const int> gt, std::size_t height,
                           std::size_t width) {
  check_same_size(pred, gt);
  const auto sp = surface_pixels(pred, height, width);
  const auto sg = surface_pixels(gt, height, width);
  if (sp.empty() || sg.empty()) return std::nullopt;

  auto as_mask = [&](const std::vector<std::size_t>& surface) {
    std::vector<int> m(height * width, 0);
    for (std::size_t i : surface) m[i] = 1;
    return m;
  };
  const auto to_g = squared_distance_transform(as_mask(sg), height, width);
  const auto to_p = squared_distance_transform(as_mask(sp), height, width);
  // Two separate sums keep the result bit-identical under argument swap.
  double from_p = 0.0, from_g = 0.0;
  for (std::size_t i : sp) from_p += std::sqrt(to_g[i]);
  for (std::size_t i : sg) from_g += std::sqrt(to_p[i]);
  return (from_p + from_g) / static_cast<double>(sp.size() + sg.size());
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

void MetricsReport::add(std::string id, std::span<const int> pred, std::span<const int> gt, std::size_t height,
                        std::size_t width) {
  image_ids.push_back(std::move(id));
  iou.push_back(dtnet::iou(pred, gt));
  dice.push_back(dtnet::dice(pred, gt));
  assd.push_back(dtnet::assd(pred, gt, height, width));
}

Summary MetricsReport::iou_summary() const { return summarize(iou); }
Summary MetricsReport::dice_summary() const { return summarize(dice); }

Summary MetricsReport::assd_summary() const {
  std::vector<double> present;
  for (const auto& v : assd) {
    if (v) present.push_back(*v);
  }
  return summarize(present);
}

void MetricsReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "image_id,iou,dice,assd\n" << std::setprecision(17);
  for (std::size_t i = 0; i < size(); ++i) {
    out << image_ids[i] << ',' << iou[i] << ',' << dice[i] << ',';
    if (assd[i]) out << *assd[i];
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace dtnet

#include "dtnet/dispensed.hpp"

#include <cmath>

#include "dtnet/ops.hpp"

namespace dtnet {

std::string_view policy_name(Policy policy) {
  switch (policy) {
    case Policy::neighbour: return "neighbour";
    case Policy::dilated: return "dilated";
    case Policy::channel: return "channel";
  }
  return "unknown";
}

Policy parse_policy(std::string_view name) {
  if (name == "neighbour" || name == "N") return Policy::neighbour;
  if (name == "dilated" || name == "D") return Policy::dilated;
  if (name == "channel" || name == "C") return Policy::channel;
  throw std::invalid_argument("unknown dispensation policy: " + std::string(name));
}

std::size_t exact_sqrt(std::size_t value, std::string_view what) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(value))));
  if (value == 0 || r * r != value) {
    throw DimensionError(std::string(what) + " = " + std::to_string(value) + " is not a positive perfect square");
  }
  return r;
}

namespace {

void require_divisible(std::size_t value, std::size_t by, const std::string& what) {
  if (by == 0 || value % by != 0) {
    throw DimensionError(what + ": " + std::to_string(value) + " is not divisible by " + std::to_string(by));
  }
}

}  // namespace

void DispensedConfig::validate() const {
  const std::size_t sm = exact_sqrt(m, "m");
  const std::size_t sn = exact_sqrt(n, "n");
  const std::size_t sp = exact_sqrt(p, "p");
  if (lambda == 0 || heads == 0) throw DimensionError("lambda and heads must be positive");
  require_divisible(height, sm, "H / sqrt(m)");
  require_divisible(width, sm, "W / sqrt(m)");
  require_divisible(height, sn, "H / sqrt(n)");
  require_divisible(width, sn, "W / sqrt(n)");
  if (sm * sn != height || sm * sn != width) {
    throw DimensionError("sqrt(m) * sqrt(n) must equal H and W (got " + std::to_string(sm * sn) + " for " +
                         std::to_string(height) + "x" + std::to_string(width) + ")");
  }
  require_divisible(channels, lambda, "C / lambda");
  require_divisible(channels / lambda, heads, "C / lambda / heads");
  require_divisible(height, 2, "H / 2");
  require_divisible(width, 2, "W / 2");
  const std::size_t deep = deep_channels() / lambda;
  require_divisible(deep_channels(), lambda, "2C / lambda");
  require_divisible(deep, p, "2C / lambda / p");
  require_divisible(deep, heads, "2C / lambda / heads");
  require_divisible(deep_height(), sp, "H/2 / sqrt(p)");
  require_divisible(deep_width(), sp, "W/2 / sqrt(p)");
}

bool DispensedConfig::is_valid() const {
  try {
    validate();
    return true;
  } catch (const DimensionError&) {
    return false;
  }
}

// ---------------------------------------------------------------------------

PartitionMap PartitionMap::build(Policy policy, const Shape& source, std::size_t factor) {
  if (source.size() != 4) throw DimensionError("partition: expected [N,C,H,W], got " + to_string(source));
  const std::size_t batch = source[0];
  const std::size_t c = source[1];
  const std::size_t h = source[2];
  const std::size_t w = source[3];
  const std::size_t side = exact_sqrt(factor, policy == Policy::channel ? "p" : (policy == Policy::neighbour ? "m" : "n"));
  require_divisible(h, side, "partition height");
  require_divisible(w, side, "partition width");
  if (policy == Policy::channel) require_divisible(c, factor, "channel slices");
  const std::size_t bh = h / side;
  const std::size_t bw = w / side;

  PartitionMap map;
  map.policy_ = policy;
  map.source_ = source;
  map.blocks_ = {batch * factor, c, bh, bw};
  const std::size_t total = numel(source);
  map.forward_.resize(total);
  std::size_t out = 0;
  for (std::size_t nb = 0; nb < batch; ++nb) {
    for (std::size_t blk = 0; blk < factor; ++blk) {
      const std::size_t gr = blk / side;
      const std::size_t gc = blk % side;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < bh; ++y) {
          for (std::size_t x = 0; x < bw; ++x, ++out) {
            std::size_t src = 0;
            switch (policy) {
              case Policy::neighbour:
                src = ((nb * c + ch) * h + gr * bh + y) * w + gc * bw + x;
                break;
              case Policy::dilated:
                src = ((nb * c + ch) * h + gr + y * side) * w + gc + x * side;
                break;
              case Policy::channel:
                // Contiguous run of (C/p) * H * W source elements per block.
                src = nb * c * h * w + blk * (c / factor) * h * w + (ch * bh + y) * bw + x;
                break;
            }
            map.forward_[out] = src;
          }
        }
      }
    }
  }
  map.inverse_.assign(total, 0);
  for (std::size_t i = 0; i < total; ++i) map.inverse_[map.forward_[i]] = i;
  return map;
}

Tensor PartitionMap::split(const Tensor& x) const {
  if (x.shape() != source_) {
    throw DimensionError("partition split: input " + to_string(x.shape()) + " vs map " + to_string(source_));
  }
  return gather(x, blocks_, forward_);
}

Tensor PartitionMap::merge(const Tensor& blocks) const {
  if (blocks.shape() != blocks_) {
    throw DimensionError("partition merge: input " + to_string(blocks.shape()) + " vs map " + to_string(blocks_));
  }
  return gather(blocks, source_, inverse_);
}

namespace {

Shape merged_shape(const Tensor& blocks, std::size_t factor, std::string_view what) {
  if (blocks.rank() != 4) throw DimensionError("merge: expected [N*f,C,h,w], got " + to_string(blocks.shape()));
  const std::size_t side = exact_sqrt(factor, what);
  require_divisible(blocks.dim(0), factor, "merge batch");
  return {blocks.dim(0) / factor, blocks.dim(1), blocks.dim(2) * side, blocks.dim(3) * side};
}

}  // namespace

Tensor dispense(const Tensor& x, Policy policy, std::size_t factor) {
  if (factor == 1) return x;
  return PartitionMap::build(policy, x.shape(), factor).split(x);
}

Tensor undispense(const Tensor& blocks, Policy policy, std::size_t factor) {
  if (factor == 1) return blocks;
  return PartitionMap::build(policy, merged_shape(blocks, factor, policy_name(policy)), factor).merge(blocks);
}

Tensor neighbour_split(const Tensor& x, std::size_t m) { return dispense(x, Policy::neighbour, m); }
Tensor neighbour_merge(const Tensor& blocks, std::size_t m) { return undispense(blocks, Policy::neighbour, m); }
Tensor dilated_split(const Tensor& x, std::size_t n) { return dispense(x, Policy::dilated, n); }
Tensor dilated_merge(const Tensor& blocks, std::size_t n) { return undispense(blocks, Policy::dilated, n); }
Tensor channel_slice_reshape(const Tensor& x, std::size_t p) { return dispense(x, Policy::channel, p); }
Tensor channel_merge(const Tensor& blocks, std::size_t p) { return undispense(blocks, Policy::channel, p); }

// ---------------------------------------------------------------------------

DispensedMhsaParams DispensedMhsaParams::create(Policy policy, std::size_t factor, std::size_t lambda,
                                                std::size_t heads, std::size_t height, std::size_t width,
                                                std::size_t channels, CounterRng& rng) {
  require_divisible(channels, lambda, "C / lambda");
  const std::size_t side = exact_sqrt(factor, policy_name(policy));
  require_divisible(height, side, "block height");
  require_divisible(width, side, "block width");
  const std::size_t inner = channels / lambda;
  if (policy == Policy::channel) require_divisible(inner, factor, "channel slices");
  DispensedMhsaParams p;
  p.policy = policy;
  p.factor = factor;
  p.reduce = Conv2d(channels, inner, 3, rng);
  p.mhsa = MhsaParams::create(inner, heads, height / side, width / side, rng);
  p.expand = Conv2d(inner, channels, 3, rng);
  return p;
}

void DispensedMhsaParams::collect(ParamStore& store, const std::string& prefix) const {
  reduce.collect(store, prefix + ".reduce");
  mhsa.collect(store, prefix + ".mhsa");
  expand.collect(store, prefix + ".expand");
}

Tensor dispensed_mhsa(const Tensor& x, const DispensedMhsaParams& params) {
  const Tensor reduced = params.reduce(x);
  const Tensor blocks = dispense(reduced, params.policy, params.factor);
  const Tensor attended = mhsa_forward(blocks, params.mhsa);
  const Tensor merged = undispense(attended, params.policy, params.factor);
  return add(params.expand(merged), x);
}

DrtParams DrtParams::create(const DispensedConfig& config, CounterRng& rng) {
  config.validate();
  DrtParams p;
  p.neighbour = DispensedMhsaParams::create(Policy::neighbour, config.m, config.lambda, config.heads, config.height,
                                            config.width, config.channels, rng);
  p.dilated = DispensedMhsaParams::create(Policy::dilated, config.n, config.lambda, config.heads, config.height,
                                          config.width, config.channels, rng);
  p.channel = DispensedMhsaParams::create(Policy::channel, config.p, config.lambda, config.heads, config.deep_height(),
                                          config.deep_width(), config.deep_channels(), rng);
  return p;
}

void DrtParams::collect(ParamStore& store, const std::string& prefix) const {
  neighbour.collect(store, prefix + ".neighbour");
  dilated.collect(store, prefix + ".dilated");
  channel.collect(store, prefix + ".channel");
}

DrtOutput drt_block(const Tensor& f_low, const Tensor& f_bottom, const DispensedConfig& config,
                    const DrtParams& params) {
  config.validate();
  if (f_low.rank() != 4 || f_low.dim(1) != config.channels || f_low.dim(2) != config.height ||
      f_low.dim(3) != config.width) {
    throw DimensionError("drt_block: low block " + to_string(f_low.shape()) + " does not match config");
  }
  if (f_bottom.rank() != 4 || f_bottom.dim(0) != f_low.dim(0) || f_bottom.dim(1) != config.deep_channels() ||
      f_bottom.dim(2) != config.deep_height() || f_bottom.dim(3) != config.deep_width()) {
    throw DimensionError("drt_block: bottom block " + to_string(f_bottom.shape()) + " does not match config");
  }
  DrtOutput out;
  out.low = dispensed_mhsa(dispensed_mhsa(f_low, params.neighbour), params.dilated);
  out.bottom = dispensed_mhsa(f_bottom, params.channel);
  return out;
}

}  // namespace dtnet

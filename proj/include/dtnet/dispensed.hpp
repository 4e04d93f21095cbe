#ifndef DTNET_DISPENSED_HPP
#define DTNET_DISPENSED_HPP

// Dispensed multi-head self-attention: a feature block is partitioned into
// groups, attention runs inside each group with shared parameters, and the
// groups are merged back. Three partition policies:
//   neighbour - m contiguous tiles of (H/sqrt(m)) x (W/sqrt(m))
//   dilated   - n strided grids with stride sqrt(n)
//   channel   - p channel slices, each reshaped to (H/sqrt(p)) x (W/sqrt(p))
//               with the full channel count

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtnet/attention.hpp"
#include "dtnet/layers.hpp"
#include "dtnet/rng.hpp"
#include "dtnet/tensor.hpp"

namespace dtnet {

enum class Policy { neighbour, dilated, channel };

std::string_view policy_name(Policy policy);
Policy parse_policy(std::string_view name);

// Integer square root; throws DimensionError if `value` is not a perfect square.
std::size_t exact_sqrt(std::size_t value, std::string_view what);

struct DispensedConfig {
  std::size_t lambda = 2;  // bottleneck channel reduction
  std::size_t m = 16;      // neighbour tiles
  std::size_t n = 16;      // dilated groups
  std::size_t p = 4;       // channel slices
  std::size_t heads = 4;
  // Dimensions of the block seen by the neighbour and dilated stages. The
  // channel stage runs one level deeper at (H/2, W/2, 2C).
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 64;

  // Throws DimensionError when any divisibility or tiling constraint fails.
  void validate() const;
  bool is_valid() const;

  std::size_t deep_height() const { return height / 2; }
  std::size_t deep_width() const { return width / 2; }
  std::size_t deep_channels() const { return channels * 2; }
};

class PartitionMap {
 public:
  // `source` is [N, C, H, W]; `factor` is m, n or p for the policy.
  static PartitionMap build(Policy policy, const Shape& source, std::size_t factor);

  Policy policy() const { return policy_; }
  const Shape& source_shape() const { return source_; }
  const Shape& block_shape() const { return blocks_; }
  // forward()[i] is the source offset of block element i.
  std::span<const std::size_t> forward() const { return forward_; }
  // inverse()[s] is the block offset of source element s.
  std::span<const std::size_t> inverse() const { return inverse_; }

  Tensor split(const Tensor& x) const;
  Tensor merge(const Tensor& blocks) const;

 private:
  Policy policy_ = Policy::neighbour;
  Shape source_;
  Shape blocks_;
  std::vector<std::size_t> forward_;
  std::vector<std::size_t> inverse_;
};

// [N,C,H,W] -> [N*m, C, H/sqrt(m), W/sqrt(m)]; block index n*m + row*sqrt(m) + col.
Tensor neighbour_split(const Tensor& x, std::size_t m);
Tensor neighbour_merge(const Tensor& blocks, std::size_t m);
// [N,C,H,W] -> [N*n, C, H/sqrt(n), W/sqrt(n)]; group (a,b) holds pixels (a + i*d, b + j*d).
Tensor dilated_split(const Tensor& x, std::size_t n);
Tensor dilated_merge(const Tensor& blocks, std::size_t n);
// [N,C,H,W] -> [N*p, C, H/sqrt(p), W/sqrt(p)].
Tensor channel_slice_reshape(const Tensor& x, std::size_t p);
Tensor channel_merge(const Tensor& blocks, std::size_t p);

Tensor dispense(const Tensor& x, Policy policy, std::size_t factor);
Tensor undispense(const Tensor& blocks, Policy policy, std::size_t factor);

// 3x3 reduce -> partition -> shared MHSA per block -> merge -> 3x3 expand.
struct DispensedMhsaParams {
  Policy policy = Policy::neighbour;
  std::size_t factor = 1;
  Conv2d reduce;
  MhsaParams mhsa;
  Conv2d expand;

  // `height`, `width` and `channels` describe the block entering the stage.
  static DispensedMhsaParams create(Policy policy, std::size_t factor, std::size_t lambda, std::size_t heads,
                                    std::size_t height, std::size_t width, std::size_t channels, CounterRng& rng);
  void collect(ParamStore& store, const std::string& prefix) const;
};

// Shape-preserving; adds the input back after the expanding convolution.
Tensor dispensed_mhsa(const Tensor& x, const DispensedMhsaParams& params);

struct DrtParams {
  DispensedMhsaParams neighbour;
  DispensedMhsaParams dilated;
  DispensedMhsaParams channel;

  static DrtParams create(const DispensedConfig& config, CounterRng& rng);
  void collect(ParamStore& store, const std::string& prefix) const;
};

struct DrtOutput {
  Tensor low;     // [N, C, H, W] after neighbour then dilated attention
  Tensor bottom;  // [N, 2C, H/2, W/2] after channel attention
};

DrtOutput drt_block(const Tensor& f_low, const Tensor& f_bottom, const DispensedConfig& config,
                    const DrtParams& params);

}  // namespace dtnet

#endif  // DTNET_DISPENSED_HPP

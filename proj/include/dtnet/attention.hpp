#ifndef DTNET_ATTENTION_HPP
#define DTNET_ATTENTION_HPP

// Multi-head self-attention over the spatial positions of a feature block,
// with relative-distance position logits built from per-axis embedding
// tables (one row per signed row/column offset).

#include <string>
#include <vector>

#include "dtnet/layers.hpp"
#include "dtnet/rng.hpp"
#include "dtnet/tensor.hpp"

namespace dtnet {

struct MhsaParams {
  std::size_t heads = 4;
  std::size_t block_h = 0;
  std::size_t block_w = 0;
  Tensor w_q, w_k, w_v;  // [C, C], columns grouped per head
  Tensor w_o;            // [C, C], applied after head concatenation
  Tensor rel_h;          // [2*block_h - 1, C / heads]
  Tensor rel_w;          // [2*block_w - 1, C / heads]

  static MhsaParams create(std::size_t channels, std::size_t heads, std::size_t block_h, std::size_t block_w,
                           CounterRng& rng);

  std::size_t d_model() const { return w_q.dim(0); }
  std::size_t head_dim() const { return d_model() / heads; }
  void validate() const;
  void collect(ParamStore& store, const std::string& prefix) const;
};

// Debug capture of the per-head attention maps of one mhsa_forward call.
struct AttentionTrace {
  Tensor logits;   // [B, heads, T, T]
  Tensor weights;  // softmax(logits) along the last axis
};

// q: [B, heads, T, d] with T = h * w tokens in row-major order. Returns
// [B, heads, T, T] with entry (i, j) = q_i . (rel_h[dr + h - 1] + rel_w[dc + w - 1])
// where (dr, dc) is the offset of token j relative to token i.
Tensor relative_logits(const Tensor& q, const Tensor& rel_h, const Tensor& rel_w, std::size_t h, std::size_t w);

// x: [B, C, h, w] -> [B, C, h, w].
Tensor mhsa_forward(const Tensor& x, const MhsaParams& params, AttentionTrace* trace = nullptr);

}  // namespace dtnet

#endif  // DTNET_ATTENTION_HPP

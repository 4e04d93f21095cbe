#include "dtnet/attention.hpp"

#include <cmath>

#include "dtnet/ops.hpp"

namespace dtnet {

MhsaParams MhsaParams::create(std::size_t channels, std::size_t heads, std::size_t block_h, std::size_t block_w,
                              CounterRng& rng) {
  if (heads == 0 || channels % heads != 0) {
    throw DimensionError("MHSA: " + std::to_string(channels) + " channels not divisible by " +
                         std::to_string(heads) + " heads");
  }
  MhsaParams p;
  p.heads = heads;
  p.block_h = block_h;
  p.block_w = block_w;
  const double proj = 1.0 / std::sqrt(static_cast<double>(channels));
  p.w_q = uniform_tensor({channels, channels}, proj, rng);
  p.w_k = uniform_tensor({channels, channels}, proj, rng);
  p.w_v = uniform_tensor({channels, channels}, proj, rng);
  p.w_o = uniform_tensor({channels, channels}, proj, rng);
  const std::size_t d = channels / heads;
  const double pos = 1.0 / std::sqrt(static_cast<double>(d));
  p.rel_h = uniform_tensor({2 * block_h - 1, d}, pos, rng);
  p.rel_w = uniform_tensor({2 * block_w - 1, d}, pos, rng);
  return p;
}

void MhsaParams::validate() const {
  const std::size_t c = d_model();
  for (const Tensor* t : {&w_q, &w_k, &w_v, &w_o}) {
    if (t->shape() != Shape{c, c}) throw DimensionError("MHSA projection must be [C,C], got " + to_string(t->shape()));
  }
  if (heads == 0 || c % heads != 0) throw DimensionError("MHSA: channels not divisible by heads");
  if (rel_h.shape() != Shape{2 * block_h - 1, c / heads} || rel_w.shape() != Shape{2 * block_w - 1, c / heads}) {
    throw DimensionError("MHSA: relative embeddings " + to_string(rel_h.shape()) + "/" + to_string(rel_w.shape()) +
                         " do not match block " + std::to_string(block_h) + "x" + std::to_string(block_w));
  }
}

void MhsaParams::collect(ParamStore& store, const std::string& prefix) const {
  store.add(prefix + ".w_q", w_q);
  store.add(prefix + ".w_k", w_k);
  store.add(prefix + ".w_v", w_v);
  store.add(prefix + ".w_o", w_o);
  store.add(prefix + ".rel_h", rel_h);
  store.add(prefix + ".rel_w", rel_w);
}

Tensor relative_logits(const Tensor& q, const Tensor& rel_h, const Tensor& rel_w, std::size_t h, std::size_t w) {
  if (q.rank() != 4) throw DimensionError("relative_logits: q must be [B,heads,T,d], got " + to_string(q.shape()));
  const std::size_t rows = q.dim(0) * q.dim(1);
  const std::size_t t = q.dim(2);
  const std::size_t d = q.dim(3);
  if (t != h * w) throw DimensionError("relative_logits: token count does not match block size");
  const std::size_t nh = 2 * h - 1;
  const std::size_t nw = 2 * w - 1;
  if (rel_h.shape() != Shape{nh, d} || rel_w.shape() != Shape{nw, d}) {
    throw DimensionError("relative_logits: embeddings " + to_string(rel_h.shape()) + "/" + to_string(rel_w.shape()) +
                         " incompatible with q " + to_string(q.shape()));
  }
  const auto qs = q.data();
  const auto rh = rel_h.data();
  const auto rw = rel_w.data();
  // Projections of every query onto every offset embedding.
  Buffer qh(rows * t * nh, 0.0);
  Buffer qw(rows * t * nw, 0.0);
  for (std::size_t r = 0; r < rows * t; ++r) {
    const double* qi = qs.data() + r * d;
    for (std::size_t o = 0; o < nh; ++o) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += qi[k] * rh[o * d + k];
      qh[r * nh + o] = acc;
    }
    for (std::size_t o = 0; o < nw; ++o) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += qi[k] * rw[o * d + k];
      qw[r * nw + o] = acc;
    }
  }
  FlopCounter::add(static_cast<std::uint64_t>(rows) * t * (nh + nw) * d, flop_category::position);

  Buffer out(rows * t * t);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t ri = i / w;
      const std::size_t ci = i % w;
      const double* qhi = qh.data() + (r * t + i) * nh;
      const double* qwi = qw.data() + (r * t + i) * nw;
      double* dst = out.data() + (r * t + i) * t;
      for (std::size_t j = 0; j < t; ++j) {
        dst[j] = qhi[j / w + h - 1 - ri] + qwi[j % w + w - 1 - ci];
      }
    }
  }
  Tensor y({q.dim(0), q.dim(1), t, t}, std::move(out));
  record(y, {q, rel_h, rel_w}, [q, rel_h, rel_w, y, rows, t, d, h, w, nh, nw]() mutable {
    const auto g = y.grad();
    // Fold the [T,T] gradient onto offsets.
    Buffer gh(rows * t * nh, 0.0);
    Buffer gw(rows * t * nw, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < t; ++i) {
        const std::size_t ri = i / w;
        const std::size_t ci = i % w;
        const double* gi = g.data() + (r * t + i) * t;
        double* ghi = gh.data() + (r * t + i) * nh;
        double* gwi = gw.data() + (r * t + i) * nw;
        for (std::size_t j = 0; j < t; ++j) {
          ghi[j / w + h - 1 - ri] += gi[j];
          gwi[j % w + w - 1 - ci] += gi[j];
        }
      }
    }
    const auto qs = q.data();
    const auto rh = rel_h.data();
    const auto rw = rel_w.data();
    double* gq = q.requires_grad() ? q.grad_buffer().data() : nullptr;
    double* grh = rel_h.requires_grad() ? rel_h.grad_buffer().data() : nullptr;
    double* grw = rel_w.requires_grad() ? rel_w.grad_buffer().data() : nullptr;
    for (std::size_t r = 0; r < rows * t; ++r) {
      const double* qi = qs.data() + r * d;
      for (std::size_t o = 0; o < nh; ++o) {
        const double go = gh[r * nh + o];
        if (go == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
          if (gq) gq[r * d + k] += go * rh[o * d + k];
          if (grh) grh[o * d + k] += go * qi[k];
        }
      }
      for (std::size_t o = 0; o < nw; ++o) {
        const double go = gw[r * nw + o];
        if (go == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
          if (gq) gq[r * d + k] += go * rw[o * d + k];
          if (grw) grw[o * d + k] += go * qi[k];
        }
      }
    }
  });
  return y;
}

Tensor mhsa_forward(const Tensor& x, const MhsaParams& params, AttentionTrace* trace) {
  params.validate();
  if (x.rank() != 4) throw DimensionError("mhsa_forward: expected [B,C,H,W], got " + to_string(x.shape()));
  const std::size_t b = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  if (c != params.d_model()) {
    throw DimensionError("mhsa_forward: input " + to_string(x.shape()) + " has " + std::to_string(c) +
                         " channels, parameters expect " + std::to_string(params.d_model()));
  }
  if (h != params.block_h || w != params.block_w) {
    throw DimensionError("mhsa_forward: input " + to_string(x.shape()) + " does not match embedding block " +
                         std::to_string(params.block_h) + "x" + std::to_string(params.block_w));
  }
  const std::size_t t = h * w;
  const std::size_t heads = params.heads;
  const std::size_t d = c / heads;

  const Tensor tokens = permute(reshape(x, {b, c, t}), {0, 2, 1});  // [B,T,C]
  Tensor attended;
  Tensor logits;
  Tensor weights;
  {
    FlopCategory category(flop_category::attention);
    auto split_heads = [&](const Tensor& proj, std::vector<std::size_t> order) {
      return permute(reshape(proj, {b, t, heads, d}), order);
    };
    const Tensor q = split_heads(matmul(tokens, params.w_q), {0, 2, 1, 3});    // [B,h,T,d]
    const Tensor k_t = split_heads(matmul(tokens, params.w_k), {0, 2, 3, 1});  // [B,h,d,T]
    const Tensor v = split_heads(matmul(tokens, params.w_v), {0, 2, 1, 3});    // [B,h,T,d]
    const Tensor content = matmul(q, k_t);
    Tensor position;
    {
      FlopCategory pos(flop_category::position);
      position = relative_logits(q, params.rel_h, params.rel_w, h, w);
    }
    logits = mul_scalar(add(content, position), 1.0 / std::sqrt(static_cast<double>(d)));
    weights = softmax(logits, 3);
    const Tensor heads_out = matmul(weights, v);  // [B,h,T,d]
    const Tensor merged = reshape(permute(heads_out, {0, 2, 1, 3}), {b, t, c});
    attended = matmul(merged, params.w_o);
  }
  if (trace != nullptr) {
    trace->logits = logits;
    trace->weights = weights;
  }
  return reshape(permute(attended, {0, 2, 1}), {b, c, h, w});
}

}  // namespace dtnet

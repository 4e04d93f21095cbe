#include "dtnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtnet/attention.hpp"
#include "dtnet/discriminator.hpp"
#include "dtnet/dispensed.hpp"
#include "dtnet/layers.hpp"
#include "dtnet/losses.hpp"
#include "dtnet/ops.hpp"
#include "dtnet/rng.hpp"
#include "dtnet/segnet.hpp"

namespace dtnet {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult gradcheck(std::string name, const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                          const GradCheckOptions& options) {
  if (active_tape() != nullptr) throw AutogradError("gradcheck must run without an active tape");
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor l = loss();
    tape.backward(l);
  }
  for (const Tensor& t : inputs) {
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0));
  }

  GradCheckResult result;
  result.name = std::move(name);
  CounterRng rng(options.seed, CounterRng::Stream::augment);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    std::vector<std::size_t> probes(t.numel());
    for (std::size_t i = 0; i < probes.size(); ++i) probes[i] = i;
    if (options.max_entries != 0 && probes.size() > options.max_entries) {
      for (std::size_t i = 0; i < options.max_entries; ++i) {
        std::swap(probes[i], probes[i + rng.below(probes.size() - i)]);
      }
      probes.resize(options.max_entries);
    }
    auto data = t.mutable_data();
    for (std::size_t i : probes) {
      const double saved = data[i];
      data[i] = saved + options.step;
      const double up = loss().item();
      data[i] = saved - options.step;
      const double down = loss().item();
      data[i] = saved;
      double numeric = (up - down) / (2.0 * options.step);
      bool kink = false;
      double err = relative_error(analytic[k][i], numeric, options.floor);
      if (err >= options.tolerance && options.refinements > 0) {
        // Disagreeing one-sided slopes mean the stencil straddles a kink
        // (ReLU, max-pool, a ranking swap). Shrink the step there only.
        const double mid = loss().item();
        const double forward = (up - mid) / options.step;
        const double backward = (mid - down) / options.step;
        if (relative_error(forward, backward, options.floor) >= options.tolerance) {
          double h = options.step;
          for (std::size_t r = 0; r < options.refinements && err >= options.tolerance; ++r) {
            h /= 10.0;
            data[i] = saved + h;
            const double u = loss().item();
            data[i] = saved - h;
            const double d = loss().item();
            data[i] = saved;
            numeric = (u - d) / (2.0 * h);
            err = relative_error(analytic[k][i], numeric, options.floor);
          }
          ++result.kink_probes;
          kink = true;
        }
      }
      if (!kink) result.max_smooth_rel_error = std::max(result.max_smooth_rel_error, err);
      if (err > result.max_rel_error || result.probes == 0) {
        result.max_rel_error = err;
        result.worst_input = k;
        result.worst_entry = i;
        result.worst_analytic = analytic[k][i];
        result.worst_numeric = numeric;
      }
      ++result.probes;
    }
  }
  for (Tensor& t : inputs) t.zero_grad();
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

namespace {

struct Case {
  std::string name;
  std::function<Tensor()> loss;
  std::vector<Tensor> inputs;
  std::size_t max_entries = 0;
};

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed, CounterRng::Stream::init) {}

  Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(shape));
    for (double& x : v) x = rng_.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), true);
  }

  // Values bounded away from zero, for kinks and divisions.
  Tensor away_from_zero(Shape shape) {
    std::vector<double> v(numel(shape));
    for (double& x : v) x = (rng_.uniform() < 0.5 ? -1.0 : 1.0) * rng_.uniform(0.2, 1.0);
    return Tensor(std::move(shape), std::move(v), true);
  }

  Tensor probabilities(Shape shape) {
    Tensor logits = random(shape, -2.0, 2.0);
    return softmax(logits.detach(), 1);
  }

  // Scalar probe sum(x * w) with fixed random weights.
  std::function<Tensor(const Tensor&)> probe(const Shape& shape) {
    Tensor w = random(shape).detach();
    return [w](const Tensor& y) { return sum(mul(y, w)); };
  }

  CounterRng& rng() { return rng_; }

 private:
  CounterRng rng_;
};

void unary(std::vector<Case>& cases, Builder& b, std::string name, Tensor (*op)(const Tensor&), Tensor x) {
  auto probe = b.probe(x.shape());
  cases.push_back({std::move(name), [=] { return probe(op(x)); }, {x}});
}

std::vector<Case> tensor_core_cases(Builder& b) {
  std::vector<Case> c;
  {
    Tensor a = b.random({2, 3, 4}), w = b.random({2, 4, 5});
    auto probe = b.probe({2, 3, 5});
    c.push_back({"matmul_batched", [=] { return probe(matmul(a, w)); }, {a, w}});
  }
  {
    Tensor a = b.random({2, 3, 4}), w = b.random({4, 2});
    auto probe = b.probe({2, 3, 2});
    c.push_back({"matmul_shared_rhs", [=] { return probe(matmul(a, w)); }, {a, w}});
  }
  {
    Tensor x = b.random({2, 3}), y = b.random({2, 3});
    auto probe = b.probe({2, 3});
    c.push_back({"add", [=] { return probe(add(x, y)); }, {x, y}});
    c.push_back({"sub", [=] { return probe(sub(x, y)); }, {x, y}});
    c.push_back({"mul", [=] { return probe(mul(x, y)); }, {x, y}});
    Tensor d = b.away_from_zero({2, 3});
    c.push_back({"div", [=] { return probe(div(x, d)); }, {x, d}});
    c.push_back({"add_scalar", [=] { return probe(add_scalar(x, 0.7)); }, {x}});
    c.push_back({"mul_scalar", [=] { return probe(mul_scalar(x, -1.3)); }, {x}});
    c.push_back({"leaky_relu", [=] { return probe(leaky_relu(d, 0.2)); }, {d}});
  }
  unary(c, b, "neg", &neg, b.random({2, 3}));
  unary(c, b, "relu", &relu, b.away_from_zero({3, 4}));
  unary(c, b, "sigmoid", &sigmoid, b.random({3, 4}, -3.0, 3.0));
  unary(c, b, "exp", &exp, b.random({3, 4}));
  unary(c, b, "log", &log, b.random({3, 4}, 0.3, 2.0));
  unary(c, b, "square", &square, b.random({3, 4}));
  {
    Tensor x = b.random({2, 3, 4});
    c.push_back({"sum", [=] { return mul_scalar(sum(x), 1.5); }, {x}});
    c.push_back({"mean", [=] { return mul_scalar(mean(square(x)), 2.0); }, {x}});
    auto p1 = b.probe({2, 1, 4});
    c.push_back({"sum_axis", [=] { return p1(sum_axis(x, 1)); }, {x}});
    c.push_back({"l2_norm", [=] { return l2_norm(x); }, {x}});
    auto p2 = b.probe({2, 3, 4});
    c.push_back({"softmax", [=] { return p2(softmax(x, 2)); }, {x}});
    c.push_back({"softmax_mid_axis", [=] { return p2(softmax(x, 1)); }, {x}});
    auto p3 = b.probe({4, 3, 2});
    c.push_back({"permute", [=] { return p3(permute(x, {2, 1, 0})); }, {x}});
    auto p4 = b.probe({6, 4});
    c.push_back({"reshape", [=] { return p4(reshape(x, {6, 4})); }, {x}});
    auto p5 = b.probe({2, 2, 4});
    c.push_back({"slice", [=] { return p5(slice(x, 1, 1, 3)); }, {x}});
    Tensor y = b.random({2, 2, 4});
    auto p6 = b.probe({2, 5, 4});
    c.push_back({"concat", [=] { return p6(concat({x, y}, 1)); }, {x, y}});
    Tensor s = b.random({2, 1, 4});
    c.push_back({"broadcast_to", [=] { return p2(broadcast_to(s, {2, 3, 4})); }, {s}});
  }
  {
    Tensor x = b.random({2, 3, 5, 5}), w = b.random({4, 3, 3, 3}), bias = b.random({4});
    auto p1 = b.probe({2, 4, 5, 5});
    c.push_back({"conv2d_3x3", [=] { return p1(conv2d(x, w, bias, 1, 1)); }, {x, w, bias}});
    auto p2 = b.probe({2, 4, 3, 3});
    c.push_back({"conv2d_stride2", [=] { return p2(conv2d(x, w, bias, 2, 1)); }, {x, w, bias}});
    Tensor w1 = b.random({4, 3, 1, 1});
    c.push_back({"conv2d_1x1", [=] { return p1(conv2d(x, w1, Tensor(), 1, 0)); }, {x, w1}});
  }
  {
    Tensor x = b.random({2, 2, 4, 4});
    auto p1 = b.probe({2, 2, 2, 2});
    c.push_back({"max_pool2d", [=] { return p1(max_pool2d(x)); }, {x}});
    c.push_back({"avg_pool2d", [=] { return p1(avg_pool2d(x, 2)); }, {x}});
    auto p2 = b.probe({2, 2, 1, 1});
    c.push_back({"global_avg_pool", [=] { return p2(global_avg_pool(x)); }, {x}});
    auto p3 = b.probe({2, 2, 8, 8});
    c.push_back({"upsample_nearest", [=] { return p3(upsample_nearest(x, 2)); }, {x}});
    std::vector<std::size_t> order = {1, 0, 1, 0, 0, 1};
    auto p4 = b.probe({2, 3, 4, 4});
    c.push_back({"gather_channels", [=] { return p4(gather_channels(x, order)); }, {x}});
  }
  return c;
}

std::vector<Case> attention_cases(Builder& b) {
  std::vector<Case> c;
  {
    Tensor q = b.random({1, 2, 6, 3}), rh = b.random({3, 3}), rw = b.random({5, 3});
    auto probe = b.probe({1, 2, 6, 6});
    c.push_back({"relative_logits", [=] { return probe(relative_logits(q, rh, rw, 2, 3)); }, {q, rh, rw}});
  }
  {
    MhsaParams p = MhsaParams::create(4, 2, 3, 2, b.rng());
    Tensor x = b.random({2, 4, 3, 2});
    auto probe = b.probe({2, 4, 3, 2});
    c.push_back({"mhsa_forward",
                 [=] { return probe(mhsa_forward(x, p)); },
                 {x, p.w_q, p.w_k, p.w_v, p.w_o, p.rel_h, p.rel_w}});
  }
  return c;
}

std::vector<Case> dispensed_cases(Builder& b) {
  std::vector<Case> c;
  {
    Tensor x = b.random({1, 2, 4, 4});
    auto p16 = b.probe({4, 2, 2, 2});
    c.push_back({"neighbour_split", [=] { return p16(neighbour_split(x, 4)); }, {x}});
    c.push_back({"dilated_split", [=] { return p16(dilated_split(x, 4)); }, {x}});
    Tensor blocks = b.random({4, 2, 2, 2});
    auto p = b.probe({1, 2, 4, 4});
    c.push_back({"neighbour_merge", [=] { return p(neighbour_merge(blocks, 4)); }, {blocks}});
    c.push_back({"dilated_merge", [=] { return p(dilated_merge(blocks, 4)); }, {blocks}});
    Tensor xc = b.random({1, 8, 4, 4});
    auto pc = b.probe({4, 8, 2, 2});
    c.push_back({"channel_slice_reshape", [=] { return pc(channel_slice_reshape(xc, 4)); }, {xc}});
  }
  const Policy policies[] = {Policy::neighbour, Policy::dilated, Policy::channel};
  for (Policy policy : policies) {
    const std::size_t factor = 4;
    DispensedMhsaParams p = DispensedMhsaParams::create(policy, factor, 2, 2, 4, 4, 8, b.rng());
    Tensor x = b.random({1, 8, 4, 4});
    auto probe = b.probe({1, 8, 4, 4});
    ParamStore store;
    p.collect(store, "stage");
    std::vector<Tensor> inputs{x};
    for (const auto& [name, t] : store.entries()) inputs.push_back(t);
    c.push_back({"dispensed_mhsa_" + std::string(policy_name(policy)), [=] { return probe(dispensed_mhsa(x, p)); },
                 inputs, 24});
  }
  {
    DispensedConfig cfg;
    cfg.lambda = 2;
    cfg.m = 4;
    cfg.n = 4;
    cfg.p = 4;
    cfg.heads = 2;
    cfg.height = 4;
    cfg.width = 4;
    cfg.channels = 8;
    DrtParams p = DrtParams::create(cfg, b.rng());
    Tensor low = b.random({1, 8, 4, 4});
    Tensor bottom = b.random({1, 16, 2, 2});
    auto pl = b.probe({1, 8, 4, 4});
    auto pb = b.probe({1, 16, 2, 2});
    ParamStore store;
    p.collect(store, "drt");
    std::vector<Tensor> inputs{low, bottom};
    for (const auto& [name, t] : store.entries()) inputs.push_back(t);
    c.push_back({"drt_block",
                 [=] {
                   const DrtOutput out = drt_block(low, bottom, cfg, p);
                   return add(pl(out.low), pb(out.bottom));
                 },
                 inputs, 16});
  }
  return c;
}

std::vector<Case> loss_cases(Builder& b) {
  std::vector<Case> c;
  {
    Tensor p = b.probabilities({2, 3, 2, 2});
    std::vector<int> labels = {0, 1, 2, 1, 2, 0, 0, 1};
    c.push_back({"cross_entropy", [=] { return cross_entropy(p, labels); }, {p}});
  }
  {
    Tensor pi = b.probabilities({2, 2, 3, 3});
    Tensor pt = b.probabilities({2, 2, 3, 3});
    auto probe = b.probe({2, 1, 3, 3});
    c.push_back({"uncertainty_map", [=] { return probe(uncertainty_map(pi, pt)); }, {pi, pt}});
    Tensor pm = b.probabilities({2, 2, 3, 3});
    c.push_back({"multiscale_consistency_t2", [=] { return multiscale_consistency(std::vector<Tensor>{pi, pt}); },
                 {pi, pt}});
    c.push_back({"multiscale_consistency_t3",
                 [=] { return multiscale_consistency(std::vector<Tensor>{pi, pm, pt}); },
                 {pi, pm, pt}});
  }
  {
    Tensor p = b.random({2, 1, 3, 3}, 0.1, 0.9);
    std::vector<double> y(18);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 2);
    Tensor labels({2, 1, 3, 3}, y);
    c.push_back({"discriminator_loss", [=] { return discriminator_loss(p, labels); }, {p}});
  }
  for (bool gate : {false, true}) {
    DiscriminatorConfig cfg;
    cfg.feature_channels = {6, 3};
    cfg.reduction = 2;
    cfg.body_width = 4;
    cfg.body_layers = 2;
    cfg.gate_by_rank = gate;
    FeatureRankingDiscriminator d(cfg, b.rng());
    Tensor f1 = b.random({2, 6, 4, 4});
    Tensor f2 = b.random({2, 3, 8, 8});
    // A dead scoring bottleneck yields exactly tied scores; nonzero biases
    // keep the channel order away from ties, where it jumps.
    for (auto& [name, t] : d.params().entries()) {
      if (name.starts_with("rank.") && t.rank() == 1) {
        for (double& v : t.mutable_data()) v = b.rng().uniform(0.1, 0.5);
      }
    }
    std::vector<Tensor> inputs{f1, f2};
    for (const auto& [name, t] : d.params().entries()) {
      // Without gating the scores only order channels: the loss is piecewise
      // constant in the scoring weights.
      if (gate || !name.starts_with("rank.")) inputs.push_back(t);
    }
    auto probe = b.probe({2, 1, 2, 2});
    c.push_back({gate ? "discriminator_gated" : "discriminator",
                 [=] { return probe(d.forward(std::vector<Tensor>{f1, f2})); }, inputs, 12});
  }
  return c;
}

std::vector<Case> segnet_cases(Builder& b) {
  SegNetConfig cfg;
  cfg.base_channels = 4;
  cfg.depth = 3;
  cfg.scales = 2;
  cfg.height = 16;
  cfg.width = 16;
  cfg.lambda = 2;
  cfg.m = 4;
  cfg.n = 16;
  cfg.p = 4;
  cfg.heads = 2;
  SegNet net(cfg, b.rng());
  // Zero-initialised biases put units of dead regions exactly on the ReLU
  // kink, where finite differences see a one-sided slope.
  for (auto& [name, t] : net.params().entries()) {
    if (t.rank() == 1) {
      for (double& v : t.mutable_data()) v = b.rng().uniform(-0.2, 0.2);
    }
  }
  Tensor x = b.random({1, 1, 16, 16}, 0.0, 1.0);
  std::vector<int> labels(256);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i / 16 + i % 16) % 5 < 2 ? 1 : 0;
  std::vector<Tensor> inputs{x};
  for (const auto& [name, t] : net.params().entries()) inputs.push_back(t);
  return {{"segnet_source_loss",
           [=] {
             const MultiScaleOutput out = net.forward(x);
             return add(cross_entropy(out.predictions.back(), labels),
                        mul_scalar(multiscale_consistency(out.predictions), 0.1));
           },
           inputs, 6}};
}

}  // namespace

std::vector<std::string> gradcheck_modules() {
  return {"tensor-core", "attention", "dispensed-transformer", "uda-losses", "segnet", "all"};
}

std::vector<GradCheckResult> run_gradcheck_suite(std::string_view module, const GradCheckOptions& options) {
  Builder b(options.seed);
  std::vector<Case> cases;
  auto take = [&](std::vector<Case> more) {
    for (auto& m : more) cases.push_back(std::move(m));
  };
  const bool all = module == "all";
  bool known = all;
  if (all || module == "tensor-core") take(tensor_core_cases(b)), known = true;
  if (all || module == "attention") take(attention_cases(b)), known = true;
  if (all || module == "dispensed-transformer") take(dispensed_cases(b)), known = true;
  if (all || module == "uda-losses") take(loss_cases(b)), known = true;
  if (all || module == "segnet") take(segnet_cases(b)), known = true;
  if (!known) throw std::invalid_argument("unknown gradcheck module: " + std::string(module));

  std::vector<GradCheckResult> results;
  for (const Case& c : cases) {
    GradCheckOptions o = options;
    if (c.max_entries != 0) o.max_entries = o.max_entries == 0 ? c.max_entries : std::min(o.max_entries, c.max_entries);
    results.push_back(gradcheck(c.name, c.loss, c.inputs, o));
  }
  return results;
}

}  // namespace dtnet

#include "dtnet/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "dtnet/losses.hpp"
#include "dtnet/ops.hpp"

namespace dtnet {

// --- configuration ---------------------------------------------------------

const std::set<std::string, std::less<>>& TrainConfig::keys() {
  static const std::set<std::string, std::less<>> k = {
      "seed",       "image_size",   "base_channels", "depth",          "scales",      "classes",
      "lambda",     "m",            "n",             "p",              "heads",       "transformer",
      "disc_width", "disc_reduction", "gate_by_rank", "lr",            "disc_lr",     "delta",       "adv_weight",
      "batch_size", "epochs",       "adapt_epochs",  "disc_warmup",    "source_retention", "flips",
      "source_dir", "target_dir",   "checkpoint"};
  return k;
}

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
  TrainConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  const std::size_t size = kv.get_size("image_size", c.net.height);
  c.net.height = size;
  c.net.width = size;
  c.net.base_channels = kv.get_size("base_channels", c.net.base_channels);
  c.net.depth = kv.get_size("depth", c.net.depth);
  c.net.scales = kv.get_size("scales", c.net.scales);
  c.net.classes = kv.get_size("classes", c.net.classes);
  c.net.lambda = kv.get_size("lambda", c.net.lambda);
  c.net.m = kv.get_size("m", c.net.m);
  c.net.n = kv.get_size("n", c.net.n);
  c.net.p = kv.get_size("p", c.net.p);
  c.net.heads = kv.get_size("heads", c.net.heads);
  c.transformer = kv.get_bool("transformer", c.transformer);
  c.disc_width = kv.get_size("disc_width", c.disc_width);
  c.disc_reduction = kv.get_size("disc_reduction", c.disc_reduction);
  c.gate_by_rank = kv.get_bool("gate_by_rank", c.gate_by_rank);
  c.lr = kv.get_double("lr", c.lr);
  c.disc_lr = kv.get_double("disc_lr", c.disc_lr);
  c.delta = kv.get_double("delta", c.delta);
  c.adv_weight = kv.get_double("adv_weight", c.adv_weight);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.epochs = kv.get_size("epochs", c.epochs);
  c.adapt_epochs = kv.get_size("adapt_epochs", c.adapt_epochs);
  c.disc_warmup = kv.get_size("disc_warmup", c.disc_warmup);
  c.source_retention = kv.get_bool("source_retention", c.source_retention);
  c.flips = kv.get_bool("flips", c.flips);
  c.source_dir = kv.get_string("source_dir", c.source_dir);
  c.target_dir = kv.get_string("target_dir", c.target_dir);
  c.checkpoint = kv.get_string("checkpoint", c.checkpoint);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) { return from(KeyValueConfig::load(path, keys())); }

void TrainConfig::validate() const {
  net.validate();
  if (net.in_channels != 1) throw ConfigError("only single-channel images are supported");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0) || !(disc_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (delta < 0.0) throw ConfigError("delta must be non-negative");
  if (adv_weight < 0.0) throw ConfigError("adv_weight must be non-negative");
  if (disc_width == 0 || disc_reduction == 0) throw ConfigError("discriminator sizes must be positive");
}

// --- batching --------------------------------------------------------------

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const std::size_t size = data.at(indices[0]).size;
  const std::size_t plane = size * size;
  std::vector<double> pixels;
  Batch b;
  pixels.reserve(indices.size() * plane);
  b.labels.reserve(indices.size() * plane);
  for (std::size_t i : indices) {
    const Sample& s = data.at(i);
    if (s.size != size) throw DimensionError("batch mixes image sizes");
    if (s.mask.size() != plane) throw std::invalid_argument("sample " + std::to_string(i) + " has no mask");
    pixels.insert(pixels.end(), s.image.begin(), s.image.end());
    b.labels.insert(b.labels.end(), s.mask.begin(), s.mask.end());
  }
  b.images = Tensor({indices.size(), 1, size, size}, std::move(pixels));
  return b;
}

std::vector<std::size_t> DataCursor::next(std::size_t dataset_size, std::size_t batch) {
  if (dataset_size == 0) throw std::invalid_argument("cannot draw batches from an empty dataset");
  if (position == 0 || order.size() != dataset_size) {
    order.resize(dataset_size);
    for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
    for (std::size_t i = dataset_size; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    position = 0;
  }
  const std::size_t end = std::min(position + batch, dataset_size);
  std::vector<std::size_t> out(order.begin() + static_cast<std::ptrdiff_t>(position),
                               order.begin() + static_cast<std::ptrdiff_t>(end));
  position = end;
  if (position == dataset_size) {
    position = 0;
    ++epoch;
  }
  return out;
}

// --- trainer ---------------------------------------------------------------

namespace {

DiscriminatorConfig discriminator_config(const TrainConfig& c) {
  DiscriminatorConfig d;
  for (std::size_t i = 0; i < c.net.scales; ++i) d.feature_channels.push_back(c.net.level_channels(c.net.feature_level(i)));
  d.reduction = c.disc_reduction;
  d.body_width = c.disc_width;
  d.gate_by_rank = c.gate_by_rank;
  return d;
}

void set_requires_grad(ParamStore& store, bool value) {
  for (auto& [name, t] : store.entries()) t.set_requires_grad(value);
}

Tensor domain_labels(const Tensor& p, double value) { return Tensor::full(p.shape(), value); }

std::vector<double> as_doubles(std::span<const std::size_t> v) { return {v.begin(), v.end()}; }

}  // namespace

Trainer::Trainer(TrainConfig config)
    : config_((config.validate(), std::move(config))),
      init_(config_.seed, CounterRng::Stream::init),
      segnet_(config_.net, init_),
      disc_(discriminator_config(config_), init_),
      seg_opt_(segnet_.params(), AdamOptions{.lr = config_.lr}),
      disc_opt_(disc_.params(), AdamOptions{.lr = config_.disc_lr}) {
  const CounterRng shuffle(config_.seed, CounterRng::Stream::shuffle);
  source_cursor_.rng = shuffle.substream(0);
  target_cursor_.rng = shuffle.substream(1);
  retain_cursor_.rng = shuffle.substream(2);
  augment_rng_ = CounterRng(config_.seed, CounterRng::Stream::augment);
  segnet_.set_transformer_enabled(config_.transformer);
}

Batch Trainer::next_batch(const Dataset& data, DataCursor& cursor) {
  const auto idx = cursor.next(data.size(), config_.batch_size);
  return augment(make_batch(data, idx));
}

Batch Trainer::augment(Batch batch) {
  if (!config_.flips) return batch;
  const std::size_t n = batch.images.dim(0);
  const std::size_t s = batch.images.dim(2);
  std::vector<double> px(batch.images.data().begin(), batch.images.data().end());
  for (std::size_t b = 0; b < n; ++b) {
    const bool flip_x = augment_rng_.uniform() < 0.5;
    const bool flip_y = augment_rng_.uniform() < 0.5;
    if (!flip_x && !flip_y) continue;
    std::vector<double> img(px.begin() + static_cast<std::ptrdiff_t>(b * s * s),
                            px.begin() + static_cast<std::ptrdiff_t>((b + 1) * s * s));
    std::vector<int> lab(batch.labels.begin() + static_cast<std::ptrdiff_t>(b * s * s),
                         batch.labels.begin() + static_cast<std::ptrdiff_t>((b + 1) * s * s));
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const std::size_t sy = flip_y ? s - 1 - y : y;
        const std::size_t sx = flip_x ? s - 1 - x : x;
        px[b * s * s + y * s + x] = img[sy * s + sx];
        batch.labels[b * s * s + y * s + x] = lab[sy * s + sx];
      }
    }
  }
  batch.images = Tensor(batch.images.shape(), std::move(px));
  return batch;
}

Trainer::SourceLoss Trainer::source_objective(const Batch& batch) const {
  const MultiScaleOutput out = segnet_.forward(batch.images);
  SourceLoss loss;
  const Tensor ce = cross_entropy(out.predictions.back(), batch.labels);
  loss.ce = ce.item();
  if (out.predictions.size() >= 2) {
    const Tensor mc = multiscale_consistency(out.predictions);
    loss.mc = mc.item();
    loss.total = config_.delta == 0.0 ? ce : add(ce, mul_scalar(mc, config_.delta));
  } else {
    loss.total = ce;
  }
  return loss;
}

double Trainer::source_step(const Dataset& source) {
  const Batch batch = next_batch(source, source_cursor_);
  Tape tape;
  TapeScope scope(tape);
  seg_opt_.zero_grad();
  const SourceLoss loss = source_objective(batch);
  tape.backward(loss.total);
  seg_opt_.step();
  history_.source_ce.push_back(loss.ce);
  history_.source_mc.push_back(loss.mc);
  history_.source_total.push_back(loss.total.item());
  return loss.total.item();
}

double Trainer::train_source_epoch(const Dataset& source) {
  const std::uint64_t start = source_cursor_.epoch;
  double total = 0.0;
  std::size_t steps = 0;
  while (source_cursor_.epoch == start) {
    total += source_step(source);
    ++steps;
  }
  return total / static_cast<double>(steps);
}

std::vector<Tensor> Trainer::features(const Tensor& images) const {
  std::vector<Tensor> f = segnet_.forward(images).features;
  for (Tensor& t : f) t = t.detach();
  return f;
}

double Trainer::discriminator_step(const Dataset& source, const Dataset& target) {
  const Batch src = next_batch(source, retain_cursor_);
  const Batch tgt = next_batch(target, target_cursor_);
  // No tape is active while extracting features, so the segmenter records
  // nothing and receives no gradient.
  const auto fs = features(src.images);
  const auto ft = features(tgt.images);
  Tape tape;
  TapeScope scope(tape);
  disc_opt_.zero_grad();
  const Tensor ps = disc_.forward(fs);
  const Tensor pt = disc_.forward(ft);
  const Tensor loss =
      mul_scalar(add(discriminator_loss(ps, domain_labels(ps, 1.0)), discriminator_loss(pt, domain_labels(pt, 0.0))), 0.5);
  tape.backward(loss);
  disc_opt_.step();
  history_.disc_dis.push_back(loss.item());
  return loss.item();
}

double Trainer::adversarial_step(const Dataset& target) { return adversarial_phase(next_batch(target, target_cursor_)); }

double Trainer::adversarial_phase(const Batch& tgt) {
  set_requires_grad(disc_.params(), false);
  Tape tape;
  TapeScope scope(tape);
  seg_opt_.zero_grad();
  const Tensor p = disc_.forward(segnet_.forward(tgt.images).features);
  const Tensor loss = discriminator_loss(p, domain_labels(p, 1.0));
  tape.backward(config_.adv_weight == 1.0 ? loss : mul_scalar(loss, config_.adv_weight));
  seg_opt_.step();
  set_requires_grad(disc_.params(), true);
  history_.target_dis.push_back(loss.item());
  return loss.item();
}

AdaptLosses Trainer::adapt_step(const Dataset& source, const Dataset& target) {
  AdaptLosses out;
  const Batch tgt = next_batch(target, target_cursor_);
  const Batch src = next_batch(source, retain_cursor_);

  // Phase A: discriminator frozen, target features pushed toward "source".
  out.target = adversarial_phase(tgt);

  // Phase B: segmenter frozen, true domain labels.
  {
    const auto fs = features(src.images);
    const auto ft = features(tgt.images);
    Tape tape;
    TapeScope scope(tape);
    disc_opt_.zero_grad();
    const Tensor ps = disc_.forward(fs);
    const Tensor pt = disc_.forward(ft);
    const Tensor loss = mul_scalar(
        add(discriminator_loss(ps, domain_labels(ps, 1.0)), discriminator_loss(pt, domain_labels(pt, 0.0))), 0.5);
    tape.backward(loss);
    disc_opt_.step();
    out.discriminator = loss.item();
    history_.disc_dis.push_back(out.discriminator);
  }

  // Phase C: retain source accuracy.
  if (config_.source_retention) {
    Tape tape;
    TapeScope scope(tape);
    seg_opt_.zero_grad();
    const SourceLoss loss = source_objective(src);
    tape.backward(loss.total);
    seg_opt_.step();
    out.retain = loss.total.item();
    history_.retain_ce.push_back(loss.ce);
    history_.retain_mc.push_back(loss.mc);
  }
  return out;
}

void Trainer::adapt_epoch(const Dataset& source, const Dataset& target) {
  const std::uint64_t start = target_cursor_.epoch;
  while (target_cursor_.epoch == start) adapt_step(source, target);
}

std::vector<std::vector<int>> Trainer::predict(const Dataset& data) const {
  std::vector<std::vector<int>> out;
  const std::size_t k = config_.net.classes;
  for (std::size_t start = 0; start < data.size(); start += config_.batch_size) {
    const std::size_t end = std::min(start + config_.batch_size, data.size());
    const std::size_t plane = data[start].size * data[start].size;
    std::vector<double> px;
    for (std::size_t i = start; i < end; ++i) px.insert(px.end(), data[i].image.begin(), data[i].image.end());
    const Tensor x({end - start, 1, data[start].size, data[start].size}, std::move(px));
    const Tensor p = segnet_.forward(x).predictions.back();
    for (std::size_t b = 0; b < end - start; ++b) {
      std::vector<int> mask(plane);
      for (std::size_t j = 0; j < plane; ++j) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
          if (p[(b * k + c) * plane + j] > p[(b * k + best) * plane + j]) best = c;
        }
        mask[j] = static_cast<int>(best);
      }
      out.push_back(std::move(mask));
    }
  }
  return out;
}

MetricsReport Trainer::evaluate(const Dataset& data, const std::vector<std::string>& ids) const {
  const auto preds = predict(data);
  MetricsReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<int> fg(preds[i].size());
    for (std::size_t j = 0; j < fg.size(); ++j) fg[j] = preds[i][j] != 0 ? 1 : 0;
    std::vector<int> gt(data[i].mask.size());
    for (std::size_t j = 0; j < gt.size(); ++j) gt[j] = data[i].mask[j] != 0 ? 1 : 0;
    report.add(i < ids.size() ? ids[i] : std::to_string(i), fg, gt, data[i].size, data[i].size);
  }
  return report;
}

double Trainer::discriminator_accuracy(const Dataset& source, const Dataset& target) const {
  std::size_t correct = 0;
  auto score = [&](const Dataset& data, bool is_source) {
    for (std::size_t start = 0; start < data.size(); start += config_.batch_size) {
      const std::size_t end = std::min(start + config_.batch_size, data.size());
      std::vector<double> px;
      for (std::size_t i = start; i < end; ++i) px.insert(px.end(), data[i].image.begin(), data[i].image.end());
      const Tensor x({end - start, 1, data[start].size, data[start].size}, std::move(px));
      const Tensor p = disc_.forward(segnet_.forward(x).features);
      const std::size_t per = p.numel() / (end - start);
      for (std::size_t b = 0; b < end - start; ++b) {
        double m = 0.0;
        for (std::size_t j = 0; j < per; ++j) m += p[b * per + j];
        m /= static_cast<double>(per);
        if ((m > 0.5) == is_source) ++correct;
      }
    }
  };
  score(source, true);
  score(target, false);
  return static_cast<double>(correct) / static_cast<double>(source.size() + target.size());
}

// --- persistence -----------------------------------------------------------

namespace {

void put(std::vector<NamedTensor>& out, std::string name, std::vector<double> values) {
  if (values.empty()) return;
  Shape shape{values.size()};
  out.push_back({std::move(name), std::move(shape), std::move(values)});
}

void put_scalar(std::vector<NamedTensor>& out, std::string name, double v) { out.push_back({std::move(name), {1}, {v}}); }

std::vector<double> get(const std::vector<NamedTensor>& tensors, std::string_view name) {
  const NamedTensor* t = find_tensor(tensors, name);
  return t == nullptr ? std::vector<double>{} : t->data;
}

double get_scalar(const std::vector<NamedTensor>& tensors, std::string_view name) {
  const NamedTensor* t = find_tensor(tensors, name);
  if (t == nullptr || t->data.size() != 1) throw CheckpointError("checkpoint lacks '" + std::string(name) + "'");
  return t->data[0];
}

void put_u64(std::vector<NamedTensor>& out, const std::string& name, std::uint64_t v) {
  out.push_back({name, {2}, {static_cast<double>(v >> 32), static_cast<double>(v & 0xffffffffULL)}});
}

std::uint64_t get_u64(const std::vector<NamedTensor>& tensors, std::string_view name) {
  const NamedTensor* t = find_tensor(tensors, name);
  if (t == nullptr || t->data.size() != 2) throw CheckpointError("checkpoint lacks '" + std::string(name) + "'");
  return (static_cast<std::uint64_t>(t->data[0]) << 32) | static_cast<std::uint64_t>(t->data[1]);
}

void put_cursor(std::vector<NamedTensor>& out, const std::string& name, const DataCursor& c) {
  put(out, name + ".order", as_doubles(c.order));
  put_scalar(out, name + ".position", static_cast<double>(c.position));
  put_u64(out, name + ".epoch", c.epoch);
  put_u64(out, name + ".rng", c.rng.counter());
}

void get_cursor(const std::vector<NamedTensor>& tensors, const std::string& name, DataCursor& c) {
  const auto order = get(tensors, name + ".order");
  c.order.assign(order.begin(), order.end());
  std::transform(order.begin(), order.end(), c.order.begin(), [](double v) { return static_cast<std::size_t>(v); });
  c.position = static_cast<std::size_t>(get_scalar(tensors, name + ".position"));
  c.epoch = get_u64(tensors, name + ".epoch");
  c.rng.set_counter(get_u64(tensors, name + ".rng"));
}

// Values that fix the parameter layout; a checkpoint only loads into a
// trainer whose configuration agrees on all of them.
std::vector<std::pair<std::string, double>> layout(const TrainConfig& c) {
  return {{"image_size", static_cast<double>(c.net.height)},
          {"base_channels", static_cast<double>(c.net.base_channels)},
          {"depth", static_cast<double>(c.net.depth)},
          {"scales", static_cast<double>(c.net.scales)},
          {"classes", static_cast<double>(c.net.classes)},
          {"lambda", static_cast<double>(c.net.lambda)},
          {"m", static_cast<double>(c.net.m)},
          {"n", static_cast<double>(c.net.n)},
          {"p", static_cast<double>(c.net.p)},
          {"heads", static_cast<double>(c.net.heads)},
          {"disc_width", static_cast<double>(c.disc_width)},
          {"disc_reduction", static_cast<double>(c.disc_reduction)},
          {"transformer", c.transformer ? 1.0 : 0.0},
          {"gate_by_rank", c.gate_by_rank ? 1.0 : 0.0}};
}

}  // namespace

TrainConfig TrainConfig::from_state(const std::vector<NamedTensor>& tensors) {
  TrainConfig c;
  auto size = [&](const char* key) { return static_cast<std::size_t>(get_scalar(tensors, std::string("config.") + key)); };
  c.seed = get_u64(tensors, "config.seed");
  c.net.height = c.net.width = size("image_size");
  c.net.base_channels = size("base_channels");
  c.net.depth = size("depth");
  c.net.scales = size("scales");
  c.net.classes = size("classes");
  c.net.lambda = size("lambda");
  c.net.m = size("m");
  c.net.n = size("n");
  c.net.p = size("p");
  c.net.heads = size("heads");
  c.disc_width = size("disc_width");
  c.disc_reduction = size("disc_reduction");
  c.transformer = size("transformer") != 0;
  c.gate_by_rank = size("gate_by_rank") != 0;
  c.validate();
  return c;
}

std::vector<NamedTensor> Trainer::state() const {
  std::vector<NamedTensor> out = snapshot(segnet_.params(), "seg.");
  for (auto& t : snapshot(disc_.params(), "disc.")) out.push_back(std::move(t));
  for (auto& t : seg_opt_.state("opt.seg.")) out.push_back(std::move(t));
  for (auto& t : disc_opt_.state("opt.disc.")) out.push_back(std::move(t));
  put_cursor(out, "cursor.source", source_cursor_);
  put_cursor(out, "cursor.target", target_cursor_);
  put_cursor(out, "cursor.retain", retain_cursor_);
  put_u64(out, "rng.augment", augment_rng_.counter());
  put_u64(out, "config.seed", config_.seed);
  for (const auto& [key, value] : layout(config_)) put_scalar(out, "config." + key, value);
  put(out, "history.source_ce", history_.source_ce);
  put(out, "history.source_mc", history_.source_mc);
  put(out, "history.source_total", history_.source_total);
  put(out, "history.target_dis", history_.target_dis);
  put(out, "history.disc_dis", history_.disc_dis);
  put(out, "history.retain_ce", history_.retain_ce);
  put(out, "history.retain_mc", history_.retain_mc);
  return out;
}

void Trainer::load_state(const std::vector<NamedTensor>& tensors) {
  for (const auto& [key, value] : layout(config_)) {
    if (get_scalar(tensors, "config." + key) != value) {
      throw CheckpointError("checkpoint was written with a different " + key);
    }
  }
  restore(segnet_.params(), tensors, "seg.");
  restore(disc_.params(), tensors, "disc.");
  seg_opt_.load_state(tensors, "opt.seg.");
  disc_opt_.load_state(tensors, "opt.disc.");
  get_cursor(tensors, "cursor.source", source_cursor_);
  get_cursor(tensors, "cursor.target", target_cursor_);
  get_cursor(tensors, "cursor.retain", retain_cursor_);
  augment_rng_.set_counter(get_u64(tensors, "rng.augment"));
  history_.source_ce = get(tensors, "history.source_ce");
  history_.source_mc = get(tensors, "history.source_mc");
  history_.source_total = get(tensors, "history.source_total");
  history_.target_dis = get(tensors, "history.target_dis");
  history_.disc_dis = get(tensors, "history.disc_dis");
  history_.retain_ce = get(tensors, "history.retain_ce");
  history_.retain_mc = get(tensors, "history.retain_mc");
}

void Trainer::save(const std::filesystem::path& path) const { save_checkpoint(path, state()); }

void Trainer::load(const std::filesystem::path& path) { load_state(load_checkpoint(path)); }

}  // namespace dtnet

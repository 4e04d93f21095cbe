#ifndef DTNET_TRAINER_HPP
#define DTNET_TRAINER_HPP

// Source training and adversarial adaptation of the segmenter.
//
// Source objective:  L_source = L_ce + delta * L_mc.
// Each adaptation iteration runs three phases:
//   A  segmenter on a target batch against the frozen discriminator, with the
//      domain label inverted to "source";
//   B  discriminator on detached features of both batches with true labels
//      (source = 1, target = 0);
//   C  one L_source step on a source batch (optional, keeps source accuracy).

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "dtnet/checkpoint.hpp"
#include "dtnet/config.hpp"
#include "dtnet/discriminator.hpp"
#include "dtnet/metrics.hpp"
#include "dtnet/optim.hpp"
#include "dtnet/rng.hpp"
#include "dtnet/segnet.hpp"
#include "dtnet/synthetic.hpp"

namespace dtnet {

struct TrainConfig {
  std::uint64_t seed = 1;
  SegNetConfig net;
  std::size_t disc_width = 32;
  std::size_t disc_reduction = 4;
  bool gate_by_rank = false;
  bool transformer = true;

  double lr = 1e-3;
  double disc_lr = 1e-3;
  double delta = 0.1;
  double adv_weight = 0.002;       // scales L_target in phase A; near 1 the segmenter collapses
  std::size_t batch_size = 4;
  std::size_t epochs = 200;        // source epochs
  std::size_t adapt_epochs = 20;   // passes over the target split
  std::size_t disc_warmup = 0;     // discriminator-only steps before adapting
  bool source_retention = true;    // phase C
  bool flips = false;

  std::string source_dir;
  std::string target_dir;
  std::string checkpoint = "dtnet.ckpt";

  static const std::set<std::string, std::less<>>& keys();
  static TrainConfig from(const KeyValueConfig& kv);
  static TrainConfig load(const std::string& path);
  // Architecture recorded in a trainer checkpoint; training knobs keep their
  // defaults.
  static TrainConfig from_state(const std::vector<NamedTensor>& tensors);
  void validate() const;
};

struct Batch {
  Tensor images;            // [B,1,H,W]
  std::vector<int> labels;  // B*H*W
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

// Walks a dataset in shuffled epochs; the final batch of an epoch may be short.
struct DataCursor {
  CounterRng rng;
  std::vector<std::size_t> order;
  std::size_t position = 0;
  std::uint64_t epoch = 0;  // completed passes

  std::vector<std::size_t> next(std::size_t dataset_size, std::size_t batch);
};

struct LossHistory {
  std::vector<double> source_ce;
  std::vector<double> source_mc;
  std::vector<double> source_total;
  std::vector<double> target_dis;  // phase A
  std::vector<double> disc_dis;    // phase B
  std::vector<double> retain_ce;   // phase C
  std::vector<double> retain_mc;

  bool operator==(const LossHistory&) const = default;
};

struct AdaptLosses {
  double target = 0.0;
  double discriminator = 0.0;
  double retain = 0.0;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  // One L_source step on the next source batch. Returns the loss.
  double source_step(const Dataset& source);
  // Steps until the source cursor completes its current pass.
  double train_source_epoch(const Dataset& source);

  AdaptLosses adapt_step(const Dataset& source, const Dataset& target);
  void adapt_epoch(const Dataset& source, const Dataset& target);
  // Phase A alone on the next target batch. Returns the unweighted loss.
  double adversarial_step(const Dataset& target);
  // Phase B alone; used to bring the discriminator up before adapting.
  double discriminator_step(const Dataset& source, const Dataset& target);

  // Hard labels (argmax over classes) for each sample.
  std::vector<std::vector<int>> predict(const Dataset& data) const;
  MetricsReport evaluate(const Dataset& data, const std::vector<std::string>& ids = {}) const;
  // Share of images whose mean discriminator output lands on the correct side
  // of 0.5 (source = 1).
  double discriminator_accuracy(const Dataset& source, const Dataset& target) const;

  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  const TrainConfig& config() const { return config_; }
  SegNet& segmenter() { return segnet_; }
  const SegNet& segmenter() const { return segnet_; }
  FeatureRankingDiscriminator& discriminator() { return disc_; }
  const FeatureRankingDiscriminator& discriminator() const { return disc_; }
  const LossHistory& history() const { return history_; }
  std::uint64_t source_epochs() const { return source_cursor_.epoch; }
  std::uint64_t target_epochs() const { return target_cursor_.epoch; }

 private:
  struct SourceLoss {
    Tensor total;
    double ce = 0.0;
    double mc = 0.0;
  };
  SourceLoss source_objective(const Batch& batch) const;
  double adversarial_phase(const Batch& target);
  Batch next_batch(const Dataset& data, DataCursor& cursor);
  Batch augment(Batch batch);
  std::vector<Tensor> features(const Tensor& images) const;

  TrainConfig config_;
  CounterRng init_;
  SegNet segnet_;
  FeatureRankingDiscriminator disc_;
  Adam seg_opt_;
  Adam disc_opt_;
  DataCursor source_cursor_;
  DataCursor target_cursor_;
  DataCursor retain_cursor_;
  CounterRng augment_rng_;
  LossHistory history_;
};

}  // namespace dtnet

#endif  // DTNET_TRAINER_HPP

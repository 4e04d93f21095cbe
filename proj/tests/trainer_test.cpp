#include <gtest/gtest.h>

#include <filesystem>

#include "dtnet/losses.hpp"
#include "dtnet/trainer.hpp"

using namespace dtnet;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.net.base_channels = 8;
  c.net.height = c.net.width = 32;
  c.net.m = 4;
  c.net.n = 16;
  c.net.heads = 2;
  c.disc_width = 8;
  c.batch_size = 4;
  return c;
}

Dataset domain(std::uint64_t seed, std::size_t count, bool target = false) {
  SyntheticDomainSpec s = target ? SyntheticDomainSpec::default_target(seed) : SyntheticDomainSpec{};
  s.size = 32;
  s.seed = seed;
  return generate_domain(s, count);
}

std::vector<std::vector<double>> values(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : store.entries()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST(DataCursor, VisitsEveryIndexOncePerEpoch) {
  DataCursor c;
  c.rng = CounterRng(1, CounterRng::Stream::shuffle);
  std::vector<int> seen(10, 0);
  std::size_t batches = 0;
  while (c.epoch == 0) {
    for (std::size_t i : c.next(10, 4)) ++seen[i];
    ++batches;
  }
  EXPECT_EQ(batches, 3u);
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Trainer, ZeroDeltaMatchesCrossEntropyOnlyLoop) {
  TrainConfig cfg = small_config(3);
  cfg.delta = 0.0;
  const Dataset data = domain(3, 10);
  Trainer trainer(cfg);
  for (int i = 0; i < 3; ++i) trainer.source_step(data);

  CounterRng init(cfg.seed, CounterRng::Stream::init);
  SegNet net(cfg.net, init);
  Adam opt(net.params(), AdamOptions{.lr = cfg.lr});
  DataCursor cursor;
  cursor.rng = CounterRng(cfg.seed, CounterRng::Stream::shuffle).substream(0);
  for (int i = 0; i < 3; ++i) {
    const Batch b = make_batch(data, cursor.next(data.size(), cfg.batch_size));
    Tape tape;
    TapeScope scope(tape);
    opt.zero_grad();
    const Tensor loss = cross_entropy(net.forward(b.images).predictions.back(), b.labels);
    tape.backward(loss);
    opt.step();
    EXPECT_EQ(loss.item(), trainer.history().source_total[i]);
  }
  EXPECT_EQ(values(net.params()), values(trainer.segmenter().params()));
}

TEST(Trainer, AdversarialPhaseLeavesDiscriminatorUntouched) {
  Trainer t(small_config(4));
  const Dataset target = domain(4, 8, true);
  const auto disc_before = values(t.discriminator().params());
  const auto seg_before = values(t.segmenter().params());
  t.adversarial_step(target);
  EXPECT_EQ(values(t.discriminator().params()), disc_before);
  EXPECT_NE(values(t.segmenter().params()), seg_before);
  for (const auto& [name, p] : t.discriminator().params().entries()) {
    for (double g : p.grad()) ASSERT_EQ(g, 0.0) << name;
  }
}

TEST(Trainer, DiscriminatorPhaseLeavesSegmenterUntouched) {
  Trainer t(small_config(5));
  const Dataset source = domain(5, 8), target = domain(5, 8, true);
  const auto disc_before = values(t.discriminator().params());
  const auto seg_before = values(t.segmenter().params());
  t.discriminator_step(source, target);
  EXPECT_EQ(values(t.segmenter().params()), seg_before);
  EXPECT_NE(values(t.discriminator().params()), disc_before);
}

TEST(Trainer, MidEpochCheckpointReproducesNextStep) {
  const Dataset source = domain(6, 10), target = domain(6, 10, true);
  const auto path = std::filesystem::temp_directory_path() / "dtnet_trainer_test.ckpt";
  TrainConfig cfg = small_config(6);
  cfg.flips = true;
  Trainer a(cfg);
  a.source_step(source);
  a.source_step(source);
  a.adapt_step(source, target);
  a.save(path);
  const double next_source = a.source_step(source);
  const AdaptLosses next_adapt = a.adapt_step(source, target);

  Trainer b(cfg);
  b.load(path);
  EXPECT_EQ(b.source_step(source), next_source);
  const AdaptLosses again = b.adapt_step(source, target);
  EXPECT_EQ(again.target, next_adapt.target);
  EXPECT_EQ(again.discriminator, next_adapt.discriminator);
  EXPECT_EQ(again.retain, next_adapt.retain);
  EXPECT_EQ(values(a.segmenter().params()), values(b.segmenter().params()));
  std::filesystem::remove(path);
}

TEST(Trainer, CheckpointRejectsDifferentArchitecture) {
  const auto path = std::filesystem::temp_directory_path() / "dtnet_trainer_arch.ckpt";
  Trainer(small_config(7)).save(path);
  TrainConfig other = small_config(7);
  other.net.base_channels = 4;
  Trainer t(other);
  EXPECT_THROW(t.load(path), CheckpointError);
  EXPECT_EQ(TrainConfig::from_state(load_checkpoint(path)).net.base_channels, 8u);
  std::filesystem::remove(path);
}

TEST(Trainer, TwoRunsAreIdentical) {
  const Dataset source = domain(8, 8), target = domain(8, 8, true);
  auto run = [&] {
    Trainer t(small_config(8));
    t.train_source_epoch(source);
    t.discriminator_step(source, target);
    t.adapt_epoch(source, target);
    return t.history();
  };
  const LossHistory first = run();
  EXPECT_FALSE(first.target_dis.empty());
  EXPECT_EQ(first, run());
}

class SourceTrainingSeed : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(SourceTrainingSeed, LossHalvesOverTwentyEpochs) {
  const Dataset data = domain(GetParam(), 32);
  Trainer t(small_config(GetParam()));
  const double first = t.train_source_epoch(data);
  double last = first;
  for (int e = 1; e < 20; ++e) last = t.train_source_epoch(data);
  EXPECT_LT(last, 0.5 * first);
}

INSTANTIATE_TEST_SUITE_P(Seeds, SourceTrainingSeed, ::testing::Values(1u, 2u, 3u));

TEST(TrainConfig, ParsesKeysAndRejectsUnknown) {
  const auto kv = KeyValueConfig::parse("seed=9\nimage_size=32\nbase_channels=8\nm=4\nn=16\nheads=2\n",
                                        TrainConfig::keys());
  const TrainConfig c = TrainConfig::from(kv);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.net.height, 32u);
  EXPECT_EQ(c.net.width, 32u);
  EXPECT_THROW(KeyValueConfig::parse("bogus=1\n", TrainConfig::keys()), ConfigError);
  EXPECT_THROW(TrainConfig::from(KeyValueConfig::parse("image_size=30\n", TrainConfig::keys())).validate(),
               std::exception);
}

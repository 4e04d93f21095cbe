#include "dtnet/experiment.hpp"

#include <chrono>
#include <cstdio>

namespace dtnet {

ExperimentConfig default_experiment(std::uint64_t seed) {
  ExperimentConfig e;
  e.train.seed = seed;
  e.train.epochs = 20;
  e.train.adapt_epochs = 10;
  e.train.disc_warmup = 16;
  e.source.seed = seed;
  e.source.size = e.train.net.height;
  e.target = SyntheticDomainSpec::default_target(seed + 1000);
  e.target.size = e.train.net.height;
  return e;
}

namespace {

SyntheticDomainSpec with_seed(SyntheticDomainSpec spec, std::uint64_t seed) {
  spec.seed = seed;
  return spec;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  // Train and test splits use disjoint data seeds.
  const Dataset source_train = generate_domain(config.source, config.train_images);
  const Dataset source_test = generate_domain(with_seed(config.source, config.source.seed + 500), config.test_images);
  const Dataset target_train = generate_domain(config.target, config.train_images);
  const Dataset target_test = generate_domain(with_seed(config.target, config.target.seed + 500), config.test_images);

  ExperimentResult r;
  r.seed = config.train.seed;
  Trainer trainer(config.train);
  for (std::size_t e = 0; e < config.train.epochs; ++e) {
    r.source_loss.push_back(trainer.train_source_epoch(source_train));
    char buf[96];
    std::snprintf(buf, sizeof buf, "source epoch %zu loss %.4f", e + 1, r.source_loss.back());
    say(buf);
  }
  r.source_dice_before = trainer.evaluate(source_test).dice_summary().mean;
  r.target_dice_before = trainer.evaluate(target_test).dice_summary().mean;

  for (std::size_t s = 0; s < config.train.disc_warmup; ++s) trainer.discriminator_step(source_train, target_train);
  r.disc_accuracy_before = trainer.discriminator_accuracy(source_test, target_test);
  for (std::size_t e = 0; e < config.train.adapt_epochs; ++e) {
    trainer.adapt_epoch(source_train, target_train);
    char buf[128];
    std::snprintf(buf, sizeof buf, "adapt epoch %zu L_target %.4f L_dis %.4f", e + 1,
                  trainer.history().target_dis.back(), trainer.history().disc_dis.back());
    say(buf);
  }
  r.source_dice_after = trainer.evaluate(source_test).dice_summary().mean;
  r.target_dice_after = trainer.evaluate(target_test).dice_summary().mean;
  r.disc_accuracy_after = trainer.discriminator_accuracy(source_test, target_test);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace dtnet

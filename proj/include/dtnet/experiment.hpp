#ifndef DTNET_EXPERIMENT_HPP
#define DTNET_EXPERIMENT_HPP

// End-to-end adaptation run on the synthetic two-domain task: train on
// labelled source data, score the source-only model on both domains, adapt
// with unlabelled target data, and score again.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dtnet/synthetic.hpp"
#include "dtnet/trainer.hpp"

namespace dtnet {

struct ExperimentConfig {
  TrainConfig train;
  SyntheticDomainSpec source;
  SyntheticDomainSpec target;
  std::size_t train_images = 32;
  std::size_t test_images = 32;
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  double source_dice_before = 0.0;
  double target_dice_before = 0.0;
  double source_dice_after = 0.0;
  double target_dice_after = 0.0;
  double disc_accuracy_before = 0.0;  // after discriminator warm-up
  double disc_accuracy_after = 0.0;
  std::vector<double> source_loss;  // per source epoch
  double seconds = 0.0;
};

// The experiment settings used by the acceptance run.
ExperimentConfig default_experiment(std::uint64_t seed);

using ProgressFn = std::function<void(const std::string&)>;

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

}  // namespace dtnet

#endif  // DTNET_EXPERIMENT_HPP

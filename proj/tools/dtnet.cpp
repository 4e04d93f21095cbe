#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

#include "dtnet/config.hpp"
#include "dtnet/cost_model.hpp"
#include "dtnet/dataset.hpp"
#include "dtnet/gradcheck.hpp"
#include "dtnet/synthetic.hpp"
#include "dtnet/trainer.hpp"

namespace {

using namespace dtnet;

const std::set<std::string, std::less<>>& synth_keys() {
  static const std::set<std::string, std::less<>> k = {
      "domain", "size",  "count", "min_blobs", "max_blobs",         "min_area",          "max_area", "foreground",
      "background", "gain", "bias", "gamma",   "noise", "texture_amplitude", "texture_frequency", "seed"};
  return k;
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
  const KeyValueConfig kv = KeyValueConfig::load(spec_path, synth_keys());
  const std::uint64_t seed = kv.get_u64("seed", 1);
  const Domain domain = parse_domain(kv.get_string("domain", "source"));
  SyntheticDomainSpec s = domain == Domain::target ? SyntheticDomainSpec::default_target(seed) : SyntheticDomainSpec{};
  s.seed = seed;
  s.size = kv.get_size("size", s.size);
  s.min_blobs = kv.get_size("min_blobs", s.min_blobs);
  s.max_blobs = kv.get_size("max_blobs", s.max_blobs);
  s.min_area = kv.get_double("min_area", s.min_area);
  s.max_area = kv.get_double("max_area", s.max_area);
  s.foreground = kv.get_double("foreground", s.foreground);
  s.background = kv.get_double("background", s.background);
  s.gain = kv.get_double("gain", s.gain);
  s.bias = kv.get_double("bias", s.bias);
  s.gamma = kv.get_double("gamma", s.gamma);
  s.noise = kv.get_double("noise", s.noise);
  s.texture_amplitude = kv.get_double("texture_amplitude", s.texture_amplitude);
  s.texture_frequency = kv.get_double("texture_frequency", s.texture_frequency);
  const std::size_t count = kv.get_size("count", 32);
  save_dataset(out_dir, generate_domain(s, count));
  std::cout << "wrote " << count << " " << domain_name(domain) << " samples to " << out_dir << "\n";
  return 0;
}

void print_summary(const char* label, const MetricsReport& r) {
  const Summary d = r.dice_summary();
  const Summary i = r.iou_summary();
  const Summary a = r.assd_summary();
  std::printf("%s  dice %.4f +- %.4f  iou %.4f +- %.4f  assd %.3f +- %.3f (%zu/%zu defined)\n", label, d.mean, d.stddev,
              i.mean, i.stddev, a.mean, a.stddev, a.count, r.size());
}

int run_train_source(const std::string& config_path) {
  const TrainConfig cfg = TrainConfig::load(config_path);
  if (cfg.source_dir.empty()) throw ConfigError("source_dir is required");
  const Dataset source = load_dataset(cfg.source_dir);
  Trainer trainer(cfg);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double loss = trainer.train_source_epoch(source);
    std::printf("epoch %zu  L_source %.6f\n", e + 1, loss);
  }
  trainer.save(cfg.checkpoint);
  print_summary("source", trainer.evaluate(source));
  std::cout << "checkpoint " << cfg.checkpoint << "\n";
  return 0;
}

int run_adapt(const std::string& config_path, const std::string& resume) {
  const TrainConfig cfg = TrainConfig::load(config_path);
  if (cfg.source_dir.empty() || cfg.target_dir.empty()) throw ConfigError("source_dir and target_dir are required");
  const Dataset source = load_dataset(cfg.source_dir);
  const Dataset target = load_dataset(cfg.target_dir);
  Trainer trainer(cfg);
  trainer.load(resume);
  for (std::size_t s = 0; s < cfg.disc_warmup; ++s) trainer.discriminator_step(source, target);
  for (std::size_t e = 0; e < cfg.adapt_epochs; ++e) {
    trainer.adapt_epoch(source, target);
    const auto& h = trainer.history();
    std::printf("adapt epoch %zu  L_target %.6f  L_dis %.6f\n", e + 1, h.target_dis.back(), h.disc_dis.back());
  }
  trainer.save(cfg.checkpoint);
  std::cout << "checkpoint " << cfg.checkpoint << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& metrics_path) {
  const auto tensors = load_checkpoint(ckpt);
  Trainer trainer(TrainConfig::from_state(tensors));
  trainer.load_state(tensors);
  std::vector<std::string> ids;
  const Dataset data = load_dataset(data_dir, &ids);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].mask.empty()) throw std::runtime_error("image " + ids[i] + " has no mask to evaluate against");
  }
  const MetricsReport report = trainer.evaluate(data, ids);
  report.write_csv(metrics_path);
  print_summary("eval", report);
  return 0;
}

int run_gradcheck(const std::string& module) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(module)) {
    std::printf("%-4s %-32s max_rel %.3e  probes %zu\n", r.passed ? "ok" : "FAIL", r.name.c_str(), r.max_rel_error,
                r.probes);
    if (!r.passed) {
      std::printf("     worst at input %zu entry %zu: analytic %.9g numeric %.9g\n", r.worst_input, r.worst_entry,
                  r.worst_analytic, r.worst_numeric);
    }
    ok = ok && r.passed;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s in %.1f s\n", ok ? "all gradients match" : "gradient mismatch", secs);
  return ok ? 0 : 1;
}

int run_cost(const std::string& sweep, const std::string& out, const cost::SweepOptions& options) {
  std::vector<cost::CostReport> reports;
  if (sweep == "size") {
    reports = cost::size_sweep(8, 144, 8, options);
  } else if (sweep == "channel") {
    reports = cost::channel_sweep(128, 4096, options);
  } else {
    throw std::invalid_argument("unknown sweep '" + sweep + "' (expected size or channel)");
  }
  if (out.empty()) {
    cost::write_csv(std::cout, reports);
  } else {
    cost::write_csv(out, reports);
    std::cout << "wrote " << reports.size() << " rows to " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dispensed transformer segmentation with adversarial domain adaptation"};
  app.require_subcommand(1);

  std::string spec, out_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic domain dataset");
  synth->add_option("--spec", spec, "key=value domain spec")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "output directory")->required();

  std::string config;
  auto* train = app.add_subcommand("train-source", "Train the segmenter on labelled source data");
  train->add_option("--config", config, "key=value training config")->required()->check(CLI::ExistingFile);

  std::string resume;
  auto* adapt = app.add_subcommand("adapt", "Adversarially adapt a source-trained checkpoint");
  adapt->add_option("--config", config, "key=value training config")->required()->check(CLI::ExistingFile);
  adapt->add_option("--resume", resume, "checkpoint to start from")->required()->check(CLI::ExistingFile);

  std::string ckpt, data_dir, metrics = "metrics.csv";
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a labelled split");
  eval->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--metrics", metrics, "per-image CSV output");

  std::string module = "all";
  auto* grad = app.add_subcommand("gradcheck", "Compare backward rules with finite differences");
  grad->add_option("--module", module)->check(CLI::IsMember(gradcheck_modules()));

  std::string sweep = "size", cost_out;
  cost::SweepOptions sweep_options;
  auto* cost_cmd = app.add_subcommand("cost", "Analytic and counted attention cost sweeps");
  cost_cmd->add_option("--sweep", sweep, "size or channel")->check(CLI::IsMember({"size", "channel"}));
  cost_cmd->add_option("--out", cost_out, "CSV path (stdout when omitted)");
  cost_cmd->add_option("--heads", sweep_options.heads, "attention heads");
  cost_cmd->add_option("--maps", sweep_options.maps, "attention maps kept per head");
  cost_cmd->add_option("--bytes", sweep_options.bytes_per_element, "bytes per stored element");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return run_synth(spec, out_dir);
    if (*train) return run_train_source(config);
    if (*adapt) return run_adapt(config, resume);
    if (*eval) return run_eval(ckpt, data_dir, metrics);
    if (*grad) return run_gradcheck(module);
    if (*cost_cmd) return run_cost(sweep, cost_out, sweep_options);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

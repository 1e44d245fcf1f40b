#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnn/optimizer.hpp"
#include "pnn/trust_intervals.hpp"

namespace pnn {

/// One run's worth of settings, parsed from sectioned key=value text.
/// Unknown keys are rejected with the offending key named.
struct RunConfig {
  // [dataset]
  std::string train_images, train_labels;
  std::string test_images, test_labels;
  std::string ood_images, ood_labels;

  // [model]
  std::string arch = "c1_small";  // c1 | c1_small | mlp

  // [train]
  TrainConfig train;

  // [pnn]
  PnnConfig pnn;

  // [eval]
  std::size_t eval_siblings = 2;
  double eps_stab = 1e-12;
  std::vector<std::string> scorers = {"m", "entropy", "maxavg", "kl",
                                      "baseline"};
  std::vector<double> odin_temperatures = {10, 100, 1000};
  std::vector<double> odin_eps = {0.0001, 0.00625, 0.025, 0.05, 0.1};
  double fixed_scale = 0.1;
  std::size_t eval_batch_size = 256;

  // [metrics]
  std::string metrics_positive = "id";  // id | ood
  double tpr_target = 0.95;

  // [attack]
  std::vector<double> attack_epsilons = {0.05, 0.1, 0.2};
  double attack_clip_lo = 0.0;
  double attack_clip_hi = 1.0;

  // [corrupt]
  std::string corrupt_kind = "gaussian";  // gaussian | speckle
  double corrupt_severity = 0.1;
  double corrupt_clip_lo = 0.0;
  double corrupt_clip_hi = 1.0;

  // [diagnose]
  std::size_t diagnose_samples = 500;
  std::size_t t_grid_size = 32;
  std::vector<std::size_t> sibling_counts = {2, 5, 10};
  std::size_t histogram_bins = 40;

  // [run]
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string precision = "narrow";  // narrow | wide

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text,
                              const std::string& origin = "<config>");

  void validate() const;
};

}  // namespace pnn

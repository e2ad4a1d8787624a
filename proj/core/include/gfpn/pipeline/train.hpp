#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "gfpn/pipeline/config.hpp"
#include "gfpn/pipeline/dataset.hpp"
#include "gfpn/pipeline/model.hpp"

namespace gfpn {

struct TrainData {
  std::vector<PreparedSample> train;
  std::vector<PreparedSample> test;
};

/// Training and held-out samples drawn from independent streams of
/// config.seed. Graphs are built only when the GraphFPN branch is enabled.
TrainData make_train_data(const TrainConfig& config);

struct EvalReport {
  double accuracy = 0.0;  // correct superpixels / all superpixels
  double mean_loss = 0.0; // per-sample cross-entropy, averaged over samples
  std::size_t superpixels = 0;
  std::vector<std::size_t> support;         // superpixels per true class
  std::vector<double> per_class_accuracy;   // 0 for classes without support
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalReport evaluate(const ModelParams& params, const TrainConfig& config,
                    const std::vector<PreparedSample>& samples);
std::string eval_report_to_json(const EvalReport& report);

struct EpochMetrics {
  std::size_t epoch = 0;    // 0 = before any update
  double train_loss = 0.0;  // epoch 0: loss at initialisation; later: running mean over the epoch
  double test_accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::string rng_state;  // shuffling generator after the last epoch
  std::vector<EpochMetrics> metrics;
  std::string log;  // one JSON object per line
};

std::string metrics_to_json_line(const EpochMetrics& m);

/// Adam over per-sample gradients summed in sample order and averaged per
/// batch. Every log line is also written to `log` when given.
TrainResult train(const TrainConfig& config, const TrainData& data, std::ostream* log = nullptr);
TrainResult train(const TrainConfig& config, std::ostream* log = nullptr);

}  // namespace gfpn

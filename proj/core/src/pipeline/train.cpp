#include "gfpn/pipeline/train.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gfpn/errors.hpp"
#include "gfpn/pipeline/adam.hpp"
#include "json.hpp"

namespace gfpn {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

std::vector<Tensor*> flat_params(ModelParams& params) {
  std::vector<Tensor*> out;
  for_each_param(params, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<Var> flat_vars(const ModelVars& vars) {
  std::vector<Var> out;
  for_each_param(vars, [&](const std::string&, const Var& v) { out.push_back(v); });
  return out;
}

}  // namespace

TrainData make_train_data(const TrainConfig& config) {
  config.validate();
  const bool graph = config.ablation.graphfpn;
  const std::size_t classes = config.shape_classes + 1;
  TrainData data;
  data.train = prepare_dataset(gen_dataset(derive_seed(config.seed, kTrainStream), config.train_samples,
                                           config.image_size, config.shape_classes),
                               config.superpixels, graph, classes);
  data.test = prepare_dataset(gen_dataset(derive_seed(config.seed, kTestStream), config.test_samples,
                                          config.image_size, config.shape_classes),
                              config.superpixels, graph, classes);
  return data;
}

EvalReport evaluate(const ModelParams& params, const TrainConfig& config,
                    const std::vector<PreparedSample>& samples) {
  const std::size_t classes = config.shape_classes + 1;
  EvalReport r;
  r.support.assign(classes, 0);
  r.per_class_accuracy.assign(classes, 0.0);
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& sample : samples) {
    Tape tape;
    const ModelVars vars = bind_model(tape, params, false);
    Var logits = forward_pipeline(vars, sample, config).logits;
    loss += ops::cross_entropy(logits, sample.region_labels).value().item();
    const Tensor& z = logits.value();
    for (std::size_t k = 0; k < sample.region_labels.size(); ++k) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (z[k * classes + c] > z[k * classes + best]) best = c;
      }
      const std::size_t truth = sample.region_labels[k];
      ++r.confusion[truth][best];
      ++r.support[truth];
      correct += truth == best;
      ++r.superpixels;
    }
  }
  if (r.superpixels > 0) r.accuracy = static_cast<double>(correct) / static_cast<double>(r.superpixels);
  if (!samples.empty()) r.mean_loss = loss / static_cast<double>(samples.size());
  for (std::size_t c = 0; c < classes; ++c) {
    if (r.support[c] > 0) {
      r.per_class_accuracy[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(r.support[c]);
    }
  }
  return r;
}

std::string eval_report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["mean_loss"] = report.mean_loss;
  j["superpixels"] = report.superpixels;
  j["support"] = report.support;
  j["per_class_accuracy"] = report.per_class_accuracy;
  j["confusion"] = report.confusion;
  return j.dump();
}

std::string metrics_to_json_line(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["test_accuracy"] = m.test_accuracy;
  return j.dump();
}

TrainResult train(const TrainConfig& config, const TrainData& data, std::ostream* log) {
  config.validate();
  if (data.train.empty()) throw ContractError("train: no training samples");

  Rng init_rng(derive_seed(config.seed, kInitStream));
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  TrainResult result;
  result.params = init_model(config, init_rng);
  std::vector<Tensor*> params = flat_params(result.params);

  Adam adam({config.learning_rate, config.beta1, config.beta2, config.epsilon, config.weight_decay,
             config.clip_norm});

  auto emit = [&](const EpochMetrics& m) {
    result.metrics.push_back(m);
    const std::string line = metrics_to_json_line(m) + "\n";
    result.log += line;
    if (log) *log << line << std::flush;
  };

  const EvalReport initial = evaluate(result.params, config, data.train);
  emit({0, initial.mean_loss, evaluate(result.params, config, data.test).accuracy});

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::vector<double>> grads;
      for (auto* p : params) grads.emplace_back(p->size(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        Tape tape;
        const ModelVars vars = bind_model(tape, result.params);
        Var loss = sample_loss(vars, data.train[order[b]], config);
        epoch_loss += loss.value().item();
        tape.backward(loss);
        const std::vector<Var> leaves = flat_vars(vars);
        for (std::size_t i = 0; i < leaves.size(); ++i) {
          const Tensor g = tape.grad(leaves[i]);
          for (std::size_t k = 0; k < g.size(); ++k) grads[i][k] += g[k];
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads)
        for (auto& x : g) x *= inv;
      adam.step(params, grads);
    }
    emit({epoch, epoch_loss / static_cast<double>(order.size()),
          evaluate(result.params, config, data.test).accuracy});
  }

  std::ostringstream state;
  state << shuffle_rng;
  result.rng_state = state.str();
  return result;
}

TrainResult train(const TrainConfig& config, std::ostream* log) { return train(config, make_train_data(config), log); }

}  // namespace gfpn

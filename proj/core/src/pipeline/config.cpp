#include "gfpn/pipeline/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gfpn/errors.hpp"
#include "json.hpp"

namespace gfpn {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("config: " + what); };
  if (image_size < 16 || image_size % 16 != 0) fail("image_size must be a positive multiple of 16");
  if (superpixels < 1 || superpixels > image_size * image_size) fail("superpixels outside [1, pixels]");
  if (feature_dim == 0) fail("feature_dim must be positive");
  for (auto c : stage_channels)
    if (c == 0) fail("stage channels must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (learning_rate < 0.0 || weight_decay < 0.0 || epsilon <= 0.0 || clip_norm <= 0.0) {
    fail("optimizer settings must be non-negative");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) fail("Adam moments must lie in [0, 1)");
  if (schedule.contextual_before != schedule.hierarchical ||
      schedule.hierarchical != schedule.contextual_after) {
    fail("layer groups must have equal sizes (L1 = L2 = L3)");
  }
  if (shape_classes < 1 || shape_classes > 3) fail("shape_classes must be 1, 2 or 3");
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["train_samples"] = c.train_samples;
  j["test_samples"] = c.test_samples;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["clip_norm"] = c.clip_norm;
  j["image_size"] = c.image_size;
  j["superpixels"] = c.superpixels;
  j["feature_dim"] = c.feature_dim;
  j["stage_channels"] = c.stage_channels;
  j["schedule"] = {{"contextual_before", c.schedule.contextual_before},
                   {"hierarchical", c.schedule.hierarchical},
                   {"contextual_after", c.schedule.contextual_after}};
  j["shape_classes"] = c.shape_classes;
  const auto& a = c.ablation;
  j["ablation"] = {{"spatial_attention", a.attention.spatial},
                   {"channel_wise_attention", a.attention.channel_wise},
                   {"channel_self_attention", a.attention.channel_self},
                   {"cgl1", a.groups.contextual_before},
                   {"hgl", a.groups.hierarchical},
                   {"cgl2", a.groups.contextual_after},
                   {"graphfpn", a.graphfpn},
                   {"prune_rule", a.prune_rule == PruneRule::kUnion ? "union" : "intersection"}};
  return j.dump();
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw FormatError("config: unknown key '" + where + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig config_from_json(std::string_view text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    reject_unknown(j,
                   {"seed", "epochs", "batch_size", "train_samples", "test_samples", "learning_rate",
                    "weight_decay", "beta1", "beta2", "epsilon", "clip_norm", "image_size",
                    "superpixels", "feature_dim", "stage_channels", "schedule", "shape_classes",
                    "ablation"},
                   "");
    read(j, "seed", c.seed);
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "train_samples", c.train_samples);
    read(j, "test_samples", c.test_samples);
    read(j, "learning_rate", c.learning_rate);
    read(j, "weight_decay", c.weight_decay);
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "epsilon", c.epsilon);
    read(j, "clip_norm", c.clip_norm);
    read(j, "image_size", c.image_size);
    read(j, "superpixels", c.superpixels);
    read(j, "feature_dim", c.feature_dim);
    read(j, "stage_channels", c.stage_channels);
    read(j, "shape_classes", c.shape_classes);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown(s, {"contextual_before", "hierarchical", "contextual_after"}, "schedule.");
      read(s, "contextual_before", c.schedule.contextual_before);
      read(s, "hierarchical", c.schedule.hierarchical);
      read(s, "contextual_after", c.schedule.contextual_after);
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      reject_unknown(a,
                     {"spatial_attention", "channel_wise_attention", "channel_self_attention", "cgl1",
                      "hgl", "cgl2", "graphfpn", "prune_rule"},
                     "ablation.");
      read(a, "spatial_attention", c.ablation.attention.spatial);
      read(a, "channel_wise_attention", c.ablation.attention.channel_wise);
      read(a, "channel_self_attention", c.ablation.attention.channel_self);
      read(a, "cgl1", c.ablation.groups.contextual_before);
      read(a, "hgl", c.ablation.groups.hierarchical);
      read(a, "cgl2", c.ablation.groups.contextual_after);
      read(a, "graphfpn", c.ablation.graphfpn);
      if (a.contains("prune_rule")) {
        const auto rule = a.at("prune_rule").get<std::string>();
        if (rule == "union") {
          c.ablation.prune_rule = PruneRule::kUnion;
        } else if (rule == "intersection") {
          c.ablation.prune_rule = PruneRule::kIntersection;
        } else {
          throw FormatError("config: prune_rule must be 'union' or 'intersection'");
        }
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  TrainConfig c = config_from_json(ss.str());
  apply_environment(c);
  return c;
}

void apply_environment(TrainConfig& config) {
  if (const char* s = std::getenv("GFPN_SEED"); s && *s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0') throw FormatError(std::string("GFPN_SEED is not an integer: ") + s);
    config.seed = v;
  }
}

TrainConfig micro_config() {
  TrainConfig c;
  c.image_size = 16;
  c.superpixels = 16;
  c.feature_dim = 8;
  c.stage_channels = {4, 4, 6, 6, 8};
  c.schedule = {1, 1, 1};
  c.train_samples = 4;
  c.test_samples = 2;
  c.batch_size = 2;
  c.epochs = 1;
  return c;
}

}  // namespace gfpn

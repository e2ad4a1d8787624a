#include "gfpn/pipeline/ablation.hpp"

#include <map>
#include <sstream>

#include "gfpn/errors.hpp"
#include "gfpn/pipeline/checkpoint.hpp"
#include "gfpn/pipeline/train.hpp"
#include "json.hpp"

namespace gfpn {

using nlohmann::json;

namespace {

const char* mark(bool on) { return on ? "v" : "x"; }

std::string group_label(const GroupToggles& g) {
  return std::string("CGL-1 ") + mark(g.contextual_before) + ", HGL " + mark(g.hierarchical) + ", CGL-2 " +
         mark(g.contextual_after);
}

std::string attention_label(const AttentionToggles& a) {
  return std::string("SA ") + mark(a.spatial) + ", LCA " + mark(a.channel_wise) + ", LSA " +
         mark(a.channel_self);
}

}  // namespace

AblationGrid standard_ablation_grid(const TrainConfig& base) {
  if (base.schedule.contextual_before != 3) {
    throw ContractError("ablation: the base schedule must have three layers per group");
  }
  AblationGrid grid;
  TrainConfig full = base;
  full.ablation = {};
  full.ablation.prune_rule = base.ablation.prune_rule;
  grid.runs.push_back({"full", full});

  const std::vector<GroupToggles> groups = {
      {true, true, true}, {false, true, true}, {true, true, false}, {false, true, false}, {true, false, false}};
  for (const auto& g : groups) {
    std::string key = "full";
    if (!(g.contextual_before && g.hierarchical && g.contextual_after)) {
      key = std::string("groups-") + (g.contextual_before ? "1" : "0") + (g.hierarchical ? "1" : "0") +
            (g.contextual_after ? "1" : "0");
      TrainConfig c = full;
      c.ablation.groups = g;
      grid.runs.push_back({key, c});
    }
    grid.rows.push_back({"layer_groups", group_label(g), key});
  }

  const std::vector<AttentionToggles> attention = {
      {true, true, true}, {false, true, true}, {true, false, true}, {true, true, false}, {true, false, false}};
  for (const auto& a : attention) {
    std::string key = "full";
    if (!(a.spatial && a.channel_wise && a.channel_self)) {
      key = std::string("attention-") + (a.spatial ? "1" : "0") + (a.channel_wise ? "1" : "0") +
            (a.channel_self ? "1" : "0");
      TrainConfig c = full;
      c.ablation.attention = a;
      grid.runs.push_back({key, c});
    }
    grid.rows.push_back({"attention", attention_label(a), key});
  }

  for (std::size_t n = 1; n <= 3; ++n) {
    std::string key = "full";
    if (n != 3) {
      key = "layers-" + std::to_string(n);
      TrainConfig c = full;
      c.schedule = {n, n, n};
      grid.runs.push_back({key, c});
    }
    grid.rows.push_back({"layers_per_group", "N = " + std::to_string(n), key});
  }

  TrainConfig baseline = full;
  baseline.ablation.graphfpn = false;
  grid.runs.push_back({"fpn-only", baseline});
  grid.rows.push_back({"baseline", "FPN only", "fpn-only"});
  grid.rows.push_back({"baseline", "FPN + GraphFPN", "full"});
  return grid;
}

AblationGrid ablation_grid_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("ablation grid: ") + e.what());
  }
  if (!j.is_object() || !j.contains("base")) throw FormatError("ablation grid: expected {\"base\": {...}}");
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "runs" && key != "rows") throw FormatError("ablation grid: unknown key " + key);
  }
  const TrainConfig base = config_from_json(j.at("base").dump());
  if (!j.contains("runs")) return standard_ablation_grid(base);

  AblationGrid grid;
  for (const auto& r : j.at("runs")) {
    json merged = json::parse(config_to_json(base));
    merged.merge_patch(r.value("config", json::object()));
    grid.runs.push_back({r.at("key").get<std::string>(), config_from_json(merged.dump())});
  }
  if (j.contains("rows")) {
    for (const auto& row : j.at("rows")) {
      grid.rows.push_back({row.at("table").get<std::string>(), row.at("label").get<std::string>(),
                           row.at("run").get<std::string>()});
    }
  } else {
    for (const auto& run : grid.runs) grid.rows.push_back({"custom", run.key, run.key});
  }
  return grid;
}

std::vector<AblationResult> run_ablation(const AblationGrid& grid, const AblationProgress& progress) {
  std::vector<AblationResult> results;
  for (const auto& run : grid.runs) {
    const TrainResult trained = train(run.config);
    AblationResult r;
    r.key = run.key;
    r.final_train_loss = trained.metrics.back().train_loss;
    r.final_test_accuracy = trained.metrics.back().test_accuracy;
    r.checkpoint_hash = fnv1a_hex(serialize_checkpoint({run.config, trained.params, trained.rng_state}));
    r.log_hash = fnv1a_hex(trained.log);
    if (progress) progress(r);
    results.push_back(std::move(r));
  }
  return results;
}

namespace {

std::map<std::string, const AblationResult*> by_key(const std::vector<AblationResult>& results) {
  std::map<std::string, const AblationResult*> m;
  for (const auto& r : results) m[r.key] = &r;
  return m;
}

}  // namespace

std::string ablation_markdown(const AblationGrid& grid, const std::vector<AblationResult>& results) {
  const auto index = by_key(results);
  std::ostringstream out;
  std::string table;
  out << std::fixed;
  out.precision(4);
  for (const auto& row : grid.rows) {
    if (row.table != table) {
      if (!table.empty()) out << "\n";
      table = row.table;
      out << "### " << table << "\n\n| configuration | run | test accuracy | final train loss |\n|---|---|---|---|\n";
    }
    const auto it = index.find(row.run_key);
    out << "| " << row.label << " | " << row.run_key << " | ";
    if (it == index.end()) {
      out << "- | - |\n";
    } else {
      out << it->second->final_test_accuracy << " | " << it->second->final_train_loss << " |\n";
    }
  }
  return out.str();
}

std::string ablation_json(const AblationGrid& grid, const std::vector<AblationResult>& results) {
  const auto index = by_key(results);
  json rows = json::array();
  for (const auto& row : grid.rows) {
    json r{{"table", row.table}, {"label", row.label}, {"run", row.run_key}};
    if (const auto it = index.find(row.run_key); it != index.end()) {
      r["test_accuracy"] = it->second->final_test_accuracy;
      r["train_loss"] = it->second->final_train_loss;
      r["checkpoint_hash"] = it->second->checkpoint_hash;
      r["log_hash"] = it->second->log_hash;
    }
    rows.push_back(r);
  }
  return json{{"rows", rows}}.dump(2);
}

}  // namespace gfpn

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gfpn/pipeline/config.hpp"

namespace gfpn {

/// One distinct training configuration of the ablation grid.
struct AblationRun {
  std::string key;  // short unique id, e.g. "groups-011"
  TrainConfig config;
};

/// A table row refers to a run by key; the full model appears in every table
/// but is trained once.
struct AblationRow {
  std::string table;  // "layer_groups", "attention", "layers_per_group", "baseline"
  std::string label;  // e.g. "CGL-1 x, HGL v, CGL-2 v"
  std::string run_key;
};

struct AblationGrid {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> rows;
};

/// Layer-group on/off rows, attention on/off rows, L in {1, 2, 3} and the
/// FPN-only baseline. The base schedule must have L = 3. Yields 12 runs.
AblationGrid standard_ablation_grid(const TrainConfig& base);

/// {"base": {...config...}} or {"base": ..., "runs": [{"key": ..., "config": {...}}]}
/// with optional "rows". Without runs the standard grid is expanded.
AblationGrid ablation_grid_from_json(const std::string& text);

struct AblationResult {
  std::string key;
  double final_train_loss = 0.0;
  double final_test_accuracy = 0.0;
  std::string checkpoint_hash;
  std::string log_hash;
};

using AblationProgress = std::function<void(const AblationResult&)>;

std::vector<AblationResult> run_ablation(const AblationGrid& grid, const AblationProgress& progress = {});

std::string ablation_markdown(const AblationGrid& grid, const std::vector<AblationResult>& results);
std::string ablation_json(const AblationGrid& grid, const std::vector<AblationResult>& results);

}  // namespace gfpn

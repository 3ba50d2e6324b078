#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spcl/config.hpp"
#include "spcl/harness.hpp"
#include "spcl/runner.hpp"

namespace spcl {

struct AblationRow {
  std::string label;
  nlohmann::json patch;  // merged into the base run config
};

struct AblationTable {
  std::string name;
  std::vector<AblationRow> rows;
};

/// Rows for one axis value list (mode, rate, strategy, buffer, conditional, baseline).
AblationTable axis_table(const std::string& axis, const nlohmann::json& values);
AblationTable preset_table(const std::string& preset);

// Presets and axes in declaration order; with cross set, the axes collapse
// into one cross-product table.
std::vector<AblationTable> expand_ablation(const AblationConfig& ablation);

RunConfig apply_patch(const RunConfig& base, const nlohmann::json& patch);

struct AblationResult {
  std::string table;
  std::string label;
  RunConfig config;
  std::vector<RunReport> reports;  // seed order of the base config
  AggregateReport aggregate;
};

// Pretrains once per seed, then runs every (row, seed) pair on `workers`
// threads. Each run writes runs/<table>/<label>_seed<S>.jsonl; the per-table
// aggregates go to <table>.csv and <table>.jsonl after all runs finish.
std::vector<AblationResult> run_ablation(const RunConfig& base, const AblationConfig& ablation,
                                         const Universe& universe,
                                         const std::filesystem::path& out_dir,
                                         std::size_t workers, const LogFn& log = {});

}  // namespace spcl

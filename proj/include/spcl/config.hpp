#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spcl/data.hpp"
#include "spcl/model.hpp"
#include "spcl/optim.hpp"
#include "spcl/selection.hpp"

namespace spcl {

enum class Baseline { kSparse, kFullFinetuneEr };

const char* baseline_tag(Baseline b);            // "sparse" / "FLYP+ER"
Baseline parse_baseline(const std::string& text);  // "none" / "sparse" / "full-finetune-er"

struct SelectionConfig {
  LocalizationMode mode = LocalizationMode::kFirst;
  SelectionStrategy strategy = SelectionStrategy::kWeight;
  double rate = 0.10;
};

struct OptimizerConfig {
  double lr = 7.5e-6;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  AdamWConfig adamw;
  double warmup_fraction = 0.1;
  double pretrain_lr = 2e-3;
  std::size_t pretrain_epochs = 15;
};

struct MasConfig {
  bool enabled = true;
  double lambda = 0.05;
  double alpha = 0.5;
  bool conditional_priming = false;
};

struct ReplayConfig {
  bool enabled = true;
  double capacity_fraction = 0.04;
};

struct DataConfig {
  UniverseConfig generator;
  std::uint64_t seed = 2024;
  std::string universe_dir;  // load instead of generating when set
};

struct RunSection {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  Baseline baseline = Baseline::kSparse;
  std::string checkpoint_dir;  // pretrained checkpoints; pretrain in-process when empty
};

struct RunConfig {
  BlockSpec model;
  double temperature = kDefaultTemperature;
  SelectionConfig selection;
  OptimizerConfig optimizer;
  MasConfig mas;
  ReplayConfig replay;
  DataConfig data;
  RunSection run;

  void validate() const;
};

struct AblationConfig {
  std::vector<std::string> presets;  // layer, rate, strategy, buffer, sparsity, conditional
  nlohmann::ordered_json axes = nlohmann::ordered_json::object();
  bool cross = false;
};

// Strict parsing: unknown keys and type mismatches raise kConfig errors that
// name the full key path.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
AblationConfig parse_ablation_config(const nlohmann::json& doc);
AblationConfig load_ablation_config(const std::filesystem::path& path);

nlohmann::json run_config_json(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);
std::string hex64(std::uint64_t value);

nlohmann::json universe_config_json(const UniverseConfig& config);
UniverseConfig parse_universe_config(const nlohmann::json& doc, const std::string& path);

}  // namespace spcl

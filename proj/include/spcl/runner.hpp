#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spcl/harness.hpp"

namespace spcl {

using LogFn = std::function<void(const std::string&)>;

// Append-only JSON Lines file; every record is flushed as soon as it is written.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);
  void write(const nlohmann::ordered_json& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Loads data.universe_dir when set, otherwise generates from data.generator.
Universe resolve_universe(const RunConfig& config);

std::filesystem::path pretrained_path(const std::filesystem::path& dir, std::uint64_t seed);
std::filesystem::path final_path(const std::filesystem::path& dir, std::uint64_t seed);

/// Pretrained checkpoint from run.checkpoint_dir, or in-process pretraining.
Model obtain_pretrained(const RunConfig& config, const Universe& universe, std::uint64_t seed);

// Writes pretrained_seed<S>.spcl per configured seed and one frozen-baseline
// record per seed into frozen.jsonl.
void pretrain_to_dir(const RunConfig& config, const Universe& universe,
                     const std::filesystem::path& out_dir, const LogFn& log = {});

// Runs every configured seed: metrics.jsonl (task, final and aggregate
// records) and final_seed<S>.spcl.
std::vector<RunReport> run_experiment(const RunConfig& config, const Universe& universe,
                                      const std::filesystem::path& out_dir, const LogFn& log = {});

}  // namespace spcl

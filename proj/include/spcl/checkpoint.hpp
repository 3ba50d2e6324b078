#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spcl/mas.hpp"
#include "spcl/model.hpp"
#include "spcl/replay.hpp"
#include "spcl/selection.hpp"

namespace spcl {

// SPCL1 container, all integers and floats little-endian:
//   "SPCL1" | u32 version
//   u32 meta_count  { u32 len, key bytes, u32 len, value bytes }*
//   u32 entry_count { u32 len, name bytes, u64 rows, u64 cols, f64[rows*cols] }*
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;
};

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(std::string_view name) const;
  const CheckpointEntry& at(std::string_view name) const;
  void put(std::string name, std::uint64_t rows, std::uint64_t cols, std::vector<double> data);
  std::string meta(const std::string& key) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Model parameters keyed "model/<registry name>" plus spec metadata.
void store_model(Checkpoint& ckpt, const Model& model);
Model load_model(const Checkpoint& ckpt);

void store_mas(Checkpoint& ckpt, const MasState& mas);
MasState load_mas(const Checkpoint& ckpt);

void store_buffer(Checkpoint& ckpt, const ReplayBuffer& buffer);
ReplayBuffer load_buffer(const Checkpoint& ckpt);

void store_mask(Checkpoint& ckpt, const std::string& name, const SelectionMask& mask);
void store_scores(Checkpoint& ckpt, const std::string& name, const ImportanceMap& scores,
                  std::size_t param_count);

}  // namespace spcl

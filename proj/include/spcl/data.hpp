#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spcl/model.hpp"
#include "spcl/tensor.hpp"

namespace spcl {

struct LabeledSet {
  Tensor2 features;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> classes;  // declared universe, sorted

  std::size_t size() const { return labels.size(); }
  LabeledBatch gather(std::span<const std::size_t> rows) const;
  void validate() const;
};

struct TaskSplit {
  std::vector<std::size_t> classes;
  LabeledSet train;
  LabeledSet test;
};

struct CilStream {
  std::vector<TaskSplit> tasks;

  std::vector<std::size_t> classes_through(std::size_t task_index) const;
  std::size_t train_size() const;
};

struct UniverseConfig {
  std::size_t pretrain_classes = 20;
  std::size_t cil_classes = 20;
  std::size_t tasks = 5;
  std::size_t input_dim = 32;
  std::size_t descriptor_dim = 32;
  std::size_t pretrain_per_class = 200;
  std::size_t control_per_class = 50;
  std::size_t cil_train_per_class = 100;
  std::size_t cil_test_per_class = 50;
  std::size_t conditional_size = 500;
  double cluster_spread = 0.5;      // norm of within-class noise
  std::size_t superclass_count = 5;
  double superclass_offset = 0.6;   // max angle (rad) of a CIL centroid from its superclass
  double descriptor_noise = 0.1;

  void validate() const;
};

// Class ids: pretrain classes are [0, P); CIL classes are [P, P + C).
struct Universe {
  UniverseConfig config;
  std::uint64_t seed = 0;
  LabeledSet pretrain;
  LabeledSet control;
  CilStream stream;
  Tensor2 conditional;   // label-free draws from the pretrain distribution
  Tensor2 descriptors;   // one row per class id: the class tower's input
  Tensor2 centroids;     // one row per class id

  std::size_t total_classes() const { return descriptors.rows(); }
  std::vector<std::size_t> pretrain_classes() const { return pretrain.classes; }
};

Universe make_synthetic_universe(const UniverseConfig& config, std::uint64_t seed);

/// Contiguous partition of the sorted class ids into `tasks` groups.
CilStream split_class_incremental(const LabeledSet& train, const LabeledSet& test,
                                  std::size_t tasks);

// CSV with header "label,f0,...,f{d-1}"; values written with 17 significant digits.
void write_csv_dataset(const std::filesystem::path& path, const LabeledSet& set);
LabeledSet load_csv_dataset(const std::filesystem::path& path, std::size_t input_dim);
void write_csv_features(const std::filesystem::path& path, const Tensor2& features);
Tensor2 load_csv_features(const std::filesystem::path& path, std::size_t dim);

/// One CSV per split plus manifest.json.
void export_universe(const Universe& universe, const std::filesystem::path& dir);
Universe load_universe(const std::filesystem::path& dir);

}  // namespace spcl

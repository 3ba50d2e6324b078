#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spcl/layers.hpp"
#include "spcl/tensor.hpp"

namespace spcl {

struct BlockSpec {
  std::size_t width = 32;      // hidden dim d
  std::size_t expansion = 4;   // fc1 maps d -> expansion * d
  std::size_t block_count = 2; // per tower

  std::size_t hidden() const { return width * expansion; }
  void validate() const;
};

enum class Role : std::uint8_t { kMlpFc1, kMlpFc2, kOther };
enum class Tower : std::uint8_t { kInput, kClass };

const char* role_name(Role role);

struct ParamEntry {
  std::string name;
  Role role = Role::kOther;
  Tower tower = Tower::kInput;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::optional<std::size_t> bias_entry;  // set on fc weights

  std::size_t size() const { return rows * cols; }
  std::size_t end() const { return offset + size(); }
};

// Ordered, name-unique table of parameter tensors whose flat ranges
// partition [0, total_size()).
class ParamRegistry {
 public:
  std::size_t add(std::string name, Role role, Tower tower, std::size_t rows, std::size_t cols);
  void link_bias(std::size_t weight_entry, std::size_t bias_entry);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry& at(std::size_t i) const { return entries_.at(i); }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_size() const { return total_; }
  std::optional<std::size_t> find(std::string_view name) const;
  /// Entry owning a flat index.
  std::size_t entry_of(std::size_t flat_index) const;

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

struct BlockLayout {
  std::size_t ln_gamma, ln_beta, fc1_w, fc1_b, fc2_w, fc2_b;
};

inline constexpr double kDefaultTemperature = 0.07;

class Model {
 public:
  Model(const BlockSpec& spec, std::size_t input_dim, std::size_t num_classes,
        double temperature = kDefaultTemperature);

  const BlockSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  const ParamRegistry& registry() const { return registry_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }

  MatRef matrix(std::size_t entry) const;
  std::span<const double> values(std::size_t entry) const;
  std::span<double> mutable_values(std::size_t entry);

  double temperature() const { return params_[registry_.at(temperature_entry_).offset]; }

  std::size_t proj_weight() const { return proj_w_; }
  std::size_t proj_bias() const { return proj_b_; }
  std::size_t class_table() const { return class_table_; }
  std::size_t temperature_entry() const { return temperature_entry_; }
  const std::vector<BlockLayout>& input_blocks() const { return input_blocks_; }
  const std::vector<BlockLayout>& class_blocks() const { return class_blocks_; }

  bool operator==(const Model& other) const;

 private:
  BlockSpec spec_;
  std::size_t input_dim_;
  std::size_t num_classes_;
  ParamRegistry registry_;
  std::vector<double> params_;
  std::size_t proj_w_ = 0, proj_b_ = 0, class_table_ = 0, temperature_entry_ = 0;
  std::vector<BlockLayout> input_blocks_;
  std::vector<BlockLayout> class_blocks_;
};

/// Scaled-normal init (std = 1/sqrt(fan_in)), zero biases, unit LN, unit class rows.
Model build_model(const BlockSpec& spec, std::size_t input_dim, std::size_t num_classes,
                  std::uint64_t seed, double temperature = kDefaultTemperature);

/// Closed-form parameter count, independent of the registry.
std::size_t expected_param_count(const BlockSpec& spec, std::size_t input_dim,
                                 std::size_t num_classes);

ParamRegistry named_parameters(const Model& model);

struct BlockCache {
  LayerNormCache ln;
  AffineCache fc1;
  GeluCache act;
  AffineCache fc2;
};

// Forward state of one tower over a batch.
struct TowerPass {
  Tower tower = Tower::kInput;
  Tensor2 pre_norm;
  Tensor2 embeddings;  // empty when normalization was skipped
  std::optional<AffineCache> proj;
  std::vector<std::size_t> class_ids;
  std::vector<BlockCache> blocks;
  std::optional<L2NormalizeCache> norm;
};

TowerPass encode_input(const Model& model, const Tensor2& x, bool normalize = true);
TowerPass encode_classes(const Model& model, std::span<const std::size_t> class_ids,
                         bool normalize = true);
/// Single class embedding as a 1×d tensor.
Tensor2 encode_class(const Model& model, std::size_t class_id);

/// Accumulates parameter gradients into grad given dL/d(embeddings).
void tower_backward(const Model& model, const TowerPass& pass, const Tensor2& d_embeddings,
                    std::span<double> grad);
/// Same, starting from dL/d(pre_norm).
void tower_backward_pre_norm(const Model& model, const TowerPass& pass, const Tensor2& d_pre_norm,
                             std::span<double> grad);

struct ContrastiveResult {
  double loss = 0.0;
  Tensor2 d_images;   // B × d
  Tensor2 d_classes;  // K × d, rows aligned with the unique class columns
};

// Symmetric contrastive loss over B image embeddings and K class embeddings.
// targets[i] is the class column of image i. Image->class uses one-hot CE;
// class->image uses soft targets spread uniformly over matching images.
ContrastiveResult contrastive_loss(const Tensor2& image_embs, const Tensor2& class_embs,
                                   std::span<const std::size_t> targets, double temperature);

struct LabeledBatch {
  Tensor2 x;
  std::vector<std::size_t> labels;
};

std::vector<std::size_t> unique_sorted(std::span<const std::size_t> labels);

/// Loss of the full dual tower on a batch; gradients added into grad.
double model_loss_and_grad(const Model& model, const LabeledBatch& batch, std::span<double> grad);
double model_loss(const Model& model, const LabeledBatch& batch);

/// Argmax cosine over candidates; ties go to the smallest class id.
std::size_t predict(const Model& model, std::span<const double> x,
                    std::span<const std::size_t> candidates);
std::vector<std::size_t> predict_batch(const Model& model, const Tensor2& x,
                                       std::span<const std::size_t> candidates);

}  // namespace spcl

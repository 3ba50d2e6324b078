#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spcl/model.hpp"
#include "spcl/tensor.hpp"

namespace spcl {

using Rng = std::mt19937_64;

enum class LocalizationMode { kFirst, kSecond, kBoth };
enum class SelectionStrategy { kWeight, kNeuron, kRandom };

const char* mode_name(LocalizationMode mode);
const char* strategy_name(SelectionStrategy strategy);
LocalizationMode parse_mode(const std::string& text);
SelectionStrategy parse_strategy(const std::string& text);

/// Ascending flat indices of the fc1 (First), fc2 (Second) or both roles.
std::vector<std::size_t> localize_layers(const ParamRegistry& registry, LocalizationMode mode);

// Scores aligned to `indices`, which is sorted ascending.
struct ImportanceMap {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
};

/// Full flat gradient of the training loss on one batch.
using BatchGradient = std::function<std::vector<double>(const LabeledBatch&)>;

// Mean absolute gradient over the given batches, restricted to `eligible`.
ImportanceMap score_parameters(std::span<const LabeledBatch> batches,
                               const BatchGradient& gradient,
                               std::span<const std::size_t> eligible);

/// Contrastive-loss scoring on the model.
ImportanceMap score_parameters(const Model& model, std::span<const LabeledBatch> batches,
                               std::span<const std::size_t> eligible);

struct NeuronScore {
  std::size_t weight_entry = 0;
  std::size_t row = 0;
  double score = 0.0;
  std::vector<std::size_t> members;  // row weights then its bias, flat indices
};

/// One score per output neuron of every fc weight covered by the map:
/// the sum of its incoming-weight scores plus its bias score.
std::vector<NeuronScore> neuron_scores(const ImportanceMap& scores, const ParamRegistry& registry);

struct SelectionMask {
  Bitmask bits;
  double rate = 0.0;
  SelectionStrategy strategy = SelectionStrategy::kWeight;

  std::size_t count() const { return bits.count(); }
};

std::size_t selection_budget(double rate, std::size_t eligible_count);

// Builds the per-task update mask. Ties are broken by ascending flat index.
SelectionMask build_mask(const ImportanceMap& scores, const ParamRegistry& registry, double rate,
                         SelectionStrategy strategy, Rng& rng);

}  // namespace spcl

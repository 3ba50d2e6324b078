#include "spcl/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spcl {

const char* mode_name(LocalizationMode mode) {
  switch (mode) {
    case LocalizationMode::kFirst: return "first";
    case LocalizationMode::kSecond: return "second";
    case LocalizationMode::kBoth: return "both";
  }
  return "?";
}

const char* strategy_name(SelectionStrategy strategy) {
  switch (strategy) {
    case SelectionStrategy::kWeight: return "weight";
    case SelectionStrategy::kNeuron: return "neuron";
    case SelectionStrategy::kRandom: return "random";
  }
  return "?";
}

LocalizationMode parse_mode(const std::string& text) {
  if (text == "first") return LocalizationMode::kFirst;
  if (text == "second") return LocalizationMode::kSecond;
  if (text == "both") return LocalizationMode::kBoth;
  fail(ErrorCode::kArgument, "unknown localization mode '" + text + "'");
}

SelectionStrategy parse_strategy(const std::string& text) {
  if (text == "weight") return SelectionStrategy::kWeight;
  if (text == "neuron") return SelectionStrategy::kNeuron;
  if (text == "random") return SelectionStrategy::kRandom;
  fail(ErrorCode::kArgument, "unknown selection strategy '" + text + "'");
}

std::vector<std::size_t> localize_layers(const ParamRegistry& registry, LocalizationMode mode) {
  const bool first = mode != LocalizationMode::kSecond;
  const bool second = mode != LocalizationMode::kFirst;
  std::vector<std::size_t> out;
  for (const auto& e : registry.entries()) {
    if ((e.role == Role::kMlpFc1 && first) || (e.role == Role::kMlpFc2 && second)) {
      for (std::size_t i = e.offset; i < e.end(); ++i) out.push_back(i);
    }
  }
  return out;
}

ImportanceMap score_parameters(std::span<const LabeledBatch> batches,
                               const BatchGradient& gradient,
                               std::span<const std::size_t> eligible) {
  if (batches.empty()) fail(ErrorCode::kArgument, "score_parameters: empty dataset");
  ImportanceMap map;
  map.indices.assign(eligible.begin(), eligible.end());
  map.scores.assign(eligible.size(), 0.0);
  for (const auto& batch : batches) {
    const std::vector<double> g = gradient(batch);
    for (std::size_t k = 0; k < map.indices.size(); ++k) {
      map.scores[k] += std::abs(g.at(map.indices[k]));
    }
  }
  const double inv = 1.0 / static_cast<double>(batches.size());
  for (double& s : map.scores) s *= inv;
  return map;
}

ImportanceMap score_parameters(const Model& model, std::span<const LabeledBatch> batches,
                               std::span<const std::size_t> eligible) {
  return score_parameters(
      batches,
      [&model](const LabeledBatch& batch) {
        std::vector<double> grad(model.param_count(), 0.0);
        model_loss_and_grad(model, batch, grad);
        return grad;
      },
      eligible);
}

std::vector<NeuronScore> neuron_scores(const ImportanceMap& scores, const ParamRegistry& registry) {
  auto score_of = [&](std::size_t flat) -> std::optional<double> {
    auto it = std::lower_bound(scores.indices.begin(), scores.indices.end(), flat);
    if (it == scores.indices.end() || *it != flat) return std::nullopt;
    return scores.scores[static_cast<std::size_t>(it - scores.indices.begin())];
  };
  std::vector<NeuronScore> out;
  for (std::size_t ei = 0; ei < registry.size(); ++ei) {
    const auto& e = registry.at(ei);
    if (!e.bias_entry || e.size() == 0 || !score_of(e.offset)) continue;
    const auto& bias = registry.at(*e.bias_entry);
    for (std::size_t r = 0; r < e.rows; ++r) {
      NeuronScore n;
      n.weight_entry = ei;
      n.row = r;
      for (std::size_t c = 0; c < e.cols; ++c) {
        const std::size_t flat = e.offset + r * e.cols + c;
        if (auto s = score_of(flat)) {
          n.score += *s;
          n.members.push_back(flat);
        }
      }
      const std::size_t bflat = bias.offset + r;
      if (auto s = score_of(bflat)) {
        n.score += *s;
        n.members.push_back(bflat);
      }
      out.push_back(std::move(n));
    }
  }
  return out;
}

std::size_t selection_budget(double rate, std::size_t eligible_count) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    fail(ErrorCode::kArgument, "selection rate must lie in [0, 1]");
  }
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(eligible_count)));
}

namespace {

// Order of positions into `scores`: descending score, then ascending flat index.
std::vector<std::size_t> rank_elements(const ImportanceMap& scores) {
  std::vector<std::size_t> order(scores.indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.scores[a] != scores.scores[b]) return scores.scores[a] > scores.scores[b];
    return scores.indices[a] < scores.indices[b];
  });
  return order;
}

}  // namespace

SelectionMask build_mask(const ImportanceMap& scores, const ParamRegistry& registry, double rate,
                         SelectionStrategy strategy, Rng& rng) {
  if (scores.indices.size() != scores.scores.size()) {
    fail(ErrorCode::kDimension, "build_mask: score map is misaligned");
  }
  const std::size_t budget = selection_budget(rate, scores.indices.size());
  SelectionMask mask{Bitmask(registry.total_size()), rate, strategy};

  switch (strategy) {
    case SelectionStrategy::kWeight: {
      const auto order = rank_elements(scores);
      for (std::size_t k = 0; k < budget; ++k) mask.bits.set(scores.indices[order[k]]);
      break;
    }
    case SelectionStrategy::kNeuron: {
      auto neurons = neuron_scores(scores, registry);
      std::stable_sort(neurons.begin(), neurons.end(),
                       [](const NeuronScore& a, const NeuronScore& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.members.front() < b.members.front();
                       });
      std::size_t remaining = budget;
      for (const auto& n : neurons) {
        if (remaining == 0) break;
        if (n.members.size() <= remaining) {
          for (std::size_t flat : n.members) mask.bits.set(flat);
          remaining -= n.members.size();
          continue;
        }
        // Partial last row: best elements of the row by their own score.
        ImportanceMap row;
        for (std::size_t flat : n.members) {
          auto it = std::lower_bound(scores.indices.begin(), scores.indices.end(), flat);
          row.indices.push_back(flat);
          row.scores.push_back(scores.scores[static_cast<std::size_t>(it - scores.indices.begin())]);
        }
        const auto order = rank_elements(row);
        for (std::size_t k = 0; k < remaining; ++k) mask.bits.set(row.indices[order[k]]);
        remaining = 0;
      }
      if (remaining != 0) {
        fail(ErrorCode::kState, "build_mask: neuron rows do not cover the eligible set");
      }
      break;
    }
    case SelectionStrategy::kRandom: {
      // Partial Fisher-Yates over the eligible positions.
      std::vector<std::size_t> pool = scores.indices;
      for (std::size_t k = 0; k < budget; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
        std::swap(pool[k], pool[pick(rng)]);
        mask.bits.set(pool[k]);
      }
      break;
    }
  }
  return mask;
}

}  // namespace spcl

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spcl/config.hpp"
#include "spcl/data.hpp"
#include "spcl/mas.hpp"
#include "spcl/model.hpp"
#include "spcl/replay.hpp"
#include "spcl/selection.hpp"

namespace spcl {

/// Independent generator per (seed, purpose) so that loading a pretrained
/// checkpoint and pretraining in-process consume identical streams afterwards.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);

enum RngStream : std::uint64_t { kInitStream = 1, kPretrainStream = 2, kContinualStream = 3 };

// a[l][j] for j <= l, plus hold-out accuracy after every task and the frozen
// pretrained reference values.
struct AccuracyMatrix {
  std::size_t task_count = 0;
  std::vector<std::vector<double>> acc;
  std::vector<double> holdout;
  double holdout_frozen = 0.0;
  std::vector<double> frozen;  // per task, evaluated over all CIL classes

  bool complete() const { return task_count > 0 && acc.size() == task_count; }
  void validate() const;
};

double average_accuracy(const AccuracyMatrix& m);
/// Mean drop from the best earlier accuracy to the final accuracy; may be negative.
double forgetting(const AccuracyMatrix& m);

struct RunReport {
  std::uint64_t seed = 0;
  Baseline baseline = Baseline::kSparse;
  std::string run_id;
  std::string config_hash;
  AccuracyMatrix matrix;
  double avg_acc = 0.0;
  std::optional<double> forgetting;
  double holdout_final = 0.0;
  double acc_impr = 0.0;
  double holdout_impr = 0.0;
};

RunReport make_report(const AccuracyMatrix& matrix, std::uint64_t seed, Baseline baseline,
                      const std::string& run_id, const std::string& config_hash);
nlohmann::ordered_json report_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& record);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct AggregateReport {
  Baseline baseline = Baseline::kSparse;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  MetricSummary avg_acc, forgetting, holdout_final, acc_impr, holdout_impr;
};

AggregateReport aggregate_reports(std::span<const RunReport> reports);
nlohmann::ordered_json aggregate_json(const AggregateReport& agg, const RunConfig& config);

double evaluate_accuracy(const Model& model, const LabeledSet& test,
                         std::span<const std::size_t> candidates);

/// Copies the universe's class descriptors into the class table.
void install_descriptors(Model& model, const Universe& universe);

struct FrozenBaseline {
  double holdout = 0.0;
  std::vector<double> task_acc;
};

FrozenBaseline evaluate_frozen(const Model& model, const Universe& universe);

struct PretrainResult {
  std::size_t steps = 0;
  double last_epoch_loss = 0.0;
};

// Dense contrastive training on the pretrain split. The class table and the
// temperature stay fixed.
PretrainResult pretrain(Model& model, const Universe& universe, const RunConfig& config, Rng& rng);

/// build_model + install_descriptors + pretrain, seeded from `seed`.
Model make_pretrained_model(const RunConfig& config, const Universe& universe, std::uint64_t seed);

/// Row orders for one epoch: shuffled, chunked into batch_size (last may be short).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng);

struct StepTrace {
  std::size_t step = 0;
  double lr = 0.0;
  double current_loss = 0.0;
  double replay_loss = 0.0;
  double penalty = 0.0;
  bool replayed = false;
};

struct TaskOutcome {
  SelectionMask mask;
  std::optional<ImportanceMap> scores;
  std::size_t eligible_count = 0;
  std::size_t steps = 0;
};

using StepObserver = std::function<void(const StepTrace&)>;

// One task of the continual stream: anchor, score + select, masked training
// on current + replay + MAS objective, then buffer and importance updates.
TaskOutcome learn_task(Model& model, const TaskSplit& task, std::size_t task_index,
                       ReplayBuffer& buffer, MasState& mas, const RunConfig& config, Rng& rng,
                       const StepObserver& observer = {});

/// Mask over every parameter except the fixed temperature.
Bitmask full_finetune_mask(const Model& model);

void prime_conditional(MasState& mas, const Model& model, const Tensor2& conditional,
                       std::span<const std::size_t> class_ids,
                       std::span<const std::size_t> eligible);

std::size_t replay_capacity(const RunConfig& config, const Universe& universe);

struct RunHooks {
  std::function<void(const nlohmann::ordered_json&)> on_record;
  std::function<void(const std::string&)> log;
};

struct SeedRun {
  RunReport report;
  Model model;
  MasState mas;
  ReplayBuffer buffer;
  std::optional<SelectionMask> last_mask;
};

// Full stream for one seed. `pretrained` replaces in-process pretraining.
SeedRun run_seed(const RunConfig& config, const Universe& universe, std::uint64_t seed,
                 const Model* pretrained = nullptr, const RunHooks& hooks = {});

std::string make_run_id(const RunConfig& config, std::uint64_t seed);

}  // namespace spcl

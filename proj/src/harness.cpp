#include "spcl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spcl {

using nlohmann::json;
using nlohmann::ordered_json;

Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return Rng(seq);
}

void AccuracyMatrix::validate() const {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    if (acc[l].size() != l + 1) fail(ErrorCode::kState, "accuracy matrix row has wrong length");
    for (double a : acc[l]) {
      if (!(a >= 0.0 && a <= 1.0)) fail(ErrorCode::kState, "accuracy outside [0, 1]");
    }
  }
}

double average_accuracy(const AccuracyMatrix& m) {
  if (!m.complete()) fail(ErrorCode::kState, "average_accuracy: matrix incomplete");
  m.validate();
  const auto& last = m.acc.back();
  return std::accumulate(last.begin(), last.end(), 0.0) / static_cast<double>(last.size());
}

double forgetting(const AccuracyMatrix& m) {
  if (m.task_count < 2 || m.acc.size() < 2) {
    fail(ErrorCode::kUndefinedMetric, "forgetting: needs at least two tasks");
  }
  if (!m.complete()) fail(ErrorCode::kState, "forgetting: matrix incomplete");
  m.validate();
  const std::size_t last = m.acc.size() - 1;
  double total = 0.0;
  for (std::size_t j = 0; j < last; ++j) {
    double best = m.acc[j][j];
    for (std::size_t l = j + 1; l < last; ++l) best = std::max(best, m.acc[l][j]);
    total += best - m.acc[last][j];
  }
  return total / static_cast<double>(last);
}

RunReport make_report(const AccuracyMatrix& matrix, std::uint64_t seed, Baseline baseline,
                      const std::string& run_id, const std::string& config_hash) {
  RunReport r;
  r.seed = seed;
  r.baseline = baseline;
  r.run_id = run_id;
  r.config_hash = config_hash;
  r.matrix = matrix;
  r.avg_acc = average_accuracy(matrix);
  if (matrix.task_count >= 2) r.forgetting = forgetting(matrix);
  if (matrix.holdout.size() != matrix.task_count || matrix.frozen.size() != matrix.task_count) {
    fail(ErrorCode::kState, "report: hold-out or frozen row incomplete");
  }
  r.holdout_final = matrix.holdout.back();
  const double frozen_avg = std::accumulate(matrix.frozen.begin(), matrix.frozen.end(), 0.0) /
                            static_cast<double>(matrix.frozen.size());
  r.acc_impr = r.avg_acc - frozen_avg;
  r.holdout_impr = r.holdout_final - matrix.holdout_frozen;
  return r;
}

ordered_json report_json(const RunReport& r) {
  ordered_json j;
  j["type"] = "final";
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["baseline"] = baseline_tag(r.baseline);
  j["config_hash"] = r.config_hash;
  j["avg_acc"] = r.avg_acc;
  j["forgetting"] = r.forgetting ? ordered_json(*r.forgetting) : ordered_json(nullptr);
  j["holdout_final"] = r.holdout_final;
  j["holdout_frozen"] = r.matrix.holdout_frozen;
  j["acc_impr"] = r.acc_impr;
  j["holdout_impr"] = r.holdout_impr;
  j["frozen_acc"] = r.matrix.frozen;
  j["accuracy_matrix"] = r.matrix.acc;
  j["holdout_curve"] = r.matrix.holdout;
  return j;
}

RunReport report_from_json(const json& j) {
  AccuracyMatrix m;
  m.acc = j.at("accuracy_matrix").get<std::vector<std::vector<double>>>();
  m.task_count = m.acc.size();
  m.holdout = j.at("holdout_curve").get<std::vector<double>>();
  m.holdout_frozen = j.at("holdout_frozen").get<double>();
  m.frozen = j.at("frozen_acc").get<std::vector<double>>();
  return make_report(m, j.at("seed").get<std::uint64_t>(),
                     parse_baseline(j.at("baseline").get<std::string>()),
                     j.at("run_id").get<std::string>(), j.at("config_hash").get<std::string>());
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

ordered_json summary_json(const MetricSummary& s) {
  if (s.count == 0) return nullptr;
  return ordered_json{{"mean", s.mean}, {"std", s.std}, {"n", s.count}};
}

}  // namespace

AggregateReport aggregate_reports(std::span<const RunReport> reports) {
  AggregateReport agg;
  std::vector<double> avg, fgt, hold, aimp, himp;
  for (const auto& r : reports) {
    agg.baseline = r.baseline;
    agg.config_hash = r.config_hash;
    agg.seeds.push_back(r.seed);
    avg.push_back(r.avg_acc);
    if (r.forgetting) fgt.push_back(*r.forgetting);
    hold.push_back(r.holdout_final);
    aimp.push_back(r.acc_impr);
    himp.push_back(r.holdout_impr);
  }
  agg.avg_acc = summarize(avg);
  agg.forgetting = summarize(fgt);
  agg.holdout_final = summarize(hold);
  agg.acc_impr = summarize(aimp);
  agg.holdout_impr = summarize(himp);
  return agg;
}

ordered_json aggregate_json(const AggregateReport& agg, const RunConfig& config) {
  ordered_json j;
  j["type"] = "aggregate";
  j["baseline"] = baseline_tag(agg.baseline);
  j["config_hash"] = agg.config_hash;
  j["seeds"] = agg.seeds;
  j["avg_acc"] = summary_json(agg.avg_acc);
  j["forgetting"] = summary_json(agg.forgetting);
  j["holdout_final"] = summary_json(agg.holdout_final);
  j["acc_impr"] = summary_json(agg.acc_impr);
  j["holdout_impr"] = summary_json(agg.holdout_impr);
  j["config"] = run_config_json(config);
  return j;
}

double evaluate_accuracy(const Model& model, const LabeledSet& test,
                         std::span<const std::size_t> candidates) {
  if (test.size() == 0) fail(ErrorCode::kArgument, "evaluate_accuracy: empty test set");
  const auto predicted = predict_batch(model, test.features, candidates);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == test.labels[i];
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

void install_descriptors(Model& model, const Universe& universe) {
  const Tensor2& desc = universe.descriptors;
  const MatRef table = model.matrix(model.class_table());
  if (desc.rows() > table.rows || desc.cols() != table.cols) {
    fail(ErrorCode::kDimension, "install_descriptors: descriptors " +
                                    shape_string(desc.rows(), desc.cols()) + " vs class table " +
                                    shape_string(table.rows, table.cols));
  }
  auto dst = model.mutable_values(model.class_table());
  std::copy(desc.values().begin(), desc.values().end(), dst.begin());
}

FrozenBaseline evaluate_frozen(const Model& model, const Universe& universe) {
  FrozenBaseline f;
  f.holdout = evaluate_accuracy(model, universe.control, universe.pretrain.classes);
  const auto all_cil = universe.stream.classes_through(universe.stream.tasks.size());
  for (const auto& task : universe.stream.tasks) {
    f.task_acc.push_back(evaluate_accuracy(model, task.test, all_cil));
  }
  return f;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
  if (batch_size == 0) fail(ErrorCode::kArgument, "epoch_batches: batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

namespace {

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

void require_finite_loss(double loss, const std::string& where) {
  if (!std::isfinite(loss)) fail(ErrorCode::kTrainingFailure, where + ": loss diverged");
}

}  // namespace

PretrainResult pretrain(Model& model, const Universe& universe, const RunConfig& config, Rng& rng) {
  const auto& opt = config.optimizer;
  const LabeledSet& data = universe.pretrain;
  PretrainResult result;
  if (opt.pretrain_epochs == 0) return result;
  data.validate();

  Bitmask mask = full_finetune_mask(model);
  const auto& table = model.registry().at(model.class_table());
  for (std::size_t i = table.offset; i < table.end(); ++i) mask.set(i, false);

  AdamWState state = AdamWState::zeros(model.param_count(), opt.adamw);
  const std::size_t total = opt.pretrain_epochs * steps_per_epoch(data.size(), opt.batch_size);
  const LrSchedule schedule = LrSchedule::with_default_warmup(opt.pretrain_lr, total, opt.warmup_fraction);
  std::vector<double> grad(model.param_count());
  for (std::size_t epoch = 0; epoch < opt.pretrain_epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto batches = epoch_batches(data.size(), opt.batch_size, rng);
    for (const auto& rows : batches) {
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = model_loss_and_grad(model, data.gather(rows), grad);
      require_finite_loss(loss, "pretrain epoch " + std::to_string(epoch));
      epoch_loss += loss;
      adamw_masked_step(model.mutable_params(), grad, mask, state,
                        cosine_warmup_lr(result.steps, schedule));
      ++result.steps;
    }
    result.last_epoch_loss = epoch_loss / static_cast<double>(batches.size());
  }
  return result;
}

Model make_pretrained_model(const RunConfig& config, const Universe& universe, std::uint64_t seed) {
  Model model = build_model(config.model, universe.config.input_dim, universe.total_classes(),
                            derive_rng(seed, kInitStream)(), config.temperature);
  install_descriptors(model, universe);
  Rng rng = derive_rng(seed, kPretrainStream);
  pretrain(model, universe, config, rng);
  return model;
}

Bitmask full_finetune_mask(const Model& model) {
  Bitmask mask(model.param_count(), true);
  mask.set(model.registry().at(model.temperature_entry()).offset, false);
  return mask;
}

namespace {

LabeledBatch to_batch(const std::vector<ReplayItem>& items) {
  LabeledBatch batch{Tensor2(items.size(), items.front().features.size()), {}};
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].features.begin(), items[i].features.end(), batch.x.row(i).begin());
    batch.labels.push_back(items[i].label);
  }
  return batch;
}

}  // namespace

TaskOutcome learn_task(Model& model, const TaskSplit& task, std::size_t task_index,
                       ReplayBuffer& buffer, MasState& mas, const RunConfig& config, Rng& rng,
                       const StepObserver& observer) {
  const LabeledSet& data = task.train;
  data.validate();
  const auto& opt = config.optimizer;
  const bool dense = config.run.baseline == Baseline::kFullFinetuneEr;
  const std::size_t n = data.size();

  mas.snapshot(model.params());

  TaskOutcome out;
  const auto eligible = localize_layers(model.registry(), config.selection.mode);
  out.eligible_count = eligible.size();
  if (dense) {
    out.mask = SelectionMask{full_finetune_mask(model), 1.0, SelectionStrategy::kWeight};
  } else if (config.selection.strategy == SelectionStrategy::kRandom) {
    ImportanceMap blank{eligible, std::vector<double>(eligible.size(), 0.0)};
    out.mask = build_mask(blank, model.registry(), config.selection.rate,
                          SelectionStrategy::kRandom, rng);
  } else {
    std::vector<LabeledBatch> batches;
    for (const auto& rows : epoch_batches(n, opt.batch_size, rng)) {
      batches.push_back(data.gather(rows));
    }
    out.scores = score_parameters(model, batches, eligible);
    out.mask = build_mask(*out.scores, model.registry(), config.selection.rate,
                          config.selection.strategy, rng);
  }

  const bool use_penalty = !dense && config.mas.enabled && mas.lambda > 0.0;
  AdamWState state = AdamWState::zeros(model.param_count(), opt.adamw);
  const std::size_t total = opt.epochs * steps_per_epoch(n, opt.batch_size);
  const LrSchedule schedule = LrSchedule::with_default_warmup(opt.lr, total, opt.warmup_fraction);
  std::vector<double> grad(model.param_count());
  const std::string where = "task " + std::to_string(task_index);

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    for (const auto& rows : epoch_batches(n, opt.batch_size, rng)) {
      std::fill(grad.begin(), grad.end(), 0.0);
      StepTrace trace;
      trace.step = out.steps;
      trace.current_loss = model_loss_and_grad(model, data.gather(rows), grad);
      if (config.replay.enabled && !buffer.empty()) {
        trace.replay_loss = model_loss_and_grad(model, to_batch(buffer.sample_batch(rows.size(), rng)), grad);
        trace.replayed = true;
      }
      if (use_penalty) trace.penalty = penalty_and_grad(model.params(), mas, out.mask.bits, grad);
      require_finite_loss(trace.current_loss + trace.replay_loss + trace.penalty, where);
      trace.lr = cosine_warmup_lr(out.steps, schedule);
      adamw_masked_step(model.mutable_params(), grad, out.mask.bits, state, trace.lr);
      if (observer) observer(trace);
      ++out.steps;
    }
  }

  if (config.replay.enabled) {
    for (std::size_t i = 0; i < n; ++i) {
      auto row = data.features.row(i);
      buffer.reservoir_insert(ReplayItem{std::vector<double>(row.begin(), row.end()),
                                         data.labels[i], task_index},
                              rng);
    }
  }
  if (!dense && config.mas.enabled) {
    const auto raw = compute_raw_importance(model, data.features, task.classes, eligible);
    mas.omega = update_importance(mas.omega, raw, mas.alpha);
  }
  return out;
}

void prime_conditional(MasState& mas, const Model& model, const Tensor2& conditional,
                       std::span<const std::size_t> class_ids,
                       std::span<const std::size_t> eligible) {
  if (conditional.rows() == 0) fail(ErrorCode::kArgument, "prime_conditional: empty conditional set");
  const auto raw = compute_raw_importance(model, conditional, class_ids, eligible);
  mas.omega = update_importance(std::vector<double>(model.param_count(), 0.0), raw, mas.alpha);
}

std::size_t replay_capacity(const RunConfig& config, const Universe& universe) {
  return static_cast<std::size_t>(std::llround(config.replay.capacity_fraction *
                                               static_cast<double>(universe.stream.train_size())));
}

std::string make_run_id(const RunConfig& config, std::uint64_t seed) {
  std::uint64_t h = config_hash(config) ^ (seed + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return hex64(h);
}

SeedRun run_seed(const RunConfig& config, const Universe& universe, std::uint64_t seed,
                 const Model* pretrained, const RunHooks& hooks) {
  const std::string context = "seed " + std::to_string(seed);
  auto log = [&](const std::string& line) {
    if (hooks.log) hooks.log(context + ": " + line);
  };
  try {
    Model model = pretrained ? *pretrained : make_pretrained_model(config, universe, seed);
    if (model.input_dim() != universe.config.input_dim ||
        model.num_classes() < universe.total_classes()) {
      fail(ErrorCode::kDimension, "pretrained model does not match the universe");
    }
    const FrozenBaseline frozen = evaluate_frozen(model, universe);
    log("frozen hold-out " + std::to_string(frozen.holdout));

    const std::size_t task_count = universe.stream.tasks.size();
    AccuracyMatrix matrix;
    matrix.task_count = task_count;
    matrix.holdout_frozen = frozen.holdout;
    matrix.frozen = frozen.task_acc;

    const bool dense = config.run.baseline == Baseline::kFullFinetuneEr;
    MasState mas = MasState::zeros(model.param_count(), config.mas.alpha, config.mas.lambda);
    if (!dense && config.mas.enabled && config.mas.conditional_priming) {
      const auto eligible = localize_layers(model.registry(), config.selection.mode);
      prime_conditional(mas, model, universe.conditional, universe.pretrain.classes, eligible);
    }
    ReplayBuffer buffer(config.replay.enabled ? replay_capacity(config, universe) : 0);
    Rng rng = derive_rng(seed, kContinualStream);
    const std::string run_id = make_run_id(config, seed);
    const std::string hash = hex64(config_hash(config));

    SeedRun result{RunReport{}, model, MasState{}, ReplayBuffer(0), std::nullopt};
    for (std::size_t t = 0; t < task_count; ++t) {
      TaskOutcome outcome;
      try {
        outcome = learn_task(model, universe.stream.tasks[t], t, buffer, mas, config, rng);
      } catch (const Error& e) {
        throw Error(e.code(), "task " + std::to_string(t) + ": " + e.what());
      }
      const auto candidates = universe.stream.classes_through(t);
      std::vector<double> row;
      for (std::size_t j = 0; j <= t; ++j) {
        row.push_back(evaluate_accuracy(model, universe.stream.tasks[j].test, candidates));
      }
      matrix.acc.push_back(row);
      matrix.holdout.push_back(evaluate_accuracy(model, universe.control, universe.pretrain.classes));

      const double so_far = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
      log("task " + std::to_string(t) + " avg_acc_so_far " + std::to_string(so_far) +
          " holdout " + std::to_string(matrix.holdout.back()) + " selected " +
          std::to_string(outcome.mask.count()));
      if (hooks.on_record) {
        ordered_json rec;
        rec["type"] = "task";
        rec["run_id"] = run_id;
        rec["seed"] = seed;
        rec["baseline"] = baseline_tag(config.run.baseline);
        rec["task_index"] = t;
        rec["avg_acc_so_far"] = so_far;
        rec["per_task_acc"] = row;
        rec["holdout_acc"] = matrix.holdout.back();
        rec["config_hash"] = hash;
        rec["selected"] = outcome.mask.count();
        rec["eligible"] = outcome.eligible_count;
        hooks.on_record(rec);
      }
      result.last_mask = std::move(outcome.mask);
    }
    result.report = make_report(matrix, seed, config.run.baseline, run_id, hash);
    if (hooks.on_record) hooks.on_record(report_json(result.report));
    result.model = std::move(model);
    result.mas = std::move(mas);
    result.buffer = std::move(buffer);
    return result;
  } catch (const Error& e) {
    throw Error(e.code(), context + ": " + e.what());
  }
}

}  // namespace spcl

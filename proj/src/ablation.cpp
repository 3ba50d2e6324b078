#include "spcl/ablation.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

namespace spcl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string value_label(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "on" : "off";
  return v.dump();
}

bool conditional_flag(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v == "on") return true;
  if (v == "off") return false;
  fail(ErrorCode::kConfig, "config: ablate.axes.conditional values must be on/off or booleans");
}

json axis_patch(const std::string& axis, const json& v) {
  if (axis == "mode") return {{"selection", {{"mode", v}}}};
  if (axis == "rate") return {{"selection", {{"rate", v}}}};
  if (axis == "strategy") return {{"selection", {{"strategy", v}}}};
  if (axis == "buffer") return {{"replay", {{"capacity_fraction", v}}}};
  if (axis == "conditional") return {{"mas", {{"conditional_priming", conditional_flag(v)}}}};
  if (axis == "baseline") return {{"run", {{"baseline", v}}}};
  fail(ErrorCode::kConfig, "config: unknown ablation axis " + axis);
}

std::string file_label(const std::string& label) {
  std::string out = label;
  for (char& c : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '=';
    if (!ok) c = '_';
  }
  return out;
}

}  // namespace

AblationTable axis_table(const std::string& axis, const json& values) {
  if (!values.is_array() || values.empty()) {
    fail(ErrorCode::kArgument, "ablation axis " + axis + " has no values");
  }
  AblationTable table{axis, {}};
  for (const auto& v : values) table.rows.push_back({value_label(v), axis_patch(axis, v)});
  return table;
}

AblationTable preset_table(const std::string& preset) {
  if (preset == "layer") {
    AblationTable t = axis_table("mode", json{"first", "second", "both"});
    t.name = "layer";
    return t;
  }
  if (preset == "rate") return axis_table("rate", json{0.01, 0.10, 0.50});
  if (preset == "strategy") return axis_table("strategy", json{"weight", "neuron"});
  if (preset == "buffer") return axis_table("buffer", json{0.01, 0.02, 0.04});
  if (preset == "conditional") return axis_table("conditional", json{"off", "on"});
  if (preset == "sparsity") {
    return AblationTable{"sparsity",
                         {{"weight", {{"selection", {{"strategy", "weight"}}}}},
                          {"random", {{"selection", {{"strategy", "random"}}}}},
                          {"FLYP+ER", {{"run", {{"baseline", "full-finetune-er"}}}}}}};
  }
  fail(ErrorCode::kConfig, "config: unknown ablation preset " + preset);
}

std::vector<AblationTable> expand_ablation(const AblationConfig& ablation) {
  std::vector<AblationTable> tables;
  for (const auto& p : ablation.presets) tables.push_back(preset_table(p));
  if (ablation.cross && !ablation.axes.empty()) {
    AblationTable cross{"cross", {{"", json::object()}}};
    for (auto ax = ablation.axes.begin(); ax != ablation.axes.end(); ++ax) {
      const AblationTable one = axis_table(ax.key(), *ax);
      std::vector<AblationRow> next;
      for (const auto& row : cross.rows) {
        for (const auto& v : one.rows) {
          json patch = row.patch;
          patch.merge_patch(v.patch);
          const std::string part = ax.key() + "=" + v.label;
          next.push_back({row.label.empty() ? part : row.label + "," + part, patch});
        }
      }
      cross.rows = std::move(next);
    }
    tables.push_back(std::move(cross));
  } else {
    for (auto ax = ablation.axes.begin(); ax != ablation.axes.end(); ++ax) {
      tables.push_back(axis_table(ax.key(), *ax));
    }
  }
  std::size_t rows = 0;
  for (const auto& t : tables) rows += t.rows.size();
  if (rows == 0) fail(ErrorCode::kArgument, "ablation grid is empty");
  return tables;
}

RunConfig apply_patch(const RunConfig& base, const json& patch) {
  json doc = run_config_json(base);
  doc.merge_patch(patch);
  RunConfig c = parse_run_config(doc);
  c.validate();
  return c;
}

namespace {

// Runs fn(0..count) on a fixed pool; the first failing index (in index order) is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<AblationResult> run_ablation(const RunConfig& base, const AblationConfig& ablation,
                                         const Universe& universe,
                                         const std::filesystem::path& out_dir, std::size_t workers,
                                         const LogFn& log) {
  const auto tables = expand_ablation(ablation);
  std::vector<AblationResult> results;
  for (const auto& t : tables) {
    for (const auto& row : t.rows) {
      results.push_back({t.name, row.label, apply_patch(base, row.patch), {}, {}});
      results.back().reports.resize(base.run.seeds.size());
    }
  }
  std::filesystem::create_directories(out_dir / "runs");
  for (const auto& t : tables) std::filesystem::create_directories(out_dir / "runs" / t.name);

  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(line);
  };

  const auto& seeds = base.run.seeds;
  std::vector<std::optional<Model>> pretrained(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t k) {
    pretrained[k] = obtain_pretrained(base, universe, seeds[k]);
    say("seed " + std::to_string(seeds[k]) + ": pretrained");
  });

  parallel_for(results.size() * seeds.size(), workers, [&](std::size_t job) {
    AblationResult& res = results[job / seeds.size()];
    const std::size_t k = job % seeds.size();
    const std::uint64_t seed = seeds[k];
    JsonlWriter out(out_dir / "runs" / res.table /
                    (file_label(res.label) + "_seed" + std::to_string(seed) + ".jsonl"));
    RunHooks hooks;
    hooks.on_record = [&](const ordered_json& rec) { out.write(rec); };
    try {
      res.reports[k] = run_seed(res.config, universe, seed, &*pretrained[k], hooks).report;
    } catch (const Error& e) {
      throw Error(e.code(), res.table + "/" + res.label + ": " + e.what());
    }
    say(res.table + "/" + res.label + " seed " + std::to_string(seed) + ": avg_acc " +
        std::to_string(res.reports[k].avg_acc));
  });

  for (const auto& t : tables) {
    JsonlWriter jsonl(out_dir / (t.name + ".jsonl"));
    std::ofstream csv(out_dir / (t.name + ".csv"), std::ios::binary | std::ios::trunc);
    if (!csv) fail(ErrorCode::kIo, "cannot write " + (out_dir / (t.name + ".csv")).string());
    csv << "table,label,seeds,avg_acc_mean,avg_acc_std,forgetting_mean,forgetting_std,"
           "holdout_mean,holdout_std,acc_impr_mean,holdout_impr_mean\n";
    for (auto& res : results) {
      if (res.table != t.name) continue;
      res.aggregate = aggregate_reports(res.reports);
      const auto& a = res.aggregate;
      ordered_json rec = aggregate_json(a, res.config);
      rec["table"] = res.table;
      rec["label"] = res.label;
      jsonl.write(rec);
      csv << res.table << ",\"" << res.label << "\"," << a.seeds.size() << ','
          << csv_number(a.avg_acc.mean) << ',' << csv_number(a.avg_acc.std) << ','
          << (a.forgetting.count ? csv_number(a.forgetting.mean) : "") << ','
          << (a.forgetting.count ? csv_number(a.forgetting.std) : "") << ','
          << csv_number(a.holdout_final.mean) << ',' << csv_number(a.holdout_final.std) << ','
          << csv_number(a.acc_impr.mean) << ',' << csv_number(a.holdout_impr.mean) << '\n';
    }
  }
  return results;
}

}  // namespace spcl

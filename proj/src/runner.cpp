#include "spcl/runner.hpp"

#include "spcl/checkpoint.hpp"

namespace spcl {

using nlohmann::ordered_json;

JsonlWriter::JsonlWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
}

void JsonlWriter::write(const ordered_json& record) {
  out_ << record.dump() << '\n';
  out_.flush();
  if (!out_) fail(ErrorCode::kIo, "write failed: " + path_.string());
}

Universe resolve_universe(const RunConfig& config) {
  if (!config.data.universe_dir.empty()) {
    Universe u = load_universe(config.data.universe_dir);
    if (u.config.descriptor_dim != config.model.width) {
      fail(ErrorCode::kConfig, "config: model.width must equal the universe descriptor_dim (" +
                                   std::to_string(u.config.descriptor_dim) + ")");
    }
    return u;
  }
  return make_synthetic_universe(config.data.generator, config.data.seed);
}

std::filesystem::path pretrained_path(const std::filesystem::path& dir, std::uint64_t seed) {
  return dir / ("pretrained_seed" + std::to_string(seed) + ".spcl");
}

std::filesystem::path final_path(const std::filesystem::path& dir, std::uint64_t seed) {
  return dir / ("final_seed" + std::to_string(seed) + ".spcl");
}

Model obtain_pretrained(const RunConfig& config, const Universe& universe, std::uint64_t seed) {
  if (config.run.checkpoint_dir.empty()) return make_pretrained_model(config, universe, seed);
  const auto path = pretrained_path(config.run.checkpoint_dir, seed);
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kIo, "missing pretrained checkpoint " + path.string());
  }
  return load_model(read_checkpoint(path));
}

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

void put_run_metadata(Checkpoint& ckpt, const RunConfig& config, std::uint64_t seed) {
  ckpt.metadata["run.seed"] = std::to_string(seed);
  ckpt.metadata["run.config_hash"] = hex64(config_hash(config));
  ckpt.metadata["run.baseline"] = baseline_tag(config.run.baseline);
}

}  // namespace

void pretrain_to_dir(const RunConfig& config, const Universe& universe,
                     const std::filesystem::path& out_dir, const LogFn& log) {
  ensure_dir(out_dir);
  JsonlWriter frozen_out(out_dir / "frozen.jsonl");
  for (std::uint64_t seed : config.run.seeds) {
    Model model = make_pretrained_model(config, universe, seed);
    const FrozenBaseline frozen = evaluate_frozen(model, universe);
    Checkpoint ckpt;
    store_model(ckpt, model);
    put_run_metadata(ckpt, config, seed);
    write_checkpoint(pretrained_path(out_dir, seed), ckpt);
    ordered_json rec;
    rec["type"] = "frozen";
    rec["seed"] = seed;
    rec["holdout_frozen"] = frozen.holdout;
    rec["frozen_acc"] = frozen.task_acc;
    rec["config_hash"] = hex64(config_hash(config));
    frozen_out.write(rec);
    if (log) log("seed " + std::to_string(seed) + ": pretrained, hold-out " + std::to_string(frozen.holdout));
  }
}

std::vector<RunReport> run_experiment(const RunConfig& config, const Universe& universe,
                                      const std::filesystem::path& out_dir, const LogFn& log) {
  ensure_dir(out_dir);
  JsonlWriter metrics(out_dir / "metrics.jsonl");
  RunHooks hooks;
  hooks.on_record = [&](const ordered_json& rec) { metrics.write(rec); };
  hooks.log = log;
  std::vector<RunReport> reports;
  for (std::uint64_t seed : config.run.seeds) {
    Model pretrained = [&] {
      try {
        return obtain_pretrained(config, universe, seed);
      } catch (const Error& e) {
        throw Error(e.code(), "seed " + std::to_string(seed) + ": " + e.what());
      }
    }();
    SeedRun run = run_seed(config, universe, seed, &pretrained, hooks);
    Checkpoint ckpt;
    store_model(ckpt, run.model);
    store_mas(ckpt, run.mas);
    store_buffer(ckpt, run.buffer);
    if (run.last_mask) store_mask(ckpt, "mask/last_task", *run.last_mask);
    put_run_metadata(ckpt, config, seed);
    write_checkpoint(final_path(out_dir, seed), ckpt);
    reports.push_back(std::move(run.report));
  }
  metrics.write(aggregate_json(aggregate_reports(reports), config));
  return reports;
}

}  // namespace spcl

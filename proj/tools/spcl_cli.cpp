// spcl: command-line front end over the C interface.
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "spcl/spcl.h"

namespace {

enum Exit { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2, kExitOracle = 3 };

int exit_code(spcl_status s) {
  switch (s) {
    case SPCL_OK:
      return kExitOk;
    case SPCL_ERR_CONFIG:
      return kExitConfig;
    case SPCL_ERR_ORACLE:
      return kExitOracle;
    default:
      return kExitRuntime;
  }
}

int report(spcl_status s, const char* stage) {
  if (s != SPCL_OK) {
    std::fprintf(stderr, "spcl %s failed [%s]: %s\n", stage, spcl_status_name(s), spcl_last_error());
  }
  return exit_code(s);
}

void print_line(const char* line, void* user) {
  if (*static_cast<bool*>(user)) std::fprintf(stderr, "%s\n", line);
}

void print_stdout(const char* line, void*) { std::printf("%s\n", line); }

struct Options {
  std::string config;
  std::string out;
  std::string baseline;
  std::string checkpoints;
  std::string universe;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 1;
  bool quiet = false;
  bool corrupt_backward = false;
};

class ConfigHandle {
 public:
  ~ConfigHandle() { spcl_config_free(ptr_); }
  spcl_config* get() const { return ptr_; }
  spcl_config** out() { return &ptr_; }

 private:
  spcl_config* ptr_ = nullptr;
};

class UniverseHandle {
 public:
  ~UniverseHandle() { spcl_universe_free(ptr_); }
  spcl_universe* get() const { return ptr_; }
  spcl_universe** out() { return &ptr_; }

 private:
  spcl_universe* ptr_ = nullptr;
};

spcl_status load_config(const Options& o, ConfigHandle& cfg) {
  spcl_status s = o.config.empty() ? spcl_config_default(cfg.out())
                                   : spcl_config_load(o.config.c_str(), cfg.out());
  if (s == SPCL_OK && o.seed_set) s = spcl_config_set_seed(cfg.get(), o.seed);
  if (s == SPCL_OK && !o.baseline.empty()) s = spcl_config_set_baseline(cfg.get(), o.baseline.c_str());
  if (s == SPCL_OK && !o.checkpoints.empty()) {
    s = spcl_config_set_checkpoint_dir(cfg.get(), o.checkpoints.c_str());
  }
  if (s == SPCL_OK && !o.universe.empty()) s = spcl_config_set_universe_dir(cfg.get(), o.universe.c_str());
  return s;
}

int cmd_gen(const Options& o) {
  ConfigHandle cfg;
  UniverseHandle u;
  if (spcl_status s = load_config(o, cfg); s != SPCL_OK) return report(s, "gen");
  if (spcl_status s = spcl_universe_generate(cfg.get(), u.out()); s != SPCL_OK) return report(s, "gen");
  return report(spcl_universe_export(u.get(), o.out.c_str()), "gen");
}

int cmd_pretrain(const Options& o) {
  ConfigHandle cfg;
  UniverseHandle u;
  bool verbose = !o.quiet;
  if (spcl_status s = load_config(o, cfg); s != SPCL_OK) return report(s, "pretrain");
  if (spcl_status s = spcl_universe_resolve(cfg.get(), u.out()); s != SPCL_OK) return report(s, "pretrain");
  return report(spcl_pretrain(cfg.get(), u.get(), o.out.c_str(), print_line, &verbose), "pretrain");
}

int cmd_run(const Options& o) {
  ConfigHandle cfg;
  UniverseHandle u;
  bool verbose = !o.quiet;
  if (spcl_status s = load_config(o, cfg); s != SPCL_OK) return report(s, "run");
  if (spcl_status s = spcl_universe_resolve(cfg.get(), u.out()); s != SPCL_OK) return report(s, "run");
  return report(spcl_run(cfg.get(), u.get(), o.out.c_str(), print_line, &verbose), "run");
}

int cmd_ablate(const Options& o) {
  ConfigHandle cfg;
  UniverseHandle u;
  bool verbose = !o.quiet;
  if (spcl_status s = load_config(o, cfg); s != SPCL_OK) return report(s, "ablate");
  if (spcl_status s = spcl_universe_resolve(cfg.get(), u.out()); s != SPCL_OK) return report(s, "ablate");
  return report(spcl_ablate(cfg.get(), o.config.c_str(), u.get(), o.out.c_str(), o.workers,
                            print_line, &verbose),
                "ablate");
}

int cmd_gradcheck(const Options& o) {
  std::size_t failures = 0;
  const spcl_status s =
      spcl_gradcheck(o.seed, o.corrupt_backward ? 1 : 0, print_stdout, nullptr, &failures);
  std::printf("%zu oracle(s) failed\n", failures);
  return report(s, "gradcheck");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse localized continual learning: data generation, training and checks"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", o.config, "JSON config file (sections model, selection, "
                                          "optimizer, mas, replay, data, run)");
    auto* out = sub->add_option("--out", o.out, "output directory");
    if (needs_out) out->required();
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { o.seed = v; o.seed_set = true; },
        "run a single seed instead of the configured list");
    sub->add_option("--universe", o.universe, "load the universe from this directory");
    sub->add_flag("-q,--quiet", o.quiet, "no log lines");
  };

  auto* gen = app.add_subcommand("gen", "generate the synthetic universe as CSV + manifest");
  add_common(gen, true);
  auto* pre = app.add_subcommand("pretrain", "pretrain and write checkpoints + frozen records");
  add_common(pre, true);
  auto* run = app.add_subcommand("run", "run the continual stream, write metrics JSONL");
  add_common(run, true);
  run->add_option("--baseline", o.baseline, "none | full-finetune-er");
  run->add_option("--checkpoints", o.checkpoints, "directory with pretrained_seed<S>.spcl");
  auto* abl = app.add_subcommand("ablate", "run an ablation grid");
  add_common(abl, true);
  abl->get_option("--config")->required();
  abl->add_option("--workers", o.workers, "parallel runs")->check(CLI::PositiveNumber);
  abl->add_option("--baseline", o.baseline, "none | full-finetune-er");
  abl->add_option("--checkpoints", o.checkpoints, "directory with pretrained_seed<S>.spcl");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference and statistical oracles");
  grad->add_option("--seed", o.seed, "oracle seed");
  grad->add_flag("--corrupt-backward", o.corrupt_backward)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*gen) return cmd_gen(o);
  if (*pre) return cmd_pretrain(o);
  if (*run) return cmd_run(o);
  if (*abl) return cmd_ablate(o);
  return cmd_gradcheck(o);
}

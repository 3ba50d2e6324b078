#include "spcl/spcl.h"

#include <cstring>
#include <exception>
#include <string>

#include "spcl/ablation.hpp"
#include "spcl/checkpoint.hpp"
#include "spcl/gradcheck.hpp"
#include "spcl/runner.hpp"

struct spcl_config {
  spcl::RunConfig value;
};

struct spcl_universe {
  spcl::Universe value;
};

struct spcl_model {
  spcl::Model value;
};

namespace {

thread_local std::string last_error;

template <typename Fn>
spcl_status guarded(Fn fn) {
  try {
    last_error.clear();
    fn();
    return SPCL_OK;
  } catch (const spcl::Error& e) {
    last_error = e.what();
    return static_cast<spcl_status>(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return SPCL_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return SPCL_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) spcl::fail(spcl::ErrorCode::kArgument, std::string(what) + " is null");
}

spcl::LogFn logger(spcl_log_fn log, void* user) {
  if (log == nullptr) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* spcl_last_error(void) { return last_error.c_str(); }

const char* spcl_status_name(spcl_status status) {
  if (status == SPCL_ERR_INTERNAL) return "internal";
  return spcl::error_code_name(static_cast<spcl::ErrorCode>(status));
}

spcl_status spcl_config_default(spcl_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new spcl_config{};
  });
}

spcl_status spcl_config_load(const char* path, spcl_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto value = spcl::load_run_config(path);
    *out = new spcl_config{std::move(value)};
  });
}

void spcl_config_free(spcl_config* config) { delete config; }

spcl_status spcl_config_set_seed(spcl_config* config, uint64_t seed) {
  return guarded([&] {
    require(config, "config");
    config->value.run.seeds = {seed};
  });
}

spcl_status spcl_config_set_baseline(spcl_config* config, const char* baseline) {
  return guarded([&] {
    require(config, "config");
    require(baseline, "baseline");
    try {
      config->value.run.baseline = spcl::parse_baseline(baseline);
    } catch (const spcl::Error& e) {
      spcl::fail(spcl::ErrorCode::kConfig, e.what());
    }
  });
}

spcl_status spcl_config_set_checkpoint_dir(spcl_config* config, const char* dir) {
  return guarded([&] {
    require(config, "config");
    require(dir, "dir");
    config->value.run.checkpoint_dir = dir;
  });
}

spcl_status spcl_config_set_universe_dir(spcl_config* config, const char* dir) {
  return guarded([&] {
    require(config, "config");
    require(dir, "dir");
    config->value.data.universe_dir = dir;
  });
}

spcl_status spcl_config_hash(const spcl_config* config, char* out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const std::string h = spcl::hex64(spcl::config_hash(config->value));
    std::memcpy(out, h.c_str(), h.size() + 1);
  });
}

spcl_status spcl_universe_generate(const spcl_config* config, spcl_universe** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    auto u = spcl::make_synthetic_universe(config->value.data.generator, config->value.data.seed);
    *out = new spcl_universe{std::move(u)};
  });
}

spcl_status spcl_universe_resolve(const spcl_config* config, spcl_universe** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    auto u = spcl::resolve_universe(config->value);
    *out = new spcl_universe{std::move(u)};
  });
}

spcl_status spcl_universe_load(const char* dir, spcl_universe** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    auto u = spcl::load_universe(dir);
    *out = new spcl_universe{std::move(u)};
  });
}

spcl_status spcl_universe_export(const spcl_universe* universe, const char* dir) {
  return guarded([&] {
    require(universe, "universe");
    require(dir, "dir");
    spcl::export_universe(universe->value, dir);
  });
}

void spcl_universe_free(spcl_universe* universe) { delete universe; }

spcl_status spcl_pretrain(const spcl_config* config, const spcl_universe* universe,
                          const char* out_dir, spcl_log_fn log, void* user) {
  return guarded([&] {
    require(config, "config");
    require(universe, "universe");
    require(out_dir, "out_dir");
    spcl::pretrain_to_dir(config->value, universe->value, out_dir, logger(log, user));
  });
}

spcl_status spcl_run(const spcl_config* config, const spcl_universe* universe,
                     const char* out_dir, spcl_log_fn log, void* user) {
  return guarded([&] {
    require(config, "config");
    require(universe, "universe");
    require(out_dir, "out_dir");
    spcl::run_experiment(config->value, universe->value, out_dir, logger(log, user));
  });
}

spcl_status spcl_ablate(const spcl_config* config, const char* grid_path,
                        const spcl_universe* universe, const char* out_dir, size_t workers,
                        spcl_log_fn log, void* user) {
  return guarded([&] {
    require(config, "config");
    require(grid_path, "grid_path");
    require(universe, "universe");
    require(out_dir, "out_dir");
    const auto grid = spcl::load_ablation_config(grid_path);
    spcl::run_ablation(config->value, grid, universe->value, out_dir, workers, logger(log, user));
  });
}

spcl_status spcl_gradcheck(uint64_t seed, int corrupt_backward, spcl_log_fn log, void* user,
                           size_t* failures) {
  return guarded([&] {
    spcl::GradcheckOptions options;
    options.seed = seed;
    options.corrupt_backward = corrupt_backward != 0;
    std::size_t failed = 0;
    for (const auto& r : spcl::run_gradcheck(options)) {
      failed += !r.passed;
      if (log) log(spcl::format_oracle(r).c_str(), user);
    }
    if (failures) *failures = failed;
    if (failed > 0) {
      spcl::fail(spcl::ErrorCode::kOracleFailure, std::to_string(failed) + " oracle(s) failed");
    }
  });
}

spcl_status spcl_model_load(const char* checkpoint_path, spcl_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    auto m = spcl::load_model(spcl::read_checkpoint(checkpoint_path));
    *out = new spcl_model{std::move(m)};
  });
}

void spcl_model_free(spcl_model* model) { delete model; }

size_t spcl_model_param_count(const spcl_model* model) {
  return model ? model->value.param_count() : 0;
}

size_t spcl_model_input_dim(const spcl_model* model) {
  return model ? model->value.input_dim() : 0;
}

spcl_status spcl_model_predict(const spcl_model* model, const double* x, size_t rows,
                               const size_t* candidates, size_t candidate_count, size_t* labels) {
  return guarded([&] {
    require(model, "model");
    require(x, "x");
    require(candidates, "candidates");
    require(labels, "labels");
    const std::size_t dim = model->value.input_dim();
    spcl::Tensor2 input(rows, dim, std::vector<double>(x, x + rows * dim));
    const auto out = spcl::predict_batch(model->value, input, {candidates, candidate_count});
    std::copy(out.begin(), out.end(), labels);
  });
}

}  // extern "C"

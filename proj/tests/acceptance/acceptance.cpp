// Acceptance suite: one PASS/FAIL line per criterion, exit 0 only when all pass.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spcl/config.hpp"
#include "spcl/error.hpp"
#include "spcl/gradcheck.hpp"
#include "spcl/harness.hpp"
#include "spcl/runner.hpp"

using namespace spcl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  failures += !v.passed;
  std::printf("%s C%d %s: %s\n", v.passed ? "PASS" : "FAIL", id, title.c_str(), v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

Verdict from_oracle(const OracleResult& r, double elapsed, double limit) {
  const bool ok = r.passed && elapsed < limit;
  return {ok, format_oracle(r) + fmt(" [%.2fs, limit %.0fs]", elapsed, limit)};
}

RunConfig patched(const RunConfig& base, const nlohmann::json& patch) {
  nlohmann::json doc = run_config_json(base);
  doc.merge_patch(patch);
  return parse_run_config(doc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct MetricCase {
  std::vector<std::vector<double>> acc;
  double avg;
  std::optional<double> forgetting;
};

}  // namespace

int main(int argc, char** argv) {
  const fs::path config_path = argc > 1 ? fs::path(argv[1]) : fs::path(SPCL_DESK_CONFIG);
  const fs::path scratch = fs::temp_directory_path() / "spcl_acceptance";
  std::printf("acceptance profile: %s\n", config_path.string().c_str());
  const RunConfig desk = load_run_config(config_path);

  report(1, "gradient oracle", [] {
    const auto t0 = Clock::now();
    const auto results = gradient_oracles(GradcheckOptions{});
    const double elapsed = seconds_since(t0);
    bool ok = elapsed < 30.0;
    double worst = 0.0;
    for (const auto& r : results) {
      ok = ok && r.passed;
      worst = std::max(worst, r.value);
    }
    return Verdict{ok, fmt("%zu oracles x 20 seeds, max rel err %.2e (limit 1e-4) [%.2fs, limit 30s]",
                           results.size(), worst, elapsed)};
  });

  report(2, "freeze bit-exactness", [&] {
    const RunConfig c = patched(desk, {{"selection", {{"rate", 0.1}}},
                                       {"optimizer", {{"weight_decay", 0.1}}}});
    const Universe u = resolve_universe(c);
    Model m = make_pretrained_model(c, u, 0);
    MasState mas = MasState::zeros(m.param_count(), c.mas.alpha, c.mas.lambda);
    ReplayBuffer buf(replay_capacity(c, u));
    Rng rng = derive_rng(0, kContinualStream);
    std::size_t frozen = 0, violations = 0;
    for (std::size_t t = 0; t < u.stream.tasks.size(); ++t) {
      const std::vector<double> before(m.params().begin(), m.params().end());
      const TaskOutcome out = learn_task(m, u.stream.tasks[t], t, buf, mas, c, rng);
      for (std::size_t i = 0; i < before.size(); ++i) {
        if (out.mask.bits.test(i)) continue;
        ++frozen;
        violations += std::memcmp(&before[i], &m.params()[i], sizeof(double)) != 0;
      }
    }
    return Verdict{violations == 0 && u.stream.tasks.size() == 5,
                   fmt("%zu tasks, %zu masked-out parameter checks, %zu changed", u.stream.tasks.size(),
                       frozen, violations)};
  });

  report(3, "top-k oracle", [] {
    const auto t0 = Clock::now();
    return from_oracle(topk_oracle(0, 1000), seconds_since(t0), 60.0);
  });

  report(4, "reservoir uniformity", [] {
    const auto t0 = Clock::now();
    return from_oracle(reservoir_oracle(0, 10, 100, 20000), seconds_since(t0), 10.0);
  });

  report(5, "MAS recurrence", [] {
    const auto t0 = Clock::now();
    return from_oracle(mas_recurrence_oracle(0), seconds_since(t0), 60.0);
  });

  report(6, "dense-baseline equivalence", [] {
    const auto t0 = Clock::now();
    return from_oracle(dense_equivalence_oracle(0, 10), seconds_since(t0), 60.0);
  });

  // Criteria 7 to 9 share one pass over the default universe and five seeds.
  struct SeedRow {
    RunReport sparse, dense, random, high, low;
  };
  std::vector<SeedRow> rows;
  double directional_seconds = 0.0;
  std::string directional_error;
  {
    const auto t0 = Clock::now();
    try {
      const Universe u = resolve_universe(desk);
      const RunConfig dense = patched(desk, {{"run", {{"baseline", "full-finetune-er"}}}});
      const RunConfig random = patched(desk, {{"selection", {{"strategy", "random"}}}});
      const RunConfig high = patched(desk, {{"selection", {{"rate", 0.5}}}});
      const RunConfig low = patched(desk, {{"selection", {{"rate", 0.01}}}});
      for (std::uint64_t seed : desk.run.seeds) {
        const Model pre = make_pretrained_model(desk, u, seed);
        rows.push_back({run_seed(desk, u, seed, &pre).report, run_seed(dense, u, seed, &pre).report,
                        run_seed(random, u, seed, &pre).report, run_seed(high, u, seed, &pre).report,
                        run_seed(low, u, seed, &pre).report});
        const auto& r = rows.back();
        std::printf("  seed %llu: drop sparse %.4f dense %.4f | acc weight %.4f random %.4f | "
                    "s=0.5 acc %.4f fgt %+.4f | s=0.01 acc %.4f fgt %+.4f\n",
                    static_cast<unsigned long long>(seed),
                    r.sparse.matrix.holdout_frozen - r.sparse.holdout_final,
                    r.dense.matrix.holdout_frozen - r.dense.holdout_final, r.sparse.avg_acc,
                    r.random.avg_acc, r.high.avg_acc, r.high.forgetting.value_or(NAN), r.low.avg_acc,
                    r.low.forgetting.value_or(NAN));
        std::fflush(stdout);
      }
    } catch (const std::exception& e) {
      directional_error = e.what();
    }
    directional_seconds = seconds_since(t0);
  }
  const std::size_t n = rows.size();
  auto guard = [&](const std::function<Verdict()>& body) {
    return [&, body] {
      if (!directional_error.empty()) return Verdict{false, "exception: " + directional_error};
      return body();
    };
  };

  report(7, "sparse update protects the control set", guard([&] {
    std::size_t wins = 0;
    double sparse = 0.0, dense = 0.0;
    for (const auto& r : rows) {
      const double ds = r.sparse.matrix.holdout_frozen - r.sparse.holdout_final;
      const double dd = r.dense.matrix.holdout_frozen - r.dense.holdout_final;
      wins += ds < dd;
      sparse += ds / n;
      dense += dd / n;
    }
    const bool ok = n == 5 && wins >= 4 && sparse <= 0.5 * dense && directional_seconds < 600.0;
    return Verdict{ok, fmt("drop smaller in %zu/%zu seeds (need 4), mean drop sparse %.4f vs dense %.4f "
                           "(need <= half) [%.1fs for C7-C9, limit 600s]",
                           wins, n, sparse, dense, directional_seconds)};
  }));

  report(8, "gradient scoring beats random selection", guard([&] {
    std::size_t wins = 0;
    for (const auto& r : rows) wins += r.sparse.avg_acc >= r.random.avg_acc;
    return Verdict{n == 5 && wins >= 4, fmt("weight >= random avg_acc in %zu/%zu seeds (need 4)", wins, n)};
  }));

  report(9, "selection-rate trade-off", guard([&] {
    std::size_t acc_wins = 0, fgt_wins = 0;
    for (const auto& r : rows) {
      acc_wins += r.high.avg_acc >= r.low.avg_acc;
      fgt_wins += r.high.forgetting.value_or(NAN) >= r.low.forgetting.value_or(NAN);
    }
    return Verdict{n == 5 && acc_wins >= 4 && fgt_wins >= 3,
                   fmt("avg_acc(0.5) >= avg_acc(0.01) in %zu/%zu seeds (need 4), forgetting(0.5) >= "
                       "forgetting(0.01) in %zu/%zu seeds (need 3)",
                       acc_wins, n, fgt_wins, n)};
  }));

  report(10, "metric unit suite", [] {
    const std::vector<MetricCase> cases = {
        {{{0.9}, {0.8, 0.7}, {0.6, 0.5, 0.4}}, 0.5, 0.25},
        {{{0.2}, {0.5, 0.3}}, 0.4, -0.3},
        {{{0.7}}, 0.7, std::nullopt},
        {{{1.0}, {1.0, 1.0}, {1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}}, 1.0, 0.0},
        {{{1.0}, {0.4, 0.9}, {0.7, 0.2, 0.6}}, 0.5, 0.5},
    };
    std::size_t ok = 0;
    for (const auto& c : cases) {
      AccuracyMatrix m;
      m.task_count = c.acc.size();
      m.acc = c.acc;
      m.holdout.assign(m.task_count, 1.0);
      m.frozen.assign(m.task_count, 0.0);
      const RunReport r = make_report(m, 0, Baseline::kSparse, "", "");
      const bool avg_ok = std::abs(r.avg_acc - c.avg) < 1e-12;
      const bool fgt_ok = c.forgetting ? (r.forgetting && std::abs(*r.forgetting - *c.forgetting) < 1e-12)
                                       : !r.forgetting.has_value();
      ok += avg_ok && fgt_ok;
    }
    return Verdict{ok == cases.size(), fmt("%zu/%zu matrices match, one negative-forgetting case", ok,
                                           cases.size())};
  });

  report(11, "determinism", [&] {
    RunConfig c = desk;
    c.run.seeds = {0};
    const fs::path a = scratch / "det_a", b = scratch / "det_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const Universe u = resolve_universe(c);
    run_experiment(c, u, a);
    run_experiment(c, u, b);
    const std::string ma = slurp(a / "metrics.jsonl"), mb = slurp(b / "metrics.jsonl");
    const std::string ca = slurp(final_path(a, 0)), cb = slurp(final_path(b, 0));
    const bool ok = !ma.empty() && !ca.empty() && ma == mb && ca == cb;
    return Verdict{ok, fmt("metrics.jsonl %zu bytes %s, checkpoint %zu bytes %s", ma.size(),
                           ma == mb ? "identical" : "differ", ca.size(), ca == cb ? "identical" : "differ")};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include "spcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "spcl/layers.hpp"
#include "spcl/mas.hpp"
#include "spcl/model.hpp"
#include "spcl/optim.hpp"
#include "spcl/replay.hpp"
#include "spcl/selection.hpp"

namespace spcl {

namespace {

Tensor2 random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor2 t(rows, cols);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

double weighted_sum(const Tensor2& y, const Tensor2& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.values().size(); ++i) s += y.values()[i] * r.values()[i];
  return s;
}

// Collects the worst relative error of one named gradient over all seeds.
class GradientCheck {
 public:
  GradientCheck(std::string name, const GradcheckOptions& options)
      : name_(std::move(name)), options_(options) {}

  void compare(std::span<const double> analytic, const Tensor2& numeric) {
    std::vector<double> a(analytic.begin(), analytic.end());
    if (options_.corrupt_backward) {
      for (double& v : a) v = -v;
    }
    worst_ = std::max(worst_, max_relative_error(a, numeric.values()));
  }

  OracleResult result() const {
    OracleResult r;
    r.name = "grad." + name_;
    r.value = worst_;
    r.threshold = options_.tolerance;
    r.passed = worst_ < options_.tolerance;
    r.detail = "max relative error over " + std::to_string(options_.seed_count) + " seeds";
    return r;
  }

 private:
  std::string name_;
  const GradcheckOptions& options_;
  double worst_ = 0.0;
};

void check_affine(Rng& rng, GradientCheck& check, double eps) {
  const Tensor2 x = random_tensor(rng, 4, 5);
  const Tensor2 w = random_tensor(rng, 3, 5);
  const Tensor2 b = random_tensor(rng, 1, 3);
  const Tensor2 r = random_tensor(rng, 4, 3);
  const auto grads = affine_backward(affine(x, w, b.values()).second, r);
  check.compare(grads.dx.values(), finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(affine(t, w, b.values()).first, r); }, x, eps));
  check.compare(grads.dw.values(), finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(affine(x, t, b.values()).first, r); }, w, eps));
  check.compare(grads.db, finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(affine(x, w, t.values()).first, r); }, b, eps));
}

void check_gelu(Rng& rng, GradientCheck& check, double eps) {
  const Tensor2 x = random_tensor(rng, 4, 5, 2.0);
  const Tensor2 r = random_tensor(rng, 4, 5);
  const Tensor2 dx = gelu_backward(gelu(x).second, r);
  check.compare(dx.values(), finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(gelu(t).first, r); }, x, eps));
}

void check_layer_norm(Rng& rng, GradientCheck& check, double eps) {
  const Tensor2 x = random_tensor(rng, 4, 6);
  const Tensor2 gamma = random_tensor(rng, 1, 6);
  const Tensor2 beta = random_tensor(rng, 1, 6);
  const Tensor2 r = random_tensor(rng, 4, 6);
  auto forward = [&](const Tensor2& xx, const Tensor2& g, const Tensor2& bb) {
    return weighted_sum(layer_norm(xx, g.values(), bb.values()).first, r);
  };
  const auto grads = layer_norm_backward(layer_norm(x, gamma.values(), beta.values()).second, r);
  check.compare(grads.dx.values(), finite_difference_gradient(
      [&](const Tensor2& t) { return forward(t, gamma, beta); }, x, eps));
  check.compare(grads.dgamma, finite_difference_gradient(
      [&](const Tensor2& t) { return forward(x, t, beta); }, gamma, eps));
  check.compare(grads.dbeta, finite_difference_gradient(
      [&](const Tensor2& t) { return forward(x, gamma, t); }, beta, eps));
}

void check_l2_normalize(Rng& rng, GradientCheck& check, double eps) {
  const Tensor2 v = random_tensor(rng, 4, 5);
  const Tensor2 r = random_tensor(rng, 4, 5);
  const Tensor2 dv = l2_normalize_backward(l2_normalize(v).second, r);
  check.compare(dv.values(), finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(l2_normalize(t).first, r); }, v, eps));
}

void check_contrastive(Rng& rng, GradientCheck& check, double eps) {
  const Tensor2 img = l2_normalize(random_tensor(rng, 6, 4)).first;
  const Tensor2 cls = l2_normalize(random_tensor(rng, 3, 4)).first;
  const std::vector<std::size_t> targets{0, 1, 1, 2, 0, 2};
  const double tau = 0.07;
  const auto res = contrastive_loss(img, cls, targets, tau);
  check.compare(res.d_images.values(), finite_difference_gradient(
      [&](const Tensor2& t) { return contrastive_loss(t, cls, targets, tau).loss; }, img, eps));
  check.compare(res.d_classes.values(), finite_difference_gradient(
      [&](const Tensor2& t) { return contrastive_loss(img, t, targets, tau).loss; }, cls, eps));
}

Model small_model(Rng& rng) {
  return build_model(BlockSpec{6, 2, 2}, 5, 7, rng());
}

// FD over every parameter except the fixed temperature.
template <typename Loss>
void compare_model_gradient(Model& model, std::span<const double> analytic, Loss loss,
                            GradientCheck& check, double eps) {
  const std::size_t tau = model.registry().at(model.temperature_entry()).offset;
  Tensor2 theta = Tensor2::row_vector(model.params());
  const Tensor2 numeric = finite_difference_gradient(
      [&](const Tensor2& t) {
        std::copy(t.values().begin(), t.values().end(), model.mutable_params().begin());
        return loss();
      },
      theta, eps);
  std::copy(theta.values().begin(), theta.values().end(), model.mutable_params().begin());
  std::vector<double> a(analytic.begin(), analytic.end());
  std::vector<double> n(numeric.values().begin(), numeric.values().end());
  a.erase(a.begin() + static_cast<std::ptrdiff_t>(tau));
  n.erase(n.begin() + static_cast<std::ptrdiff_t>(tau));
  check.compare(a, Tensor2::row_vector(n));
}

void check_model(Rng& rng, GradientCheck& check, double eps) {
  Model model = small_model(rng);
  LabeledBatch batch{random_tensor(rng, 6, 5), {1, 4, 4, 6, 1, 0}};
  std::vector<double> grad(model.param_count(), 0.0);
  model_loss_and_grad(model, batch, grad);
  compare_model_gradient(model, grad, [&] { return model_loss(model, batch); }, check, eps);
}

void check_mas(Rng& rng, GradientCheck& check, double eps) {
  Model model = small_model(rng);
  const Tensor2 x = random_tensor(rng, 1, 5);
  const std::vector<std::size_t> cls{3};
  std::vector<std::size_t> all(model.param_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto raw = compute_raw_importance(model, x, cls, all);
  auto sq = [](const Tensor2& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return s;
  };
  Tensor2 theta = Tensor2::row_vector(model.params());
  Tensor2 numeric = finite_difference_gradient(
      [&](const Tensor2& t) {
        std::copy(t.values().begin(), t.values().end(), model.mutable_params().begin());
        return sq(encode_input(model, x, false).pre_norm) +
               sq(encode_classes(model, cls, false).pre_norm);
      },
      theta, eps);
  for (double& v : numeric.values()) v = std::abs(v);
  const std::size_t tau = model.registry().at(model.temperature_entry()).offset;
  numeric.values()[tau] = raw[tau];
  check.compare(raw, numeric);
}

}  // namespace

std::vector<OracleResult> gradient_oracles(const GradcheckOptions& options) {
  using Fn = void (*)(Rng&, GradientCheck&, double);
  const std::vector<std::pair<std::string, Fn>> checks{
      {"affine", check_affine},         {"gelu", check_gelu},
      {"layer_norm", check_layer_norm}, {"l2_normalize", check_l2_normalize},
      {"contrastive", check_contrastive}, {"dual_tower_loss", check_model},
      {"mas_output_norm", check_mas},
  };
  std::vector<OracleResult> out;
  for (const auto& [name, fn] : checks) {
    GradientCheck check(name, options);
    for (std::size_t k = 0; k < options.seed_count; ++k) {
      Rng rng(options.seed * 1000003ULL + k);
      fn(rng, check, options.eps);
    }
    out.push_back(check.result());
  }
  return out;
}

OracleResult topk_oracle(std::uint64_t seed, std::size_t trials) {
  Rng rng(seed);
  OracleResult r{"select.topk", true, 0.0, 0.0, ""};
  ParamRegistry registry;
  registry.add("w", Role::kMlpFc1, Tower::kInput, 8, 8);
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 1 + rng() % 64;
    ImportanceMap map;
    std::vector<std::size_t> pool(64);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::shuffle(pool.begin(), pool.end(), rng);
    map.indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(map.indices.begin(), map.indices.end());
    // a quarter of the trials are all ties, the rest draw from few levels
    const std::size_t levels = t % 4 == 0 ? 1 : 1 + rng() % 5;
    for (std::size_t i = 0; i < n; ++i) map.scores.push_back(static_cast<double>(rng() % levels));
    const double rate = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (map.scores[a] != map.scores[b]) return map.scores[a] > map.scores[b];
      return map.indices[a] < map.indices[b];
    });
    const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
    Bitmask expected(registry.total_size());
    for (std::size_t i = 0; i < k; ++i) expected.set(map.indices[order[i]]);

    const auto mask = build_mask(map, registry, rate, SelectionStrategy::kWeight, rng);
    mismatches += !(mask.bits == expected);
  }
  r.value = static_cast<double>(mismatches);
  r.passed = mismatches == 0;
  r.detail = std::to_string(trials) + " score maps, mismatching masks";
  return r;
}

OracleResult reservoir_oracle(std::uint64_t seed, std::size_t capacity, std::size_t stream,
                              std::size_t trials) {
  Rng rng(seed);
  std::vector<double> kept(stream, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    ReplayBuffer buffer(capacity);
    for (std::size_t i = 0; i < stream; ++i) buffer.reservoir_insert(ReplayItem{{}, i, 0}, rng);
    for (const auto& item : buffer.items()) kept[item.label] += 1.0;
  }
  const double expected = static_cast<double>(trials * capacity) / static_cast<double>(stream);
  double chi2 = 0.0;
  for (double o : kept) chi2 += (o - expected) * (o - expected) / expected;
  const boost::math::chi_squared_distribution<double> dist(static_cast<double>(stream - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  OracleResult r{"replay.reservoir_uniform", p > 0.01, p, 0.01, ""};
  char buf[96];
  std::snprintf(buf, sizeof buf, "chi2 %.2f on %zu df, p-value", chi2, stream - 1);
  r.detail = buf;
  return r;
}

OracleResult mas_recurrence_oracle(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 16;
  const double alpha = 0.5;
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<std::vector<double>> raws(5, std::vector<double>(n));
  for (auto& raw : raws) {
    for (double& v : raw) v = u(rng);
  }
  std::vector<double> omega(n, 0.0);
  for (const auto& raw : raws) omega = update_importance(omega, raw, alpha);

  // Omega_T = sum_t (1 - alpha) alpha^(T - t) * raw_t / max(raw_t)
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double closed = 0.0;
    for (std::size_t t = 0; t < raws.size(); ++t) {
      const double mx = *std::max_element(raws[t].begin(), raws[t].end());
      closed += (1.0 - alpha) * std::pow(alpha, static_cast<double>(raws.size() - 1 - t)) *
                raws[t][i] / mx;
    }
    worst = std::max(worst, std::abs(closed - omega[i]));
  }
  MasState fresh = MasState::zeros(n, alpha, 0.05);
  std::vector<double> theta(n);
  for (double& v : theta) v = u(rng);
  fresh.snapshot(std::vector<double>(n, 0.0));
  const double first_penalty = penalty_and_grad(theta, fresh, Bitmask(n, true));
  OracleResult r{"mas.recurrence", worst <= 1e-12 && first_penalty == 0.0, worst, 1e-12, ""};
  r.detail = "max |incremental - closed form|; zero-omega penalty " + std::to_string(first_penalty);
  return r;
}

OracleResult dense_equivalence_oracle(std::uint64_t seed, std::size_t steps) {
  Rng rng(seed);
  const std::size_t n = 50;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> theta(n);
  for (double& v : theta) v = normal(rng);
  std::vector<double> ref = theta;
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamWState state = AdamWState::zeros(n, cfg);
  const Bitmask all(n, true);

  std::vector<double> m(n, 0.0), v(n, 0.0);
  std::size_t mismatches = 0;
  for (std::size_t t = 1; t <= steps; ++t) {
    std::vector<double> grad(n);
    for (double& g : grad) g = normal(rng);
    const double lr = 1e-2 / static_cast<double>(t);
    adamw_masked_step(theta, grad, all, state, lr);
    for (std::size_t i = 0; i < n; ++i) {
      ref[i] *= 1.0 - lr * cfg.weight_decay;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mh = m[i] / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
      const double vh = v[i] / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
      ref[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
    for (std::size_t i = 0; i < n; ++i) mismatches += theta[i] != ref[i];
  }
  OracleResult r{"optim.dense_equivalence", mismatches == 0, static_cast<double>(mismatches), 0.0,
                 std::to_string(steps) + " steps, elementwise mismatches"};
  return r;
}

OracleResult score_oracle(std::uint64_t seed) {
  Rng rng(seed);
  Model model = small_model(rng);
  std::vector<LabeledBatch> batches;
  for (std::size_t b = 0; b < 3; ++b) {
    batches.push_back({random_tensor(rng, 4, 5), {b, b + 1, b + 2, b + 1}});
  }
  std::vector<std::size_t> eligible = localize_layers(model.registry(), LocalizationMode::kBoth);
  const auto scores = score_parameters(model, batches, eligible);

  std::vector<double> expected(model.param_count(), 0.0);
  for (const auto& batch : batches) {
    std::vector<double> grad(model.param_count(), 0.0);
    model_loss_and_grad(model, batch, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) expected[i] += std::abs(grad[i]) / 3.0;
  }
  double worst = scores.indices == eligible ? 0.0 : 1.0;
  for (std::size_t k = 0; k < eligible.size() && k < scores.scores.size(); ++k) {
    worst = std::max(worst, std::abs(scores.scores[k] - expected[eligible[k]]));
  }
  return OracleResult{"select.mean_abs_gradient", worst <= 1e-12, worst, 1e-12,
                      "max |score - mean |grad||"};
}

std::vector<OracleResult> run_gradcheck(const GradcheckOptions& options) {
  auto out = gradient_oracles(options);
  out.push_back(score_oracle(options.seed));
  out.push_back(topk_oracle(options.seed));
  out.push_back(reservoir_oracle(options.seed));
  out.push_back(mas_recurrence_oracle(options.seed));
  out.push_back(dense_equivalence_oracle(options.seed));
  return out;
}

std::string format_oracle(const OracleResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %-28s %.3e (limit %.1e) %s", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.value, r.threshold, r.detail.c_str());
  return buf;
}

}  // namespace spcl

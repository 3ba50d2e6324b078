#include "spcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

namespace spcl {

void BlockSpec::validate() const {
  if (width < 2) fail(ErrorCode::kArgument, "block spec: width must be >= 2");
  if (expansion < 1) fail(ErrorCode::kArgument, "block spec: expansion must be >= 1");
  if (block_count < 1) fail(ErrorCode::kArgument, "block spec: block_count must be >= 1");
}

const char* role_name(Role role) {
  switch (role) {
    case Role::kMlpFc1: return "mlp_fc1";
    case Role::kMlpFc2: return "mlp_fc2";
    case Role::kOther: return "other";
  }
  return "?";
}

std::size_t ParamRegistry::add(std::string name, Role role, Tower tower, std::size_t rows,
                               std::size_t cols) {
  if (find(name)) fail(ErrorCode::kArgument, "duplicate parameter name " + name);
  entries_.push_back(ParamEntry{std::move(name), role, tower, total_, rows, cols, std::nullopt});
  total_ += rows * cols;
  return entries_.size() - 1;
}

void ParamRegistry::link_bias(std::size_t weight_entry, std::size_t bias_entry) {
  const auto& w = entries_.at(weight_entry);
  const auto& b = entries_.at(bias_entry);
  if (b.size() != w.rows) fail(ErrorCode::kDimension, "bias length must equal weight rows");
  entries_[weight_entry].bias_entry = bias_entry;
}

std::optional<std::size_t> ParamRegistry::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamRegistry::entry_of(std::size_t flat_index) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), flat_index,
                             [](std::size_t idx, const ParamEntry& e) { return idx < e.offset; });
  if (it == entries_.begin() || flat_index >= total_) {
    fail(ErrorCode::kIndex, "flat index out of range");
  }
  return static_cast<std::size_t>(std::distance(entries_.begin(), it) - 1);
}

namespace {

BlockLayout add_block(ParamRegistry& reg, const std::string& prefix, Tower tower,
                      const BlockSpec& spec) {
  const std::size_t d = spec.width;
  const std::size_t h = spec.hidden();
  BlockLayout b{};
  b.ln_gamma = reg.add(prefix + ".ln.gamma", Role::kOther, tower, 1, d);
  b.ln_beta = reg.add(prefix + ".ln.beta", Role::kOther, tower, 1, d);
  b.fc1_w = reg.add(prefix + ".fc1.weight", Role::kMlpFc1, tower, h, d);
  b.fc1_b = reg.add(prefix + ".fc1.bias", Role::kMlpFc1, tower, 1, h);
  b.fc2_w = reg.add(prefix + ".fc2.weight", Role::kMlpFc2, tower, d, h);
  b.fc2_b = reg.add(prefix + ".fc2.bias", Role::kMlpFc2, tower, 1, d);
  reg.link_bias(b.fc1_w, b.fc1_b);
  reg.link_bias(b.fc2_w, b.fc2_b);
  return b;
}

}  // namespace

Model::Model(const BlockSpec& spec, std::size_t input_dim, std::size_t num_classes,
             double temperature)
    : spec_(spec), input_dim_(input_dim), num_classes_(num_classes) {
  spec_.validate();
  if (input_dim == 0 || num_classes == 0) {
    fail(ErrorCode::kArgument, "model: input_dim and num_classes must be positive");
  }
  if (!(temperature > 0.0)) fail(ErrorCode::kArgument, "model: temperature must be positive");
  const std::size_t d = spec_.width;
  proj_w_ = registry_.add("input.proj.weight", Role::kOther, Tower::kInput, d, input_dim);
  proj_b_ = registry_.add("input.proj.bias", Role::kOther, Tower::kInput, 1, d);
  for (std::size_t i = 0; i < spec_.block_count; ++i) {
    input_blocks_.push_back(
        add_block(registry_, "input.blocks." + std::to_string(i), Tower::kInput, spec_));
  }
  class_table_ = registry_.add("class.table", Role::kOther, Tower::kClass, num_classes, d);
  for (std::size_t i = 0; i < spec_.block_count; ++i) {
    class_blocks_.push_back(
        add_block(registry_, "class.blocks." + std::to_string(i), Tower::kClass, spec_));
  }
  temperature_entry_ = registry_.add("logit.temperature", Role::kOther, Tower::kClass, 1, 1);
  params_.assign(registry_.total_size(), 0.0);
  params_[registry_.at(temperature_entry_).offset] = temperature;
  for (const auto& b : input_blocks_) std::fill_n(mutable_values(b.ln_gamma).begin(), d, 1.0);
  for (const auto& b : class_blocks_) std::fill_n(mutable_values(b.ln_gamma).begin(), d, 1.0);
}

MatRef Model::matrix(std::size_t entry) const {
  const auto& e = registry_.at(entry);
  return {params_.data() + e.offset, e.rows, e.cols};
}

std::span<const double> Model::values(std::size_t entry) const {
  const auto& e = registry_.at(entry);
  return {params_.data() + e.offset, e.size()};
}

std::span<double> Model::mutable_values(std::size_t entry) {
  const auto& e = registry_.at(entry);
  return {params_.data() + e.offset, e.size()};
}

bool Model::operator==(const Model& other) const {
  return spec_.width == other.spec_.width && spec_.expansion == other.spec_.expansion &&
         spec_.block_count == other.spec_.block_count && input_dim_ == other.input_dim_ &&
         num_classes_ == other.num_classes_ && params_.size() == other.params_.size() &&
         std::memcmp(params_.data(), other.params_.data(), params_.size() * sizeof(double)) == 0;
}

Model build_model(const BlockSpec& spec, std::size_t input_dim, std::size_t num_classes,
                  std::uint64_t seed, double temperature) {
  Model model(spec, input_dim, num_classes, temperature);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto init_weight = [&](std::size_t entry) {
    const MatRef m = model.matrix(entry);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols));
    for (double& v : model.mutable_values(entry)) v = normal(rng) * scale;
  };
  init_weight(model.proj_weight());
  for (const auto& b : model.input_blocks()) {
    init_weight(b.fc1_w);
    init_weight(b.fc2_w);
  }
  {
    const MatRef table = model.matrix(model.class_table());
    auto values = model.mutable_values(model.class_table());
    for (std::size_t r = 0; r < table.rows; ++r) {
      auto row = values.subspan(r * table.cols, table.cols);
      double sq = 0.0;
      for (double& v : row) {
        v = normal(rng);
        sq += v * v;
      }
      const double norm = std::sqrt(sq);
      for (double& v : row) v /= norm;
    }
  }
  for (const auto& b : model.class_blocks()) {
    init_weight(b.fc1_w);
    init_weight(b.fc2_w);
  }
  return model;
}

std::size_t expected_param_count(const BlockSpec& spec, std::size_t input_dim,
                                 std::size_t num_classes) {
  const std::size_t d = spec.width;
  const std::size_t h = spec.hidden();
  const std::size_t per_block = 2 * d + (h * d + h) + (d * h + d);
  return (input_dim * d + d) + spec.block_count * per_block + num_classes * d +
         spec.block_count * per_block + 1;
}

ParamRegistry named_parameters(const Model& model) { return model.registry(); }

namespace {

Tensor2 run_blocks(const Model& model, const std::vector<BlockLayout>& layout, Tensor2 h,
                   std::vector<BlockCache>& caches) {
  caches.reserve(layout.size());
  for (const auto& b : layout) {
    auto [a, ln_cache] = layer_norm(h, model.values(b.ln_gamma), model.values(b.ln_beta));
    auto [u, fc1_cache] = affine(a, model.matrix(b.fc1_w), model.values(b.fc1_b));
    auto [g, act_cache] = gelu(u);
    auto [v, fc2_cache] = affine(g, model.matrix(b.fc2_w), model.values(b.fc2_b));
    auto hv = h.values();
    auto vv = v.values();
    for (std::size_t i = 0; i < hv.size(); ++i) hv[i] += vv[i];
    caches.push_back(BlockCache{std::move(ln_cache), std::move(fc1_cache), std::move(act_cache),
                                std::move(fc2_cache)});
  }
  return h;
}

void finish_pass(TowerPass& pass, bool normalize) {
  if (normalize) {
    auto [u, cache] = l2_normalize(pass.pre_norm);
    pass.embeddings = std::move(u);
    pass.norm = std::move(cache);
  }
}

std::span<double> slice(std::span<double> grad, const ParamEntry& e) {
  return grad.subspan(e.offset, e.size());
}

}  // namespace

TowerPass encode_input(const Model& model, const Tensor2& x, bool normalize) {
  if (x.cols() != model.input_dim()) {
    fail(ErrorCode::kDimension, "encode_input: expected " + std::to_string(model.input_dim()) +
                                    " features, got " + std::to_string(x.cols()));
  }
  TowerPass pass;
  pass.tower = Tower::kInput;
  auto [h0, proj_cache] =
      affine(x, model.matrix(model.proj_weight()), model.values(model.proj_bias()));
  pass.proj = std::move(proj_cache);
  pass.pre_norm = run_blocks(model, model.input_blocks(), std::move(h0), pass.blocks);
  finish_pass(pass, normalize);
  return pass;
}

TowerPass encode_classes(const Model& model, std::span<const std::size_t> class_ids,
                         bool normalize) {
  const MatRef table = model.matrix(model.class_table());
  Tensor2 h0(class_ids.size(), table.cols);
  for (std::size_t r = 0; r < class_ids.size(); ++r) {
    if (class_ids[r] >= table.rows) {
      fail(ErrorCode::kIndex, "encode_class: class id " + std::to_string(class_ids[r]) +
                                  " outside table of " + std::to_string(table.rows));
    }
    auto src = table.row(class_ids[r]);
    std::copy(src.begin(), src.end(), h0.row(r).begin());
  }
  TowerPass pass;
  pass.tower = Tower::kClass;
  pass.class_ids.assign(class_ids.begin(), class_ids.end());
  pass.pre_norm = run_blocks(model, model.class_blocks(), std::move(h0), pass.blocks);
  finish_pass(pass, normalize);
  return pass;
}

Tensor2 encode_class(const Model& model, std::size_t class_id) {
  const std::size_t ids[] = {class_id};
  return encode_classes(model, ids).embeddings;
}

void tower_backward_pre_norm(const Model& model, const TowerPass& pass, const Tensor2& d_pre_norm,
                             std::span<double> grad) {
  if (grad.size() != model.param_count()) {
    fail(ErrorCode::kDimension, "tower_backward: gradient buffer has wrong length");
  }
  const auto& reg = model.registry();
  const auto& layout = pass.tower == Tower::kInput ? model.input_blocks() : model.class_blocks();
  Tensor2 dh = d_pre_norm;
  for (std::size_t i = layout.size(); i-- > 0;) {
    const auto& b = layout[i];
    const auto& c = pass.blocks[i];
    // h_out = h + fc2(gelu(fc1(ln(h))))
    Tensor2 dg = affine_backward_accumulate(c.fc2, dh, slice(grad, reg.at(b.fc2_w)),
                                            slice(grad, reg.at(b.fc2_b)));
    Tensor2 du = gelu_backward(c.act, dg);
    Tensor2 da = affine_backward_accumulate(c.fc1, du, slice(grad, reg.at(b.fc1_w)),
                                            slice(grad, reg.at(b.fc1_b)));
    Tensor2 dln = layer_norm_backward_accumulate(c.ln, da, slice(grad, reg.at(b.ln_gamma)),
                                                 slice(grad, reg.at(b.ln_beta)));
    auto dhv = dh.values();
    auto dlv = dln.values();
    for (std::size_t k = 0; k < dhv.size(); ++k) dhv[k] += dlv[k];
  }
  if (pass.tower == Tower::kInput) {
    affine_backward_accumulate(*pass.proj, dh, slice(grad, reg.at(model.proj_weight())),
                               slice(grad, reg.at(model.proj_bias())), false);
  } else {
    auto table = slice(grad, reg.at(model.class_table()));
    const std::size_t d = model.spec().width;
    for (std::size_t r = 0; r < pass.class_ids.size(); ++r) {
      auto src = dh.row(r);
      double* dst = table.data() + pass.class_ids[r] * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  }
}

void tower_backward(const Model& model, const TowerPass& pass, const Tensor2& d_embeddings,
                    std::span<double> grad) {
  if (!pass.norm) fail(ErrorCode::kState, "tower_backward: pass was not normalized");
  tower_backward_pre_norm(model, pass, l2_normalize_backward(*pass.norm, d_embeddings), grad);
}

std::vector<std::size_t> unique_sorted(std::span<const std::size_t> labels) {
  std::vector<std::size_t> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ContrastiveResult contrastive_loss(const Tensor2& image_embs, const Tensor2& class_embs,
                                   std::span<const std::size_t> targets, double temperature) {
  const std::size_t batch = image_embs.rows();
  const std::size_t k = class_embs.rows();
  const std::size_t d = image_embs.cols();
  if (batch == 0) fail(ErrorCode::kArgument, "contrastive_loss: empty batch");
  if (class_embs.cols() != d || targets.size() != batch) {
    fail(ErrorCode::kDimension, "contrastive_loss: shape mismatch");
  }
  if (!(temperature > 0.0)) fail(ErrorCode::kArgument, "contrastive_loss: temperature <= 0");

  Tensor2 logits(batch, k);
  for (std::size_t i = 0; i < batch; ++i) {
    if (targets[i] >= k) fail(ErrorCode::kIndex, "contrastive_loss: target column out of range");
    auto a = image_embs.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      auto b = class_embs.row(c);
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += a[j] * b[j];
      logits(i, c) = dot / temperature;
    }
  }

  std::vector<double> positives(k, 0.0);
  for (std::size_t i = 0; i < batch; ++i) positives[targets[i]] += 1.0;

  Tensor2 dlogits(batch, k);
  double row_loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    row_loss += lse - z[targets[i]];
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(z[c] - lse);
      dlogits(i, c) += 0.5 * (p - (c == targets[i] ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
  }
  double col_loss = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (positives[c] == 0.0) continue;
    double mx = logits(0, c);
    for (std::size_t i = 1; i < batch; ++i) mx = std::max(mx, logits(i, c));
    double sum = 0.0;
    for (std::size_t i = 0; i < batch; ++i) sum += std::exp(logits(i, c) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < batch; ++i) {
      const double q = targets[i] == c ? 1.0 / positives[c] : 0.0;
      col_loss += q * (lse - logits(i, c));
      const double p = std::exp(logits(i, c) - lse);
      dlogits(i, c) += 0.5 * (p - q) / static_cast<double>(k);
    }
  }
  ContrastiveResult out;
  out.loss = 0.5 * (row_loss / static_cast<double>(batch) + col_loss / static_cast<double>(k));
  out.d_images = Tensor2(batch, d);
  out.d_classes = Tensor2(k, d);
  for (std::size_t i = 0; i < batch; ++i) {
    auto a = image_embs.row(i);
    auto da = out.d_images.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      const double g = dlogits(i, c) / temperature;
      if (g == 0.0) continue;
      auto b = class_embs.row(c);
      auto db = out.d_classes.row(c);
      for (std::size_t j = 0; j < d; ++j) {
        da[j] += g * b[j];
        db[j] += g * a[j];
      }
    }
  }
  return out;
}

namespace {

std::vector<std::size_t> target_columns(std::span<const std::size_t> labels,
                                        std::span<const std::size_t> classes) {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
  }
  return out;
}

}  // namespace

double model_loss_and_grad(const Model& model, const LabeledBatch& batch, std::span<double> grad) {
  if (batch.labels.size() != batch.x.rows()) {
    fail(ErrorCode::kDimension, "batch: label count differs from feature rows");
  }
  const auto classes = unique_sorted(batch.labels);
  const auto targets = target_columns(batch.labels, classes);
  TowerPass images = encode_input(model, batch.x);
  TowerPass cls = encode_classes(model, classes);
  ContrastiveResult r =
      contrastive_loss(images.embeddings, cls.embeddings, targets, model.temperature());
  tower_backward(model, images, r.d_images, grad);
  tower_backward(model, cls, r.d_classes, grad);
  return r.loss;
}

double model_loss(const Model& model, const LabeledBatch& batch) {
  const auto classes = unique_sorted(batch.labels);
  const auto targets = target_columns(batch.labels, classes);
  TowerPass images = encode_input(model, batch.x);
  TowerPass cls = encode_classes(model, classes);
  return contrastive_loss(images.embeddings, cls.embeddings, targets, model.temperature()).loss;
}

std::vector<std::size_t> predict_batch(const Model& model, const Tensor2& x,
                                       std::span<const std::size_t> candidates) {
  if (candidates.empty()) fail(ErrorCode::kArgument, "predict: empty candidate set");
  const auto sorted = unique_sorted(candidates);
  const Tensor2 cls = encode_classes(model, sorted).embeddings;
  const Tensor2 img = encode_input(model, x).embeddings;
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto a = img.row(i);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_c = sorted.front();
    for (std::size_t c = 0; c < sorted.size(); ++c) {
      auto b = cls.row(c);
      double dot = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) dot += a[j] * b[j];
      if (dot > best) {
        best = dot;
        best_c = sorted[c];
      }
    }
    out[i] = best_c;
  }
  return out;
}

std::size_t predict(const Model& model, std::span<const double> x,
                    std::span<const std::size_t> candidates) {
  return predict_batch(model, Tensor2::row_vector(x), candidates).front();
}

}  // namespace spcl

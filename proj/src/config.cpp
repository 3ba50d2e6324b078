#include "spcl/config.hpp"

#include <fstream>
#include <set>

namespace spcl {

using nlohmann::json;

const char* baseline_tag(Baseline b) {
  return b == Baseline::kFullFinetuneEr ? "FLYP+ER" : "sparse";
}

Baseline parse_baseline(const std::string& text) {
  if (text == "none" || text == "sparse") return Baseline::kSparse;
  if (text == "full-finetune-er" || text == "FLYP+ER") return Baseline::kFullFinetuneEr;
  fail(ErrorCode::kConfig, "unknown baseline '" + text + "'");
}

namespace {

class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) fail(ErrorCode::kConfig, "config: " + where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
          throw std::invalid_argument("non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw std::invalid_argument("number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::invalid_argument("string");
      }
      out = it->get<T>();
    } catch (const std::exception& e) {
      fail(ErrorCode::kConfig, "config: " + where(key) + ": expected " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) fail(ErrorCode::kConfig, "config: unknown key " + where(it.key()));
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kConfig, "config: " + what);
}

}  // namespace

UniverseConfig parse_universe_config(const json& doc, const std::string& path) {
  UniverseConfig c;
  Section s(doc, path);
  s.read("pretrain_classes", c.pretrain_classes);
  s.read("cil_classes", c.cil_classes);
  s.read("tasks", c.tasks);
  s.read("input_dim", c.input_dim);
  s.read("descriptor_dim", c.descriptor_dim);
  s.read("pretrain_per_class", c.pretrain_per_class);
  s.read("control_per_class", c.control_per_class);
  s.read("cil_train_per_class", c.cil_train_per_class);
  s.read("cil_test_per_class", c.cil_test_per_class);
  s.read("conditional_size", c.conditional_size);
  s.read("cluster_spread", c.cluster_spread);
  s.read("superclass_count", c.superclass_count);
  s.read("superclass_offset", c.superclass_offset);
  s.read("descriptor_noise", c.descriptor_noise);
  s.finish();
  return c;
}

json universe_config_json(const UniverseConfig& c) {
  return {{"pretrain_classes", c.pretrain_classes},
          {"cil_classes", c.cil_classes},
          {"tasks", c.tasks},
          {"input_dim", c.input_dim},
          {"descriptor_dim", c.descriptor_dim},
          {"pretrain_per_class", c.pretrain_per_class},
          {"control_per_class", c.control_per_class},
          {"cil_train_per_class", c.cil_train_per_class},
          {"cil_test_per_class", c.cil_test_per_class},
          {"conditional_size", c.conditional_size},
          {"cluster_spread", c.cluster_spread},
          {"superclass_count", c.superclass_count},
          {"superclass_offset", c.superclass_offset},
          {"descriptor_noise", c.descriptor_noise}};
}

void RunConfig::validate() const {
  try {
    model.validate();
    data.generator.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  check(temperature > 0.0, "model.temperature must be > 0");
  check(selection.rate >= 0.0 && selection.rate <= 1.0, "selection.rate must lie in [0, 1]");
  check(optimizer.lr >= 0.0 && optimizer.pretrain_lr >= 0.0, "optimizer learning rates must be >= 0");
  check(optimizer.epochs >= 1, "optimizer.epochs must be >= 1");
  check(optimizer.batch_size >= 1, "optimizer.batch_size must be >= 1");
  check(optimizer.warmup_fraction >= 0.0 && optimizer.warmup_fraction <= 1.0,
        "optimizer.warmup_fraction must lie in [0, 1]");
  check(optimizer.adamw.beta1 >= 0.0 && optimizer.adamw.beta1 < 1.0 &&
            optimizer.adamw.beta2 >= 0.0 && optimizer.adamw.beta2 < 1.0,
        "optimizer betas must lie in [0, 1)");
  check(optimizer.adamw.eps > 0.0, "optimizer.eps must be > 0");
  check(optimizer.adamw.weight_decay >= 0.0, "optimizer.weight_decay must be >= 0");
  check(mas.lambda >= 0.0, "mas.lambda must be >= 0");
  check(mas.alpha >= 0.0 && mas.alpha <= 1.0, "mas.alpha must lie in [0, 1]");
  check(replay.capacity_fraction >= 0.0 && replay.capacity_fraction <= 1.0,
        "replay.capacity_fraction must lie in [0, 1]");
  check(!run.seeds.empty(), "run.seeds must not be empty");
  check(model.width == data.generator.descriptor_dim,
        "model.width must equal data.generator.descriptor_dim");
}

RunConfig parse_run_config(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  if (const json* m = root.child("model")) {
    Section s(*m, "model");
    s.read("width", c.model.width);
    s.read("expansion", c.model.expansion);
    s.read("block_count", c.model.block_count);
    s.read("temperature", c.temperature);
    s.finish();
  }
  if (const json* m = root.child("selection")) {
    Section s(*m, "selection");
    std::string mode = mode_name(c.selection.mode);
    std::string strategy = strategy_name(c.selection.strategy);
    s.read("mode", mode);
    s.read("strategy", strategy);
    s.read("rate", c.selection.rate);
    s.finish();
    try {
      c.selection.mode = parse_mode(mode);
      c.selection.strategy = parse_strategy(strategy);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, std::string("config: selection: ") + e.what());
    }
  }
  if (const json* m = root.child("optimizer")) {
    Section s(*m, "optimizer");
    auto& o = c.optimizer;
    s.read("lr", o.lr);
    s.read("epochs", o.epochs);
    s.read("batch_size", o.batch_size);
    s.read("weight_decay", o.adamw.weight_decay);
    s.read("beta1", o.adamw.beta1);
    s.read("beta2", o.adamw.beta2);
    s.read("eps", o.adamw.eps);
    s.read("warmup_fraction", o.warmup_fraction);
    s.read("pretrain_lr", o.pretrain_lr);
    s.read("pretrain_epochs", o.pretrain_epochs);
    s.finish();
  }
  if (const json* m = root.child("mas")) {
    Section s(*m, "mas");
    s.read("enabled", c.mas.enabled);
    s.read("lambda", c.mas.lambda);
    s.read("alpha", c.mas.alpha);
    s.read("conditional_priming", c.mas.conditional_priming);
    s.finish();
  }
  if (const json* m = root.child("replay")) {
    Section s(*m, "replay");
    s.read("enabled", c.replay.enabled);
    s.read("capacity_fraction", c.replay.capacity_fraction);
    s.finish();
  }
  if (const json* m = root.child("data")) {
    Section s(*m, "data");
    s.read("seed", c.data.seed);
    s.read("universe_dir", c.data.universe_dir);
    if (const json* g = s.child("generator")) c.data.generator = parse_universe_config(*g, "data.generator");
    s.finish();
  }
  if (const json* m = root.child("run")) {
    Section s(*m, "run");
    std::string baseline = "none";
    s.read("seeds", c.run.seeds);
    s.read("baseline", baseline);
    s.read("checkpoint_dir", c.run.checkpoint_dir);
    s.finish();
    try {
      c.run.baseline = parse_baseline(baseline);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, std::string("config: run.baseline: ") + e.what());
    }
  }
  root.child("ablate");  // consumed by cmd_ablate
  root.finish();
  c.validate();
  return c;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfig, "config: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "config: " + path.string() + ": " + e.what());
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json_file(path));
}

AblationConfig parse_ablation_config(const json& doc) {
  AblationConfig a;
  auto it = doc.find("ablate");
  if (it == doc.end()) return a;
  Section s(*it, "ablate");
  s.read("presets", a.presets);
  s.read("cross", a.cross);
  if (const json* axes = s.child("axes")) {
    if (!axes->is_object()) fail(ErrorCode::kConfig, "config: ablate.axes must be an object");
    static const std::set<std::string> known{"mode", "rate", "strategy", "buffer", "conditional",
                                             "baseline"};
    for (auto ax = axes->begin(); ax != axes->end(); ++ax) {
      if (!known.count(ax.key())) fail(ErrorCode::kConfig, "config: unknown key ablate.axes." + ax.key());
      if (!ax->is_array()) fail(ErrorCode::kConfig, "config: ablate.axes." + ax.key() + " must be a list");
      a.axes[ax.key()] = *ax;
    }
  }
  s.finish();
  return a;
}

AblationConfig load_ablation_config(const std::filesystem::path& path) {
  return parse_ablation_config(read_json_file(path));
}

json run_config_json(const RunConfig& c) {
  const auto& o = c.optimizer;
  json data = {{"seed", c.data.seed}, {"generator", universe_config_json(c.data.generator)}};
  if (!c.data.universe_dir.empty()) data["universe_dir"] = c.data.universe_dir;
  json run = {{"seeds", c.run.seeds},
              {"baseline", c.run.baseline == Baseline::kFullFinetuneEr ? "full-finetune-er" : "none"}};
  if (!c.run.checkpoint_dir.empty()) run["checkpoint_dir"] = c.run.checkpoint_dir;
  return {
      {"model",
       {{"width", c.model.width},
        {"expansion", c.model.expansion},
        {"block_count", c.model.block_count},
        {"temperature", c.temperature}}},
      {"selection",
       {{"mode", mode_name(c.selection.mode)},
        {"strategy", strategy_name(c.selection.strategy)},
        {"rate", c.selection.rate}}},
      {"optimizer",
       {{"lr", o.lr},
        {"epochs", o.epochs},
        {"batch_size", o.batch_size},
        {"weight_decay", o.adamw.weight_decay},
        {"beta1", o.adamw.beta1},
        {"beta2", o.adamw.beta2},
        {"eps", o.adamw.eps},
        {"warmup_fraction", o.warmup_fraction},
        {"pretrain_lr", o.pretrain_lr},
        {"pretrain_epochs", o.pretrain_epochs}}},
      {"mas",
       {{"enabled", c.mas.enabled},
        {"lambda", c.mas.lambda},
        {"alpha", c.mas.alpha},
        {"conditional_priming", c.mas.conditional_priming}}},
      {"replay", {{"enabled", c.replay.enabled}, {"capacity_fraction", c.replay.capacity_fraction}}},
      {"data", data},
      {"run", run},
  };
}

std::uint64_t config_hash(const RunConfig& config) {
  json j = run_config_json(config);
  j["run"].erase("seeds");  // the hash identifies settings, not the seed list
  j["data"].erase("universe_dir");
  j["run"].erase("checkpoint_dir");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xF];
    value >>= 4;
  }
  return out;
}

}  // namespace spcl

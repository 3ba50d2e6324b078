#include "spcl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "spcl/config.hpp"

namespace spcl {

using nlohmann::json;

LabeledBatch LabeledSet::gather(std::span<const std::size_t> rows) const {
  LabeledBatch batch{Tensor2(rows.size(), features.cols()), {}};
  batch.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = features.row(rows[r]);
    std::copy(src.begin(), src.end(), batch.x.row(r).begin());
    batch.labels.push_back(labels[rows[r]]);
  }
  return batch;
}

void LabeledSet::validate() const {
  if (labels.empty()) fail(ErrorCode::kArgument, "labeled set is empty");
  if (features.rows() != labels.size()) {
    fail(ErrorCode::kDimension, "labeled set: feature rows differ from label count");
  }
  for (std::size_t y : labels) {
    if (!std::binary_search(classes.begin(), classes.end(), y)) {
      fail(ErrorCode::kArgument, "labeled set: label " + std::to_string(y) +
                                     " outside the declared class universe");
    }
  }
  require_finite(features.values(), "labeled set features");
}

std::vector<std::size_t> CilStream::classes_through(std::size_t task_index) const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t <= task_index && t < tasks.size(); ++t) {
    out.insert(out.end(), tasks[t].classes.begin(), tasks[t].classes.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t CilStream::train_size() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.train.size();
  return n;
}

namespace {

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = normal(rng);
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
  return v;
}

// Unit vector at angle `angle` from `axis`, in a random orthogonal direction.
std::vector<double> rotate_away(std::mt19937_64& rng, std::span<const double> axis, double angle) {
  std::vector<double> u = random_unit(rng, axis.size());
  double dot = 0.0;
  for (std::size_t i = 0; i < axis.size(); ++i) dot += u[i] * axis[i];
  double sq = 0.0;
  for (std::size_t i = 0; i < axis.size(); ++i) {
    u[i] -= dot * axis[i];
    sq += u[i] * u[i];
  }
  const double norm = std::sqrt(sq);
  std::vector<double> out(axis.size());
  for (std::size_t i = 0; i < axis.size(); ++i) {
    out[i] = std::cos(angle) * axis[i] + std::sin(angle) * u[i] / norm;
  }
  return out;
}

void append_cluster(std::mt19937_64& rng, std::span<const double> centroid, double spread,
                    std::size_t count, std::size_t label, std::vector<double>& values,
                    std::vector<std::size_t>& labels) {
  const double sigma = spread / std::sqrt(static_cast<double>(centroid.size()));
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t k = 0; k < count; ++k) {
    for (double c : centroid) values.push_back(c + noise(rng));
    labels.push_back(label);
  }
}

LabeledSet make_set(std::vector<double> values, std::vector<std::size_t> labels, std::size_t dim,
                    std::vector<std::size_t> classes) {
  LabeledSet set;
  set.features = Tensor2(labels.size(), dim, std::move(values));
  set.labels = std::move(labels);
  set.classes = std::move(classes);
  return set;
}

}  // namespace

void UniverseConfig::validate() const {
  if (pretrain_classes == 0 || cil_classes == 0 || tasks == 0 || input_dim == 0 ||
      descriptor_dim == 0 || superclass_count == 0) {
    fail(ErrorCode::kArgument, "universe: counts and dims must be positive");
  }
  if (superclass_count > pretrain_classes) {
    fail(ErrorCode::kArgument, "universe: superclass_count exceeds pretrain_classes");
  }
  if (cil_classes % tasks != 0) {
    fail(ErrorCode::kArgument, "universe: cil_classes (" + std::to_string(cil_classes) +
                                   ") not divisible by tasks (" + std::to_string(tasks) + ")");
  }
  if (pretrain_per_class == 0 || control_per_class == 0 || cil_train_per_class == 0 ||
      cil_test_per_class == 0) {
    fail(ErrorCode::kArgument, "universe: per-class counts must be positive");
  }
  if (!(cluster_spread >= 0.0) || !(superclass_offset >= 0.0) || !(descriptor_noise >= 0.0)) {
    fail(ErrorCode::kArgument, "universe: spreads must be non-negative");
  }
}

Universe make_synthetic_universe(const UniverseConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t dim = config.input_dim;
  const std::size_t p = config.pretrain_classes;
  const std::size_t total = p + config.cil_classes;

  Universe u;
  u.config = config;
  u.seed = seed;
  u.centroids = Tensor2(total, dim);
  for (std::size_t c = 0; c < p; ++c) {
    auto v = random_unit(rng, dim);
    std::copy(v.begin(), v.end(), u.centroids.row(c).begin());
  }
  // CIL classes are fine-grained variants of the first superclass_count
  // pretrain classes, assigned in contiguous id blocks.
  std::uniform_real_distribution<double> half(0.5, 1.0);
  for (std::size_t j = 0; j < config.cil_classes; ++j) {
    const auto axis = u.centroids.row(j * config.superclass_count / config.cil_classes);
    auto v = rotate_away(rng, axis, config.superclass_offset * half(rng));
    std::copy(v.begin(), v.end(), u.centroids.row(p + j).begin());
  }

  std::vector<std::size_t> pre_classes(p);
  std::iota(pre_classes.begin(), pre_classes.end(), std::size_t{0});
  std::vector<std::size_t> cil_ids(config.cil_classes);
  std::iota(cil_ids.begin(), cil_ids.end(), p);

  {
    std::vector<double> train_v, control_v;
    std::vector<std::size_t> train_y, control_y;
    for (std::size_t c = 0; c < p; ++c) {
      append_cluster(rng, u.centroids.row(c), config.cluster_spread, config.pretrain_per_class, c,
                     train_v, train_y);
      append_cluster(rng, u.centroids.row(c), config.cluster_spread, config.control_per_class, c,
                     control_v, control_y);
    }
    u.pretrain = make_set(std::move(train_v), std::move(train_y), dim, pre_classes);
    u.control = make_set(std::move(control_v), std::move(control_y), dim, pre_classes);
  }
  {
    std::vector<double> train_v, test_v;
    std::vector<std::size_t> train_y, test_y;
    for (std::size_t c : cil_ids) {
      append_cluster(rng, u.centroids.row(c), config.cluster_spread, config.cil_train_per_class, c,
                     train_v, train_y);
      append_cluster(rng, u.centroids.row(c), config.cluster_spread, config.cil_test_per_class, c,
                     test_v, test_y);
    }
    u.stream = split_class_incremental(make_set(std::move(train_v), std::move(train_y), dim, cil_ids),
                                       make_set(std::move(test_v), std::move(test_y), dim, cil_ids),
                                       config.tasks);
  }
  {
    std::uniform_int_distribution<std::size_t> pick(0, p - 1);
    std::vector<double> values;
    std::vector<std::size_t> ignored;
    for (std::size_t k = 0; k < config.conditional_size; ++k) {
      append_cluster(rng, u.centroids.row(pick(rng)), config.cluster_spread, 1, 0, values, ignored);
    }
    u.conditional = Tensor2(config.conditional_size, dim, std::move(values));
  }
  {
    // Descriptors are a fixed random linear image of the centroid plus noise,
    // standing in for the text side of a pretrained dual encoder.
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    Tensor2 lift(config.descriptor_dim, dim);
    for (double& v : lift.values()) v = normal(rng);
    std::normal_distribution<double> noise(
        0.0, config.descriptor_noise / std::sqrt(static_cast<double>(config.descriptor_dim)));
    u.descriptors = Tensor2(total, config.descriptor_dim);
    for (std::size_t c = 0; c < total; ++c) {
      auto row = u.descriptors.row(c);
      auto centroid = u.centroids.row(c);
      double sq = 0.0;
      for (std::size_t r = 0; r < config.descriptor_dim; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) acc += lift(r, i) * centroid[i];
        row[r] = acc + noise(rng);
        sq += row[r] * row[r];
      }
      const double norm = std::sqrt(sq);
      for (double& v : row) v /= norm;
    }
  }
  return u;
}

CilStream split_class_incremental(const LabeledSet& train, const LabeledSet& test,
                                  std::size_t tasks) {
  std::vector<std::size_t> classes = unique_sorted(train.classes);
  if (tasks == 0 || classes.size() % tasks != 0) {
    fail(ErrorCode::kArgument, "split_class_incremental: " + std::to_string(classes.size()) +
                                   " classes not divisible into " + std::to_string(tasks) +
                                   " tasks");
  }
  const std::size_t per_task = classes.size() / tasks;
  auto subset = [](const LabeledSet& src, const std::vector<std::size_t>& keep) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (std::binary_search(keep.begin(), keep.end(), src.labels[i])) rows.push_back(i);
    }
    LabeledBatch b = src.gather(rows);
    return LabeledSet{std::move(b.x), std::move(b.labels), keep};
  };
  CilStream stream;
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<std::size_t> group(classes.begin() + static_cast<std::ptrdiff_t>(t * per_task),
                                   classes.begin() + static_cast<std::ptrdiff_t>((t + 1) * per_task));
    stream.tasks.push_back(TaskSplit{group, subset(train, group), subset(test, group)});
  }
  return stream;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_rows(std::ofstream& out, const Tensor2& features, const std::vector<std::size_t>* labels) {
  std::string line;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    line.clear();
    if (labels != nullptr) line += std::to_string((*labels)[r]);
    auto row = features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (labels != nullptr || c > 0) line += ',';
      line += format_double(row[c]);
    }
    line += '\n';
    out << line;
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

// Reads a CSV whose header is [label,]f0..f{dim-1}.
void read_csv(const std::filesystem::path& path, std::size_t dim, bool with_label,
              std::vector<double>& values, std::vector<std::size_t>& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kSchema, path.string() + ": missing header");
  line = trim_cr(line);
  const auto header = split_commas(line);
  std::vector<std::string> expected;
  if (with_label) expected.push_back("label");
  for (std::size_t i = 0; i < dim; ++i) expected.push_back("f" + std::to_string(i));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size() || header[i] != expected[i]) {
      fail(ErrorCode::kSchema, path.string() + ": missing column " + expected[i]);
    }
  }
  if (header.size() != expected.size()) {
    fail(ErrorCode::kSchema, path.string() + ": unexpected column " +
                                 std::string(header[expected.size()]) + " (declared dim " +
                                 std::to_string(dim) + ")");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    auto bad = [&](const std::string& why) {
      fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != expected.size()) {
      bad("expected " + std::to_string(expected.size()) + " fields, got " +
          std::to_string(fields.size()));
    }
    std::size_t f = 0;
    if (with_label) {
      std::size_t y = 0;
      auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), y);
      if (ec != std::errc() || ptr != fields[0].data() + fields[0].size()) bad("invalid label");
      labels.push_back(y);
      f = 1;
    }
    for (; f < fields.size(); ++f) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(fields[f].data(), fields[f].data() + fields[f].size(), v);
      if (ec != std::errc() || ptr != fields[f].data() + fields[f].size() || !std::isfinite(v)) {
        bad("invalid value in column " + expected[f]);
      }
      values.push_back(v);
    }
  }
}

}  // namespace

void write_csv_dataset(const std::filesystem::path& path, const LabeledSet& set) {
  auto out = open_out(path);
  out << "label";
  for (std::size_t i = 0; i < set.features.cols(); ++i) out << ",f" << i;
  out << '\n';
  write_rows(out, set.features, &set.labels);
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

LabeledSet load_csv_dataset(const std::filesystem::path& path, std::size_t input_dim) {
  std::vector<double> values;
  std::vector<std::size_t> labels;
  read_csv(path, input_dim, true, values, labels);
  if (labels.empty()) fail(ErrorCode::kSchema, path.string() + ": no data rows");
  LabeledSet set;
  set.classes = unique_sorted(labels);
  set.features = Tensor2(labels.size(), input_dim, std::move(values));
  set.labels = std::move(labels);
  return set;
}

void write_csv_features(const std::filesystem::path& path, const Tensor2& features) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < features.cols(); ++i) out << (i ? ",f" : "f") << i;
  out << '\n';
  write_rows(out, features, nullptr);
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

Tensor2 load_csv_features(const std::filesystem::path& path, std::size_t dim) {
  std::vector<double> values;
  std::vector<std::size_t> unused;
  read_csv(path, dim, false, values, unused);
  const std::size_t rows = values.size() / dim;
  return Tensor2(rows, dim, std::move(values));
}

namespace {

LabeledSet labeled_from_table(const Tensor2& table) {
  LabeledSet s;
  s.features = table;
  s.labels.resize(table.rows());
  std::iota(s.labels.begin(), s.labels.end(), std::size_t{0});
  s.classes = s.labels;
  return s;
}

}  // namespace

void export_universe(const Universe& u, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  json splits = json::array();
  auto emit = [&](const std::string& name, const std::string& kind, const LabeledSet& set) {
    const std::string file = name + ".csv";
    write_csv_dataset(dir / file, set);
    splits.push_back({{"name", name}, {"file", file}, {"kind", kind}, {"rows", set.size()},
                      {"classes", set.classes}});
  };
  emit("pretrain", "pretrain", u.pretrain);
  emit("control", "control", u.control);
  json tasks = json::array();
  for (std::size_t t = 0; t < u.stream.tasks.size(); ++t) {
    const auto& task = u.stream.tasks[t];
    const std::string base = "task" + std::to_string(t);
    emit(base + "_train", "task_train", task.train);
    emit(base + "_test", "task_test", task.test);
    tasks.push_back({{"index", t},
                     {"classes", task.classes},
                     {"train", base + "_train.csv"},
                     {"test", base + "_test.csv"}});
  }
  emit("descriptors", "descriptors", labeled_from_table(u.descriptors));
  emit("centroids", "centroids", labeled_from_table(u.centroids));
  write_csv_features(dir / "conditional.csv", u.conditional);
  splits.push_back({{"name", "conditional"}, {"file", "conditional.csv"}, {"kind", "conditional"},
                    {"rows", u.conditional.rows()}, {"classes", json::array()}});

  json manifest = {{"format", "spcl-universe"},
                   {"version", 1},
                   {"seed", u.seed},
                   {"generator", universe_config_json(u.config)},
                   {"pretrain_classes", u.pretrain.classes},
                   {"tasks", tasks},
                   {"splits", splits}};
  auto out = open_out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed: manifest.json");
}

Universe load_universe(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorCode::kIo, "missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "manifest.json: " + std::string(e.what()));
  }
  Universe u;
  try {
    u.config = parse_universe_config(manifest.at("generator"), "generator");
    u.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, "manifest.json: " + std::string(e.what()));
  }
  const std::size_t dim = u.config.input_dim;
  u.pretrain = load_csv_dataset(dir / "pretrain.csv", dim);
  u.control = load_csv_dataset(dir / "control.csv", dim);
  for (const auto& t : manifest.at("tasks")) {
    auto train = load_csv_dataset(dir / t.at("train").get<std::string>(), dim);
    auto test = load_csv_dataset(dir / t.at("test").get<std::string>(), dim);
    auto classes = t.at("classes").get<std::vector<std::size_t>>();
    train.classes = classes;
    test.classes = classes;
    u.stream.tasks.push_back(TaskSplit{classes, std::move(train), std::move(test)});
  }
  u.pretrain.classes = manifest.at("pretrain_classes").get<std::vector<std::size_t>>();
  u.control.classes = u.pretrain.classes;
  u.descriptors = load_csv_dataset(dir / "descriptors.csv", u.config.descriptor_dim).features;
  u.centroids = load_csv_dataset(dir / "centroids.csv", dim).features;
  u.conditional = load_csv_features(dir / "conditional.csv", dim);
  return u;
}

}  // namespace spcl

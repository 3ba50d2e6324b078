#include <filesystem>
#include <fstream>
#include <set>

#include "spcl/checkpoint.hpp"
#include "spcl/config.hpp"
#include "spcl/data.hpp"
#include "support.hpp"

using namespace spcl;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("spcl_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

double nearest_centroid_accuracy(const LabeledSet& set, const Tensor2& centroids) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c : set.classes) {
      double d = 0;
      for (std::size_t j = 0; j < centroids.cols(); ++j) {
        const double diff = set.features(i, j) - centroids(c, j);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += best == set.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

}  // namespace

TEST_CASE("universe structure") {
  const auto cfg = spcl::test::tiny_universe();
  const Universe u = make_synthetic_universe(cfg, 5);
  CHECK(u.pretrain.size() == 8 * 20);
  CHECK(u.control.size() == 8 * 10);
  CHECK(u.stream.tasks.size() == 3);
  CHECK(u.descriptors.rows() == 14);
  CHECK(u.descriptors.cols() == 8);
  CHECK(u.conditional.rows() == 20);
  std::set<std::size_t> seen(u.pretrain.classes.begin(), u.pretrain.classes.end());
  for (const auto& t : u.stream.tasks) {
    CHECK(t.classes.size() == 2);
    CHECK(t.train.size() == 24);
    CHECK(t.test.size() == 12);
    for (std::size_t c : t.classes) CHECK(seen.insert(c).second);
  }
  CHECK(u.stream.tasks[0].classes == std::vector<std::size_t>{8, 9});

  const Universe again = make_synthetic_universe(cfg, 5);
  CHECK(again.pretrain.features == u.pretrain.features);
  CHECK(again.stream.tasks[2].test.features == u.stream.tasks[2].test.features);
  CHECK(again.descriptors == u.descriptors);

  auto bad = cfg;
  bad.tasks = 4;
  CHECK_CODE(make_synthetic_universe(bad, 1), ErrorCode::kArgument);
}

TEST_CASE("zero spread gives perfect nearest-centroid accuracy") {
  auto cfg = spcl::test::tiny_universe();
  cfg.cluster_spread = 0.0;
  const Universe u = make_synthetic_universe(cfg, 9);
  CHECK(nearest_centroid_accuracy(u.pretrain, u.centroids) == 1.0);
  CHECK(nearest_centroid_accuracy(u.control, u.centroids) == 1.0);
  for (const auto& t : u.stream.tasks) {
    CHECK(nearest_centroid_accuracy(t.train, u.centroids) == 1.0);
    CHECK(nearest_centroid_accuracy(t.test, u.centroids) == 1.0);
  }
}

TEST_CASE("class-incremental split") {
  LabeledSet set{Tensor2(20, 1), {}, {}};
  for (std::size_t i = 0; i < 20; ++i) {
    set.labels.push_back(i);
    set.classes.push_back(i);
  }
  const CilStream s = split_class_incremental(set, set, 10);
  REQUIRE(s.tasks.size() == 10);
  CHECK(s.tasks[0].classes == std::vector<std::size_t>{0, 1});
  CHECK(s.tasks[1].classes == std::vector<std::size_t>{2, 3});
  CHECK(split_class_incremental(set, set, 1).tasks[0].train.size() == 20);
  CHECK_CODE(split_class_incremental(set, set, 3), ErrorCode::kArgument);
}

TEST_CASE("csv round trip and errors") {
  const auto dir = scratch("csv");
  LabeledSet set{Tensor2{{0.1, -2.5}, {1e-17, 3.0}}, {4, 1}, {1, 4}};
  write_csv_dataset(dir / "a.csv", set);
  const LabeledSet back = load_csv_dataset(dir / "a.csv", 2);
  CHECK(back.features == set.features);
  CHECK(back.labels == set.labels);

  write_text(dir / "b.csv", "label,f0\n1,0.5\n");
  try {
    load_csv_dataset(dir / "b.csv", 2);
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchema);
    CHECK(std::string(e.what()).find("missing column f1") != std::string::npos);
  }
  write_text(dir / "c.csv", "label,f0,f1\n1,0.5,0.2\n2,abc,1\n");
  try {
    load_csv_dataset(dir / "c.csv", 2);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("universe export and reload") {
  const auto dir = scratch("universe");
  const Universe u = make_synthetic_universe(spcl::test::tiny_universe(), 3);
  export_universe(u, dir);
  std::ifstream in(dir / "manifest.json");
  const json manifest = json::parse(in);
  std::set<std::string> listed;
  for (const auto& s : manifest.at("splits")) listed.insert(s.at("file").get<std::string>());
  std::set<std::string> on_disk;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") on_disk.insert(e.path().filename().string());
  }
  CHECK(listed == on_disk);

  const Universe back = load_universe(dir);
  CHECK(back.pretrain.features == u.pretrain.features);
  CHECK(back.control.labels == u.control.labels);
  CHECK(back.descriptors == u.descriptors);
  CHECK(back.conditional == u.conditional);
  CHECK(back.stream.tasks[1].test.features == u.stream.tasks[1].test.features);
  CHECK(back.stream.tasks[1].classes == u.stream.tasks[1].classes);

  const auto dir2 = scratch("universe2");
  export_universe(make_synthetic_universe(spcl::test::tiny_universe(), 3), dir2);
  for (const auto& f : on_disk) {
    std::ifstream a(dir / f), b(dir2 / f);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
}

TEST_CASE("config defaults follow the documented training setup") {
  const RunConfig c = parse_run_config(json::object());
  CHECK(c.selection.rate == 0.10);
  CHECK(c.optimizer.lr == 7.5e-6);
  CHECK(c.optimizer.epochs == 10);
  CHECK(c.optimizer.batch_size == 32);
  CHECK(c.replay.capacity_fraction == 0.04);
  CHECK(c.mas.lambda == 0.05);
  CHECK(c.mas.alpha == 0.5);
  CHECK(c.optimizer.adamw.weight_decay == 0.0);
  CHECK(c.run.seeds.size() == 5);
  CHECK(c.temperature == 0.07);
}

TEST_CASE("config parsing is strict") {
  auto message = [](const json& doc) -> std::string {
    try {
      parse_run_config(doc);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfig);
      return e.what();
    }
    return "";
  };
  CHECK(message({{"selection", {{"rat", 0.1}}}}).find("selection.rat") != std::string::npos);
  CHECK(message({{"optimiser", json::object()}}).find("optimiser") != std::string::npos);
  CHECK(message({{"optimizer", {{"epochs", "ten"}}}}).find("optimizer.epochs") != std::string::npos);
  CHECK(message({{"selection", {{"strategy", "best"}}}}).find("selection") != std::string::npos);
  CHECK(message({{"run", {{"baseline", "dense"}}}}).find("run.baseline") != std::string::npos);
  CHECK(message({{"model", {{"width", 16}}}}).find("descriptor_dim") != std::string::npos);
  CHECK(message({{"data", {{"generator", {{"tasks", 3}}}}}}).find("cil_classes") != std::string::npos);

  const RunConfig fflyp = parse_run_config({{"run", {{"baseline", "full-finetune-er"}}}});
  CHECK(std::string(baseline_tag(fflyp.run.baseline)) == "FLYP+ER");
}

TEST_CASE("config json round trip and hash") {
  RunConfig c = parse_run_config({{"selection", {{"rate", 0.5}, {"mode", "both"}}}});
  const RunConfig back = parse_run_config(run_config_json(c));
  CHECK(run_config_json(back) == run_config_json(c));
  CHECK(config_hash(back) == config_hash(c));
  RunConfig other = c;
  other.run.seeds = {7};
  CHECK(config_hash(other) == config_hash(c));
  other.selection.rate = 0.4;
  CHECK(config_hash(other) != config_hash(c));
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("ablation section") {
  const json doc = {{"ablate", {{"presets", {"rate"}}, {"axes", {{"mode", {"first", "both"}}}}}}};
  const AblationConfig a = parse_ablation_config(doc);
  CHECK(a.presets == std::vector<std::string>{"rate"});
  CHECK(a.axes.contains("mode"));
  CHECK_CODE(parse_ablation_config({{"ablate", {{"axes", {{"depth", {1}}}}}}}), ErrorCode::kConfig);
  CHECK_NOTHROW(parse_run_config(doc));
}

TEST_CASE("checkpoint round trip is bit exact") {
  Model m = build_model(BlockSpec{8, 2, 1}, 6, 14, 4);
  m.mutable_params()[3] = 1.0 / 3.0;
  Checkpoint ck;
  store_model(ck, m);
  MasState mas = MasState::zeros(m.param_count(), 0.25, 0.1);
  mas.omega[5] = 0.125;
  mas.snapshot(m.params());
  store_mas(ck, mas);
  std::mt19937_64 rng(1);
  ReplayBuffer buf(3);
  for (std::size_t i = 0; i < 7; ++i) buf.reservoir_insert({{double(i), -double(i)}, i, i / 3}, rng);
  store_buffer(ck, buf);

  const auto bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(load_model(back) == m);
  const MasState mas2 = load_mas(back);
  CHECK(mas2.omega == mas.omega);
  CHECK(mas2.anchor == mas.anchor);
  CHECK(mas2.alpha == 0.25);
  const ReplayBuffer buf2 = load_buffer(back);
  CHECK(buf2.items() == buf.items());
  CHECK(buf2.seen_count() == 7);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_CODE(decode_checkpoint(bad), ErrorCode::kParse);
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  CHECK_CODE(decode_checkpoint(cut), ErrorCode::kParse);

  const auto dir = scratch("ckpt");
  write_checkpoint(dir / "m.spcl", ck);
  CHECK(load_model(read_checkpoint(dir / "m.spcl")) == m);
}

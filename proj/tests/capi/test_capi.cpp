#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spcl/spcl.h"

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "model": {"width": 8, "expansion": 2, "block_count": 1},
  "optimizer": {"lr": 1e-3, "epochs": 1, "pretrain_epochs": 2},
  "data": {"seed": 3, "generator": {
    "pretrain_classes": 8, "cil_classes": 6, "tasks": 3, "input_dim": 6, "descriptor_dim": 8,
    "pretrain_per_class": 20, "control_per_class": 10, "cil_train_per_class": 12,
    "cil_test_per_class": 6, "conditional_size": 20, "superclass_count": 3}},
  "run": {"seeds": [0, 1]}
})";

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("spcl_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST_CASE("config handles and error reporting") {
  spcl_config* cfg = nullptr;
  REQUIRE(spcl_config_default(&cfg) == SPCL_OK);
  char hash[17];
  REQUIRE(spcl_config_hash(cfg, hash) == SPCL_OK);
  CHECK(std::strlen(hash) == 16);
  CHECK(spcl_config_set_baseline(cfg, "dense") == SPCL_ERR_CONFIG);
  CHECK(std::string(spcl_last_error()).find("dense") != std::string::npos);
  CHECK(spcl_config_set_baseline(cfg, "full-finetune-er") == SPCL_OK);
  char hash2[17];
  spcl_config_hash(cfg, hash2);
  CHECK(std::string(hash) != std::string(hash2));
  spcl_config_free(cfg);

  const fs::path dir = scratch("cfg");
  std::ofstream(dir / "bad.json") << R"({"selection": {"rat": 0.1}})";
  spcl_config* bad = nullptr;
  CHECK(spcl_config_load((dir / "bad.json").c_str(), &bad) == SPCL_ERR_CONFIG);
  CHECK(bad == nullptr);
  CHECK(std::string(spcl_last_error()).find("selection.rat") != std::string::npos);
  CHECK(spcl_config_load((dir / "missing.json").c_str(), &bad) == SPCL_ERR_CONFIG);
  CHECK(spcl_config_default(nullptr) == SPCL_ERR_ARGUMENT);
  CHECK(std::string(spcl_status_name(SPCL_ERR_ORACLE)) == "oracle failure");
}

TEST_CASE("pretrain, run and predict through the C interface") {
  const fs::path dir = scratch("run");
  std::ofstream(dir / "tiny.json") << kTinyConfig;
  spcl_config* cfg = nullptr;
  REQUIRE(spcl_config_load((dir / "tiny.json").c_str(), &cfg) == SPCL_OK);
  spcl_universe* u = nullptr;
  REQUIRE(spcl_universe_generate(cfg, &u) == SPCL_OK);
  REQUIRE(spcl_universe_export(u, (dir / "universe").c_str()) == SPCL_OK);
  spcl_universe* loaded = nullptr;
  REQUIRE(spcl_universe_load((dir / "universe").c_str(), &loaded) == SPCL_OK);

  std::vector<std::string> log;
  REQUIRE(spcl_pretrain(cfg, u, (dir / "pre").c_str(), collect, &log) == SPCL_OK);
  CHECK(fs::exists(dir / "pre" / "pretrained_seed0.spcl"));
  CHECK(fs::exists(dir / "pre" / "pretrained_seed1.spcl"));
  CHECK(lines_of(dir / "pre" / "frozen.jsonl").size() == 2);

  REQUIRE(spcl_config_set_checkpoint_dir(cfg, (dir / "pre").c_str()) == SPCL_OK);
  REQUIRE(spcl_run(cfg, loaded, (dir / "a").c_str(), nullptr, nullptr) == SPCL_OK);
  REQUIRE(spcl_run(cfg, loaded, (dir / "b").c_str(), nullptr, nullptr) == SPCL_OK);
  const auto a = lines_of(dir / "a" / "metrics.jsonl");
  CHECK(a.size() == 2 * (3 + 1) + 1);
  CHECK(a == lines_of(dir / "b" / "metrics.jsonl"));

  spcl_model* m = nullptr;
  REQUIRE(spcl_model_load((dir / "a" / "final_seed0.spcl").c_str(), &m) == SPCL_OK);
  CHECK(spcl_model_input_dim(m) == 6);
  CHECK(spcl_model_param_count(m) > 0);
  std::vector<double> x(2 * 6, 0.25);
  x[0] = -1.0;
  const size_t candidates[] = {8, 9, 10};
  size_t labels[2] = {99, 99};
  REQUIRE(spcl_model_predict(m, x.data(), 2, candidates, 3, labels) == SPCL_OK);
  for (size_t y : labels) CHECK((y >= 8 && y <= 10));
  const size_t out_of_range[] = {50};
  CHECK(spcl_model_predict(m, x.data(), 2, out_of_range, 1, labels) == SPCL_ERR_INDEX);
  spcl_model_free(m);

  CHECK(spcl_model_load((dir / "nope.spcl").c_str(), &m) == SPCL_ERR_IO);
  spcl_universe_free(loaded);
  spcl_universe_free(u);
  spcl_config_free(cfg);
}

TEST_CASE("oracle suite status") {
  std::vector<std::string> log;
  size_t failures = 99;
  CHECK(spcl_gradcheck(0, 0, collect, &log, &failures) == SPCL_OK);
  CHECK(failures == 0);
  CHECK(!log.empty());
  log.clear();
  CHECK(spcl_gradcheck(0, 1, collect, &log, &failures) == SPCL_ERR_ORACLE);
  CHECK(failures > 0);
}

#include <catch2/catch_amalgamated.hpp>

#include "dlrlock/artifacts.hpp"
#include "dlrlock/config.hpp"
#include "test_util.hpp"

using namespace dlrlock;

TEST_CASE("config: unknown keys are rejected, never ignored") {
  const std::string good = R"({ "experiment": "matfac", "seed": 3, "params": { "d": 16 } })";
  ExperimentConfig c = parse_config(good);
  REQUIRE(c.matfac.d == 16);
  REQUIRE(c.seed == 3);

  REQUIRE_THROWS_AS(parse_config(R"({ "experiment": "matfac", "params": {}, "oops": 1 })"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config(R"({ "experiment": "matfac", "params": { "dd": 16 } })"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config(R"({ "experiment": "wat", "params": {} })"), ConfigError);
  REQUIRE_THROWS_AS(parse_config("not json"), ConfigError);
}

TEST_CASE("config round trip is semantically lossless") {
  const std::string text = R"({
    "experiment": "penalty",
    "seed": 9,
    "out": "runs/x",
    "params": {
      "lambda_count": 5, "lambda_min": 1e-4, "lambda_max": 10.0,
      "lrs": [0.01, 0.1], "steps": 12, "batch": 8, "probes": 2,
      "omega_kinds": ["hessian_trace"], "scopes": ["first_layer", "random_10pct"],
      "hidden": 32, "train_samples": 128
    }
  })";
  ExperimentConfig a = parse_config(text);
  ExperimentConfig b = parse_config(config_to_json(a).dump());
  REQUIRE(b.experiment == a.experiment);
  REQUIRE(b.seed == a.seed);
  REQUIRE(b.out == a.out);
  REQUIRE(b.penalty.sweep.lambda_count == 5);
  REQUIRE(b.penalty.sweep.lambda_min == a.penalty.sweep.lambda_min);
  REQUIRE(b.penalty.sweep.lrs == a.penalty.sweep.lrs);
  REQUIRE(b.penalty.omega_kinds == a.penalty.omega_kinds);
  REQUIRE(b.penalty.scopes == a.penalty.scopes);
  REQUIRE(b.penalty.sweep.hidden == 32);
  REQUIRE(config_to_json(a).dump() == config_to_json(b).dump());
}

TEST_CASE("config round trip covers every experiment kind") {
  const std::vector<std::string> texts = {
      R"({"experiment":"lock","params":{"corpus":"data/corpus.txt","teacher":{"checkpoint":"t.dlrl"},"rank":4,"phase1":{"steps":10},"phase2":{"steps":5}}})",
      R"({"experiment":"finetune","params":{"corpus":"c.txt","locked_model":"l.dlrl","baseline_model":"b.dlrl","lrs":[1e-5]}})",
      R"({"experiment":"partial","params":{"corpus":"c.txt","locked_model":"l.dlrl","modes":["freeze_dlr"]}})",
      R"({"experiment":"lora","params":{"corpus":"c.txt","locked_model":"l.dlrl","targets":["wq","wo"],"rank":2}})",
      R"({"experiment":"rebalance","params":{"d":6,"insertions":4}})",
      R"({"experiment":"reverse","params":{"corpus":"c.txt","locked_model":"l.dlrl","d_ff":64,"train":{"steps":7}}})",
      R"({"experiment":"memory","params":{"cells":[{"d":64,"r":4,"L":85,"d_ff":256}]}})",
      R"({"experiment":"kappa","params":{"mode":"bound","cells":[{"d":1024,"L":141,"d_ff":3072}]}})",
      R"({"experiment":"kappa","params":{"mode":"empirical","baseline_csv":"a.csv","locked_csv":"b.csv","target_loss":1.5}})",
      R"({"experiment":"condition","params":{"pairs":20,"dims":[2,3],"a_values":[1.0,10.0]}})",
      R"({"experiment":"hutchinson","params":{"problem":"quadratic","diag":[1,2,3],"probes":100}})",
      R"({"experiment":"bench","params":{"corpus":"c.txt","baseline_model":"b.dlrl","locked_model":"l.dlrl"}})",
      R"({"experiment":"eval","params":{"corpus":"c.txt","model":"m.dlrl"}})",
  };
  for (const auto& text : texts) {
    INFO(text);
    ExperimentConfig a = parse_config(text);
    ExperimentConfig b = parse_config(config_to_json(a).dump());
    REQUIRE(config_to_json(a).dump() == config_to_json(b).dump());
  }
}

TEST_CASE("artifact writer: manifest lists files with sizes and hashes") {
  const std::string dir = "/tmp/dlrlock_test_artifacts";
  ArtifactWriter w(dir);
  CsvTable t;
  t.columns = {"a", "b"};
  t.add_row({"1", "2"});
  REQUIRE_THROWS_AS(t.add_row({"only_one"}), ValueError);
  w.write_csv("table.csv", t);
  w.write_manifest("{}", 7);

  std::ifstream is(dir + "/manifest.json");
  nlohmann::json j = nlohmann::json::parse(is);
  REQUIRE(j["seed"] == 7);
  REQUIRE(j["files"].size() == 1);
  REQUIRE(j["files"][0]["name"] == "table.csv");
  REQUIRE(j["files"][0]["bytes"].get<std::size_t>() > 0);
  REQUIRE(j["files"][0]["fnv1a64"].get<std::string>().size() == 16);

  w.remove_all();
  REQUIRE(!std::filesystem::exists(dir + "/table.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("svg plot contains one path per trajectory") {
  std::vector<TrajectoryRecord> trajs(3);
  for (std::size_t k = 0; k < 3; ++k) {
    trajs[k].config_id = "t" + std::to_string(k);
    for (std::size_t s = 1; s <= 5; ++s)
      trajs[k].append({s, 1.0 / double(s + k), 0, 0, 0.1 * double(s), double(100 * s)});
  }
  const std::string svg = trajectories_to_svg(trajs, "demo", false);
  std::size_t count = 0, pos = 0;
  while ((pos = svg.find("<path", pos)) != std::string::npos) {
    ++count;
    pos += 5;
  }
  REQUIRE(count == 3);
  REQUIRE(svg.find("<svg") != std::string::npos);
  REQUIRE(svg.find("version=\"1.1\"") != std::string::npos);
}

TEST_CASE("csv emission uses the trajectory schema") {
  std::vector<TrajectoryRecord> trajs(1);
  trajs[0].config_id = "cell";
  trajs[0].append({1, 0.5, 0.25, 1.0, 0.001, 0});
  CsvTable t = trajectories_to_csv(trajs);
  REQUIRE(t.columns == std::vector<std::string>{"config_id", "step", "rel_error_geomean",
                                                "omega_rel", "grad_norm", "wallclock_s",
                                                "diverged"});
  REQUIRE(t.rows.size() == 1);
  REQUIRE(t.rows[0][0] == "cell");
  REQUIRE(t.rows[0][6] == "0");
}

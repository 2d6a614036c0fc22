#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fedpu/error.hpp"
#include "fedpu/experiment.hpp"
#include "helpers.hpp"

using namespace fedpu;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json smoke_doc() {
  std::ifstream in(fs::path(FEDPU_SOURCE_DIR) / "configs" / "synth_smoke.json");
  return json::parse(in);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FEDPU_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& doc) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config round trip and strict keys") {
  const ExperimentConfig c = config_from_json(smoke_doc());
  CHECK(c.dataset.kind == "synth");
  CHECK(c.partition.division == std::vector<int>{2});
  CHECK(config_from_json(to_json(c)) == c);
  CHECK(config_hash(c) == config_hash(config_from_json(to_json(c))));

  auto moved = c;
  moved.output_dir = "elsewhere";
  moved.threads = 4;
  CHECK(config_hash(moved) == config_hash(c));
  moved.seed = 2;
  CHECK(config_hash(moved) != config_hash(c));

  json bad = smoke_doc();
  bad["partition"]["divison"] = 2;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = smoke_doc();
  bad["rounds"] = "many";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = smoke_doc();
  bad["method"]["kind"] = "fedmagic";
  CHECK_THROWS_AS(config_from_json(bad).validate(), ConfigError);

  json lists = smoke_doc();
  lists["partition"]["division"] = json::array({1, 3});
  lists["priors"] = json::array({0.25, 0.25, 0.25, 0.25});
  const auto l = config_from_json(lists);
  CHECK(l.partition.division == std::vector<int>{1, 3});
  CHECK(l.priors.size() == 4);
  lists["priors"] = "uniform";
  CHECK(config_from_json(lists).priors.empty());
}

TEST_CASE("overrides and fnv") {
  json doc = smoke_doc();
  apply_override(doc, "partition.labeled_fraction", 0.25);
  CHECK(config_from_json(doc).partition.labeled_fraction == std::vector<double>{0.25});
  apply_override(doc, "rounds", 7);
  CHECK(config_from_json(doc).rounds == 7);
  CHECK_THROWS_AS(apply_override(doc, "partition.nothing", 1), ConfigError);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("empty sweep writes only the header") {
  CHECK(sweep_csv({}) == "run,status,final_accuracy,best_accuracy,error\n");
  const auto spec = sweep_from_json(json::array(), ".", smoke_doc());
  CHECK(spec.overrides.empty());
}

TEST_CASE("synth run: csv shape and byte determinism") {
  const ExperimentConfig c = config_from_json(smoke_doc());
  const LoadedData data = load_data(c.dataset);
  const PartitionPlan plan = make_plan(c, *data.train);
  const fs::path a = fedpu::testing::scratch_dir("cli_run_a");
  const fs::path b = fedpu::testing::scratch_dir("cli_run_b");
  const auto ra = run_experiment(c, plan, data, a);
  const auto rb = run_experiment(c, plan, data, b);
  CHECK(ra.results_hash == rb.results_hash);
  CHECK(ra.config_hash == rb.config_hash);
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(a / "model.bin") == slurp(b / "model.bin"));

  std::istringstream csv(slurp(a / "results.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == kResultsCsvHeader);
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
    CHECK(line.substr(0, line.find(',')) == std::to_string(rows));
    CHECK(line.substr(line.rfind(',') + 1) == "0");
  }
  CHECK(rows == 5);
}

TEST_CASE("baseline2 on fully labeled clients matches fedpu with every class positive") {
  json doc = smoke_doc();
  doc["partition"]["division"] = 4;
  doc["partition"]["labeled_fraction"] = 1.0;
  doc["method"]["supervised_form"] = "surrogate";
  const ExperimentConfig pu = config_from_json(doc);
  doc["method"]["kind"] = "baseline2";
  const ExperimentConfig sup = config_from_json(doc);
  const LoadedData data = load_data(pu.dataset);
  const PartitionPlan plan = make_plan(pu, *data.train);
  const auto r1 = run_experiment(pu, plan, data, fedpu::testing::scratch_dir("cli_b2_pu"));
  const auto r2 = run_experiment(sup, plan, data, fedpu::testing::scratch_dir("cli_b2_sup"));
  REQUIRE(r1.logs.size() == r2.logs.size());
  for (std::size_t t = 0; t < r1.logs.size(); ++t) {
    REQUIRE(r1.logs[t].accuracy.has_value());
    CHECK(*r1.logs[t].accuracy == *r2.logs[t].accuracy);
  }
}

TEST_CASE("command line: outputs, plan identity, exit codes") {
  const fs::path dir = fedpu::testing::scratch_dir("cli_exec");
  const fs::path cfg = write_config(dir, smoke_doc());
  const fs::path p1 = dir / "plan1.json", p2 = dir / "plan2.json";
  CHECK(run_cli("partition --config " + cfg.string() + " --plan " + p1.string()) == 0);
  CHECK(run_cli("partition --config " + cfg.string() + " --plan " + p2.string()) == 0);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(run_cli("partition --config " + cfg.string() + " --plan " + p2.string() + " --seed 5") == 0);
  CHECK(slurp(p1) != slurp(p2));

  const fs::path out = dir / "train";
  CHECK(run_cli("train --config " + cfg.string() + " --out " + out.string() + " --rounds 2 --quiet") == 0);
  CHECK(fs::exists(out / "results.csv"));
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "model.bin"));
  CHECK(run_cli("eval --config " + cfg.string() + " --params " + (out / "model").string()) == 0);

  json infeasible = smoke_doc();
  infeasible["partition"]["overlap"] = false;
  infeasible["partition"]["division"] = 1;
  CHECK(run_cli("partition --config " + write_config(dir / "inf", infeasible).string()) ==
        static_cast<int>(ExitCode::kConfig));

  json missing = smoke_doc();
  missing["dataset"] = {{"kind", "mnist"}, {"root", (dir / "absent").string()}};
  const int code = run_cli("train --config " + write_config(dir / "miss", missing).string() + " --quiet");
  CHECK((code == static_cast<int>(ExitCode::kConfig) || code == static_cast<int>(ExitCode::kData)));

  CHECK(run_cli("train --config " + (dir / "nope.json").string()) == static_cast<int>(ExitCode::kConfig));
  CHECK(run_cli("frobnicate") == static_cast<int>(ExitCode::kConfig));
}

}

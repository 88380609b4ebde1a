#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "cli.hpp"
#include "otmpc/bench.hpp"
#include "otmpc/transport.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Invocation {
  int code = -1;
  std::string out, err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "otmpc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Invocation r;
  r.code = otmpc::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("otmpc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double printed(const std::string& out, const std::string& key) {
  const auto at = out.find(key + ": ");
  REQUIRE(at != std::string::npos);
  return std::stod(out.substr(at + key.size() + 2));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("transport: zero cost gives the uniform coupling") {
    const fs::path dir = fresh_dir("t_zero");
    write(dir / "cost.json", R"({"cost": [[0, 0], [0, 0]], "epsilon": 0.5})");
    const Invocation r = invoke({"transport", (dir / "cost.json").string(), "--out", (dir / "c.json").string()});
    CHECK(r.code == otmpc::cli::kOk);
    const json c = json::parse(slurp(dir / "c.json"));
    for (const auto& row : c["plan"])
      for (const auto& v : row) CHECK(v.get<double>() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(c["converged"].get<bool>());
    fs::remove_all(dir);
  }

  TEST_CASE("transport: iteration cap exits 2 and flags the output") {
    const fs::path dir = fresh_dir("t_cap");
    write(dir / "cost.json", R"({"cost": [[0.0, 1.0, 0.3], [0.7, 0.2, 0.9]], "q": [0.3, 0.7]})");
    const Invocation r = invoke({"transport", (dir / "cost.json").string(), "--epsilon", "0.01", "--max-iterations",
                                 "1", "--out", (dir / "c.json").string()});
    CHECK(r.code == otmpc::cli::kNotConverged);
    CHECK(r.err.find("NOT CONVERGED") != std::string::npos);
    CHECK(r.out.find("converged: false") != std::string::npos);
    CHECK_FALSE(json::parse(slurp(dir / "c.json"))["converged"].get<bool>());
    fs::remove_all(dir);
  }

  TEST_CASE("transport: malformed input exits 1 with the location") {
    const fs::path dir = fresh_dir("t_bad");
    write(dir / "syntax.json", "{\"cost\": [[0, 1],\n [1, ]]}");
    Invocation r = invoke({"transport", (dir / "syntax.json").string(), "--epsilon", "1"});
    CHECK(r.code == otmpc::cli::kUserError);
    CHECK(r.err.find("line 2") != std::string::npos);

    write(dir / "ragged.json", R"({"cost": [[0, 1], [1]]})");
    r = invoke({"transport", (dir / "ragged.json").string(), "--epsilon", "1"});
    CHECK(r.code == otmpc::cli::kUserError);
    CHECK(r.err.find("cost[1]") != std::string::npos);

    write(dir / "marg.json", R"({"cost": [[0, 1], [1, 0]], "q": [0.9, 0.9]})");
    r = invoke({"transport", (dir / "marg.json").string(), "--epsilon", "1"});
    CHECK(r.code == otmpc::cli::kUserError);
    CHECK(r.err.find("'q'") != std::string::npos);

    r = invoke({"transport", (dir / "missing.json").string(), "--epsilon", "1"});
    CHECK(r.code == otmpc::cli::kUserError);
    CHECK(r.err.find("missing.json") != std::string::npos);
    fs::remove_all(dir);
  }

  TEST_CASE("transport: written coupling reproduces the printed objective") {
    const fs::path dir = fresh_dir("t_round");
    write(dir / "cost.json", R"({"cost": [[0.12, 0.87, 0.45], [0.66, 0.31, 0.94], [0.08, 0.53, 0.27]]})");
    write(dir / "m.json", R"({"q": [0.2, 0.5, 0.3], "p": [0.4, 0.4, 0.2]})");
    const Invocation r = invoke({"transport", (dir / "cost.json").string(), "--marginals", (dir / "m.json").string(),
                                 "--epsilon", "0.05", "--out", (dir / "c.json").string()});
    REQUIRE(r.code == otmpc::cli::kOk);
    const json c = json::parse(slurp(dir / "c.json"));
    Eigen::MatrixXd plan(3, 3), cost(3, 3);
    cost << 0.12, 0.87, 0.45, 0.66, 0.31, 0.94, 0.08, 0.53, 0.27;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) plan(i, j) = c["plan"][i][j].get<double>();
    const double recomputed = otmpc::eot_objective(otmpc::CostMatrix(cost), plan, c["epsilon"].get<double>());
    CHECK(recomputed == doctest::Approx(printed(r.out, "objective")).epsilon(1e-15));
    CHECK(c["objective"].get<double>() == printed(r.out, "objective"));
    CHECK(printed(r.out, "row_marginal_error") < 1e-6);
    fs::remove_all(dir);
  }

  TEST_CASE("bench: smoke config writes every output") {
    const fs::path dir = fresh_dir("b_smoke");
    write(dir / "smoke.json", R"({"environment": {"id": "bimodal"}, "controller": {"id": "mppi", "horizon": 10},
                                 "harness": {"num_trials": 2, "step_cap": 4}})");
    const Invocation r = invoke({"bench", "--config", (dir / "smoke.json").string(), "--out", (dir / "out").string()});
    CHECK(r.code == otmpc::cli::kOk);
    for (const char* f : {"records.jsonl", "summary.json", "summary.txt", "config.json"})
      CHECK_MESSAGE(fs::exists(dir / "out" / f), f);
    CHECK(r.out.find("Success (%)") != std::string::npos);
    fs::remove_all(dir);
  }

  TEST_CASE("bench: an override changes the recorded hash") {
    const fs::path dir = fresh_dir("b_hash");
    write(dir / "c.json", R"({"environment": {"id": "bimodal"}, "controller": {"id": "otmpc", "horizon": 8,
                             "iterations": 1}, "harness": {"num_trials": 1, "step_cap": 2}})");
    REQUIRE(invoke({"bench", "--config", (dir / "c.json").string(), "--out", (dir / "a").string()}).code == 0);
    REQUIRE(invoke({"bench", "--config", (dir / "c.json").string(), "--set", "controller.beta=0.5", "--out",
                    (dir / "b").string()})
                .code == 0);
    const json a = json::parse(slurp(dir / "a" / "summary.json"));
    const json b = json::parse(slurp(dir / "b" / "summary.json"));
    CHECK(a["config_hash"] != b["config_hash"]);
    otmpc::ConfigMap m = otmpc::ConfigMap::from_file((dir / "c.json").string());
    m.apply_overrides({"controller.beta=0.5"});
    CHECK(b["config_hash"] == otmpc::BenchmarkConfig::from_map(m).config_hash);
    fs::remove_all(dir);
  }

  TEST_CASE("bench: config problems exit 1") {
    const fs::path dir = fresh_dir("b_bad");
    Invocation r = invoke({"bench", "--config", (dir / "nope.json").string()});
    CHECK(r.code == otmpc::cli::kUserError);
    CHECK(r.err.find("nope.json") != std::string::npos);

    r = invoke({"bench", "--set", "controller.nonsense=1", "--out", (dir / "o").string()});
    CHECK(r.code == otmpc::cli::kUserError);
    CHECK(r.err.find("controller.nonsense") != std::string::npos);
    CHECK(r.err.find("controller.beta") != std::string::npos);

    write(dir / "two.json", R"({"controller.beta": 0, "harness.step_cap": -3})");
    r = invoke({"bench", "--config", (dir / "two.json").string()});
    CHECK(r.code == otmpc::cli::kUserError);
    CHECK(r.err.find("controller.beta") != std::string::npos);
    CHECK(r.err.find("harness.step_cap") != std::string::npos);
    fs::remove_all(dir);
  }

  TEST_CASE("episode writes record and trajectory") {
    const fs::path dir = fresh_dir("episode");
    const Invocation r = invoke({"episode", "--set", "environment.id=bimodal", "controller.id=cem",
                                 "harness.step_cap=3", "controller.horizon=10", "--out", dir.string()});
    CHECK(r.code == otmpc::cli::kOk);
    const json rec = json::parse(slurp(dir / "record.json"));
    CHECK(rec["steps_taken"].get<int>() <= 3);
    CHECK(json::parse(slurp(dir / "trajectory.json"))["states"].size() == rec["steps_taken"].get<std::size_t>() + 1);
    fs::remove_all(dir);
  }

  TEST_CASE("demo-bimodal: files parse, ensembles versus one mean, deterministic") {
    const fs::path a = fresh_dir("demo_a"), b = fresh_dir("demo_b");
    REQUIRE(invoke({"demo-bimodal", "--seed", "3", "--out", a.string()}).code == otmpc::cli::kOk);
    REQUIRE(invoke({"demo-bimodal", "--seed", "3", "--out", b.string()}).code == otmpc::cli::kOk);
    const json ot = json::parse(slurp(a / "otmpc.json"));
    const json mp = json::parse(slurp(a / "mppi.json"));
    REQUIRE_FALSE(ot["cycles"].empty());
    REQUIRE_FALSE(mp["cycles"].empty());
    for (const auto& c : ot["cycles"]) CHECK(c["candidates"].size() == 8);
    for (const auto& c : mp["cycles"]) CHECK(c["candidates"].size() == 1);
    CHECK(ot["states"].size() == ot["cycles"].size() + 1);
    CHECK(slurp(a / "otmpc.json") == slurp(b / "otmpc.json"));
    CHECK(slurp(a / "mppi.json") == slurp(b / "mppi.json"));
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("help lists every config key") {
    const Invocation r = invoke({"--help"});
    CHECK(r.code == otmpc::cli::kOk);
    for (const auto& k : otmpc::config_schema()) CHECK_MESSAGE(r.out.find(k.key) != std::string::npos, k.key);
    CHECK(invoke({}).code == otmpc::cli::kUserError);
    CHECK(invoke({"frobnicate"}).code == otmpc::cli::kUserError);
  }
}

#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "chartrl/datasets.hpp"
#include "chartrl/subprocess.hpp"
#include "support/oracles.hpp"

using namespace chartrl;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = CHARTRL_FIXTURE_DIR;

ProcessResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), CHARTRL_CLI_PATH);
  return run_process(args, std::chrono::seconds(60));
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("version and usage errors") {
  const auto v = cli({"--version"});
  CHECK(v.exit_code == 0);
  CHECK(v.out.rfind("chartrl ", 0) == 0);

  const auto none = cli({});
  CHECK(none.exit_code == 1);
  const auto unknown = cli({"frobnicate"});
  CHECK(unknown.exit_code == 1);
  const auto flag = cli({"stats", "--bogus"});
  CHECK(flag.exit_code == 1);
  CHECK(flag.err.find("--input") != std::string::npos);
  CHECK(cli({"subset", "--input", (kFixtures / "pipeline.json").string()}).exit_code == 1);  // no --seed
}

TEST_CASE("reward") {
  const auto r = cli({"reward", "--gold", "100", "--response", "<thinking>x</thinking> <answer>110</answer>"});
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["total"].get<double>() == doctest::Approx(1.0 + 1.0 / 1.1).epsilon(1e-12));

  const auto dir = oracle::scratch_dir("cli-reward");
  write(dir / "batch.jsonl", R"({"id": 1, "response": "<thinking>a</thinking> <answer>7</answer>", "gold": "7"})"
                             "\n"
                             R"({"id": "b", "response": "42", "gold": 40})"
                             "\n");
  const auto batch = cli({"reward", "--input", (dir / "batch.jsonl").string(), "--out", (dir / "o.jsonl").string()});
  CHECK(batch.exit_code == 0);
  CHECK(batch.out.empty());
  const auto text = oracle::read_file(dir / "o.jsonl");
  CHECK(text.find(R"({"id":1,"cerm":1.0,"format":1.0,"total":2.0})") == 0);

  write(dir / "broken.jsonl", R"({"id": 1, "response": "x", "gold": "1"})"
                              "\n{oops\n");
  const auto broken = cli({"reward", "--input", (dir / "broken.jsonl").string()});
  CHECK(broken.exit_code == 2);
  CHECK(broken.err.find(":2:") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval") {
  const auto dir = oracle::scratch_dir("cli-eval");
  write(dir / "p.txt", "104\n40\n");
  write(dir / "g.txt", "100\n40\n");
  const auto r = cli({"eval", "--preds", (dir / "p.txt").string(), "--gold", (dir / "g.txt").string(),
                      "--tolerance", "0.05"});
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["relaxed_accuracy"].get<double>() == 1.0);
  CHECK(j["exact_accuracy"].get<double>() == 0.5);

  write(dir / "short.txt", "100\n");
  CHECK(cli({"eval", "--preds", (dir / "p.txt").string(), "--gold", (dir / "short.txt").string()}).exit_code == 2);
  CHECK(cli({"eval", "--preds", (dir / "p.txt").string(), "--gold", (dir / "g.txt").string(), "--tolerance",
             "2"}).exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("subset, stats and validate") {
  const auto dir = oracle::scratch_dir("cli-data");
  write_records(dir / "r.jsonl", oracle::strata_fixture());
  auto subset = [&](const std::string& out) {
    return cli({"subset", "--input", (dir / "r.jsonl").string(), "--size", "20", "--strata", "question_type",
                "--seed", "7", "--out", (dir / out).string(), "--manifest", (dir / (out + ".manifest")).string()});
  };
  CHECK(subset("s1.jsonl").exit_code == 0);
  CHECK(subset("s2.jsonl").exit_code == 0);
  CHECK(oracle::read_file(dir / "s1.jsonl") == oracle::read_file(dir / "s2.jsonl"));
  CHECK(load_records(dir / "s1.jsonl").records.size() == 20);
  const auto manifest = nlohmann::json::parse(oracle::read_file(dir / "s1.jsonl.manifest"));
  CHECK(manifest.dump().find("\"selected\":10") != std::string::npos);

  const auto stats = cli({"stats", "--input", (dir / "r.jsonl").string()});
  CHECK(stats.exit_code == 0);
  CHECK(nlohmann::json::parse(stats.out)["n_records"].get<int>() == 100);

  const auto valid = cli({"validate", "--input", (dir / "r.jsonl").string()});
  CHECK(valid.exit_code == 0);
  CHECK(valid.out.find("\"valid\":false") == std::string::npos);

  write(dir / "bad.jsonl", to_json_line(oracle::make_record("a", QuestionType::numerical, "1")) + "\nnot json\n");
  const auto bad = cli({"stats", "--input", (dir / "bad.jsonl").string()});
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find(":2:") != std::string::npos);
  CHECK(cli({"subset", "--input", (dir / "r.jsonl").string(), "--strata", "colour", "--seed", "1"}).exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("train-sim") {
  const auto dir = oracle::scratch_dir("cli-train");
  const auto r = cli({"train-sim", "--env", "numeric", "--compare", "--steps", "50", "--seed", "0", "--out-dir",
                      (dir / "run").string()});
  CHECK(r.exit_code == 0);
  CHECK(r.out.empty());
  CHECK(fs::exists(dir / "run" / "summary.json"));
  CHECK(oracle::read_file(dir / "run" / "curves.csv").find("scheme") != std::string::npos);
  CHECK(cli({"train-sim", "--env", "bandit", "--seed", "0"}).exit_code == 1);
  CHECK(cli({"train-sim", "--steps", "5"}).exit_code == 1);  // no --seed
  fs::remove_all(dir);
}

TEST_CASE("pipeline external failures") {
  const auto dir = oracle::scratch_dir("cli-pipe");
  write(dir / "no-exec.json", R"({"client": "mock", "executor_path": "/nonexistent/executor"})");
  const auto missing = cli({"pipeline", "--config", (dir / "no-exec.json").string(), "--charts",
                            (kFixtures / "charts").string(), "--out-dir", (dir / "o1").string(), "--seed", "0"});
  CHECK(missing.exit_code == 3);

  write(dir / "remote.json", R"({"client": "remote", "endpoint": "http://127.0.0.1:9/x",
      "api_key_env_var": "CHARTRL_UNSET_KEY_FOR_TEST", "executor_path": ")" +
                                 (kFixtures / "stub_executor.sh").string() + "\"}");
  const auto no_key = cli({"pipeline", "--config", (dir / "remote.json").string(), "--charts",
                           (kFixtures / "charts").string(), "--out-dir", (dir / "o2").string(), "--seed", "0"});
  CHECK(no_key.exit_code == 3);

  const auto ok = cli({"pipeline", "--config", (kFixtures / "pipeline.json").string(), "--charts",
                       (kFixtures / "charts").string(), "--out-dir", (dir / "o3").string(), "--seed", "0"});
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.empty());
  CHECK(load_records(dir / "o3" / "records.jsonl").records.size() == 32);
  fs::remove_all(dir);
}

}  // TEST_SUITE

// chartrl: scoring, evaluation, dataset utilities, toy GRPO training and the
// replot pipeline behind one entry point.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 external failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "chartrl/answers.hpp"
#include "chartrl/datasets.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/experiments.hpp"
#include "chartrl/pipeline.hpp"
#include "chartrl/rewards.hpp"

#ifndef CHARTRL_VERSION
#define CHARTRL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace chartrl;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kExternal = 3;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + out);
  f << text;
}

void write_file(const fs::path& path, const std::string& text) { emit(text, path.string()); }

std::vector<QARecord> load_or_fail(const fs::path& path) {
  auto loaded = load_records(path);
  if (!loaded.issues.empty()) {
    const auto& first = loaded.issues.front();
    throw DataError(path.string() + ":" + std::to_string(first.line) + ": " + first.message);
  }
  return loaded.records;
}

nlohmann::json parse_json_file(const fs::path& path) {
  auto j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw DataError("malformed JSON in " + path.string());
  return j;
}

nlohmann::ordered_json breakdown_json(const RewardBreakdown& b) {
  nlohmann::ordered_json j;
  j["cerm"] = b.cerm;
  j["format"] = b.format;
  j["total"] = b.total;
  if (b.error_rate) j["error_rate"] = *b.error_rate;
  return j;
}

// --- reward ------------------------------------------------------------------

struct RewardArgs {
  std::string gold;
  std::string response;
  std::string input;
  std::string out;
};

int run_reward(const RewardArgs& a) {
  if (!a.input.empty()) {
    std::string text;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(a.input)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("response") ||
          !j["response"].is_string() || !j.contains("gold") ||
          !(j["gold"].is_string() || j["gold"].is_number())) {
        throw DataError(a.input + ":" + std::to_string(line_no) + ": expected {id, response, gold}");
      }
      const std::string gold = j["gold"].is_string() ? j["gold"].get<std::string>() : j["gold"].dump();
      const auto b = total_reward(j["response"].get<std::string>(), parse_answer(gold));
      nlohmann::ordered_json row;
      row["id"] = j["id"];
      row["cerm"] = b.cerm;
      row["format"] = b.format;
      row["total"] = b.total;
      text += row.dump() + '\n';
    }
    emit(text, a.out);
    return 0;
  }
  const auto b = total_reward(a.response, parse_answer(a.gold));
  emit(breakdown_json(b).dump() + '\n', a.out);
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string preds;
  std::string gold;
  double tolerance = 0.05;
  bool case_sensitive = false;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  auto preds = read_lines(a.preds);
  const auto gold_lines = read_lines(a.gold);
  if (preds.size() != gold_lines.size()) {
    throw DataError("line count mismatch: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(gold_lines.size()) + " gold answers");
  }
  std::vector<Answer> golds;
  for (const auto& g : gold_lines) golds.push_back(parse_answer(g));
  MatchPolicy policy;
  policy.numeric_tolerance = a.tolerance;
  policy.case_sensitive = a.case_sensitive;
  policy.validate();
  const auto report = evaluate(preds, golds, policy);
  nlohmann::ordered_json j;
  j["n"] = report.n;
  j["exact_accuracy"] = report.exact_accuracy;
  j["relaxed_accuracy"] = report.relaxed_accuracy;
  j["tolerance"] = a.tolerance;
  nlohmann::ordered_json per_type = nlohmann::ordered_json::object();
  for (const auto& [type, acc] : report.per_type_accuracy) per_type[std::string(to_string(type))] = acc;
  j["per_type_accuracy"] = per_type;
  auto failures = nlohmann::ordered_json::array();
  for (const auto& f : report.failures) failures.push_back({{"index", f.index}, {"reason", f.reason}});
  j["failures"] = failures;
  emit(j.dump(2) + '\n', a.out);
  return 0;
}

// --- subset / stats / validate ------------------------------------------------

struct SubsetArgs {
  std::string input;
  std::size_t size = 1000;
  std::string strata = "question_type";
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
};

int run_subset(const SubsetArgs& a) {
  const auto key = strata_key_from_string(a.strata);
  if (!key) throw UsageError("unknown strata key '" + a.strata + "'");
  const auto records = load_or_fail(a.input);
  SubsetSpec spec{a.size, *key, a.seed};
  const auto result = sample_subset(records, spec);
  emit(serialize_records(result.records), a.out);
  if (!a.manifest.empty()) write_file(a.manifest, result.manifest(spec).dump(2) + '\n');
  return 0;
}

int run_stats(const std::string& input, const std::string& out) {
  const auto records = load_or_fail(input);
  if (records.empty()) throw DataError(input + ": no records");
  emit(dataset_stats(records).to_json().dump(2) + '\n', out);
  return 0;
}

int run_validate(const std::string& input, const std::string& out) {
  const auto records = load_or_fail(input);
  std::string text;
  std::size_t invalid = 0;
  for (const auto& r : records) {
    const auto issues = validate_record(r);
    nlohmann::ordered_json row;
    row["id"] = r.id;
    row["valid"] = issues.empty();
    auto arr = nlohmann::ordered_json::array();
    for (const auto& i : issues) arr.push_back({{"code", i.code}, {"detail", i.detail}});
    row["issues"] = arr;
    text += row.dump() + '\n';
    invalid += !issues.empty();
  }
  emit(text, out);
  std::cerr << records.size() << " records, " << invalid << " with issues\n";
  return 0;
}

// --- train-sim ---------------------------------------------------------------

struct TrainArgs {
  std::string env = "numeric";
  std::string scheme;
  bool compare = false;
  std::string config;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double beta = -1.0;
  double lr = 0.0;
  std::size_t group_size = 0;
  std::string out_dir;
};

void apply_overrides(GrpoConfig& g, const TrainArgs& a) {
  g.seed = a.seed;
  if (a.steps) g.steps = a.steps;
  if (a.beta >= 0.0) g.kl_beta = a.beta;
  if (a.lr > 0.0) g.learning_rate = a.lr;
  if (a.group_size) g.group_size = a.group_size;
  g.validate();
}

RewardScheme scheme_or_throw(const std::string& name) {
  auto s = reward_scheme_from_string(name);
  if (!s) throw UsageError("unknown reward scheme '" + name + "'");
  return *s;
}

int run_train_sim(const TrainArgs& a) {
  const nlohmann::json cfg = a.config.empty() ? nlohmann::json::object() : parse_json_file(a.config);
  std::string summary;
  std::string curves;
  if (a.env == "numeric") {
    auto c = numeric_config_from_json(cfg);
    if (!a.scheme.empty()) c.scheme = scheme_or_throw(a.scheme);
    apply_overrides(c.grpo, a);
    if (a.compare) {
      const auto report = compare_reward_schemes(c);
      summary = report.summary().dump(2) + '\n';
      curves = report.curves_csv();
    } else {
      const auto outcome = run_numeric_experiment(c);
      nlohmann::ordered_json j;
      j["experiment"] = "numeric";
      j["seed"] = c.grpo.seed;
      j["result"] = to_json(outcome);
      summary = j.dump(2) + '\n';
      curves = outcome.trace.to_csv();
    }
  } else if (a.env == "categorical") {
    if (a.compare) throw UsageError("--compare applies to the numeric env only");
    auto c = categorical_config_from_json(cfg);
    if (!a.scheme.empty()) c.scheme = scheme_or_throw(a.scheme);
    apply_overrides(c.grpo, a);
    const auto outcome = run_categorical_experiment(c);
    nlohmann::ordered_json j;
    j["experiment"] = "categorical";
    j["seed"] = c.grpo.seed;
    j["num_options"] = c.num_options;
    j["correct_probability"] = outcome.correct_probability;
    j["final_kl"] = outcome.final_kl;
    j["degenerate_groups"] = outcome.trace.degenerate_groups;
    j["steps"] = outcome.trace.steps;
    summary = j.dump(2) + '\n';
    curves = outcome.trace.to_csv();
  } else {
    throw UsageError("--env must be numeric or categorical");
  }
  if (a.out_dir.empty()) {
    std::cout << summary;
    return 0;
  }
  fs::create_directories(a.out_dir);
  write_file(fs::path(a.out_dir) / "summary.json", summary);
  write_file(fs::path(a.out_dir) / "curves.csv", curves);
  return 0;
}

// --- pipeline ----------------------------------------------------------------

struct PipelineArgs {
  std::string config;
  std::string charts;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t parallelism = 0;
};

int run_pipeline_cmd(const PipelineArgs& a) {
  const fs::path config_path(a.config);
  auto config = PipelineConfig::from_json(parse_json_file(config_path));
  config.seed = a.seed;
  if (a.parallelism) config.parallelism = a.parallelism;
  const fs::path base = config_path.parent_path();
  auto resolve = [&](fs::path p) { return p.is_relative() ? base / p : p; };
  if (!config.executor_path.empty()) config.executor_path = resolve(config.executor_path);
  if (config.js_executor_path) config.js_executor_path = resolve(*config.js_executor_path);
  if (config.mock_fixture_dir) config.mock_fixture_dir = resolve(*config.mock_fixture_dir);
  config.validate();
  if (!fs::exists(config.executor_path)) {
    throw ExternalError("executor not found: " + config.executor_path.string());
  }

  const auto charts = discover_charts(a.charts);
  auto client = make_client(config);
  const auto manifest = run_pipeline(charts, config, *client, a.out_dir);
  std::cerr << "input " << manifest.totals.input << ", rendered " << manifest.totals.rendered
            << ", excluded " << manifest.totals.excluded << ", qa_records "
            << manifest.totals.qa_records << '\n';
  for (const auto& job : manifest.jobs) {
    if (job.failure == "client_error" || job.failure == "executor_unavailable") {
      std::cerr << job.chart_id << ": " << job.failure << '\n';
      return kExternal;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chartrl: verifiable rewards, GRPO toy training and chart QA data tools"};
  app.set_version_flag("--version", std::string("chartrl ") + CHARTRL_VERSION);
  app.require_subcommand(1);

  RewardArgs reward;
  auto* reward_cmd = app.add_subcommand("reward", "Score responses with CERM + format rewards");
  auto* gold_opt = reward_cmd->add_option("--gold", reward.gold, "Gold answer");
  auto* resp_opt = reward_cmd->add_option("--response", reward.response, "Model response");
  auto* input_opt = reward_cmd->add_option("--input", reward.input, "Batch file of {id, response, gold} lines")
                        ->check(CLI::ExistingFile);
  gold_opt->needs(resp_opt);
  resp_opt->needs(gold_opt);
  input_opt->excludes(gold_opt)->excludes(resp_opt);
  reward_cmd->add_option("--out", reward.out, "Write output to this file");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Exact and relaxed accuracy");
  eval_cmd->add_option("--preds", eval.preds, "Predictions, one per line")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gold", eval.gold, "Gold answers, one per line")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--tolerance", eval.tolerance, "Relative tolerance for relaxed accuracy")
      ->capture_default_str();
  eval_cmd->add_flag("--case-sensitive", eval.case_sensitive, "Compare text answers case-sensitively");
  eval_cmd->add_option("--out", eval.out, "Write output to this file");

  SubsetArgs subset;
  auto* subset_cmd = app.add_subcommand("subset", "Stratified benchmark subset");
  subset_cmd->add_option("--input", subset.input, "Record file")->required()->check(CLI::ExistingFile);
  subset_cmd->add_option("--size", subset.size, "Target subset size")->capture_default_str();
  subset_cmd->add_option("--strata", subset.strata, "question_type | source | template_id")
      ->capture_default_str();
  subset_cmd->add_option("--seed", subset.seed, "Sampling seed")->required();
  subset_cmd->add_option("--out", subset.out, "Write records to this file");
  subset_cmd->add_option("--manifest", subset.manifest, "Write the subset manifest to this file");

  std::string stats_input, stats_out;
  auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
  stats_cmd->add_option("--input", stats_input, "Record file")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", stats_out, "Write output to this file");

  std::string validate_input, validate_out;
  auto* validate_cmd = app.add_subcommand("validate", "Check records for structural issues");
  validate_cmd->add_option("--input", validate_input, "Record file")->required()->check(CLI::ExistingFile);
  validate_cmd->add_option("--out", validate_out, "Write output to this file");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-sim", "GRPO on desk-scale toy environments");
  train_cmd->add_option("--env", train.env, "numeric | categorical")->capture_default_str();
  train_cmd->add_option("--scheme", train.scheme, "cerm | binary_exact | cerm_plus_format");
  train_cmd->add_flag("--compare", train.compare, "Dense (CERM) vs sparse (exact-match) rewards");
  train_cmd->add_option("--config", train.config, "JSON experiment config")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train.seed, "Run seed")->required();
  train_cmd->add_option("--steps", train.steps, "Override the number of updates");
  train_cmd->add_option("--beta", train.beta, "Override the KL coefficient");
  train_cmd->add_option("--lr", train.lr, "Override the learning rate");
  train_cmd->add_option("--group-size", train.group_size, "Override G");
  train_cmd->add_option("--out-dir", train.out_dir, "Write summary.json and curves.csv here");

  PipelineArgs pipe;
  auto* pipe_cmd = app.add_subcommand("pipeline", "Replot charts and generate QA records");
  pipe_cmd->add_option("--config", pipe.config, "JSON pipeline config")->required()->check(CLI::ExistingFile);
  pipe_cmd->add_option("--charts", pipe.charts, "Directory of chart images")->required()->check(CLI::ExistingDirectory);
  pipe_cmd->add_option("--out-dir", pipe.out_dir, "Output directory")->required();
  pipe_cmd->add_option("--seed", pipe.seed, "Run seed")->required();
  pipe_cmd->add_option("--parallelism", pipe.parallelism, "Override the worker count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (reward_cmd->parsed()) {
      if (reward.input.empty() && *gold_opt && *resp_opt) return run_reward(reward);
      if (!reward.input.empty()) return run_reward(reward);
      throw UsageError("reward needs --gold and --response, or --input");
    }
    if (eval_cmd->parsed()) return run_eval(eval);
    if (subset_cmd->parsed()) return run_subset(subset);
    if (stats_cmd->parsed()) return run_stats(stats_input, stats_out);
    if (validate_cmd->parsed()) return run_validate(validate_input, validate_out);
    if (train_cmd->parsed()) return run_train_sim(train);
    if (pipe_cmd->parsed()) return run_pipeline_cmd(pipe);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n";
    const CLI::App* active = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << active->help();
    return kUsage;
  } catch (const ExternalError& e) {
    std::cerr << "external failure: " << e.what() << '\n';
    return kExternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

#include "chartrl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <set>
#include <system_error>
#include <thread>

#include "chartrl/errors.hpp"
#include "chartrl/subprocess.hpp"

namespace chartrl {

namespace {

constexpr std::size_t kDiagnosticsLimit = 16 * 1024;

std::string truncate(std::string s, std::size_t limit = kDiagnosticsLimit) {
  if (s.size() > limit) s.resize(limit);
  return s;
}

std::uintmax_t file_size_or_zero(const std::filesystem::path& p) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(p, ec);
  return ec ? 0 : size;
}

std::string last_nonempty_line(const std::string& text) {
  std::size_t end = text.size();
  while (end > 0) {
    const std::size_t start = text.rfind('\n', end - 1);
    const std::size_t from = start == std::string::npos ? 0 : start + 1;
    const std::string_view line = trim(std::string_view(text).substr(from, end - from));
    if (!line.empty()) return std::string(line);
    if (start == std::string::npos) break;
    end = start;
  }
  return {};
}

std::optional<std::string> string_field(const nlohmann::json& obj,
                                        std::initializer_list<const char*> names) {
  for (const char* name : names) {
    const auto it = obj.find(name);
    if (it == obj.end()) continue;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number() || it->is_boolean()) return it->dump();
    return std::nullopt;
  }
  return std::nullopt;
}

std::optional<QuestionType> tolerant_question_type(std::string name) {
  name = normalize_text(name);
  for (char& c : name) {
    if (c == ' ' || c == '-' || c == '/') c = '_';
  }
  if (auto t = question_type_from_string(name)) return t;
  if (name == "yes_or_no" || name == "yesno") return QuestionType::yes_no;
  if (name == "conversation") return QuestionType::conversational;
  if (name == "count") return QuestionType::counting;
  if (name == "multiple_choices" || name == "mcq") return QuestionType::multiple_choice;
  return std::nullopt;
}

std::optional<nlohmann::json> find_json_list(std::string_view text) {
  auto try_parse = [](std::string_view s) -> std::optional<nlohmann::json> {
    auto j = nlohmann::json::parse(s, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  const auto lb = text.find('[');
  const auto rb = text.rfind(']');
  if (lb != std::string_view::npos && rb != std::string_view::npos && rb > lb) {
    if (auto j = try_parse(text.substr(lb, rb - lb + 1)); j && j->is_array()) return j;
  }
  const auto lc = text.find('{');
  const auto rc = text.rfind('}');
  if (lc != std::string_view::npos && rc != std::string_view::npos && rc > lc) {
    if (auto j = try_parse(text.substr(lc, rc - lc + 1)); j && j->is_object()) {
      for (const auto& [key, value] : j->items()) {
        if (value.is_array()) return value;
      }
    }
  }
  return std::nullopt;
}

std::string iso_utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

std::string_view to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::exec_error: return "exec_error";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::no_output: return "no_output";
  }
  return "?";
}

std::optional<ExecStatus> exec_status_from_string(std::string_view name) {
  for (auto s : {ExecStatus::ok, ExecStatus::exec_error, ExecStatus::timeout, ExecStatus::no_output}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

int exec_exit_code(ExecStatus status) {
  switch (status) {
    case ExecStatus::ok: return 0;
    case ExecStatus::exec_error: return 10;
    case ExecStatus::timeout: return 11;
    case ExecStatus::no_output: return 12;
  }
  return 10;
}

std::string format_exec_result_line(const ExecResult& r) {
  nlohmann::ordered_json j;
  j["status"] = to_string(r.status);
  j["exit_code"] = r.exit_code;
  j["image_bytes"] = r.image_bytes;
  j["diagnostics"] = truncate(r.diagnostics);
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::optional<ExecResult> parse_exec_result_line(std::string_view line) {
  const auto j = nlohmann::json::parse(trim(line), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto st = j.find("status");
  const auto ec = j.find("exit_code");
  const auto ib = j.find("image_bytes");
  const auto dg = j.find("diagnostics");
  if (st == j.end() || !st->is_string() || ec == j.end() || !ec->is_number_integer() ||
      ib == j.end() || !ib->is_number_unsigned() || dg == j.end() || !dg->is_string()) {
    return std::nullopt;
  }
  const auto status = exec_status_from_string(st->get<std::string>());
  if (!status) return std::nullopt;
  ExecResult r;
  r.status = *status;
  r.exit_code = ec->get<int>();
  r.image_bytes = ib->get<std::uint64_t>();
  r.diagnostics = dg->get<std::string>();
  return r;
}

RenderOutcome render_chart(const std::string& code, CodeLanguage language,
                           const RenderExecutor& executor, const std::filesystem::path& work_dir,
                           const std::filesystem::path& output_image) {
  RenderOutcome out;
  auto fail = [&](std::string reason, std::string diagnostics) {
    out.state = RenderState::failed;
    out.reason = std::move(reason);
    out.diagnostics = truncate(std::move(diagnostics));
    std::error_code ec;
    std::filesystem::remove(output_image, ec);
    return out;
  };

  std::error_code ec;
  std::filesystem::create_directories(work_dir, ec);
  if (!output_image.parent_path().empty()) std::filesystem::create_directories(output_image.parent_path(), ec);
  std::filesystem::remove(output_image, ec);
  const auto script =
      work_dir / (language == CodeLanguage::python_plotting ? "chart.py" : "chart.js");
  {
    std::ofstream f(script, std::ios::binary | std::ios::trunc);
    if (!f) return fail("io_error", "cannot write " + script.string());
    f << code;
  }

  const std::vector<std::string> argv = {executor.path.string(),
                                         "--code-path", script.string(),
                                         "--output-image-path", output_image.string(),
                                         "--timeout-s", std::to_string(executor.timeout.count()),
                                         "--workdir", (work_dir / "run").string()};
  const auto proc = run_process(argv, executor.timeout + executor.grace, kDiagnosticsLimit);
  if (!proc.started) return fail("executor_unavailable", proc.err);
  if (proc.timed_out) return fail("timeout", proc.err);

  const auto result = parse_exec_result_line(last_nonempty_line(proc.out));
  if (!result) {
    return fail("exec_error", "executor exited " + std::to_string(proc.exit_code) +
                                  " without a result line\n" + proc.err);
  }
  if (result->status != ExecStatus::ok) {
    return fail(std::string(to_string(result->status)), result->diagnostics);
  }
  if (file_size_or_zero(output_image) == 0) return fail("no_output", result->diagnostics);
  out.state = RenderState::rendered;
  out.image = output_image;
  out.diagnostics = truncate(result->diagnostics);
  return out;
}

std::optional<DraftParse> parse_qa_reply(std::string_view raw) {
  const auto list = find_json_list(raw);
  if (!list) return std::nullopt;
  DraftParse out;
  for (const auto& item : *list) {
    if (!item.is_object()) {
      ++out.malformed;
      continue;
    }
    const auto input = string_field(item, {"input", "question"});
    const auto cot = string_field(item, {"chain_of_thought", "chain of thought", "cot"});
    const auto answer = string_field(item, {"final_answer", "final answer", "answer"});
    const auto type_name = string_field(item, {"question_type", "question type", "type"});
    const auto type = type_name ? tolerant_question_type(*type_name) : std::nullopt;
    if (!input || !cot || !answer || !type) {
      ++out.malformed;
      continue;
    }
    QARecord r;
    r.input = *input;
    r.chain_of_thought = *cot;
    r.final_answer = std::string(trim(*answer));
    r.question_type = *type;
    out.drafts.push_back(std::move(r));
  }
  return out;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "client",        "endpoint",         "api_key_env_var",  "max_retries",
      "backoff_base_ms", "parallelism",    "render_timeout_s", "executor_path",
      "js_executor_path", "mock_fixture_dir", "seed"};
  if (!j.is_object()) throw UsageError("pipeline config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw UsageError("pipeline config: unknown key '" + key + "'");
  }
  PipelineConfig c;
  try {
    if (j.contains("client")) c.client = j["client"].get<std::string>();
    if (j.contains("endpoint")) c.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("api_key_env_var")) c.api_key_env_var = j["api_key_env_var"].get<std::string>();
    if (j.contains("max_retries")) c.max_retries = j["max_retries"].get<std::size_t>();
    if (j.contains("backoff_base_ms")) c.backoff_base_ms = j["backoff_base_ms"].get<std::uint64_t>();
    if (j.contains("parallelism")) c.parallelism = j["parallelism"].get<std::size_t>();
    if (j.contains("render_timeout_s")) c.render_timeout_s = j["render_timeout_s"].get<std::uint64_t>();
    if (j.contains("executor_path")) c.executor_path = j["executor_path"].get<std::string>();
    if (j.contains("js_executor_path")) c.js_executor_path = j["js_executor_path"].get<std::string>();
    if (j.contains("mock_fixture_dir")) c.mock_fixture_dir = j["mock_fixture_dir"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("pipeline config: ") + e.what());
  }
  return c;
}

void PipelineConfig::validate() const {
  if (client != "mock" && client != "remote") throw UsageError("client must be mock or remote");
  if (client == "remote" && endpoint.empty()) throw UsageError("remote client needs an endpoint");
  if (parallelism == 0) throw UsageError("parallelism must be at least 1");
  if (render_timeout_s == 0) throw UsageError("render_timeout_s must be at least 1");
  if (executor_path.empty()) throw UsageError("executor_path is required");
}

std::unique_ptr<ModelClient> make_client(const PipelineConfig& config) {
  if (config.client == "remote") {
    RemoteClientConfig rc;
    rc.endpoint = config.endpoint;
    rc.api_key_env_var = config.api_key_env_var;
    rc.retry.max_retries = config.max_retries;
    rc.retry.base = std::chrono::milliseconds(config.backoff_base_ms);
    return std::make_unique<RemoteClient>(rc);
  }
  auto mock = std::make_unique<MockClient>();
  if (config.mock_fixture_dir) mock->load_fixture_dir(*config.mock_fixture_dir);
  return mock;
}

PipelineJob run_job(const ChartRef& chart, ModelClient& client,
                    const std::map<CodeLanguage, RenderExecutor>& executors,
                    const std::filesystem::path& out_dir) {
  PipelineJob job;
  job.chart_id = chart.chart_id;
  job.source_image = chart.image_path;
  const auto work_dir = out_dir / "work" / chart.chart_id;
  const auto image = out_dir / "images" / (chart.chart_id + ".png");
  auto finish = [&](std::string failure) {
    job.failure = std::move(failure);
    if (!job.succeeded()) {
      job.qa_records.clear();
      if (job.render.state != RenderState::failed) job.render.state = RenderState::failed;
      if (job.render.reason.empty()) job.render.reason = job.failure;
      std::error_code ec;
      std::filesystem::remove(image, ec);
    }
    std::error_code ec;
    std::filesystem::remove_all(work_dir, ec);
    return job;
  };

  CodeReply code;
  try {
    code = client.generate_plot_code(chart);
  } catch (const ClientError& e) {
    job.attempts = e.attempts();
    job.render.diagnostics = e.what();
    return finish(e.reason());
  }
  job.attempts = code.attempts;
  job.code = code.code;
  job.language = code.language;

  const auto exec = executors.find(code.language);
  if (exec == executors.end()) return finish("no_executor");
  job.render = render_chart(code.code, code.language, exec->second, work_dir, image);
  if (job.render.state != RenderState::rendered) return finish(job.render.reason);

  QaReply reply;
  try {
    reply = client.generate_qa(image, code.code);
  } catch (const ClientError& e) {
    job.render.diagnostics = e.what();
    return finish(e.reason());
  }
  auto parsed = parse_qa_reply(reply.raw);
  if (!parsed) {
    job.raw_reply = truncate(reply.raw);
    return finish("parse_error");
  }
  job.dropped_drafts = parsed->malformed;
  std::size_t index = 0;
  for (auto& draft : parsed->drafts) {
    ++index;
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "-q%02zu", index);
    draft.id = chart.chart_id + suffix;
    draft.image_ref = "images/" + chart.chart_id + ".png";
    draft.source = "replot";
    if (validate_record(draft).empty()) {
      job.qa_records.push_back(std::move(draft));
    } else {
      ++job.dropped_drafts;
    }
  }
  return finish("");
}

std::vector<QARecord> PipelineManifest::records() const {
  std::vector<QARecord> out;
  for (const auto& job : jobs) {
    if (!job.succeeded()) continue;
    out.insert(out.end(), job.qa_records.begin(), job.qa_records.end());
  }
  return out;
}

nlohmann::ordered_json PipelineManifest::to_json(const std::filesystem::path& out_dir) const {
  const std::string out_prefix = out_dir.empty() ? std::string() : out_dir.string();
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["client"] = client;
  j["totals"] = {{"input", totals.input},
                 {"rendered", totals.rendered},
                 {"excluded", totals.excluded},
                 {"qa_records", totals.qa_records},
                 {"dropped_drafts", totals.dropped_drafts}};
  auto jobs_json = nlohmann::ordered_json::array();
  for (const auto& job : jobs) {
    nlohmann::ordered_json jj;
    jj["chart_id"] = job.chart_id;
    jj["status"] = job.succeeded() ? "rendered" : "failed";
    jj["reason"] = job.failure;
    jj["language"] = to_string(job.language);
    jj["attempts"] = job.attempts;
    jj["qa_records"] = job.qa_records.size();
    jj["dropped_drafts"] = job.dropped_drafts;
    jj["diagnostics"] = replace_all(job.render.diagnostics, out_prefix, "<out_dir>");
    if (!job.raw_reply.empty()) jj["raw_reply"] = job.raw_reply;
    jobs_json.push_back(std::move(jj));
  }
  j["jobs"] = std::move(jobs_json);
  j["started_at"] = started_at;
  j["wall_clock_ms"] = wall_clock.count();
  return j;
}

PipelineManifest run_pipeline(const std::vector<ChartRef>& charts, const PipelineConfig& config,
                              ModelClient& client, const std::filesystem::path& out_dir) {
  config.validate();
  std::set<std::string> ids;
  for (const auto& c : charts) {
    if (c.chart_id.empty() || !ids.insert(c.chart_id).second) {
      throw UsageError("chart ids must be unique and non-empty: '" + c.chart_id + "'");
    }
  }
  const auto started = std::chrono::steady_clock::now();
  PipelineManifest manifest;
  manifest.seed = config.seed;
  manifest.client = client.identity();
  manifest.started_at = iso_utc_now();

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "images").string());

  std::map<CodeLanguage, RenderExecutor> executors;
  const auto timeout = std::chrono::seconds(config.render_timeout_s);
  executors[CodeLanguage::python_plotting] = {config.executor_path, timeout};
  if (config.js_executor_path) executors[CodeLanguage::js_plotting] = {*config.js_executor_path, timeout};

  std::vector<PipelineJob> done;
  std::mutex commit;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < charts.size(); i = next++) {
      PipelineJob job = run_job(charts[i], client, executors, out_dir);
      std::lock_guard lock(commit);
      done.push_back(std::move(job));
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.parallelism, charts.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  std::filesystem::remove_all(out_dir / "work", ec);

  std::sort(done.begin(), done.end(),
            [](const PipelineJob& a, const PipelineJob& b) { return a.chart_id < b.chart_id; });
  manifest.jobs = std::move(done);
  manifest.totals.input = manifest.jobs.size();
  for (const auto& job : manifest.jobs) {
    if (job.succeeded()) {
      ++manifest.totals.rendered;
      manifest.totals.qa_records += job.qa_records.size();
    } else {
      ++manifest.totals.excluded;
    }
    manifest.totals.dropped_drafts += job.dropped_drafts;
  }
  manifest.wall_clock =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

  write_records(out_dir / "records.jsonl", manifest.records());
  std::ofstream mf(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw DataError("cannot write manifest in " + out_dir.string());
  mf << manifest.to_json(out_dir).dump(2) << '\n';
  if (!mf) throw DataError("manifest write failed");
  return manifest;
}

std::vector<ChartRef> discover_charts(const std::filesystem::path& dir) {
  static const std::set<std::string> kExt = {".png", ".jpg", ".jpeg", ".webp"};
  std::vector<ChartRef> charts;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (kExt.count(ext)) charts.push_back({entry.path().stem().string(), entry.path()});
  }
  if (ec) throw DataError("cannot list " + dir.string());
  std::sort(charts.begin(), charts.end(),
            [](const ChartRef& a, const ChartRef& b) { return a.image_path < b.image_path; });
  return charts;
}

}  // namespace chartrl

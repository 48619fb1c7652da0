#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chartrl/datasets.hpp"

namespace chartrl {

enum class CodeLanguage { python_plotting, js_plotting };

std::string_view to_string(CodeLanguage language);
std::optional<CodeLanguage> code_language_from_string(std::string_view name);

struct ChartRef {
  std::string chart_id;
  std::filesystem::path image_path;
};

struct CodeReply {
  std::string code;
  CodeLanguage language = CodeLanguage::python_plotting;
  std::string prompt;  // as sent, for audit logs
  std::size_t attempts = 1;
};

struct QaReply {
  std::string raw;
  std::string prompt;
  std::size_t attempts = 1;
};

// Failure reported by a ModelClient. `reason` is "io_error" for unreadable
// inputs and "client_error" when the teacher could not be reached.
class ClientError : public std::runtime_error {
 public:
  ClientError(std::string reason, const std::string& what, std::size_t attempts = 1)
      : std::runtime_error(what), reason_(std::move(reason)), attempts_(attempts) {}
  const std::string& reason() const { return reason_; }
  std::size_t attempts() const { return attempts_; }

 private:
  std::string reason_;
  std::size_t attempts_;
};

// Teacher-model abstraction. Implementations must be safe to call from
// several pipeline workers at once.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string identity() const = 0;
  virtual CodeReply generate_plot_code(const ChartRef& chart) = 0;
  virtual QaReply generate_qa(const std::filesystem::path& rendered_image, const std::string& code) = 0;
};

// Prompts sent to the teacher.
std::string plot_code_prompt(CodeLanguage language);
std::string qa_generation_prompt();

// 64-bit FNV-1a, hex encoded.
std::string content_hash(std::string_view bytes);
std::string read_file_bytes(const std::filesystem::path& path);

struct MockFixture {
  std::string code;
  CodeLanguage language = CodeLanguage::python_plotting;
  std::optional<std::string> qa_reply;  // synthesized when absent
};

// Deterministic client. Code replies are keyed by the content hash of the
// chart image, QA replies by the hash of the code. Unknown content gets a
// synthesized bar-chart script and a 16-question reply derived from the hash.
class MockClient : public ModelClient {
 public:
  MockClient() = default;
  void add_fixture(const std::string& image_hash, MockFixture fixture);
  // Loads every *.json file in `dir`: {"image", "language", "code", "qa_reply"?};
  // "image" is resolved relative to `dir`.
  void load_fixture_dir(const std::filesystem::path& dir);

  std::string identity() const override { return "mock"; }
  CodeReply generate_plot_code(const ChartRef& chart) override;
  QaReply generate_qa(const std::filesystem::path& rendered_image, const std::string& code) override;

  static std::string synthesize_code(const std::string& hash);
  static std::string synthesize_qa_reply(const std::string& code_hash);

 private:
  std::map<std::string, MockFixture> by_image_;
  std::map<std::string, std::string> qa_by_code_;
};

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds base{500};
  std::chrono::milliseconds cap{30'000};

  // Delay before retry number `retry` (0-based): min(base * 2^retry, cap).
  std::chrono::milliseconds delay(std::size_t retry) const;
};

struct RequestLogEntry {
  std::string request_id;
  std::size_t attempt = 0;  // 1-based
  int http_status = 0;      // 0 on transport failure
  std::string error;
  std::chrono::milliseconds delay_before{0};
};

struct RemoteClientConfig {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string api_key_env_var = "CHARTRL_API_KEY";
  RetryPolicy retry;
  std::chrono::milliseconds min_interval{0};
  std::chrono::seconds request_timeout{120};
};

// HTTP teacher client. Requests are JSON {request_id, task, prompt,
// image_base64, code?}; replies are JSON {"text": ...} or plain text.
// Transport errors, 429 and 5xx are retried with exponential backoff.
class RemoteClient : public ModelClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  // Throws ExternalError if the API key variable is unset.
  explicit RemoteClient(RemoteClientConfig config, Sleeper sleeper = {});

  std::string identity() const override;
  CodeReply generate_plot_code(const ChartRef& chart) override;
  QaReply generate_qa(const std::filesystem::path& rendered_image, const std::string& code) override;

  std::vector<RequestLogEntry> request_log() const;

 private:
  struct Reply {
    std::string body;
    std::size_t attempts;
  };
  Reply post(const nlohmann::json& payload, const std::string& request_id);
  void pace();

  RemoteClientConfig config_;
  Sleeper sleeper_;
  std::string api_key_;
  std::string scheme_host_;
  std::string path_;
  mutable std::mutex mutex_;
  std::vector<RequestLogEntry> log_;
  std::chrono::steady_clock::time_point last_request_{};
};

// --- rendering -------------------------------------------------------------

enum class ExecStatus { ok, exec_error, timeout, no_output };

std::string_view to_string(ExecStatus status);
std::optional<ExecStatus> exec_status_from_string(std::string_view name);
int exec_exit_code(ExecStatus status);  // 0, 10, 11, 12

// One result line written by an executor on standard output:
// {"status":..,"exit_code":..,"image_bytes":..,"diagnostics":..}
struct ExecResult {
  ExecStatus status = ExecStatus::exec_error;
  int exit_code = -1;
  std::uint64_t image_bytes = 0;
  std::string diagnostics;

  bool operator==(const ExecResult&) const = default;
};

std::string format_exec_result_line(const ExecResult& result);
std::optional<ExecResult> parse_exec_result_line(std::string_view line);

// Executor binary honoring the line protocol, invoked as
//   <path> --code-path P --output-image-path O --timeout-s T --workdir W
struct RenderExecutor {
  std::filesystem::path path;
  std::chrono::seconds timeout{30};
  std::chrono::milliseconds grace{2000};  // slack before the orchestrator kills the executor
};

enum class RenderState { pending, rendered, failed };

struct RenderOutcome {
  RenderState state = RenderState::pending;
  std::filesystem::path image;
  std::string reason;  // exec_error, timeout, no_output, executor_unavailable
  std::string diagnostics;
};

RenderOutcome render_chart(const std::string& code, CodeLanguage language,
                           const RenderExecutor& executor, const std::filesystem::path& work_dir,
                           const std::filesystem::path& output_image);

// --- QA drafts -------------------------------------------------------------

struct DraftParse {
  std::vector<QARecord> drafts;  // id/image_ref/source left empty
  std::size_t malformed = 0;
};

// Tolerant extractor: accepts fenced or bare JSON, either an array of
// examples or an object holding one. Returns nullopt if no list is found.
std::optional<DraftParse> parse_qa_reply(std::string_view raw);

// --- orchestration ---------------------------------------------------------

struct PipelineConfig {
  std::string client = "mock";  // mock | remote
  std::string endpoint;
  std::string api_key_env_var = "CHARTRL_API_KEY";
  std::size_t max_retries = 3;
  std::uint64_t backoff_base_ms = 500;
  std::size_t parallelism = 4;
  std::uint64_t render_timeout_s = 30;
  std::filesystem::path executor_path;
  std::optional<std::filesystem::path> js_executor_path;
  std::optional<std::filesystem::path> mock_fixture_dir;
  std::uint64_t seed = 0;

  static PipelineConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct PipelineJob {
  std::string chart_id;
  std::filesystem::path source_image;
  std::string code;
  CodeLanguage language = CodeLanguage::python_plotting;
  RenderOutcome render;
  std::vector<QARecord> qa_records;
  std::size_t dropped_drafts = 0;
  std::size_t attempts = 0;
  std::string failure;  // empty on success
  std::string raw_reply;  // kept when the QA reply could not be parsed

  bool succeeded() const { return failure.empty(); }
};

struct PipelineTotals {
  std::size_t input = 0;
  std::size_t rendered = 0;
  std::size_t excluded = 0;
  std::size_t qa_records = 0;
  std::size_t dropped_drafts = 0;
};

struct PipelineManifest {
  PipelineTotals totals;
  std::vector<PipelineJob> jobs;  // sorted by chart_id
  std::uint64_t seed = 0;
  std::string client;
  std::string started_at;  // UTC, ISO-8601
  std::chrono::milliseconds wall_clock{0};

  // Records of successful jobs, ordered by chart_id then draft order.
  std::vector<QARecord> records() const;
  nlohmann::ordered_json to_json(const std::filesystem::path& out_dir = {}) const;
};

// Builds one job end to end: code generation, rendering, QA generation and
// validation. Never throws for per-job failures.
PipelineJob run_job(const ChartRef& chart, ModelClient& client,
                    const std::map<CodeLanguage, RenderExecutor>& executors,
                    const std::filesystem::path& out_dir);

// Runs all charts under a bounded worker pool and writes
// <out_dir>/records.jsonl, <out_dir>/manifest.json and <out_dir>/images/.
PipelineManifest run_pipeline(const std::vector<ChartRef>& charts, const PipelineConfig& config,
                              ModelClient& client, const std::filesystem::path& out_dir);

// Image files in `dir` (png, jpg, jpeg, webp), sorted; chart_id is the stem.
std::vector<ChartRef> discover_charts(const std::filesystem::path& dir);

std::unique_ptr<ModelClient> make_client(const PipelineConfig& config);

}  // namespace chartrl

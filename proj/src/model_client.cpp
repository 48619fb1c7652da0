#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "chartrl/errors.hpp"
#include "chartrl/grpo.hpp"
#include "chartrl/pipeline.hpp"

namespace chartrl {

namespace {

std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string number_text(double v) { return format_double(v); }

// Pulls the first fenced block out of a reply; returns (info, body).
std::pair<std::string, std::string> strip_fence(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) return {"", std::string(trim(text))};
  const auto info_end = text.find('\n', open);
  if (info_end == std::string_view::npos) return {"", std::string(trim(text))};
  const auto close = text.find("```", info_end);
  const std::string info = normalize_text(text.substr(open + 3, info_end - open - 3));
  const auto body = text.substr(info_end + 1, close == std::string_view::npos
                                                  ? std::string_view::npos
                                                  : close - info_end - 1);
  return {info, std::string(body)};
}

std::optional<CodeLanguage> language_from_fence(const std::string& info) {
  if (info == "python" || info == "py") return CodeLanguage::python_plotting;
  if (info == "javascript" || info == "js" || info == "jsx" || info == "typescript" ||
      info == "tsx" || info == "react") {
    return CodeLanguage::js_plotting;
  }
  return std::nullopt;
}

constexpr std::string_view kMockMarker = "# chartrl-mock ";
constexpr std::array<std::string_view, 4> kRegions = {"North", "South", "East", "West"};

std::array<int, 4> values_from_hash(const std::string& hash) {
  std::array<int, 4> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    const unsigned long x = std::stoul(hash.substr(i * 4, 4), nullptr, 16);
    v[i] = 10 + static_cast<int>(x % 90);
  }
  return v;
}

}  // namespace

std::string_view to_string(CodeLanguage language) {
  return language == CodeLanguage::python_plotting ? "python_plotting" : "js_plotting";
}

std::optional<CodeLanguage> code_language_from_string(std::string_view name) {
  if (name == "python_plotting") return CodeLanguage::python_plotting;
  if (name == "js_plotting") return CodeLanguage::js_plotting;
  return std::nullopt;
}

std::string plot_code_prompt(CodeLanguage language) {
  if (language == CodeLanguage::js_plotting) {
    return "Write a self-contained React component using a JavaScript charting library that "
           "reproduces the attached chart. Match its colors, layout, data values, text, axis "
           "labels and title. Reply with the code only.";
  }
  return "Write Python matplotlib code that reproduces the attached chart. Match its colors, "
         "layout, data values, text, axis labels and title. Save the figure to the path in the "
         "CHART_OUTPUT_PATH environment variable. Reply with the code only.";
}

std::string qa_generation_prompt() {
  return R"(You are given a chart image and the code that rendered it. Use the code only to
check data values; every question must be answerable from the image itself.

Return a JSON array. Each element has the string fields:
  input             the question (for conversations, the whole dialog in one string)
  chain_of_thought  step-by-step reasoning in the form
                    <thinking> reasoning </thinking> <answer> final answer </answer>
  final_answer      the answer alone
  question_type     one of numerical, visual_numerical, data_retrieval, yes_no,
                    counting, unanswerable, multiple_choice, conversational

Question budget (16 in total):
  3 numerical           arithmetic over the data (max, min, sum, mean, difference, ratio, ...)
  3 visual_numerical    arithmetic tied to visual position or color (leftmost, tallest, ...)
  3 data_retrieval      read one value, tick label or legend entry
  2 yes_no              answered with Yes or No
  2 counting            count chart elements (bars, slices, colors, labels)
  1 unanswerable        not answerable from the chart; final_answer is Unanswerable
  1 multiple_choice     3 or more options labeled by letters, numbers or Roman numerals;
                        final_answer is the label only
  1 conversational      1 or more prior turns plus a final question about the chart

Answer format:
  - as few words as possible, copied verbatim from the chart where applicable
  - several items as a list, e.g. [1, 2]
  - ratios as decimals, e.g. 0.25
  - percentages as whole values, e.g. 17
  - no units
)";
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ClientError("io_error", "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// --- MockClient -------------------------------------------------------------

void MockClient::add_fixture(const std::string& image_hash, MockFixture fixture) {
  if (fixture.qa_reply) qa_by_code_[content_hash(fixture.code)] = *fixture.qa_reply;
  by_image_[image_hash] = std::move(fixture);
}

void MockClient::load_fixture_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const auto j = nlohmann::json::parse(read_file_bytes(file), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("image") || !j.contains("code")) {
      throw DataError("malformed mock fixture " + file.string());
    }
    MockFixture fx;
    fx.code = j.at("code").get<std::string>();
    if (j.contains("language")) {
      auto lang = code_language_from_string(j.at("language").get<std::string>());
      if (!lang) throw DataError("unknown language in " + file.string());
      fx.language = *lang;
    }
    if (j.contains("qa_reply")) fx.qa_reply = j.at("qa_reply").get<std::string>();
    const auto image = dir / j.at("image").get<std::string>();
    add_fixture(content_hash(read_file_bytes(image)), std::move(fx));
  }
}

CodeReply MockClient::generate_plot_code(const ChartRef& chart) {
  const std::string hash = content_hash(read_file_bytes(chart.image_path));
  CodeReply reply;
  reply.prompt = plot_code_prompt(CodeLanguage::python_plotting);
  if (auto it = by_image_.find(hash); it != by_image_.end()) {
    reply.code = it->second.code;
    reply.language = it->second.language;
  } else {
    reply.code = synthesize_code(hash);
  }
  return reply;
}

QaReply MockClient::generate_qa(const std::filesystem::path& rendered_image, const std::string& code) {
  read_file_bytes(rendered_image);  // must exist
  QaReply reply;
  reply.prompt = qa_generation_prompt();
  if (auto it = qa_by_code_.find(content_hash(code)); it != qa_by_code_.end()) {
    reply.raw = it->second;
    return reply;
  }
  std::string key = content_hash(code);
  if (auto pos = code.find(kMockMarker); pos != std::string::npos) {
    key = code.substr(pos + kMockMarker.size(), 16);
  }
  reply.raw = synthesize_qa_reply(key);
  return reply;
}

std::string MockClient::synthesize_code(const std::string& hash) {
  const auto v = values_from_hash(hash);
  std::ostringstream s;
  s << kMockMarker << hash << "\n"
    << "import os\n"
    << "import matplotlib\n"
    << "matplotlib.use(\"Agg\")\n"
    << "import matplotlib.pyplot as plt\n\n"
    << "labels = [\"North\", \"South\", \"East\", \"West\"]\n"
    << "values = [" << v[0] << ", " << v[1] << ", " << v[2] << ", " << v[3] << "]\n"
    << "fig, ax = plt.subplots(figsize=(6, 4))\n"
    << "ax.bar(labels, values, color=\"#4c72b0\")\n"
    << "ax.set_title(\"Chart " << hash.substr(0, 8) << "\")\n"
    << "ax.set_ylabel(\"Value\")\n"
    << "fig.savefig(os.environ[\"CHART_OUTPUT_PATH\"])\n";
  return s.str();
}

std::string MockClient::synthesize_qa_reply(const std::string& hash) {
  const auto v = values_from_hash(hash);
  const int sum = v[0] + v[1] + v[2] + v[3];
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const auto top = static_cast<std::size_t>(mx - v.begin());
  const auto low = static_cast<std::size_t>(mn - v.begin());
  const int above50 = static_cast<int>(std::count_if(v.begin(), v.end(), [](int x) { return x > 50; }));
  const std::string title = "Chart " + hash.substr(0, 8);

  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  auto add = [&](std::string input, std::string reasoning, std::string answer, QuestionType type) {
    nlohmann::ordered_json q;
    q["input"] = std::move(input);
    q["chain_of_thought"] = "<thinking>" + reasoning + "</thinking> <answer>" + answer + "</answer>";
    q["final_answer"] = answer;
    q["question_type"] = to_string(type);
    arr.push_back(std::move(q));
  };
  const std::string vals = std::to_string(v[0]) + ", " + std::to_string(v[1]) + ", " +
                           std::to_string(v[2]) + ", " + std::to_string(v[3]);
  add("What is the sum of all bar values?", "The bars are " + vals + ". Their sum is " +
      std::to_string(sum) + ".", std::to_string(sum), QuestionType::numerical);
  add("What is the difference between the highest and lowest bar values?",
      "Highest " + std::to_string(*mx) + ", lowest " + std::to_string(*mn) + ".",
      std::to_string(*mx - *mn), QuestionType::numerical);
  add("What is the average of the bar values?",
      "Sum " + std::to_string(sum) + " over 4 bars.", number_text(sum / 4.0), QuestionType::numerical);
  add("What is the value of the leftmost bar?", "The leftmost bar is North.",
      std::to_string(v[0]), QuestionType::visual_numerical);
  add("What is the value of the rightmost bar?", "The rightmost bar is West.",
      std::to_string(v[3]), QuestionType::visual_numerical);
  add("Which region has the tallest bar?", "Comparing heights, the tallest is " +
      std::string(kRegions[top]) + ".", std::string(kRegions[top]), QuestionType::visual_numerical);
  add("What is the value for South?", "The South bar reaches " + std::to_string(v[1]) + ".",
      std::to_string(v[1]), QuestionType::data_retrieval);
  add("What is the title of the chart?", "The title reads " + title + ".", title,
      QuestionType::data_retrieval);
  add("What is the label of the y-axis?", "The y-axis is labeled Value.", "Value",
      QuestionType::data_retrieval);
  add("Is the value for North greater than the value for East?",
      "North is " + std::to_string(v[0]) + " and East is " + std::to_string(v[2]) + ".",
      v[0] > v[2] ? "Yes" : "No", QuestionType::yes_no);
  add("Is the sum of all bars above 200?", "The sum is " + std::to_string(sum) + ".",
      sum > 200 ? "Yes" : "No", QuestionType::yes_no);
  add("How many bars are in the chart?", "There is one bar per region.", "4",
      QuestionType::counting);
  add("How many bars have a value above 50?", "Values are " + vals + ".",
      std::to_string(above50), QuestionType::counting);
  add("What was the value for North in the previous year?",
      "The chart shows a single period only.", "Unanswerable", QuestionType::unanswerable);
  add("Which region has the smallest value? (a) North (b) South (c) East (d) West",
      "The smallest bar is " + std::string(kRegions[low]) + ".",
      std::string(1, static_cast<char>('a' + low)), QuestionType::multiple_choice);
  add("User: What is the value for North? Assistant: " + std::to_string(v[0]) +
          ". User: And what is the value for West?",
      "The West bar reaches " + std::to_string(v[3]) + ".", std::to_string(v[3]),
      QuestionType::conversational);
  return "```json\n" + arr.dump(2) + "\n```\n";
}

// --- RemoteClient -----------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay(std::size_t retry) const {
  auto d = base;
  for (std::size_t i = 0; i < retry && d < cap; ++i) d *= 2;
  return std::min(d, cap);
}

RemoteClient::RemoteClient(RemoteClientConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  const char* key = std::getenv(config_.api_key_env_var.c_str());
  if (key == nullptr || *key == '\0') {
    throw ExternalError("environment variable " + config_.api_key_env_var + " is not set");
  }
  api_key_ = key;
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw UsageError("endpoint must be an http(s) URL");
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string RemoteClient::identity() const { return "remote:" + config_.endpoint; }

std::vector<RequestLogEntry> RemoteClient::request_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

void RemoteClient::pace() {
  std::chrono::milliseconds wait{0};
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    const auto next = last_request_ + config_.min_interval;
    if (next > now) wait = std::chrono::duration_cast<std::chrono::milliseconds>(next - now);
    last_request_ = std::max(now, next);
  }
  if (wait.count() > 0) sleeper_(wait);
}

RemoteClient::Reply RemoteClient::post(const nlohmann::json& payload, const std::string& request_id) {
  const std::string body = payload.dump();
  const std::size_t max_attempts = config_.retry.max_retries + 1;
  std::string last_error;
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    RequestLogEntry entry;
    entry.request_id = request_id;
    entry.attempt = attempt;
    if (attempt > 1) {
      entry.delay_before = config_.retry.delay(attempt - 2);
      sleeper_(entry.delay_before);
    }
    pace();
    httplib::Client cli(scheme_host_);
    cli.set_connection_timeout(config_.request_timeout);
    cli.set_read_timeout(config_.request_timeout);
    const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_},
                                      {"Idempotency-Key", request_id}};
    auto res = cli.Post(path_, headers, body, "application/json");
    bool retryable = true;
    if (!res) {
      entry.error = httplib::to_string(res.error());
    } else {
      entry.http_status = res->status;
      if (res->status >= 200 && res->status < 300) {
        {
          std::lock_guard lock(mutex_);
          log_.push_back(entry);
        }
        return {res->body, attempt};
      }
      entry.error = "HTTP " + std::to_string(res->status);
      retryable = res->status == 429 || res->status >= 500;
    }
    last_error = entry.error;
    {
      std::lock_guard lock(mutex_);
      log_.push_back(entry);
    }
    if (!retryable) throw ClientError("client_error", "request rejected: " + last_error, attempt);
  }
  throw ClientError("client_error", "retries exhausted: " + last_error, max_attempts);
}

namespace {

std::pair<std::string, std::optional<std::string>> reply_text(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("text") && j["text"].is_string()) {
    std::optional<std::string> language;
    if (j.contains("language") && j["language"].is_string()) language = j["language"].get<std::string>();
    return {j["text"].get<std::string>(), language};
  }
  return {body, std::nullopt};
}

}  // namespace

CodeReply RemoteClient::generate_plot_code(const ChartRef& chart) {
  const std::string image = read_file_bytes(chart.image_path);
  CodeReply reply;
  reply.prompt = plot_code_prompt(CodeLanguage::python_plotting);
  const std::string request_id = content_hash("plot_code\n" + content_hash(image));
  nlohmann::json payload = {{"request_id", request_id},
                            {"task", "plot_code"},
                            {"prompt", reply.prompt},
                            {"image_base64", base64(image)}};
  const auto [body, attempts] = post(payload, request_id);
  reply.attempts = attempts;
  const auto [text, tag] = reply_text(body);
  const auto [info, code] = strip_fence(text);
  reply.code = code;
  if (tag) {
    auto lang = code_language_from_string(*tag);
    if (!lang) lang = language_from_fence(normalize_text(*tag));
    if (lang) reply.language = *lang;
  } else if (auto lang = language_from_fence(info)) {
    reply.language = *lang;
  }
  return reply;
}

QaReply RemoteClient::generate_qa(const std::filesystem::path& rendered_image, const std::string& code) {
  const std::string image = read_file_bytes(rendered_image);
  QaReply reply;
  reply.prompt = qa_generation_prompt();
  const std::string request_id = content_hash("qa\n" + content_hash(image) + content_hash(code));
  nlohmann::json payload = {{"request_id", request_id},
                            {"task", "qa"},
                            {"prompt", reply.prompt},
                            {"image_base64", base64(image)},
                            {"code", code}};
  const auto [body, attempts] = post(payload, request_id);
  reply.attempts = attempts;
  reply.raw = reply_text(body).first;
  return reply;
}

}  // namespace chartrl

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chartrl/answers.hpp"

namespace chartrl {

enum class QuestionType {
  numerical,
  visual_numerical,
  data_retrieval,
  yes_no,
  counting,
  unanswerable,
  multiple_choice,
  conversational,
};

std::string_view to_string(QuestionType type);
std::optional<QuestionType> question_type_from_string(std::string_view name);

// One QA/CoT sample. Record files hold one JSON object per line with the
// keys below, in this order.
struct QARecord {
  std::string id;
  std::string image_ref;
  std::string input;  // conversational records keep the whole dialog here
  std::string chain_of_thought;
  std::string final_answer;
  QuestionType question_type = QuestionType::numerical;
  std::string source;

  bool operator==(const QARecord&) const = default;
};

struct LoadIssue {
  std::size_t line;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<QARecord> records;
  std::vector<LoadIssue> issues;
};

struct RecordIssue {
  std::string code;  // cot_format_invalid, type_answer_conflict, cot_answer_mismatch, ...
  std::string detail;
};

struct TokenStats {
  std::size_t min = 0;
  std::size_t max = 0;
  double median = 0.0;
  double mean = 0.0;
};

struct DatasetStats {
  std::size_t n_records = 0;
  std::map<AnswerType, std::size_t> answer_type_histogram;
  std::map<QuestionType, std::size_t> question_type_histogram;
  TokenStats cot_tokens;
  double unanswerable_fraction = 0.0;

  nlohmann::ordered_json to_json() const;
};

enum class StrataKey { question_type, source };

std::string_view to_string(StrataKey key);
std::optional<StrataKey> strata_key_from_string(std::string_view name);

struct SubsetSpec {
  std::size_t target_size = 1000;
  StrataKey strata = StrataKey::question_type;
  std::uint64_t seed = 0;
};

struct StratumCount {
  std::string key;
  std::size_t available = 0;
  std::size_t selected = 0;
};

struct SubsetResult {
  std::vector<QARecord> records;
  std::vector<StratumCount> strata;  // in first-appearance order

  nlohmann::ordered_json manifest(const SubsetSpec& spec) const;
};

struct MixSource {
  std::string name;
  std::vector<QARecord> records;
  std::optional<std::size_t> quota;  // empty: take the whole source
};

struct MixResult {
  std::vector<QARecord> records;
  std::vector<StratumCount> sources;

  nlohmann::ordered_json manifest(std::uint64_t seed) const;
};

// Line-level parse. Malformed lines become issues. Blank lines are skipped.
LoadResult parse_records(std::string_view text);
LoadResult load_records(const std::filesystem::path& path);

std::string to_json_line(const QARecord& record);
std::string serialize_records(const std::vector<QARecord>& records);
void write_records(const std::filesystem::path& path, const std::vector<QARecord>& records);

std::vector<RecordIssue> validate_record(const QARecord& record);

std::size_t count_tokens(std::string_view text);
DatasetStats dataset_stats(const std::vector<QARecord>& records);

// Proportional allocation with largest-remainder rounding. Ties in the
// remainder go to the earlier stratum.
std::vector<std::size_t> largest_remainder_allocation(const std::vector<std::size_t>& sizes,
                                                      std::size_t target);

SubsetResult sample_subset(const std::vector<QARecord>& records, const SubsetSpec& spec);

MixResult build_rl_mix(const std::vector<MixSource>& sources, std::uint64_t seed);

}  // namespace chartrl

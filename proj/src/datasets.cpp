#include "chartrl/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "chartrl/errors.hpp"
#include "chartrl/rewards.hpp"
#include "chartrl/rng.hpp"

namespace chartrl {

namespace {

constexpr std::array<std::string_view, 7> kRecordKeys = {
    "id", "image_ref", "input", "chain_of_thought", "final_answer", "question_type", "source"};

constexpr std::array<QuestionType, 8> kQuestionTypes = {
    QuestionType::numerical,    QuestionType::visual_numerical, QuestionType::data_retrieval,
    QuestionType::yes_no,       QuestionType::counting,         QuestionType::unanswerable,
    QuestionType::multiple_choice, QuestionType::conversational};

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

std::string stratum_key(const QARecord& r, StrataKey key) {
  return key == StrataKey::question_type ? std::string(to_string(r.question_type)) : r.source;
}

// Indices of `k` items drawn uniformly without replacement from [0, n),
// returned in ascending order.
std::vector<std::size_t> choose_sorted(std::size_t n, std::size_t k, CounterRng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

nlohmann::ordered_json counts_json(const std::vector<StratumCount>& counts) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : counts) {
    arr.push_back({{"key", c.key}, {"available", c.available}, {"selected", c.selected}});
  }
  return arr;
}

}  // namespace

std::string_view to_string(QuestionType type) {
  switch (type) {
    case QuestionType::numerical: return "numerical";
    case QuestionType::visual_numerical: return "visual_numerical";
    case QuestionType::data_retrieval: return "data_retrieval";
    case QuestionType::yes_no: return "yes_no";
    case QuestionType::counting: return "counting";
    case QuestionType::unanswerable: return "unanswerable";
    case QuestionType::multiple_choice: return "multiple_choice";
    case QuestionType::conversational: return "conversational";
  }
  return "?";
}

std::optional<QuestionType> question_type_from_string(std::string_view name) {
  for (auto t : kQuestionTypes) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::string_view to_string(StrataKey key) {
  return key == StrataKey::question_type ? "question_type" : "source";
}

std::optional<StrataKey> strata_key_from_string(std::string_view name) {
  if (name == "question_type") return StrataKey::question_type;
  if (name == "source" || name == "template_id") return StrataKey::source;
  return std::nullopt;
}

LoadResult parse_records(std::string_view text) {
  LoadResult result;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    auto issue = [&](std::string msg) { result.issues.push_back({line_no, std::move(msg)}); };
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      issue("not a JSON object");
      continue;
    }
    std::string problem;
    for (const auto& [key, value] : j.items()) {
      if (std::find(kRecordKeys.begin(), kRecordKeys.end(), key) == kRecordKeys.end()) {
        problem = "unknown key '" + key + "'";
        break;
      }
    }
    for (auto key : kRecordKeys) {
      if (!problem.empty()) break;
      const auto it = j.find(std::string(key));
      if (it == j.end()) {
        problem = "missing key '" + std::string(key) + "'";
      } else if (!it->is_string()) {
        problem = "key '" + std::string(key) + "' must be a string";
      }
    }
    if (!problem.empty()) {
      issue(problem);
      continue;
    }
    QARecord r;
    r.id = j["id"].get<std::string>();
    r.image_ref = j["image_ref"].get<std::string>();
    r.input = j["input"].get<std::string>();
    r.chain_of_thought = j["chain_of_thought"].get<std::string>();
    r.final_answer = j["final_answer"].get<std::string>();
    r.source = j["source"].get<std::string>();
    const auto qt = question_type_from_string(j["question_type"].get<std::string>());
    if (!qt) {
      issue("unknown question_type '" + j["question_type"].get<std::string>() + "'");
      continue;
    }
    r.question_type = *qt;
    if (trim(r.final_answer).empty()) {
      issue("empty final_answer");
      continue;
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

LoadResult load_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_records(buf.str());
}

std::string to_json_line(const QARecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["image_ref"] = r.image_ref;
  j["input"] = r.input;
  j["chain_of_thought"] = r.chain_of_thought;
  j["final_answer"] = r.final_answer;
  j["question_type"] = to_string(r.question_type);
  j["source"] = r.source;
  return j.dump();
}

std::string serialize_records(const std::vector<QARecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json_line(r);
    out += '\n';
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<QARecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize_records(records);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<RecordIssue> validate_record(const QARecord& record) {
  std::vector<RecordIssue> issues;
  if (trim(record.final_answer).empty()) {
    issues.push_back({"empty_final_answer", "final_answer is empty"});
    return issues;
  }
  const Answer answer = parse_answer(record.final_answer);

  const bool cot_ok = format_reward(record.chain_of_thought) == 1.0;
  if (!cot_ok) {
    issues.push_back({"cot_format_invalid", "chain_of_thought lacks <thinking>/<answer> structure"});
  }

  const bool type_unanswerable = record.question_type == QuestionType::unanswerable;
  const bool answer_unanswerable = answer.kind() == AnswerKind::Unanswerable;
  if (type_unanswerable != answer_unanswerable) {
    issues.push_back({"unanswerable_inconsistent",
                      type_unanswerable ? "unanswerable question without the sentinel answer"
                                        : "sentinel answer on an answerable question"});
  } else {
    bool conflict = false;
    switch (record.question_type) {
      case QuestionType::yes_no:
        conflict = answer.kind() != AnswerKind::YesNo;
        break;
      case QuestionType::counting:
        conflict = !(answer.is_numeric() && is_integer(answer.numeric_value()) &&
                     answer.numeric_value() >= 0);
        break;
      case QuestionType::multiple_choice:
        conflict = !(answer.kind() == AnswerKind::OptionLabel ||
                     (answer.is_numeric() && is_integer(answer.numeric_value())));
        break;
      default:
        break;
    }
    if (conflict) {
      issues.push_back({"type_answer_conflict", std::string(to_string(record.question_type)) +
                                                    " question with " +
                                                    std::string(to_string(answer.kind())) +
                                                    " answer"});
    }
  }

  if (cot_ok) {
    const Answer cot_answer = parse_answer(extract_answer_span(record.chain_of_thought));
    if (!answers_match(cot_answer, answer, MatchPolicy::strict())) {
      issues.push_back({"cot_answer_mismatch",
                        "cot answer '" + cot_answer.canonical() + "' vs final_answer '" +
                            answer.canonical() + "'"});
    }
  }
  return issues;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

DatasetStats dataset_stats(const std::vector<QARecord>& records) {
  if (records.empty()) throw UsageError("dataset_stats needs at least one record");
  DatasetStats s;
  s.n_records = records.size();
  std::vector<std::size_t> tokens;
  tokens.reserve(records.size());
  std::uint64_t total = 0;
  for (const auto& r : records) {
    ++s.answer_type_histogram[classify_answer_type(parse_answer(r.final_answer))];
    ++s.question_type_histogram[r.question_type];
    tokens.push_back(count_tokens(r.chain_of_thought));
    total += tokens.back();
  }
  std::sort(tokens.begin(), tokens.end());
  const std::size_t n = tokens.size();
  s.cot_tokens.min = tokens.front();
  s.cot_tokens.max = tokens.back();
  s.cot_tokens.median = n % 2 == 1 ? static_cast<double>(tokens[n / 2])
                                   : (static_cast<double>(tokens[n / 2 - 1]) +
                                      static_cast<double>(tokens[n / 2])) /
                                         2.0;
  s.cot_tokens.mean = static_cast<double>(total) / static_cast<double>(n);
  const auto it = s.answer_type_histogram.find(AnswerType::unanswerable);
  const std::size_t unanswerable = it == s.answer_type_histogram.end() ? 0 : it->second;
  s.unanswerable_fraction = static_cast<double>(unanswerable) / static_cast<double>(n);
  return s;
}

nlohmann::ordered_json DatasetStats::to_json() const {
  nlohmann::ordered_json j;
  j["n_records"] = n_records;
  nlohmann::ordered_json at = nlohmann::ordered_json::object();
  for (const auto& [type, count] : answer_type_histogram) at[std::string(to_string(type))] = count;
  j["answer_type_histogram"] = at;
  nlohmann::ordered_json qt = nlohmann::ordered_json::object();
  for (const auto& [type, count] : question_type_histogram) {
    qt[std::string(to_string(type))] = count;
  }
  j["question_type_histogram"] = qt;
  j["cot_tokens"] = {{"min", cot_tokens.min},
                     {"max", cot_tokens.max},
                     {"median", cot_tokens.median},
                     {"mean", cot_tokens.mean}};
  j["unanswerable_fraction"] = unanswerable_fraction;
  j["tokenizer"] = "whitespace";
  return j;
}

std::vector<std::size_t> largest_remainder_allocation(const std::vector<std::size_t>& sizes,
                                                      std::size_t target) {
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (target > n) throw UsageError("subset target exceeds the number of records");
  std::vector<std::size_t> alloc(sizes.size(), 0);
  if (n == 0) return alloc;
  if (n > (std::uint64_t{1} << 32)) throw UsageError("too many records for stratified allocation");
  std::vector<std::uint64_t> remainder(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::uint64_t scaled = static_cast<std::uint64_t>(target) * sizes[i];
    alloc[i] = static_cast<std::size_t>(scaled / n);
    remainder[i] = scaled % n;
    assigned += alloc[i];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < target; ++k) {
    ++alloc[order[k]];
    ++assigned;
  }
  return alloc;
}

SubsetResult sample_subset(const std::vector<QARecord>& records, const SubsetSpec& spec) {
  if (spec.target_size > records.size()) {
    throw UsageError("subset target " + std::to_string(spec.target_size) + " exceeds " +
                     std::to_string(records.size()) + " records");
  }
  std::vector<std::string> keys;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string key = stratum_key(records[i], spec.strata);
    auto [it, inserted] = members.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(i);
  }
  std::vector<std::size_t> sizes;
  for (const auto& k : keys) sizes.push_back(members[k].size());
  const auto alloc = largest_remainder_allocation(sizes, spec.target_size);

  SubsetResult result;
  const CounterRng base(spec.seed);
  for (std::size_t s = 0; s < keys.size(); ++s) {
    const auto& idx = members[keys[s]];
    for (std::size_t pick : choose_sorted(idx.size(), alloc[s], base.fork(s))) {
      result.records.push_back(records[idx[pick]]);
    }
    result.strata.push_back({keys[s], idx.size(), alloc[s]});
  }
  return result;
}

nlohmann::ordered_json SubsetResult::manifest(const SubsetSpec& spec) const {
  nlohmann::ordered_json j;
  j["seed"] = spec.seed;
  j["target_size"] = spec.target_size;
  j["strata_key"] = to_string(spec.strata);
  j["allocation"] = "proportional_largest_remainder";
  j["strata"] = counts_json(strata);
  return j;
}

MixResult build_rl_mix(const std::vector<MixSource>& sources, std::uint64_t seed) {
  MixResult result;
  const CounterRng base(seed);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& src = sources[s];
    const std::size_t take = src.quota.value_or(src.records.size());
    if (take > src.records.size()) {
      throw UsageError("quota " + std::to_string(take) + " exceeds source '" + src.name +
                       "' of size " + std::to_string(src.records.size()));
    }
    std::vector<std::size_t> picks;
    if (src.quota) {
      picks = choose_sorted(src.records.size(), take, base.fork(s));
    } else {
      picks.resize(take);
      std::iota(picks.begin(), picks.end(), 0);
    }
    for (std::size_t i : picks) {
      QARecord r = src.records[i];
      r.source = src.name;
      result.records.push_back(std::move(r));
    }
    result.sources.push_back({src.name, src.records.size(), take});
  }
  CounterRng shuffle = base.fork(sources.size());
  for (std::size_t i = result.records.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(shuffle.below(i));
    std::swap(result.records[i - 1], result.records[j]);
  }
  return result;
}

nlohmann::ordered_json MixResult::manifest(std::uint64_t seed) const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["total"] = records.size();
  j["sources"] = counts_json(sources);
  return j;
}

}  // namespace chartrl

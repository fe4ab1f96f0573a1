#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acorn/core.hpp"
#include "acorn/error.hpp"

namespace acorn {

/// 1 when the normalized prediction equals any normalized gold alias.
inline int exact_match(std::string_view prediction, std::span<const std::string> gold_answers) {
  const auto pred = normalize_answer(prediction);
  for (const auto& g : gold_answers) {
    if (pred == normalize_answer(g)) return 1;
  }
  return 0;
}

namespace detail {

inline std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

inline double f1_against(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
  std::map<std::string_view, long> counts;
  for (const auto& t : gold) ++counts[t];
  long overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace detail

/// Token-overlap F1 on normalized strings, maximized over gold aliases.
inline double token_f1(std::string_view prediction, std::span<const std::string> gold_answers) {
  const auto pred = detail::whitespace_tokens(normalize_answer(prediction));
  double best = 0.0;
  for (const auto& g : gold_answers) {
    best = std::max(best, detail::f1_against(pred, detail::whitespace_tokens(normalize_answer(g))));
  }
  return best;
}

inline long whitespace_token_count(std::string_view s) {
  return static_cast<long>(detail::whitespace_tokens(s).size());
}

/// compressed / original; lower is better.
inline double compression_ratio(long compressed_tokens, long original_tokens) {
  if (original_tokens <= 0) throw DegenerateInput("compression_ratio: original token count is zero");
  if (compressed_tokens < 0) throw DegenerateInput("compression_ratio: negative token count");
  return static_cast<double>(compressed_tokens) / static_cast<double>(original_tokens);
}

/// Whether a gold answer string survived compression.
inline bool answer_preserved(std::string_view compressed_text, std::span<const std::string> gold_answers) {
  return contains_answer(compressed_text, gold_answers);
}

// ---------------------------------------------------------------------------
// Records and aggregation

struct EvalRecord {
  std::string query_id;
  std::string prediction;
  int em = 0;
  double f1 = 0.0;
  std::optional<double> cr;
  std::optional<long> input_token_count;
  std::optional<long> output_token_count;
  // Only set for compressed runs on queries with an evidential document.
  std::optional<bool> answer_preserved;
  double inference_time_s = 0.0;
  bool llm_cached = false;
  std::optional<std::string> compressed;
  std::optional<std::string> error;  // set on failed records; metrics are then meaningless
};

struct MetricsReport {
  std::size_t n = 0;
  std::size_t failures = 0;
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  std::optional<double> cr;
  std::optional<double> par;
  std::size_t par_n = 0;
  std::optional<double> mean_inference_time_s;  // over uncached answer calls
  std::size_t timed_n = 0;
  std::size_t expanded = 0;  // compressed outputs longer than their input
};

/// Means over successful records only.
inline MetricsReport aggregate(std::span<const EvalRecord> records) {
  MetricsReport r;
  double em = 0, f1 = 0, cr = 0, par = 0, time = 0;
  std::size_t cr_n = 0;
  for (const auto& rec : records) {
    if (rec.error) {
      ++r.failures;
      continue;
    }
    ++r.n;
    em += rec.em;
    f1 += rec.f1;
    if (rec.cr) {
      cr += *rec.cr;
      ++cr_n;
    }
    if (rec.input_token_count && rec.output_token_count &&
        *rec.output_token_count > *rec.input_token_count) {
      ++r.expanded;
    }
    if (rec.answer_preserved) {
      par += *rec.answer_preserved ? 1.0 : 0.0;
      ++r.par_n;
    }
    if (!rec.llm_cached) {
      time += rec.inference_time_s;
      ++r.timed_n;
    }
  }
  if (r.n > 0) {
    r.em = 100.0 * em / static_cast<double>(r.n);
    r.f1 = 100.0 * f1 / static_cast<double>(r.n);
  }
  if (cr_n > 0) r.cr = cr / static_cast<double>(cr_n);
  if (r.par_n > 0) r.par = par / static_cast<double>(r.par_n);
  if (r.timed_n > 0) r.mean_inference_time_s = time / static_cast<double>(r.timed_n);
  return r;
}

inline nlohmann::ordered_json to_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["query_id"] = r.query_id;
  if (r.error) {
    j["error"] = *r.error;
    return j;
  }
  j["prediction"] = r.prediction;
  j["em"] = r.em;
  j["f1"] = r.f1;
  if (r.cr) j["cr"] = *r.cr;
  if (r.input_token_count) j["input_token_count"] = *r.input_token_count;
  if (r.output_token_count) j["output_token_count"] = *r.output_token_count;
  if (r.answer_preserved) j["answer_preserved"] = *r.answer_preserved;
  j["inference_time_s"] = r.inference_time_s;
  j["llm_cached"] = r.llm_cached;
  if (r.compressed) j["compressed"] = *r.compressed;
  return j;
}

inline EvalRecord eval_record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  try {
    r.query_id = j.at("query_id").get<std::string>();
    if (j.contains("error")) {
      r.error = j.at("error").get<std::string>();
      return r;
    }
    r.prediction = j.at("prediction").get<std::string>();
    r.em = j.at("em").get<int>();
    r.f1 = j.at("f1").get<double>();
    if (j.contains("cr")) r.cr = j.at("cr").get<double>();
    if (j.contains("input_token_count")) r.input_token_count = j.at("input_token_count").get<long>();
    if (j.contains("output_token_count")) r.output_token_count = j.at("output_token_count").get<long>();
    if (j.contains("answer_preserved")) r.answer_preserved = j.at("answer_preserved").get<bool>();
    r.inference_time_s = j.at("inference_time_s").get<double>();
    r.llm_cached = j.value("llm_cached", false);
    if (j.contains("compressed")) r.compressed = j.at("compressed").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("record", e.what());
  }
  return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["failures"] = r.failures;
  j["em"] = r.em;
  j["f1"] = r.f1;
  if (r.cr) j["cr"] = *r.cr;
  j["par"] = r.par ? nlohmann::ordered_json(*r.par) : nlohmann::ordered_json(nullptr);
  j["par_n"] = r.par_n;
  j["mean_inference_time_s"] = r.mean_inference_time_s
                                   ? nlohmann::ordered_json(*r.mean_inference_time_s)
                                   : nlohmann::ordered_json(nullptr);
  j["timed_n"] = r.timed_n;
  j["expanded"] = r.expanded;
  return j;
}

}  // namespace acorn

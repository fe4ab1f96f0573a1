#pragma once

// End-to-end evaluation of a compressor + answer-LLM pair.

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "acorn/classifier.hpp"
#include "acorn/dataset.hpp"
#include "acorn/metrics.hpp"
#include "acorn/parallel.hpp"
#include "acorn/records.hpp"
#include "acorn/service.hpp"
#include "acorn/templates.hpp"

namespace acorn {

enum class EvalMode { NoRetrieval, TopK, Compressed };

inline std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::NoRetrieval:
      return "no-retrieval";
    case EvalMode::TopK:
      return "top-k";
    case EvalMode::Compressed:
      return "compressed";
  }
  return "compressed";
}

inline EvalMode eval_mode_from_string(std::string_view s) {
  if (s == "no-retrieval") return EvalMode::NoRetrieval;
  if (s == "top-k") return EvalMode::TopK;
  if (s == "compressed") return EvalMode::Compressed;
  throw BadInput("unknown eval mode \"" + std::string(s) + "\"");
}

/// Which l(.) counts tokens for CR. Both sides always use the same counter.
enum class TokenCounter {
  Whitespace,  // whitespace tokens of the raw document texts and the summary
  Service,     // compressor-reported usage: prompt_tokens vs completion_tokens
};

struct EvalOptions {
  EvalMode mode = EvalMode::Compressed;
  std::size_t top_k = 5;
  double failure_threshold = 0.2;
  std::size_t concurrency = 1;
  TokenCounter token_counter = TokenCounter::Whitespace;
  int compressor_max_tokens = 160;
  int llm_max_tokens = 32;
};

struct EvalRun {
  std::vector<EvalRecord> records;
  MetricsReport report;
};

namespace detail {

inline std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

inline EvalRecord evaluate_one(const DatasetRecord& item, ChatCompleter* compressor, ChatCompleter& llm,
                               const PromptTemplates& t, const EvalOptions& opts) {
  EvalRecord rec;
  rec.query_id = item.query.id;

  std::vector<Document> docs;
  for (const auto& d : item.docs) docs.push_back(d.document);

  std::optional<std::string> context;
  switch (opts.mode) {
    case EvalMode::NoRetrieval:
      break;
    case EvalMode::TopK: {
      const auto k = std::min(opts.top_k, docs.size());
      context = render_documents(t, std::span<const Document>(docs).first(k));
      break;
    }
    case EvalMode::Compressed: {
      if (!compressor) throw BadInput("compressed mode needs a compressor client");
      const auto prompt = render_compression_prompt(t, item.query, docs);
      auto out = compressor->complete(prompt, {0.0, opts.compressor_max_tokens});
      long original = 0;
      long compressed = 0;
      if (opts.token_counter == TokenCounter::Whitespace) {
        for (const auto& d : docs) original += whitespace_token_count(d.text);
        compressed = whitespace_token_count(out.text);
      } else {
        if (!out.prompt_tokens || !out.completion_tokens) {
          throw MalformedResponse("compressor response carries no token usage");
        }
        original = *out.prompt_tokens;
        compressed = *out.completion_tokens;
      }
      rec.input_token_count = original;
      rec.output_token_count = compressed;
      rec.cr = compression_ratio(compressed, original);
      if (count_class(item.docs, DocClass::Evidential) > 0) {
        rec.answer_preserved = answer_preserved(out.text, item.query.gold_answers);
      }
      rec.compressed = out.text;
      context = std::move(out.text);
      break;
    }
  }

  const auto prompt = render_answer_prompt(t, item.query, context);
  const auto answer = llm.complete(prompt, {0.0, opts.llm_max_tokens});
  rec.prediction = trim_copy(answer.text);
  rec.llm_cached = answer.from_cache;
  rec.inference_time_s = answer.from_cache ? 0.0 : answer.latency_s;
  rec.em = exact_match(rec.prediction, item.query.gold_answers);
  rec.f1 = token_f1(rec.prediction, item.query.gold_answers);
  return rec;
}

}  // namespace detail

/// Answers every query under `opts.mode` and scores it. Failed records are
/// kept (with their error) and excluded from the means; the run throws
/// RunAborted once failures exceed failure_threshold of the dataset.
inline EvalRun run_pipeline(std::span<const DatasetRecord> dataset, ChatCompleter* compressor,
                            ChatCompleter& llm, const PromptTemplates& templates, const EvalOptions& opts) {
  EvalRun run;
  const std::size_t batch = std::max<std::size_t>(16, 4 * std::max<std::size_t>(opts.concurrency, 1));
  std::size_t failures = 0;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch) {
    std::vector<const DatasetRecord*> items;
    for (std::size_t i = begin; i < std::min(dataset.size(), begin + batch); ++i) items.push_back(&dataset[i]);
    auto results = parallel_map(items, opts.concurrency, [&](const DatasetRecord* item) {
      try {
        return detail::evaluate_one(*item, compressor, llm, templates, opts);
      } catch (const std::exception& e) {
        EvalRecord failed;
        failed.query_id = item->query.id;
        failed.error = e.what();
        return failed;
      }
    });
    for (auto& r : results) {
      if (r.error) {
        ++failures;
        spdlog::warn("query {} failed: {}", r.query_id, *r.error);
      }
      run.records.push_back(std::move(r));
    }
    if (static_cast<double>(failures) > opts.failure_threshold * static_cast<double>(dataset.size())) {
      throw RunAborted("evaluation aborted: " + std::to_string(failures) + " of " +
                       std::to_string(dataset.size()) + " records failed");
    }
  }
  run.report = aggregate(run.records);
  return run;
}

struct ScenarioEval {
  std::array<EvalRun, 3> variants;  // (a), (b), (c)
};

/// Runs the three scenario variants with the same clients and options.
inline ScenarioEval scenario_eval(std::span<const DatasetRecord> scenario, ChatCompleter* compressor,
                                  ChatCompleter& llm, const PromptTemplates& templates,
                                  const EvalOptions& opts) {
  std::array<std::vector<DatasetRecord>, 3> sets;
  for (const auto& r : scenario) {
    auto v = scenario_variant_records(r);
    for (std::size_t i = 0; i < 3; ++i) sets[i].push_back(std::move(v[i]));
  }
  ScenarioEval out;
  for (std::size_t i = 0; i < 3; ++i) {
    out.variants[i] = run_pipeline(sets[i], compressor, llm, templates, opts);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Human-readable tables

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v, const char* format) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, format, *v);
  return buf;
}

inline std::string fmt(double v, const char* format) { return fmt_opt(v, format); }

}  // namespace detail

inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "n         " << r.n << " (" << r.failures << " failed)\n"
     << "EM        " << detail::fmt(r.em, "%.2f") << '\n'
     << "F1        " << detail::fmt(r.f1, "%.2f") << '\n'
     << "CR        " << detail::fmt_opt(r.cr, "%.4f") << '\n'
     << "PAR       " << detail::fmt_opt(r.par, "%.4f") << " (" << r.par_n << " eligible)\n"
     << "time (s)  " << detail::fmt_opt(r.mean_inference_time_s, "%.3f") << " (" << r.timed_n
     << " uncached)\n";
  if (r.expanded) os << "warning   " << r.expanded << " compressed outputs longer than their input\n";
  return os.str();
}

inline std::string format_scenario_table(const ScenarioEval& s) {
  static constexpr const char* kNames[3] = {"(a) evidential", "(b) +irrelevant", "(c) +factual error"};
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %18s %18s %18s\n", "", kNames[0], kNames[1], kNames[2]);
  os << line;
  auto row = [&](const char* name, auto get) {
    std::snprintf(line, sizeof line, "%-10s %18s %18s %18s\n", name, get(s.variants[0].report).c_str(),
                  get(s.variants[1].report).c_str(), get(s.variants[2].report).c_str());
    os << line;
  };
  row("n", [](const MetricsReport& r) { return std::to_string(r.n); });
  row("EM", [](const MetricsReport& r) { return detail::fmt(r.em, "%.2f"); });
  row("F1", [](const MetricsReport& r) { return detail::fmt(r.f1, "%.2f"); });
  row("CR", [](const MetricsReport& r) { return detail::fmt_opt(r.cr, "%.4f"); });
  row("PAR", [](const MetricsReport& r) { return detail::fmt_opt(r.par, "%.4f"); });
  return os.str();
}

}  // namespace acorn

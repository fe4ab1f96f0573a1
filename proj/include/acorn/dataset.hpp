#pragma once

// Dataset construction: retrieval dump -> classify -> augment -> label, and
// the two robustness benchmarks (evidence subset, noise scenarios).
//
// Records are processed in bounded batches on a worker pool and written in
// input order. A failing record is logged, counted and skipped; it never
// aborts the run.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "acorn/augmenter.hpp"
#include "acorn/classifier.hpp"
#include "acorn/labeler.hpp"
#include "acorn/parallel.hpp"
#include "acorn/records.hpp"
#include "acorn/templates.hpp"

namespace acorn {

struct BuildOptions {
  std::uint64_t master_seed = 0;
  std::size_t concurrency = 1;
  std::size_t batch_size = 64;
  bool exclude_sentinel = false;
  LabelOptions label;
};

struct TrainingStats {
  std::size_t total = 0;
  std::size_t with_evidence = 0;  // at least one evidential doc before augmentation
  std::size_t sentinel_labeled = 0;
  std::size_t augmented = 0;
  std::size_t failed = 0;
  std::size_t excluded = 0;  // sentinel records dropped by exclude_sentinel
};

inline ojson to_json(const TrainingStats& s) {
  return ojson{{"total", s.total},       {"with_evidence", s.with_evidence},
               {"sentinel_labeled", s.sentinel_labeled}, {"augmented", s.augmented},
               {"failed", s.failed},     {"excluded", s.excluded}};
}

struct BenchmarkStats {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::size_t failed = 0;

  double kept_percent() const {
    const std::size_t ok = total - failed;
    return ok == 0 ? 0.0 : 100.0 * static_cast<double>(kept) / static_cast<double>(ok);
  }
};

inline ojson to_json(const BenchmarkStats& s) {
  return ojson{{"total", s.total},
               {"kept", s.kept},
               {"failed", s.failed},
               {"kept_percent", s.kept_percent()}};
}

/// Counts for passes that only transform records (classify, augment, label).
struct PassStats {
  std::size_t total = 0;
  std::size_t written = 0;
  std::size_t failed = 0;
};

inline ojson to_json(const PassStats& s) {
  return ojson{{"total", s.total}, {"written", s.written}, {"failed", s.failed}};
}

namespace detail {

template <typename T>
struct Pending {
  std::size_t line = 0;
  std::optional<T> value;
  std::string error;
};

template <typename R>
struct Outcome {
  std::optional<R> value;
  std::string error;
};

/// Corpus-level facts gathered in a cheap first pass: the fallback answer
/// pool and the lines whose query id repeats an earlier one.
struct CorpusIndex {
  AnswerPool pool;
  std::unordered_set<std::size_t> duplicate_lines;
};

inline CorpusIndex index_corpus(const std::filesystem::path& input) {
  CorpusIndex index;
  std::unordered_set<std::string> seen;
  JsonlReader reader(input);
  std::string line;
  while (reader.next(line)) {
    try {
      const auto j = parse_object(line, reader.line_number());
      auto q = parse_query(j, reader.line_number());
      if (!seen.insert(q.id).second) {
        index.duplicate_lines.insert(reader.line_number());
        continue;
      }
      index.pool.entries.push_back({std::move(q.id), std::move(q.gold_answers)});
    } catch (const Error&) {
      // reported by the main pass
    }
  }
  return index;
}

/// Reads `input` in batches with `parse`, runs `work` on the pool and hands
/// each (pending, outcome) pair to `sink` in input order.
template <typename T, typename R>
void drive(const std::filesystem::path& input, const BuildOptions& opts,
           const std::unordered_set<std::size_t>& duplicate_lines,
           const std::function<T(std::string_view, std::size_t)>& parse,
           const std::function<std::string(const T&)>& id_of, const std::function<R(T&)>& work,
           const std::function<void(const Pending<T>&, const Outcome<R>&)>& sink) {
  JsonlReader reader(input);
  std::string line;
  bool eof = false;
  while (!eof) {
    std::vector<Pending<T>> batch;
    while (batch.size() < std::max<std::size_t>(opts.batch_size, 1)) {
      if (!reader.next(line)) {
        eof = true;
        break;
      }
      Pending<T> p;
      p.line = reader.line_number();
      try {
        p.value = parse(line, p.line);
        if (duplicate_lines.count(p.line)) {
          p.error = SchemaError("id", "duplicate query id \"" + id_of(*p.value) + "\"", p.line).what();
          p.value.reset();
        }
      } catch (const Error& e) {
        p.error = e.what();
      }
      batch.push_back(std::move(p));
    }
    if (batch.empty()) break;

    auto results = parallel_map(batch, opts.concurrency, [&](Pending<T>& p) {
      Outcome<R> out;
      if (!p.value) {
        out.error = p.error;
        return out;
      }
      try {
        out.value = work(*p.value);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
      return out;
    });
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!results[i].value) {
        spdlog::warn("{}:{}: record skipped: {}", input.string(), batch[i].line, results[i].error);
      }
      sink(batch[i], results[i]);
    }
  }
}

inline std::vector<Document> documents_of_class(const std::vector<LabeledDocument>& docs, DocClass c) {
  std::vector<Document> out;
  for (const auto& d : docs) {
    if (d.doc_class == c) out.push_back(d.document);
  }
  return out;
}

inline const std::function<RetrievedSet(std::string_view, std::size_t)> kParseRetrieval =
    [](std::string_view line, std::size_t n) { return parse_retrieval_line(line, n); };
inline const std::function<std::string(const RetrievedSet&)> kRetrievalId =
    [](const RetrievedSet& s) { return s.query.id; };

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-stage passes

/// Labels every retrieved document Evidential/Irrelevant.
inline PassStats classify_file(const std::filesystem::path& input, const std::filesystem::path& out_path,
                               const BuildOptions& opts) {
  const auto index = detail::index_corpus(input);
  JsonlWriter out(out_path);
  PassStats stats;
  detail::drive<RetrievedSet, DatasetRecord>(
      input, opts, index.duplicate_lines, detail::kParseRetrieval, detail::kRetrievalId,
      [](RetrievedSet& set) { return DatasetRecord{set.query, classify_set(set), {}, {}, {}}; },
      [&](const auto&, const auto& outcome) {
        ++stats.total;
        if (!outcome.value) {
          ++stats.failed;
          return;
        }
        out.write(record_to_json(*outcome.value));
        ++stats.written;
      });
  out.close();
  return stats;
}

/// Classifies and applies seeded factual-error augmentation.
inline PassStats augment_file(const std::filesystem::path& input, const std::filesystem::path& out_path,
                              const BuildOptions& opts, FillMasker& filler) {
  const auto index = detail::index_corpus(input);
  JsonlWriter out(out_path);
  PassStats stats;
  detail::drive<RetrievedSet, DatasetRecord>(
      input, opts, index.duplicate_lines, detail::kParseRetrieval, detail::kRetrievalId,
      [&](RetrievedSet& set) {
        auto aug = augment_set(classify_set(set), set.query, opts.master_seed, filler, &index.pool);
        return DatasetRecord{aug.query, std::move(aug.docs), aug.seed, {}, {}};
      },
      [&](const auto&, const auto& outcome) {
        ++stats.total;
        if (!outcome.value) {
          ++stats.failed;
          return;
        }
        out.write(record_to_json(*outcome.value));
        ++stats.written;
      });
  out.close();
  return stats;
}

/// Generates summary labels for an already augmented file.
inline TrainingStats label_file(const std::filesystem::path& input, const std::filesystem::path& out_path,
                                const BuildOptions& opts, ChatCompleter& teacher,
                                const PromptTemplates& templates) {
  JsonlWriter out(out_path);
  TrainingStats stats;
  const std::function<DatasetRecord(std::string_view, std::size_t)> parse =
      [](std::string_view line, std::size_t n) { return parse_record_line(line, n); };
  const std::function<std::string(const DatasetRecord&)> id_of = [](const DatasetRecord& r) {
    return r.query.id;
  };
  detail::drive<DatasetRecord, DatasetRecord>(
      input, opts, {}, parse, id_of,
      [&](DatasetRecord& r) {
        const auto evidential = detail::documents_of_class(r.docs, DocClass::Evidential);
        r.label = generate_label(r.query, evidential, teacher, templates, opts.label);
        return r;
      },
      [&](const auto&, const auto& outcome) {
        ++stats.total;
        if (!outcome.value) {
          ++stats.failed;
          return;
        }
        const auto& r = *outcome.value;
        stats.augmented += count_class(r.docs, DocClass::FactualError) > 0;
        stats.with_evidence += count_class(r.docs, DocClass::Evidential) +
                                   count_class(r.docs, DocClass::FactualError) >
                               0;
        if (r.label->is_sentinel) {
          ++stats.sentinel_labeled;
          if (opts.exclude_sentinel) {
            ++stats.excluded;
            return;
          }
        }
        out.write(record_to_json(r));
      });
  out.close();
  return stats;
}

// ---------------------------------------------------------------------------
// Training set

/// Full T = {q, D^a, S} pipeline. The teacher only ever sees the documents
/// that are still evidential after augmentation.
inline TrainingStats build_training_set(const std::filesystem::path& input, const BuildOptions& opts,
                                        FillMasker& filler, ChatCompleter& teacher,
                                        const PromptTemplates& templates,
                                        const std::filesystem::path& out_path) {
  struct Built {
    DatasetRecord record;
    bool had_evidence = false;
    bool augmented = false;
  };
  const auto index = detail::index_corpus(input);
  JsonlWriter out(out_path);
  TrainingStats stats;
  detail::drive<RetrievedSet, Built>(
      input, opts, index.duplicate_lines, detail::kParseRetrieval, detail::kRetrievalId,
      [&](RetrievedSet& set) {
        const auto classified = classify_set(set);
        auto aug = augment_set(classified, set.query, opts.master_seed, filler, &index.pool);
        const auto evidential = detail::documents_of_class(aug.docs, DocClass::Evidential);
        Built b;
        b.had_evidence = count_class(classified, DocClass::Evidential) > 0;
        b.augmented = aug.selected.has_value();
        b.record.label = generate_label(set.query, evidential, teacher, templates, opts.label);
        b.record.query = std::move(aug.query);
        b.record.docs = std::move(aug.docs);
        b.record.seed = aug.seed;
        return b;
      },
      [&](const auto&, const auto& outcome) {
        ++stats.total;
        if (!outcome.value) {
          ++stats.failed;
          return;
        }
        const auto& b = *outcome.value;
        stats.with_evidence += b.had_evidence;
        stats.augmented += b.augmented;
        if (b.record.label->is_sentinel) {
          ++stats.sentinel_labeled;
          if (opts.exclude_sentinel) {
            ++stats.excluded;
            return;
          }
        }
        out.write(record_to_json(b.record));
      });
  out.close();
  return stats;
}

// ---------------------------------------------------------------------------
// Benchmarks

/// Keeps the queries that still have an evidential document after augmentation.
inline BenchmarkStats build_subset_benchmark(const std::filesystem::path& input, const BuildOptions& opts,
                                             FillMasker& filler, const std::filesystem::path& out_path) {
  const auto index = detail::index_corpus(input);
  JsonlWriter out(out_path);
  BenchmarkStats stats;
  detail::drive<RetrievedSet, DatasetRecord>(
      input, opts, index.duplicate_lines, detail::kParseRetrieval, detail::kRetrievalId,
      [&](RetrievedSet& set) {
        auto aug = augment_set(classify_set(set), set.query, opts.master_seed, filler, &index.pool);
        return DatasetRecord{aug.query, std::move(aug.docs), aug.seed, {}, {}};
      },
      [&](const auto&, const auto& outcome) {
        ++stats.total;
        if (!outcome.value) {
          ++stats.failed;
          return;
        }
        if (count_class(outcome.value->docs, DocClass::Evidential) == 0) return;
        ++stats.kept;
        out.write(record_to_json(*outcome.value));
      });
  out.close();
  spdlog::info("subset benchmark: kept {}/{} ({:.2f}%)", stats.kept, stats.total - stats.failed,
               stats.kept_percent());
  return stats;
}

/// Highest-ranked document of each class, when all three classes occur.
struct ScenarioSelection {
  std::size_t evidential = 0;
  std::size_t irrelevant = 0;
  std::size_t factual_error = 0;
};

inline std::optional<ScenarioSelection> select_scenario(const std::vector<LabeledDocument>& docs) {
  std::optional<std::size_t> ev, irr, fe;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto& slot = docs[i].doc_class == DocClass::Evidential   ? ev
                 : docs[i].doc_class == DocClass::Irrelevant ? irr
                                                             : fe;
    if (!slot) slot = i;
  }
  if (!ev || !irr || !fe) return std::nullopt;
  return ScenarioSelection{*ev, *irr, *fe};
}

struct ScenarioOutputs {
  std::filesystem::path scenario;  // full records with "variants"
  std::filesystem::path a;
  std::filesystem::path b;
  std::filesystem::path c;

  static ScenarioOutputs in(const std::filesystem::path& dir) {
    return {dir / "scenario.jsonl", dir / "scenario_a.jsonl", dir / "scenario_b.jsonl",
            dir / "scenario_c.jsonl"};
  }
};

/// Splits a scenario record into its three variant records (a), (b), (c).
inline std::array<DatasetRecord, 3> scenario_variant_records(const DatasetRecord& r) {
  if (!r.variants) throw SchemaError("variants", "record " + r.query.id + " has no scenario variants");
  auto pick = [&](const std::vector<std::string>& ids) {
    DatasetRecord v{r.query, {}, r.seed, {}, {}};
    for (const auto& id : ids) {
      auto it = std::find_if(r.docs.begin(), r.docs.end(),
                             [&](const LabeledDocument& d) { return d.document.id == id; });
      if (it == r.docs.end()) throw SchemaError("variants", "unknown doc id \"" + id + "\"");
      v.docs.push_back(*it);
    }
    return v;
  };
  return {pick(r.variants->a), pick(r.variants->b), pick(r.variants->c)};
}

/// Keeps queries whose augmented top-k holds evidential, irrelevant and
/// factual-error documents, and emits variants (a) [ev], (b) [ev, irr],
/// (c) [ev, fe] built from the highest-ranked document of each class.
inline BenchmarkStats build_scenario_benchmark(const std::filesystem::path& input, const BuildOptions& opts,
                                               FillMasker& filler, const ScenarioOutputs& outputs) {
  const auto index = detail::index_corpus(input);
  JsonlWriter full(outputs.scenario), out_a(outputs.a), out_b(outputs.b), out_c(outputs.c);
  BenchmarkStats stats;
  detail::drive<RetrievedSet, DatasetRecord>(
      input, opts, index.duplicate_lines, detail::kParseRetrieval, detail::kRetrievalId,
      [&](RetrievedSet& set) {
        auto aug = augment_set(classify_set(set), set.query, opts.master_seed, filler, &index.pool);
        return DatasetRecord{aug.query, std::move(aug.docs), aug.seed, {}, {}};
      },
      [&](const auto&, const auto& outcome) {
        ++stats.total;
        if (!outcome.value) {
          ++stats.failed;
          return;
        }
        DatasetRecord r = *outcome.value;
        const auto sel = select_scenario(r.docs);
        if (!sel) return;
        const auto& ev = r.docs[sel->evidential].document.id;
        const auto& irr = r.docs[sel->irrelevant].document.id;
        const auto& fe = r.docs[sel->factual_error].document.id;
        r.variants = ScenarioVariants{{ev}, {ev, irr}, {ev, fe}};
        const auto variants = scenario_variant_records(r);
        full.write(record_to_json(r));
        out_a.write(record_to_json(variants[0]));
        out_b.write(record_to_json(variants[1]));
        out_c.write(record_to_json(variants[2]));
        ++stats.kept;
      });
  full.close();
  out_a.close();
  out_b.close();
  out_c.close();
  return stats;
}

// ---------------------------------------------------------------------------
// Trainer export

/// Writes {"id", "input", "target"} per training example, where input is the
/// compression prompt over all augmented documents and target the label.
inline std::size_t export_trainer_file(const std::filesystem::path& training_path,
                                       const std::filesystem::path& out_path,
                                       const PromptTemplates& templates) {
  JsonlReader reader(training_path);
  JsonlWriter out(out_path);
  std::string line;
  std::size_t n = 0;
  while (reader.next(line)) {
    const auto r = parse_record_line(line, reader.line_number());
    if (!r.label) throw SchemaError("summary", "training record " + r.query.id + " has no label",
                                    reader.line_number());
    std::vector<Document> docs;
    for (const auto& d : r.docs) docs.push_back(d.document);
    ojson j;
    j["id"] = r.query.id;
    j["input"] = render_compression_prompt(templates, r.query, docs);
    j["target"] = r.label->text;
    out.write(j);
    ++n;
  }
  out.close();
  return n;
}

}  // namespace acorn

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "acorn/classifier.hpp"
#include "acorn/core.hpp"
#include "acorn/hashing.hpp"
#include "acorn/random.hpp"
#include "acorn/service.hpp"

namespace acorn {

/// Post-augmentation top-k list for one query.
struct AugmentedSet {
  Query query;
  std::vector<LabeledDocument> docs;
  std::optional<std::string> selected;  // id of the corrupted evidential document
  std::uint64_t seed = 0;               // per-query seed that drove the draw
};

/// Gold answers of every query in a corpus; the replacement source when the
/// fill service offers no usable candidate.
struct AnswerPool {
  struct Entry {
    std::string query_id;
    std::vector<std::string> answers;
  };
  std::vector<Entry> entries;
};

/// Draws one of N+1 equally likely outcomes: an index into the N evidential
/// documents, or nullopt for "corrupt none".
inline std::optional<std::size_t> select_target_index(std::size_t evidential_count, SeededStream& rng) {
  if (evidential_count == 0) return std::nullopt;
  const std::size_t pick = rng.uniform_index(evidential_count + 1);
  if (pick == evidential_count) return std::nullopt;
  return pick;
}

inline std::optional<std::string> select_target(std::span<const std::string> evidential_ids,
                                                SeededStream& rng) {
  const auto pick = select_target_index(evidential_ids.size(), rng);
  if (!pick) return std::nullopt;
  return evidential_ids[*pick];
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

// Spans must be sorted and non-overlapping.
inline std::string substitute(std::string_view text, std::span<const Span> spans,
                              std::string_view replacement) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& s : spans) {
    out.append(text.substr(pos, s.start - pos));
    out.append(replacement);
    pos = s.end;
  }
  out.append(text.substr(pos));
  return out;
}

// Returns the corrupted text when `replacement` is a usable incorrect entity:
// non-empty, not a gold alias, and leaving no gold alias anywhere in the text.
inline std::optional<std::string> try_replacement(std::string_view text, std::span<const Span> spans,
                                                  std::string_view replacement,
                                                  std::span<const std::string> gold_answers,
                                                  std::span<const std::string> normalized_golds) {
  const auto norm = normalize_answer(replacement);
  if (norm.empty()) return std::nullopt;
  for (const auto& g : normalized_golds) {
    if (norm == g) return std::nullopt;
  }
  auto corrupted = substitute(text, spans, replacement);
  if (contains_answer(corrupted, gold_answers)) return std::nullopt;
  return corrupted;
}

}  // namespace detail

/// Turns an evidential document into a factual-error document. The first
/// answer occurrence is masked and sent to the fill service; the best-ranked
/// usable candidate then replaces every occurrence. Falls back to another
/// query's answer (seeded pick from `fallback`) with candidate_rank -1.
inline LabeledDocument fabricate_factual_error(const LabeledDocument& doc, const Query& query,
                                               FillMasker& filler, SeededStream& rng,
                                               const AnswerPool* fallback = nullptr) {
  if (doc.doc_class != DocClass::Evidential || doc.matched_spans.empty()) {
    throw BadInput("fabricate_factual_error: document " + doc.document.id + " is not evidential");
  }
  const std::string& text = doc.document.text;
  const Span first = doc.matched_spans.front();
  const std::string masked =
      text.substr(0, first.start) + filler.mask_token() + text.substr(first.end);

  std::vector<std::string> normalized_golds;
  for (const auto& g : query.gold_answers) normalized_golds.push_back(normalize_answer(g));

  AugmentationProvenance prov;
  prov.origin_doc_id = doc.document.id;
  prov.replaced_surface = text.substr(first.start, first.end - first.start);
  prov.mask_position = first;

  std::optional<std::string> corrupted;
  const auto candidates = filler.fill(masked);
  for (std::size_t rank = 0; rank < candidates.size() && !corrupted; ++rank) {
    const auto surface = detail::trim(candidates[rank].token_str);
    corrupted = detail::try_replacement(text, doc.matched_spans, surface, query.gold_answers,
                                        normalized_golds);
    if (corrupted) {
      prov.replacement = std::string(surface);
      prov.candidate_rank = static_cast<int>(rank);
    }
  }

  if (!corrupted && fallback && !fallback->entries.empty()) {
    const auto& entries = fallback->entries;
    const std::size_t start = rng.uniform_index(entries.size());
    for (std::size_t i = 0; i < entries.size() && !corrupted; ++i) {
      const auto& entry = entries[(start + i) % entries.size()];
      if (entry.query_id == query.id) continue;
      for (const auto& alias : entry.answers) {
        const auto surface = detail::trim(alias);
        corrupted = detail::try_replacement(text, doc.matched_spans, surface, query.gold_answers,
                                            normalized_golds);
        if (corrupted) {
          prov.replacement = std::string(surface);
          prov.candidate_rank = -1;
          break;
        }
      }
    }
  }
  if (!corrupted) {
    throw NoValidCandidate("no replacement entity for document " + doc.document.id + " of query " +
                           query.id);
  }

  LabeledDocument out;
  out.document = doc.document;
  out.document.text = std::move(*corrupted);
  // A title naming the answer would leak it back into rendered prompts.
  const auto title_spans = find_answer_spans(out.document.title, query.gold_answers);
  out.document.title = detail::substitute(out.document.title, title_spans, prov.replacement);
  out.doc_class = DocClass::FactualError;
  out.provenance = std::move(prov);
  return out;
}

/// Seeded augmentation of one classified set: corrupts at most one evidential
/// document, each with probability 1/(N+1), none with probability 1/(N+1).
inline AugmentedSet augment_set(const std::vector<LabeledDocument>& classified, const Query& query,
                                std::uint64_t master_seed, FillMasker& filler,
                                const AnswerPool* fallback = nullptr) {
  AugmentedSet out;
  out.query = query;
  out.docs = classified;
  out.seed = derive_seed(master_seed, query.id);

  std::vector<std::size_t> evidential;
  for (std::size_t i = 0; i < classified.size(); ++i) {
    if (classified[i].doc_class == DocClass::Evidential) evidential.push_back(i);
  }
  SeededStream rng(out.seed);
  const auto pick = select_target_index(evidential.size(), rng);
  if (!pick) return out;

  const std::size_t idx = evidential[*pick];
  out.docs[idx] = fabricate_factual_error(classified[idx], query, filler, rng, fallback);
  out.selected = classified[idx].document.id;
  return out;
}

}  // namespace acorn

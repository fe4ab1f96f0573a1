#pragma once

#include <span>
#include <utility>
#include <vector>

#include "acorn/core.hpp"

namespace acorn {

/// Tags each document Evidential when it contains a gold alias, Irrelevant
/// otherwise. Natural retrieval never yields FactualError.
inline std::vector<LabeledDocument> classify_set(const RetrievedSet& set) {
  std::vector<LabeledDocument> out;
  out.reserve(set.docs.size());
  for (const auto& doc : set.docs) {
    LabeledDocument labeled;
    labeled.document = doc;
    labeled.matched_spans = find_answer_spans(doc.text, set.query.gold_answers);
    labeled.doc_class = labeled.matched_spans.empty() ? DocClass::Irrelevant : DocClass::Evidential;
    out.push_back(std::move(labeled));
  }
  return out;
}

struct Partition {
  std::vector<LabeledDocument> evidential;
  std::vector<LabeledDocument> noisy;  // irrelevant and factual-error documents
};

inline Partition partition(std::span<const LabeledDocument> labeled) {
  Partition p;
  for (const auto& d : labeled) {
    (d.doc_class == DocClass::Evidential ? p.evidential : p.noisy).push_back(d);
  }
  return p;
}

inline std::size_t count_class(std::span<const LabeledDocument> docs, DocClass c) {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.doc_class == c;
  return n;
}

}  // namespace acorn

#pragma once

#include <span>
#include <string>
#include <vector>

#include "acorn/core.hpp"
#include "acorn/hashing.hpp"
#include "acorn/service.hpp"
#include "acorn/templates.hpp"

namespace acorn {

/// Teacher-generated query-focused summary used as a training target.
struct SummaryLabel {
  std::string text;
  std::vector<std::string> source_doc_ids;
  std::string teacher_model;
  std::string prompt_digest;  // sha256 of the rendered prompt; empty for sentinels
  bool is_sentinel = false;
};

struct LabelOptions {
  int max_tokens = 160;
};

/// QFS prompt for the teacher. Only evidential documents belong here.
inline std::string build_qfs_prompt(const PromptTemplates& t, const Query& q,
                                    std::span<const Document> evidential_docs) {
  if (evidential_docs.empty()) throw BadInput("build_qfs_prompt: no evidential documents");
  return render_compression_prompt(t, q, evidential_docs);
}

/// Summarizes the evidential documents with the teacher at temperature 0.
/// With no evidential documents the sentinel label is returned and the
/// teacher is not called. An empty completion is retried once.
inline SummaryLabel generate_label(const Query& q, std::span<const Document> evidential_docs,
                                   ChatCompleter& teacher, const PromptTemplates& t,
                                   const LabelOptions& opts = {}) {
  SummaryLabel label;
  label.teacher_model = teacher.model();
  if (evidential_docs.empty()) {
    label.text = t.sentinel_label;
    label.is_sentinel = true;
    return label;
  }

  const auto prompt = build_qfs_prompt(t, q, evidential_docs);
  label.prompt_digest = sha256_hex(prompt);
  for (const auto& d : evidential_docs) label.source_doc_ids.push_back(d.id);

  const ChatParams params{0.0, opts.max_tokens};
  for (int attempt = 0; attempt < 2; ++attempt) {
    Completion completion;
    try {
      completion = teacher.complete(prompt, params);
    } catch (const ServiceError& e) {
      throw e.with_context("query " + q.id);
    }
    if (!completion.text.empty()) {
      label.text = std::move(completion.text);
      return label;
    }
  }
  throw EmptyCompletion("teacher " + teacher.model() + " returned an empty summary for query " + q.id);
}

}  // namespace acorn

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "acorn/core.hpp"
#include "acorn/error.hpp"

namespace acorn {

/// Instruction texts and layouts for every prompt the pipeline renders.
/// Layout strings use {placeholder} fields; unknown placeholders are kept
/// verbatim and substituted values are never re-expanded.
struct PromptTemplates {
  std::string version = "acorn-default-1";
  std::string compression_instruction =
      "Summarize the documents into a short passage that keeps only the facts needed to "
      "answer the question.";
  std::string answer_instruction =
      "Answer the question. Reply with the answer only, in as few words as possible.";
  std::string doc_separator = "\n\n";
  std::string document_format = "Title: {title}\n{text}";
  std::string untitled_document_format = "{text}";
  std::string compression_format = "{instruction}\n\n{documents}\n\nQuestion: {query}\nSummary:";
  std::string answer_format = "{instruction}\n\nContext:\n{context}\n\nQuestion: {query}\nAnswer:";
  std::string closed_book_format = "{instruction}\n\nQuestion: {query}\nAnswer:";
  std::string sentinel_label = "No relevant information found.";
};

inline void to_json(nlohmann::json& j, const PromptTemplates& t) {
  j = nlohmann::json{{"version", t.version},
                     {"compression_instruction", t.compression_instruction},
                     {"answer_instruction", t.answer_instruction},
                     {"doc_separator", t.doc_separator},
                     {"document_format", t.document_format},
                     {"untitled_document_format", t.untitled_document_format},
                     {"compression_format", t.compression_format},
                     {"answer_format", t.answer_format},
                     {"closed_book_format", t.closed_book_format},
                     {"sentinel_label", t.sentinel_label}};
}

inline void from_json(const nlohmann::json& j, PromptTemplates& t) {
  const PromptTemplates d;
  auto field = [&](const char* name, const std::string& fallback) {
    if (!j.contains(name)) return fallback;
    if (!j.at(name).is_string()) throw SchemaError(name, "must be a string");
    return j.at(name).get<std::string>();
  };
  if (!j.contains("version")) throw SchemaError("version", "template file must carry a version");
  t.version = field("version", d.version);
  t.compression_instruction = field("compression_instruction", d.compression_instruction);
  t.answer_instruction = field("answer_instruction", d.answer_instruction);
  t.doc_separator = field("doc_separator", d.doc_separator);
  t.document_format = field("document_format", d.document_format);
  t.untitled_document_format = field("untitled_document_format", d.untitled_document_format);
  t.compression_format = field("compression_format", d.compression_format);
  t.answer_format = field("answer_format", d.answer_format);
  t.closed_book_format = field("closed_book_format", d.closed_book_format);
  t.sentinel_label = field("sentinel_label", d.sentinel_label);
}

inline PromptTemplates load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template file " + path.string());
  try {
    return nlohmann::json::parse(in).get<PromptTemplates>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

/// Single-pass {placeholder} substitution.
inline std::string render(std::string_view layout, const std::map<std::string, std::string_view>& vars) {
  std::string out;
  out.reserve(layout.size());
  std::size_t i = 0;
  while (i < layout.size()) {
    if (layout[i] == '{') {
      const auto close = layout.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto it = vars.find(std::string(layout.substr(i + 1, close - i - 1)));
        if (it != vars.end()) {
          out.append(it->second);
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(layout[i++]);
  }
  return out;
}

inline std::string render_documents(const PromptTemplates& t, std::span<const Document> docs) {
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) out += t.doc_separator;
    const auto rank = std::to_string(i + 1);
    const auto& layout = docs[i].title.empty() ? t.untitled_document_format : t.document_format;
    out += render(layout, {{"rank", rank}, {"title", docs[i].title}, {"text", docs[i].text}});
  }
  return out;
}

/// Instruction, then documents in rank order, then the question.
inline std::string render_compression_prompt(const PromptTemplates& t, const Query& q,
                                             std::span<const Document> docs) {
  const auto documents = render_documents(t, docs);
  return render(t.compression_format,
                {{"instruction", t.compression_instruction}, {"documents", documents}, {"query", q.text}});
}

/// Answer prompt over a context (compressed summary or raw documents); without
/// a context the closed-book layout is used.
inline std::string render_answer_prompt(const PromptTemplates& t, const Query& q,
                                        const std::optional<std::string>& context) {
  if (!context) {
    return render(t.closed_book_format, {{"instruction", t.answer_instruction}, {"query", q.text}});
  }
  return render(t.answer_format,
                {{"instruction", t.answer_instruction}, {"context", *context}, {"query", q.text}});
}

}  // namespace acorn

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acorn/error.hpp"

namespace acorn {

/// Half-open byte range [start, end) into a document's text.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

struct Query {
  std::string id;
  std::string text;
  std::vector<std::string> gold_answers;
};

struct Document {
  std::string id;
  std::string title;
  std::string text;
  double retrieval_score = 0.0;
};

/// Top-k retrieval result for one query, in rank order.
struct RetrievedSet {
  Query query;
  std::vector<Document> docs;
};

enum class DocClass { Evidential, Irrelevant, FactualError };

inline std::string_view to_string(DocClass c) {
  switch (c) {
    case DocClass::Evidential:
      return "evidential";
    case DocClass::Irrelevant:
      return "irrelevant";
    case DocClass::FactualError:
      return "factual_error";
  }
  return "irrelevant";
}

inline DocClass doc_class_from_string(std::string_view s) {
  if (s == "evidential") return DocClass::Evidential;
  if (s == "irrelevant") return DocClass::Irrelevant;
  if (s == "factual_error") return DocClass::FactualError;
  throw SchemaError("class", "unknown document class \"" + std::string(s) + "\"");
}

/// How a factual-error document was manufactured from an evidential one.
struct AugmentationProvenance {
  std::string origin_doc_id;
  std::string replaced_surface;
  std::string replacement;
  Span mask_position;
  // Index into the fill service's ranked candidates; -1 when the
  // replacement came from another query's answers.
  int candidate_rank = 0;

  friend bool operator==(const AugmentationProvenance&, const AugmentationProvenance&) = default;
};

struct LabeledDocument {
  Document document;
  DocClass doc_class = DocClass::Irrelevant;
  std::vector<Span> matched_spans;
  std::optional<AugmentationProvenance> provenance;
};

namespace text {

/// One maximal run of non-separator bytes.
struct Word {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string lowered;
  bool article = false;
};

namespace detail {

inline bool is_unicode_separator(char32_t cp) {
  switch (cp) {
    case 0x00A0:  // no-break space
    case 0x00A1:
    case 0x00A7:
    case 0x00AB:
    case 0x00B6:
    case 0x00B7:
    case 0x00BB:
    case 0x00BF:
    case 0xFEFF:
      return true;
    default:
      break;
  }
  // General Punctuation (dashes, quotes, ellipsis, typographic spaces) and
  // CJK symbols and punctuation.
  return (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x3000 && cp <= 0x303F);
}

// Byte length of the separator starting at s[i], or 0 when s[i] belongs to a word.
inline std::size_t separator_length(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) return (std::isspace(c) || std::ispunct(c)) ? 1 : 0;

  std::size_t len = 0;
  char32_t cp = 0;
  if ((c & 0xE0) == 0xC0) {
    len = 2;
    cp = c & 0x1F;
  } else if ((c & 0xF0) == 0xE0) {
    len = 3;
    cp = c & 0x0F;
  } else if ((c & 0xF8) == 0xF0) {
    len = 4;
    cp = c & 0x07;
  } else {
    return 0;
  }
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  return is_unicode_separator(cp) ? len : 0;
}

inline bool is_article(std::string_view lowered) {
  return lowered == "a" || lowered == "an" || lowered == "the";
}

}  // namespace detail

/// Splits on whitespace and punctuation (ASCII plus common Unicode
/// punctuation), lowercasing ASCII letters.
inline std::vector<Word> split_words(std::string_view s) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < s.size()) {
    if (std::size_t sep = detail::separator_length(s, i)) {
      i += sep;
      continue;
    }
    Word w;
    w.begin = i;
    while (i < s.size() && detail::separator_length(s, i) == 0) {
      w.lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
      ++i;
    }
    w.end = i;
    w.article = detail::is_article(w.lowered);
    words.push_back(std::move(w));
  }
  return words;
}

}  // namespace text

/// SQuAD-style normalization: lowercase, punctuation treated as a word
/// separator, English articles dropped, whitespace collapsed. Idempotent.
inline std::string normalize_answer(std::string_view s) {
  std::string out;
  for (const auto& w : text::split_words(s)) {
    if (w.article) continue;
    if (!out.empty()) out.push_back(' ');
    out += w.lowered;
  }
  return out;
}

/// All non-overlapping occurrences of any gold alias in `doc_text`, matched as
/// substrings of the normalized text and mapped back to original byte offsets.
/// Scans left to right; at each position the longest alias wins. When an alias
/// itself starts with an article ("The Beatles"), a span that begins on a word
/// boundary also absorbs the article words directly before it.
inline std::vector<Span> find_answer_spans(std::string_view doc_text,
                                           std::span<const std::string> gold_answers) {
  struct Needle {
    std::string norm;
    std::size_t leading_articles = 0;
  };
  std::vector<Needle> needles;
  for (const auto& alias : gold_answers) {
    const auto words = text::split_words(alias);
    std::size_t leading = 0;
    while (leading < words.size() && words[leading].article) ++leading;
    auto norm = normalize_answer(alias);
    if (norm.empty()) continue;
    auto it = std::find_if(needles.begin(), needles.end(),
                           [&](const Needle& n) { return n.norm == norm; });
    if (it != needles.end()) {
      it->leading_articles = std::max(it->leading_articles, leading);
    } else {
      needles.push_back({std::move(norm), leading});
    }
  }
  std::sort(needles.begin(), needles.end(), [](const Needle& a, const Needle& b) {
    if (a.norm.size() != b.norm.size()) return a.norm.size() > b.norm.size();
    return a.norm < b.norm;
  });

  constexpr std::size_t kGap = static_cast<std::size_t>(-1);
  const auto words = text::split_words(doc_text);
  std::string norm;
  std::vector<std::size_t> byte_word;  // word index per normalized byte; kGap for joins
  std::vector<std::size_t> word_start(words.size(), kGap);
  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    if (words[wi].article) continue;
    if (!norm.empty()) {
      norm.push_back(' ');
      byte_word.push_back(kGap);
    }
    word_start[wi] = norm.size();
    norm += words[wi].lowered;
    byte_word.insert(byte_word.end(), words[wi].lowered.size(), wi);
  }

  std::vector<Span> spans;
  std::size_t p = 0;
  while (p < norm.size()) {
    const Needle* hit = nullptr;
    for (const auto& n : needles) {
      if (norm.compare(p, n.norm.size(), n.norm) == 0) {
        hit = &n;
        break;
      }
    }
    if (!hit) {
      ++p;
      continue;
    }
    const std::size_t last = p + hit->norm.size() - 1;
    const std::size_t wi = byte_word[p];
    const std::size_t wj = byte_word[last];
    Span span{words[wi].begin + (p - word_start[wi]),
              words[wj].begin + (last - word_start[wj]) + 1};
    if (hit->leading_articles > 0 && p == word_start[wi]) {
      std::size_t k = wi;
      std::size_t absorbed = 0;
      while (absorbed < hit->leading_articles && k > 0 && words[k - 1].article) {
        --k;
        ++absorbed;
      }
      if (absorbed > 0) span.start = words[k].begin;
    }
    spans.push_back(span);
    p += hit->norm.size();
  }
  return spans;
}

inline bool contains_answer(std::string_view doc_text, std::span<const std::string> gold_answers) {
  return !find_answer_spans(doc_text, gold_answers).empty();
}

/// Throws SchemaError when a query breaks its invariants.
/// `line` tags the error with its input line when non-zero.
inline void validate(const Query& q, std::size_t line = 0) {
  if (q.id.empty()) throw SchemaError("id", "must be a non-empty string", line);
  if (q.gold_answers.empty()) throw SchemaError("answers", "must contain at least one alias", line);
  for (const auto& a : q.gold_answers) {
    if (normalize_answer(a).empty()) {
      throw SchemaError("answers", "alias \"" + a + "\" is empty after normalization", line);
    }
  }
}

inline void validate(const RetrievedSet& set) {
  validate(set.query);
  if (set.docs.empty()) throw SchemaError("ctxs", "must contain at least one document");
  for (const auto& d : set.docs) {
    if (d.text.empty()) throw SchemaError("ctxs.text", "document \"" + d.id + "\" has empty text");
  }
}

}  // namespace acorn

#pragma once

// JSONL wire formats: retrieval dumps on the way in, labeled/augmented
// records (training, benchmark and scenario files) on the way out.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "acorn/augmenter.hpp"
#include "acorn/classifier.hpp"
#include "acorn/core.hpp"
#include "acorn/error.hpp"
#include "acorn/labeler.hpp"

namespace acorn {

using ojson = nlohmann::ordered_json;

/// Doc ids of the three scenario variants.
struct ScenarioVariants {
  std::vector<std::string> a;  // evidential only
  std::vector<std::string> b;  // evidential + irrelevant
  std::vector<std::string> c;  // evidential + factual error
};

/// One line of a classified, augmented, training or benchmark file.
struct DatasetRecord {
  Query query;
  std::vector<LabeledDocument> docs;
  std::optional<std::uint64_t> seed;
  std::optional<SummaryLabel> label;
  std::optional<ScenarioVariants> variants;
};

/// Line-oriented reader that keeps a single line buffer in memory.
class JsonlReader {
 public:
  explicit JsonlReader(const std::filesystem::path& path) : in_(path), path_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  /// Advances to the next non-blank line. Returns false at end of file.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  }

  std::size_t line_number() const { return line_no_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
  std::size_t line_no_ = 0;
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) throw SchemaError(field, "missing", line);
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (!v.is_string()) throw SchemaError(field, "must be a string", line);
  return v.get<std::string>();
}

inline std::string optional_string(const nlohmann::json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw SchemaError(field, "must be a string", line);
  return it->get<std::string>();
}

// Ids in retrieval dumps are sometimes numeric.
inline std::string id_string(const nlohmann::json& obj, const char* field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw SchemaError(field, "must be a string", line);
}

inline nlohmann::json parse_object(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
  return j;
}

inline Query parse_query(const nlohmann::json& j, std::size_t line) {
  Query q;
  q.id = id_string(j, "id", line);
  q.text = require_string(j, "question", line);
  const auto& answers = require(j, "answers", line);
  if (!answers.is_array()) throw SchemaError("answers", "must be an array of strings", line);
  for (const auto& a : answers) {
    if (!a.is_string()) throw SchemaError("answers", "must be an array of strings", line);
    q.gold_answers.push_back(a.get<std::string>());
  }
  validate(q, line);
  return q;
}

inline Document parse_document(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError("ctxs", "entries must be objects", line);
  Document d;
  d.id = id_string(j, "id", line);
  d.title = optional_string(j, "title", line);
  d.text = require_string(j, "text", line);
  if (d.text.empty()) throw SchemaError("text", "document " + d.id + " has empty text", line);
  if (auto s = j.find("score"); s != j.end() && !s->is_null()) {
    if (s->is_number()) {
      d.retrieval_score = s->get<double>();
    } else if (s->is_string()) {
      // DPR dumps store scores as strings.
      try {
        d.retrieval_score = std::stod(s->get<std::string>());
      } catch (const std::exception&) {
        throw SchemaError("score", "not a number", line);
      }
    } else {
      throw SchemaError("score", "must be a number", line);
    }
  }
  return d;
}

inline std::vector<Document> parse_documents(const nlohmann::json& arr, const char* field,
                                             std::size_t line) {
  if (!arr.is_array()) throw SchemaError(field, "must be an array", line);
  if (arr.empty()) throw SchemaError(field, "must contain at least one document", line);
  std::vector<Document> docs;
  for (const auto& d : arr) docs.push_back(parse_document(d, line));
  return docs;
}

}  // namespace detail

/// Parses one retrieval-dump line:
/// {"id", "question", "answers": [...], "ctxs": [{"id", "title", "text", "score"}]}.
inline RetrievedSet parse_retrieval_line(std::string_view line, std::size_t line_no) {
  const auto j = detail::parse_object(line, line_no);
  RetrievedSet set;
  set.query = detail::parse_query(j, line_no);
  set.docs = detail::parse_documents(detail::require(j, "ctxs", line_no), "ctxs", line_no);
  return set;
}

/// Streams RetrievedSets from a retrieval dump in file order. A malformed line
/// throws ParseError/SchemaError carrying its line number; the stream stays
/// usable and resumes at the following line.
class RetrievalStream {
 public:
  explicit RetrievalStream(const std::filesystem::path& path) : reader_(path) {}

  std::optional<RetrievedSet> next() {
    if (!reader_.next(line_)) return std::nullopt;
    return parse_retrieval_line(line_, reader_.line_number());
  }

  std::size_t line_number() const { return reader_.line_number(); }

 private:
  JsonlReader reader_;
  std::string line_;
};

inline RetrievalStream ingest_retrievals(const std::filesystem::path& path) {
  return RetrievalStream(path);
}

// ---------------------------------------------------------------------------
// Labeled records

inline ojson provenance_to_json(const AugmentationProvenance& p) {
  ojson j;
  j["origin_doc_id"] = p.origin_doc_id;
  j["replaced_surface"] = p.replaced_surface;
  j["replacement"] = p.replacement;
  j["mask_position"] = ojson::array({p.mask_position.start, p.mask_position.end});
  j["candidate_rank"] = p.candidate_rank;
  return j;
}

inline ojson document_to_json(const LabeledDocument& d) {
  ojson j;
  j["id"] = d.document.id;
  j["title"] = d.document.title;
  j["text"] = d.document.text;
  j["score"] = d.document.retrieval_score;
  j["class"] = std::string(to_string(d.doc_class));
  if (d.provenance) j["provenance"] = provenance_to_json(*d.provenance);
  return j;
}

inline ojson record_to_json(const DatasetRecord& r) {
  ojson j;
  j["id"] = r.query.id;
  j["question"] = r.query.text;
  j["answers"] = r.query.gold_answers;
  ojson docs = ojson::array();
  for (const auto& d : r.docs) docs.push_back(document_to_json(d));
  j["docs"] = std::move(docs);
  if (r.label) {
    j["summary"] = r.label->text;
    j["summary_is_sentinel"] = r.label->is_sentinel;
    j["summary_source_doc_ids"] = r.label->source_doc_ids;
    j["teacher_model"] = r.label->teacher_model;
    j["prompt_digest"] = r.label->prompt_digest;
  }
  if (r.variants) {
    j["variants"] = {{"a", r.variants->a}, {"b", r.variants->b}, {"c", r.variants->c}};
  }
  if (r.seed) j["seed"] = *r.seed;
  return j;
}

namespace detail {

inline AugmentationProvenance parse_provenance(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError("provenance", "must be an object", line);
  AugmentationProvenance p;
  try {
    p.origin_doc_id = j.at("origin_doc_id").get<std::string>();
    p.replaced_surface = j.at("replaced_surface").get<std::string>();
    p.replacement = j.at("replacement").get<std::string>();
    const auto& pos = j.at("mask_position");
    p.mask_position = {pos.at(0).get<std::size_t>(), pos.at(1).get<std::size_t>()};
    p.candidate_rank = j.at("candidate_rank").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("provenance", e.what(), line);
  }
  return p;
}

inline std::vector<std::string> string_list(const nlohmann::json& j, const char* field, std::size_t line) {
  if (!j.is_array()) throw SchemaError(field, "must be an array of strings", line);
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw SchemaError(field, "must be an array of strings", line);
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Parses a labeled record. Lines in retrieval-dump form ("ctxs" instead of
/// "docs") are classified on the fly. Answer spans are always recomputed
/// from the text.
inline DatasetRecord parse_record_line(std::string_view line, std::size_t line_no) {
  const auto j = detail::parse_object(line, line_no);
  DatasetRecord r;
  r.query = detail::parse_query(j, line_no);

  if (!j.contains("docs") && j.contains("ctxs")) {
    RetrievedSet set{r.query, detail::parse_documents(j.at("ctxs"), "ctxs", line_no)};
    r.docs = classify_set(set);
  } else {
    const auto& docs = detail::require(j, "docs", line_no);
    if (!docs.is_array() || docs.empty()) {
      throw SchemaError("docs", "must be a non-empty array", line_no);
    }
    for (const auto& dj : docs) {
      LabeledDocument d;
      d.document = detail::parse_document(dj, line_no);
      const auto cls = detail::require_string(dj, "class", line_no);
      if (cls != "evidential" && cls != "irrelevant" && cls != "factual_error") {
        throw SchemaError("class", "unknown document class \"" + cls + "\"", line_no);
      }
      d.doc_class = doc_class_from_string(cls);
      if (auto p = dj.find("provenance"); p != dj.end() && !p->is_null()) {
        d.provenance = detail::parse_provenance(*p, line_no);
      }
      if (d.doc_class == DocClass::FactualError && !d.provenance) {
        throw SchemaError("provenance", "factual_error document " + d.document.id + " lacks provenance",
                          line_no);
      }
      if (d.doc_class == DocClass::Evidential) {
        d.matched_spans = find_answer_spans(d.document.text, r.query.gold_answers);
      }
      r.docs.push_back(std::move(d));
    }
  }

  if (auto s = j.find("seed"); s != j.end() && !s->is_null()) {
    if (!s->is_number_integer()) throw SchemaError("seed", "must be an integer", line_no);
    r.seed = s->get<std::uint64_t>();
  }
  if (auto s = j.find("summary"); s != j.end() && !s->is_null()) {
    SummaryLabel label;
    label.text = detail::require_string(j, "summary", line_no);
    if (auto f = j.find("summary_is_sentinel"); f != j.end()) {
      if (!f->is_boolean()) throw SchemaError("summary_is_sentinel", "must be a boolean", line_no);
      label.is_sentinel = f->get<bool>();
    }
    if (auto f = j.find("summary_source_doc_ids"); f != j.end()) {
      label.source_doc_ids = detail::string_list(*f, "summary_source_doc_ids", line_no);
    }
    label.teacher_model = detail::optional_string(j, "teacher_model", line_no);
    label.prompt_digest = detail::optional_string(j, "prompt_digest", line_no);
    r.label = std::move(label);
  }
  if (auto v = j.find("variants"); v != j.end() && !v->is_null()) {
    ScenarioVariants sv;
    try {
      sv.a = detail::string_list(v->at("a"), "variants.a", line_no);
      sv.b = detail::string_list(v->at("b"), "variants.b", line_no);
      sv.c = detail::string_list(v->at("c"), "variants.c", line_no);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("variants", e.what(), line_no);
    }
    r.variants = std::move(sv);
  }
  return r;
}

/// Loads a whole labeled-record file (evaluation sets are small enough).
inline std::vector<DatasetRecord> load_records(const std::filesystem::path& path) {
  JsonlReader reader(path);
  std::vector<DatasetRecord> out;
  std::string line;
  while (reader.next(line)) out.push_back(parse_record_line(line, reader.line_number()));
  return out;
}

/// Appends one compact JSON object per line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write " + path.string());
  }

  template <typename Json>
  void write(const Json& j) {
    out_ << j.dump() << '\n';
    if (!out_) throw IoError("write failed: " + path_.string());
  }

  void close() {
    out_.close();
    if (out_.fail()) throw IoError("close failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void write_json_file(const std::filesystem::path& path, const ojson& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace acorn

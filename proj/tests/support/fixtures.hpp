#pragma once

// Synthetic ODQA corpora. Every query's answer is a made-up entity, evidential
// documents state "the answer is <entity>." and irrelevant ones never mention it.

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "acorn/core.hpp"
#include "acorn/hashing.hpp"
#include "acorn/metrics.hpp"

namespace acorn::testing {

inline std::string make_entity(std::mt19937_64& rng) {
  static const char* kSyllables[] = {"ka", "ro", "len", "mi", "tor", "sa", "vel", "qu", "dan",
                                     "zi", "bo", "rek", "wu", "fal", "ny", "gor"};
  std::string name;
  const int n = 2 + static_cast<int>(rng() % 2);
  for (int i = 0; i < n; ++i) name += kSyllables[rng() % 16];
  name[0] = static_cast<char>(name[0] - 'a' + 'A');
  return name;
}

/// `n` queries with five documents each; query i has evidential[i] evidential
/// documents at seeded positions (0..5 when evidential is empty).
inline std::vector<RetrievedSet> make_corpus(std::size_t n, std::uint64_t seed,
                                             std::vector<std::size_t> evidential = {}) {
  std::mt19937_64 rng(seed);
  std::set<std::string> used;
  std::vector<RetrievedSet> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string entity;
    do {
      entity = make_entity(rng);
    } while (!used.insert(entity).second);
    RetrievedSet set;
    set.query.id = "q" + std::to_string(i);
    set.query.text = "Which name belongs to topic " + std::to_string(i) + "?";
    set.query.gold_answers = {entity};
    const std::size_t n_ev = i < evidential.size() ? evidential[i] : rng() % 6;
    std::vector<bool> is_ev(5, false);
    for (std::size_t k = 0; k < n_ev && k < 5; ++k) is_ev[k] = true;
    std::shuffle(is_ev.begin(), is_ev.end(), rng);
    for (std::size_t j = 0; j < 5; ++j) {
      Document d;
      d.id = set.query.id + "-d" + std::to_string(j);
      d.title = "Topic " + std::to_string(i);
      d.retrieval_score = 80.0 - static_cast<double>(j);
      if (is_ev[j]) {
        d.text = "Record " + std::to_string(i) + "." + std::to_string(j) +
                 " discusses topic " + std::to_string(i) + " and the answer is " + entity + ".";
      } else {
        d.text = "Record " + std::to_string(i) + "." + std::to_string(j) + " discusses topic " +
                 std::to_string(i) + " without naming anyone.";
      }
      set.docs.push_back(std::move(d));
    }
    out.push_back(std::move(set));
  }
  return out;
}

inline nlohmann::json retrieval_json(const RetrievedSet& set) {
  nlohmann::json ctxs = nlohmann::json::array();
  for (const auto& d : set.docs) {
    ctxs.push_back({{"id", d.id}, {"title", d.title}, {"text", d.text}, {"score", d.retrieval_score}});
  }
  return {{"id", set.query.id}, {"question", set.query.text}, {"answers", set.query.gold_answers},
          {"ctxs", ctxs}};
}

inline void write_corpus(const std::filesystem::path& path, const std::vector<RetrievedSet>& sets) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  for (const auto& s : sets) out << retrieval_json(s).dump() << '\n';
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("acorn-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Made-up fill candidates derived from the masked text.
inline std::vector<std::string> fake_fill_tokens(const std::string& masked) {
  static const char* kNames[] = {" Lyon", " Berlin", " Oslo", " Quito", " Perth", " Hanoi", " Lima", " Turin"};
  const auto h = derive_seed(0, masked);
  return {kNames[h % 8], kNames[(h / 8) % 8], kNames[(h / 64) % 8]};
}

/// Extracts X from the first "the answer is X." in `text`, or "unknown".
inline std::string answer_is(const std::string& text) {
  const std::string marker = "the answer is ";
  const auto p = text.find(marker);
  if (p == std::string::npos) return "unknown";
  const auto b = p + marker.size();
  const auto e = text.find('.', b);
  return text.substr(b, e == std::string::npos ? std::string::npos : e - b);
}

/// Text between the instruction block and the question of a compression prompt.
inline std::string documents_section(const std::string& prompt) {
  const auto b = prompt.find("\n\n");
  const auto e = prompt.rfind("\n\nQuestion:");
  if (b == std::string::npos || e == std::string::npos || e <= b) return prompt;
  return prompt.substr(b + 2, e - b - 2);
}

/// Deterministic OpenAI-compatible chat and fill-mask endpoints. The model
/// name picks the behavior: "llm" answers from "the answer is X." in its
/// context, everything else echoes the document section of the prompt.
inline void register_pipeline_mocks(httplib::Server& server) {
  server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const auto model = body.at("model").get<std::string>();
    const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
    const std::string text = model == "llm" ? answer_is(prompt) : documents_section(prompt);
    const nlohmann::json out{
        {"id", "mock"},
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}}},
        {"usage",
         {{"prompt_tokens", whitespace_token_count(prompt)}, {"completion_tokens", whitespace_token_count(text)}}}};
    res.set_content(out.dump(), "application/json");
  });
  server.Post("/fill", [](const httplib::Request& req, httplib::Response& res) {
    const auto inputs = nlohmann::json::parse(req.body).at("inputs").get<std::string>();
    nlohmann::json out = nlohmann::json::array();
    double score = 0.5;
    for (const auto& t : fake_fill_tokens(inputs)) {
      out.push_back({{"token_str", t}, {"score", score}});
      score /= 2;
    }
    res.set_content(out.dump(), "application/json");
  });
}

}  // namespace acorn::testing

// acorn: build noise-augmented compression datasets and evaluate compressors.

#include <CLI/CLI.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cctype>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <string>

#include "acorn/acorn.hpp"

namespace fs = std::filesystem;
using acorn::ojson;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitFatal = 2;

struct ServiceFlags {
  std::string url;
  std::string model;
  std::string key_env;
};

struct RunConfig {
  std::string command;
  fs::path input;
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t concurrency = 1;
  std::size_t batch_size = 64;
  fs::path cache_dir = ".acorn-cache";
  bool no_cache = false;
  fs::path templates;
  std::string log_level = "info";

  ServiceFlags teacher{"", "gpt-3.5-turbo", ""};
  ServiceFlags compressor;
  ServiceFlags llm;
  ServiceFlags fill{"", "roberta-large", ""};
  std::string mask_token = "<mask>";
  double timeout_s = 60.0;
  int max_retries = 3;
  double backoff_base_s = 0.5;
  int max_inflight = 4;

  // build-train / label
  bool exclude_sentinel = false;
  int label_max_tokens = 160;
  // build-bench
  std::string kind = "subset";
  // eval
  std::string mode = "compressed";
  std::size_t top_k = 5;
  double failure_threshold = 0.2;
  std::string token_counter = "whitespace";
  int compressor_max_tokens = 160;
  int llm_max_tokens = 32;
};

// Top-level keys of a config file apply to the chosen subcommand. Sections
// named after another subcommand are skipped so one file can serve them all.
class SubcommandConfig : public CLI::ConfigBase {
 public:
  explicit SubcommandConfig(const CLI::App& app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigBase::from_config(input);
    const auto chosen = app_.get_subcommands();
    if (chosen.empty()) return items;
    const auto& name = chosen.front()->get_name();
    // The first value seen wins, so the subcommand's own section goes first.
    std::vector<CLI::ConfigItem> out, shared;
    for (auto& item : items) {
      if (item.parents.empty()) {
        item.parents.push_back(name);
        shared.push_back(std::move(item));
      } else if (item.parents.front() == name) {
        out.push_back(std::move(item));
      }
    }
    std::move(shared.begin(), shared.end(), std::back_inserter(out));
    return out;
  }

 private:
  const CLI::App& app_;
};

std::string env_name(const std::string& flag) {
  std::string out = "ACORN_";
  for (char c : flag) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

// Registers --name with ACORN_NAME as its environment fallback.
template <typename T>
CLI::Option* opt(CLI::App* app, const std::string& name, T& target, const std::string& help) {
  return app->add_option("--" + name, target, help)->envname(env_name(name))->capture_default_str();
}

void add_common(CLI::App* app, RunConfig& rc, bool needs_out = true) {
  // --config belongs to the main app; unknown options fall through to it.
  app->fallthrough();
  app->footer("Every option can also be set with --config FILE or an ACORN_<OPTION> variable.");
  opt(app, "input", rc.input, "input JSONL file")->required()->check(CLI::ExistingFile);
  auto* out = opt(app, "out", rc.out, "output directory");
  if (needs_out) out->required();
  opt(app, "seed", rc.seed, "master seed");
  opt(app, "concurrency", rc.concurrency, "records processed in parallel")->check(CLI::PositiveNumber);
  opt(app, "batch-size", rc.batch_size, "records read per batch")->check(CLI::PositiveNumber);
  opt(app, "cache-dir", rc.cache_dir, "response cache directory");
  app->add_flag("--no-cache", rc.no_cache, "disable the response cache")->envname("ACORN_NO_CACHE");
  opt(app, "templates", rc.templates, "prompt template JSON file");
  opt(app, "log-level", rc.log_level, "trace|debug|info|warn|error|off");
}

void add_client_tuning(CLI::App* app, RunConfig& rc) {
  opt(app, "timeout", rc.timeout_s, "per-request timeout in seconds");
  opt(app, "max-retries", rc.max_retries, "retries on 429/5xx/transport errors");
  opt(app, "backoff-base", rc.backoff_base_s, "first retry delay in seconds, doubled per attempt");
  opt(app, "max-inflight", rc.max_inflight, "concurrent requests per service");
}

void add_service(CLI::App* app, const std::string& name, ServiceFlags& s) {
  opt(app, name + "-url", s.url, name + " service base URL");
  opt(app, name + "-model", s.model, name + " model name");
  opt(app, name + "-key-env", s.key_env, "environment variable holding the " + name + " API key");
}

void add_fill(CLI::App* app, RunConfig& rc) {
  add_service(app, "fill", rc.fill);
  opt(app, "mask-token", rc.mask_token, "fill-mask sentinel token");
}

acorn::ClientConfig client_config(const RunConfig& rc, const ServiceFlags& s, const std::string& name) {
  if (s.url.empty()) throw acorn::BadInput("--" + name + "-url is required");
  if (s.model.empty()) throw acorn::BadInput("--" + name + "-model is required");
  acorn::ClientConfig c;
  c.base_url = s.url;
  c.model = s.model;
  c.auth_env_var = s.key_env;
  c.timeout_s = rc.timeout_s;
  c.max_retries = rc.max_retries;
  c.backoff_base_s = rc.backoff_base_s;
  c.max_concurrency = rc.max_inflight;
  c.validate();
  return c;
}

std::shared_ptr<acorn::ResponseCache> make_cache(const RunConfig& rc) {
  if (rc.no_cache) return nullptr;
  return std::make_shared<acorn::ResponseCache>(rc.cache_dir);
}

// Built-in defaults when no template file is given or shipped.
acorn::PromptTemplates load_templates(const RunConfig& rc) {
  if (!rc.templates.empty()) return acorn::load_templates(rc.templates);
  return {};
}

acorn::BuildOptions build_options(const RunConfig& rc) {
  acorn::BuildOptions o;
  o.master_seed = rc.seed;
  o.concurrency = rc.concurrency;
  o.batch_size = rc.batch_size;
  o.exclude_sentinel = rc.exclude_sentinel;
  o.label.max_tokens = rc.label_max_tokens;
  return o;
}

ojson service_json(const ServiceFlags& s) {
  return {{"url", s.url}, {"model", s.model}, {"key_env", s.key_env}};
}

// Resolved values only; echoed next to the outputs.
ojson run_config_json(const RunConfig& rc, const acorn::PromptTemplates* templates) {
  ojson j;
  j["command"] = rc.command;
  j["input"] = rc.input.string();
  j["out"] = rc.out.string();
  j["seed"] = rc.seed;
  j["concurrency"] = rc.concurrency;
  j["batch_size"] = rc.batch_size;
  j["cache_dir"] = rc.no_cache ? ojson(nullptr) : ojson(rc.cache_dir.string());
  if (templates) {
    j["templates"] = {{"path", rc.templates.string()}, {"version", templates->version}};
  }
  j["clients"] = {{"teacher", service_json(rc.teacher)},
                  {"compressor", service_json(rc.compressor)},
                  {"llm", service_json(rc.llm)},
                  {"fill", service_json(rc.fill)},
                  {"mask_token", rc.mask_token},
                  {"timeout_s", rc.timeout_s},
                  {"max_retries", rc.max_retries},
                  {"backoff_base_s", rc.backoff_base_s},
                  {"max_inflight", rc.max_inflight}};
  if (rc.command == "build-train" || rc.command == "label") {
    j["exclude_sentinel"] = rc.exclude_sentinel;
    j["label_max_tokens"] = rc.label_max_tokens;
  }
  if (rc.command == "build-bench") j["kind"] = rc.kind;
  if (rc.command == "eval" || rc.command == "scenario-eval") {
    j["mode"] = rc.mode;
    j["top_k"] = rc.top_k;
    j["failure_threshold"] = rc.failure_threshold;
    j["token_counter"] = rc.token_counter;
    j["compressor_max_tokens"] = rc.compressor_max_tokens;
    j["llm_max_tokens"] = rc.llm_max_tokens;
  }
  return j;
}

void echo_config(const RunConfig& rc, const acorn::PromptTemplates* templates) {
  if (rc.out.empty()) return;
  fs::create_directories(rc.out);
  acorn::write_json_file(rc.out / "run_config.json", run_config_json(rc, templates));
}

int finish(std::size_t failed) {
  if (failed > 0) {
    spdlog::warn("{} record(s) failed", failed);
    return kExitPartial;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Subcommands

int run_classify(const RunConfig& rc) {
  echo_config(rc, nullptr);
  const auto stats = acorn::classify_file(rc.input, rc.out / "classified.jsonl", build_options(rc));
  acorn::write_json_file(rc.out / "stats.json", acorn::to_json(stats));
  spdlog::info("classified {} of {} queries", stats.written, stats.total);
  return finish(stats.failed);
}

int run_augment(const RunConfig& rc) {
  echo_config(rc, nullptr);
  acorn::FillMaskClient filler(client_config(rc, rc.fill, "fill"), rc.mask_token, make_cache(rc));
  const auto stats = acorn::augment_file(rc.input, rc.out / "augmented.jsonl", build_options(rc), filler);
  acorn::write_json_file(rc.out / "stats.json", acorn::to_json(stats));
  spdlog::info("augmented {} of {} queries", stats.written, stats.total);
  return finish(stats.failed);
}

int run_label(const RunConfig& rc) {
  const auto templates = load_templates(rc);
  echo_config(rc, &templates);
  acorn::ChatClient teacher(client_config(rc, rc.teacher, "teacher"), make_cache(rc));
  const auto stats =
      acorn::label_file(rc.input, rc.out / "labeled.jsonl", build_options(rc), teacher, templates);
  acorn::write_json_file(rc.out / "stats.json", acorn::to_json(stats));
  return finish(stats.failed);
}

int run_build_train(const RunConfig& rc) {
  const auto templates = load_templates(rc);
  echo_config(rc, &templates);
  const auto cache = make_cache(rc);
  acorn::FillMaskClient filler(client_config(rc, rc.fill, "fill"), rc.mask_token, cache);
  acorn::ChatClient teacher(client_config(rc, rc.teacher, "teacher"), cache);
  const auto stats = acorn::build_training_set(rc.input, build_options(rc), filler, teacher, templates,
                                               rc.out / "train.jsonl");
  acorn::write_json_file(rc.out / "stats.json", acorn::to_json(stats));
  spdlog::info("training set: {} queries, {} with evidence, {} augmented, {} sentinel, {} failed", stats.total,
               stats.with_evidence, stats.augmented, stats.sentinel_labeled, stats.failed);
  return finish(stats.failed);
}

int run_build_bench(const RunConfig& rc) {
  echo_config(rc, nullptr);
  acorn::FillMaskClient filler(client_config(rc, rc.fill, "fill"), rc.mask_token, make_cache(rc));
  acorn::BenchmarkStats stats;
  if (rc.kind == "subset") {
    stats = acorn::build_subset_benchmark(rc.input, build_options(rc), filler, rc.out / "subset.jsonl");
  } else {
    stats = acorn::build_scenario_benchmark(rc.input, build_options(rc), filler,
                                            acorn::ScenarioOutputs::in(rc.out));
  }
  acorn::write_json_file(rc.out / "stats.json", acorn::to_json(stats));
  std::cout << rc.kind << ": kept " << stats.kept << " of " << stats.total - stats.failed << " ("
            << acorn::detail::fmt(stats.kept_percent(), "%.2f") << "%)\n";
  return finish(stats.failed);
}

acorn::EvalOptions eval_options(const RunConfig& rc) {
  acorn::EvalOptions o;
  o.mode = acorn::eval_mode_from_string(rc.mode);
  o.top_k = rc.top_k;
  o.failure_threshold = rc.failure_threshold;
  o.concurrency = rc.concurrency;
  o.token_counter = rc.token_counter == "service" ? acorn::TokenCounter::Service : acorn::TokenCounter::Whitespace;
  o.compressor_max_tokens = rc.compressor_max_tokens;
  o.llm_max_tokens = rc.llm_max_tokens;
  return o;
}

void write_eval_records(const fs::path& path, const std::vector<acorn::EvalRecord>& records) {
  acorn::JsonlWriter out(path);
  for (const auto& r : records) out.write(acorn::to_json(r));
  out.close();
}

int run_eval(const RunConfig& rc) {
  const auto templates = load_templates(rc);
  echo_config(rc, &templates);
  const auto opts = eval_options(rc);
  const auto cache = make_cache(rc);
  std::unique_ptr<acorn::ChatClient> compressor;
  if (opts.mode == acorn::EvalMode::Compressed) {
    compressor = std::make_unique<acorn::ChatClient>(client_config(rc, rc.compressor, "compressor"), cache);
  }
  acorn::ChatClient llm(client_config(rc, rc.llm, "llm"), cache);
  const auto dataset = acorn::load_records(rc.input);
  const auto run = acorn::run_pipeline(dataset, compressor.get(), llm, templates, opts);
  write_eval_records(rc.out / "records.jsonl", run.records);
  acorn::write_json_file(rc.out / "report.json", acorn::to_json(run.report));
  std::cout << acorn::format_report(run.report);
  return finish(run.report.failures);
}

int run_scenario_eval(const RunConfig& rc) {
  const auto templates = load_templates(rc);
  echo_config(rc, &templates);
  const auto opts = eval_options(rc);
  const auto cache = make_cache(rc);
  std::unique_ptr<acorn::ChatClient> compressor;
  if (opts.mode == acorn::EvalMode::Compressed) {
    compressor = std::make_unique<acorn::ChatClient>(client_config(rc, rc.compressor, "compressor"), cache);
  }
  acorn::ChatClient llm(client_config(rc, rc.llm, "llm"), cache);
  const auto scenario = acorn::load_records(rc.input);
  const auto result = acorn::scenario_eval(scenario, compressor.get(), llm, templates, opts);
  ojson report;
  std::size_t failures = 0;
  const char* names[3] = {"a", "b", "c"};
  for (std::size_t i = 0; i < 3; ++i) {
    write_eval_records(rc.out / ("records_" + std::string(names[i]) + ".jsonl"), result.variants[i].records);
    report[names[i]] = acorn::to_json(result.variants[i].report);
    failures += result.variants[i].report.failures;
  }
  acorn::write_json_file(rc.out / "report.json", report);
  std::cout << acorn::format_scenario_table(result);
  return finish(failures);
}

int run_report(const RunConfig& rc) {
  echo_config(rc, nullptr);
  acorn::JsonlReader reader(rc.input);
  std::vector<acorn::EvalRecord> records;
  std::string line;
  while (reader.next(line)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw acorn::ParseError(reader.line_number(), e.what());
    }
    records.push_back(acorn::eval_record_from_json(j));
  }
  const auto report = acorn::aggregate(records);
  if (!rc.out.empty()) acorn::write_json_file(rc.out / "report.json", acorn::to_json(report));
  std::cout << acorn::format_report(report);
  return kExitOk;
}

int run_export(const RunConfig& rc) {
  const auto templates = load_templates(rc);
  echo_config(rc, &templates);
  const auto n = acorn::export_trainer_file(rc.input, rc.out / "trainer.jsonl", templates);
  spdlog::info("exported {} examples", n);
  return kExitOk;
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::stderr_color_mt("acorn");
  logger->set_pattern("%^[%l]%$ %v");
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") throw acorn::BadInput("unknown log level \"" + level + "\"");
  spdlog::set_level(lvl);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust compression dataset builder and evaluation harness"};
  app.require_subcommand(1);
  RunConfig rc;
  app.set_config("--config", "", "INI/TOML file of option = value lines")->envname("ACORN_CONFIG");
  app.config_formatter(std::make_shared<SubcommandConfig>(app));
  app.allow_config_extras(CLI::config_extras_mode::ignore);

  std::map<std::string, int (*)(const RunConfig&)> handlers{
      {"classify", run_classify},   {"augment", run_augment},
      {"label", run_label},         {"build-train", run_build_train},
      {"build-bench", run_build_bench}, {"eval", run_eval},
      {"scenario-eval", run_scenario_eval}, {"report", run_report},
      {"export", run_export}};

  auto* classify = app.add_subcommand("classify", "label each retrieved document evidential or irrelevant");
  add_common(classify, rc);

  auto* augment = app.add_subcommand("augment", "classify, then corrupt at most one evidential document per query");
  add_common(augment, rc);
  add_fill(augment, rc);
  add_client_tuning(augment, rc);

  auto* label = app.add_subcommand("label", "generate summary labels for an augmented file");
  add_common(label, rc);
  add_service(label, "teacher", rc.teacher);
  add_client_tuning(label, rc);
  label->add_flag("--exclude-sentinel", rc.exclude_sentinel, "drop records labeled with the sentinel")
      ->envname("ACORN_EXCLUDE_SENTINEL");
  opt(label, "label-max-tokens", rc.label_max_tokens, "teacher max_tokens");

  auto* train = app.add_subcommand("build-train", "classify, augment and label into a training set");
  add_common(train, rc);
  add_fill(train, rc);
  add_service(train, "teacher", rc.teacher);
  add_client_tuning(train, rc);
  train->add_flag("--exclude-sentinel", rc.exclude_sentinel, "drop records labeled with the sentinel")
      ->envname("ACORN_EXCLUDE_SENTINEL");
  opt(train, "label-max-tokens", rc.label_max_tokens, "teacher max_tokens");

  auto* bench = app.add_subcommand("build-bench", "build the subset or scenario test benchmark");
  add_common(bench, rc);
  add_fill(bench, rc);
  add_client_tuning(bench, rc);
  opt(bench, "kind", rc.kind, "subset|scenario")->check(CLI::IsMember({"subset", "scenario"}));

  for (const char* name : {"eval", "scenario-eval"}) {
    auto* sub = app.add_subcommand(name, std::string(name) == "eval"
                                             ? "evaluate compressor + answer LLM on a dataset"
                                             : "evaluate the three scenario variants side by side");
    add_common(sub, rc);
    add_service(sub, "compressor", rc.compressor);
    add_service(sub, "llm", rc.llm);
    add_client_tuning(sub, rc);
    opt(sub, "mode", rc.mode, "no-retrieval|top-k|compressed")
        ->check(CLI::IsMember({"no-retrieval", "top-k", "compressed"}));
    opt(sub, "top-k", rc.top_k, "documents passed in top-k mode")->check(CLI::PositiveNumber);
    opt(sub, "failure-threshold", rc.failure_threshold, "abort when this fraction of records fails")
        ->check(CLI::Range(0.0, 1.0));
    opt(sub, "token-counter", rc.token_counter, "whitespace|service")
        ->check(CLI::IsMember({"whitespace", "service"}));
    opt(sub, "compressor-max-tokens", rc.compressor_max_tokens, "compressor max_tokens");
    opt(sub, "llm-max-tokens", rc.llm_max_tokens, "answer LLM max_tokens");
  }

  auto* report = app.add_subcommand("report", "re-aggregate a per-record eval JSONL");
  add_common(report, rc, false);

  auto* exp = app.add_subcommand("export", "write {input, target} pairs for an external trainer");
  add_common(exp, rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (auto* sub : app.get_subcommands()) failed = sub;
    std::cerr << failed->help();
    return kExitFatal;
  }

  CLI::App* chosen = app.get_subcommands().front();
  rc.command = chosen->get_name();
#ifdef ACORN_DEFAULT_TEMPLATES
  if (rc.templates.empty() && fs::exists(ACORN_DEFAULT_TEMPLATES)) rc.templates = ACORN_DEFAULT_TEMPLATES;
#endif
  try {
    setup_logging(rc.log_level);
    return handlers.at(rc.command)(rc);
  } catch (const acorn::Error& e) {
    spdlog::error("{}", e.what());
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
  }
  return kExitFatal;
}

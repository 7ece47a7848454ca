// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset forging, evaluation, the streaming gateway
// and an interactive console chat.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "infill/config.hpp"
#include "infill/dataset.hpp"
#include "infill/error.hpp"
#include "infill/eval.hpp"
#include "infill/gateway.hpp"
#include "infill/gateway_http.hpp"

using namespace infill;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.file, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.sets, "Override as dotted.key=value (repeatable)");
}

Json resolve_config(const ConfigArgs& args) {
  auto config = args.file.empty() ? default_config() : load_config(args.file);
  apply_env_overrides(config);
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--set expects key=value, got '" + s + "'");
    apply_override(config, s.substr(0, eq), s.substr(eq + 1));
  }
  validate_config(config);
  return config;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

/// Output file, or stdout for "-" / empty.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw Error(ErrorCode::ParseError, "cannot write " + path);
    }
  }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

// --- forge -------------------------------------------------------------------

struct GenerateArgs {
  std::string domain = "all";
  std::size_t count = 10;
  std::string mode = "template";
  std::uint64_t seed = 0;
  std::string out;
  ConfigArgs config;
};

int forge_generate(const GenerateArgs& a) {
  std::vector<std::string> domains;
  if (a.domain == "all") {
    domains.assign(std::begin(kDomains), std::end(kDomains));
  } else {
    domains.push_back(a.domain);
  }
  const auto& bank = SeedBank::standard();
  std::optional<Runtime> runtime;
  if (a.mode == "llm") runtime = build_runtime(resolve_config(a.config));

  Sink sink(a.out);
  CorpusStats stats;
  std::size_t failures = 0;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const auto& domain = domains[d];
    const auto& seeds = bank.seeds(domain);
    std::mt19937_64 rng(a.seed * 1'000'003u + d);
    for (std::size_t i = 0; i < a.count; ++i) {
      const auto& seed = seeds[rng() % seeds.size()].text;
      const auto doc_seed = rng();
      try {
        auto doc = a.mode == "llm" ? llm_generate(domain, seed, *runtime->backend, *runtime->clock)
                                   : template_generate(domain, seed, doc_seed);
        if (a.mode == "llm") doc.id = domain + "-llm-" + std::to_string(doc_seed);
        sink.out() << to_json(doc).dump() << '\n';
        ++stats.conversations;
        stats.turns += doc.turns.size();
      } catch (const Error& e) {
        ++failures;
        std::cerr << "skipped " << domain << " / " << seed << ": " << e.what() << '\n';
      }
    }
  }
  auto summary = stats.to_json();
  summary["failures"] = failures;
  std::cerr << summary.dump() << '\n';
  return stats.conversations == 0 ? 1 : 0;
}

int forge_validate(const std::string& in) {
  std::size_t docs = 0;
  std::size_t bad = 0;
  for (const auto& line : read_lines(in)) {
    auto doc = document_from_json(line);
    ++docs;
    auto violations = validate_document(doc);
    if (has_errors(violations)) ++bad;
    for (const auto& v : violations) {
      std::cout << doc.id << (v.turn ? " turn " + std::to_string(*v.turn) : std::string()) << ": "
                << (v.is_warning() ? "warning " : "error ") << to_string(v.kind) << " (" << v.detail << ")\n";
    }
  }
  std::cout << docs << " documents, " << bad << " invalid\n";
  return bad == 0 ? 0 : 1;
}

int forge_split(const std::string& in, const std::string& out) {
  Sink sink(out);
  CorpusStats stats;
  for (const auto& line : read_lines(in)) {
    auto doc = document_from_json(line);
    auto examples = split_turns(doc);
    ++stats.conversations;
    stats.turns += doc.turns.size();
    stats.examples += examples.size();
    for (const auto& e : examples) sink.out() << to_json(e).dump() << '\n';
  }
  std::cerr << stats.to_json().dump() << '\n';
  return 0;
}

struct FilterArgs {
  std::string in;
  std::string out;
  std::string rejected;
  std::string classifier = "lexical";
  std::string classifier_url;
};

int forge_filter(const FilterArgs& a) {
  std::unique_ptr<Classifier> gate;
  if (a.classifier == "http") {
    HttpClassifierConfig c;
    c.url = a.classifier_url;
    gate = std::make_unique<HttpClassifier>(c);
  } else {
    gate = std::make_unique<LexicalOracle>();
  }
  std::vector<TrainingExample> examples;
  for (const auto& line : read_lines(a.in)) examples.push_back(example_from_json(line));
  auto result = filter_entailed(examples, *gate);
  Sink sink(a.out);
  for (const auto& e : result.kept) sink.out() << to_json(e).dump() << '\n';
  if (!a.rejected.empty()) {
    Sink rej(a.rejected);
    for (const auto& r : result.rejected) {
      auto j = to_json(r.example);
      j["reason"] = r.reason;
      rej.out() << j.dump() << '\n';
    }
  }
  CorpusStats stats;
  stats.examples = result.kept.size();
  stats.rejected = result.rejected.size();
  std::cerr << stats.to_json().dump() << '\n';
  return 0;
}

int forge_seeds(const std::string& domain, std::size_t count, bool prompt) {
  if (prompt) {
    std::cout << seed_prompt(domain, count) << '\n';
    return 0;
  }
  const auto& seeds = SeedBank::standard().seeds(domain);
  for (std::size_t i = 0; i < std::min(count, seeds.size()); ++i) std::cout << seeds[i].text << '\n';
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  ConfigArgs config;
  std::string items;
  std::string out;
  std::optional<std::size_t> sample;
  std::optional<std::uint64_t> sampling_seed;
};

int eval_run(const EvalArgs& a) {
  auto config = resolve_config(a.config);
  auto items = load_items(a.items);
  auto gold = gold_table(items);
  auto runtime = build_runtime(config, &gold);
  EvalOptions options;
  options.timeout = from_seconds(config["eval"]["timeout_seconds"].get<double>());
  const auto sample = a.sample.value_or(config["eval"]["sample"].get<std::size_t>());
  if (sample > 0) options.sample = sample;
  options.sampling_seed = a.sampling_seed.value_or(config["eval"]["sampling_seed"].get<std::uint64_t>());
  auto report = run_eval(runtime.system(), items, options);
  if (!a.out.empty()) {
    Sink sink(a.out);
    sink.out() << to_json(report).dump(2) << '\n';
  }
  std::cout << format_table(report);
  return 0;
}

EvalReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return report_from_json(Json::parse(ss.str()));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, path + ": " + ex.what());
  }
}

int eval_compare(const std::string& a, const std::string& b) {
  std::cout << format_deltas(compare_report(read_report(a), read_report(b)));
  return 0;
}

// --- gateway and chat ----------------------------------------------------------

GatewayServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

struct GatewayArgs {
  ConfigArgs config;
  std::string listen = "127.0.0.1:8080";
  std::string static_dir;
};

int run_gateway(const GatewayArgs& a) {
  auto config = resolve_config(a.config);
  const auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--listen expects host:port");
  const auto host = a.listen.substr(0, colon);
  const int port = std::stoi(a.listen.substr(colon + 1));

  HttpGatewayOptions http;
  const auto token_env = config["gateway"]["token_env"].get<std::string>();
  if (!token_env.empty()) {
    const char* token = std::getenv(token_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw Error(ErrorCode::InvalidConfig, "gateway.token_env names an unset variable: " + token_env);
    }
    http.token = token;
  }
  http.static_dir = a.static_dir.empty() ? config["gateway"]["static_dir"].get<std::string>() : a.static_dir;

  SessionManager sessions({config, {}});
  GatewayServer server(sessions, http);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << host << ":" << bound << " (protocol v" << kProtocolVersion << ")\n";
  server.serve();
  g_server = nullptr;
  return 0;
}

class ConsolePrinter final : public TurnObserver {
 public:
  explicit ConsolePrinter(bool verbose) : verbose_(verbose) {}
  void on_event(const KnowledgeEvent& e) override {
    if (!verbose_) return;
    std::printf("  [%7.3fs] %s%s\n", to_seconds(e.timestamp), e.kind == EventKind::Chunk ? "chunk: " : "silence",
                e.text.c_str());
  }
  void on_phrase(const ConversationalPhrase& p, const Generation&) override {
    std::printf("%s[%7.3fs] %s\n", verbose_ ? "  " : "", to_seconds(p.start_timestamp), p.text.c_str());
    std::fflush(stdout);
  }

 private:
  bool verbose_;
};

int run_chat(const ConfigArgs& cfg, bool verbose) {
  auto runtime = build_runtime(resolve_config(cfg));
  DialogueSession session(*runtime.backend, *runtime.infill, *runtime.clock, runtime.policy, "console");
  ConsolePrinter printer(verbose);
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (trim(line).empty()) continue;
    try {
      auto outcome = session.run(line, &printer);
      if (outcome.backend_error) std::cerr << "backend: " << outcome.backend_error->what() << '\n';
    } catch (const Error& e) {
      std::cerr << e.what() << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational infill runtime: dataset forge, evaluation and streaming gateway"};
  app.require_subcommand(1);
  int rc = 0;

  auto* forge = app.add_subcommand("forge", "Build and filter infill training data");
  forge->require_subcommand(1);

  GenerateArgs gen;
  auto* generate = forge->add_subcommand("generate", "Generate conversation documents (JSONL)");
  generate->add_option("--domain", gen.domain, "Domain name or 'all'");
  generate->add_option("--count", gen.count, "Documents per domain");
  generate->add_option("--mode", gen.mode, "template or llm")->check(CLI::IsMember({"template", "llm"}));
  generate->add_option("--seed", gen.seed, "Sampling seed");
  generate->add_option("--out", gen.out, "Output file (default stdout)");
  add_config_args(generate, gen.config);
  generate->callback([&] { rc = forge_generate(gen); });

  std::string in_path, out_path;
  auto* validate = forge->add_subcommand("validate", "Report schema violations");
  validate->add_option("--in", in_path, "Documents (JSONL)")->required()->check(CLI::ExistingFile);
  validate->callback([&] { rc = forge_validate(in_path); });

  auto* split = forge->add_subcommand("split", "Split documents into per-phrase training examples");
  split->add_option("--in", in_path, "Documents (JSONL)")->required()->check(CLI::ExistingFile);
  split->add_option("--out", out_path, "Examples (JSONL, default stdout)");
  split->callback([&] { rc = forge_split(in_path, out_path); });

  FilterArgs filt;
  auto* filter = forge->add_subcommand("filter", "Drop examples whose knowledge does not entail the target");
  filter->add_option("--in", filt.in, "Examples (JSONL)")->required()->check(CLI::ExistingFile);
  filter->add_option("--out", filt.out, "Kept examples (JSONL, default stdout)");
  filter->add_option("--rejected", filt.rejected, "Rejected examples with reasons (JSONL)");
  filter->add_option("--classifier", filt.classifier, "lexical or http")->check(CLI::IsMember({"lexical", "http"}));
  filter->add_option("--classifier-url", filt.classifier_url, "Endpoint for the http classifier");
  filter->callback([&] { rc = forge_filter(filt); });

  std::string seed_domain;
  std::size_t seed_count = 20;
  bool seed_as_prompt = false;
  auto* seeds = forge->add_subcommand("seeds", "List built-in seeds or print a seed-generation prompt");
  seeds->add_option("--domain", seed_domain, "Domain name")->required();
  seeds->add_option("--count", seed_count, "How many");
  seeds->add_flag("--prompt", seed_as_prompt, "Print the model prompt instead");
  seeds->callback([&] { rc = forge_seeds(seed_domain, seed_count, seed_as_prompt); });

  auto* eval = app.add_subcommand("eval", "Measure TTFT, accuracy and entailment");
  eval->require_subcommand(1);
  EvalArgs ev;
  auto* run = eval->add_subcommand("run", "Evaluate a configured system on QA items");
  add_config_args(run, ev.config);
  run->add_option("--items", ev.items, "QA items (JSONL)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", ev.out, "Report file (JSON)");
  run->add_option("--sample", ev.sample, "Evaluate a random subset of this size");
  run->add_option("--sampling-seed", ev.sampling_seed, "Seed for the subset");
  run->callback([&] { rc = eval_run(ev); });

  std::string report_a, report_b;
  auto* compare = eval->add_subcommand("compare", "Per-metric deltas b - a");
  compare->add_option("a", report_a, "Baseline report")->required()->check(CLI::ExistingFile);
  compare->add_option("b", report_b, "Candidate report")->required()->check(CLI::ExistingFile);
  compare->callback([&] { rc = eval_compare(report_a, report_b); });

  GatewayArgs gw;
  auto* gateway = app.add_subcommand("gateway", "Serve sessions over HTTP with NDJSON event streams");
  add_config_args(gateway, gw.config);
  gateway->add_option("--listen", gw.listen, "host:port");
  gateway->add_option("--static", gw.static_dir, "Directory served at /");
  gateway->callback([&] { rc = run_gateway(gw); });

  ConfigArgs chat_cfg;
  bool verbose = false;
  auto* chat = app.add_subcommand("chat", "Converse on the console");
  add_config_args(chat, chat_cfg);
  chat->add_flag("-v,--verbose", verbose, "Show knowledge chunks and silences");
  chat->callback([&] { rc = run_chat(chat_cfg, verbose); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}

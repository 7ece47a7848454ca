// SPDX-License-Identifier: Apache-2.0

#include "infill/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace infill {

Json default_config() {
  return Json::parse(R"({
    "label": "runtime",
    "clock": "wall",
    "silence": {"period_seconds": 1.0, "max_consecutive": 3},
    "backend": {
      "kind": "scripted",
      "scripted": {
        "schedule": {
          "chunks": [
            {"delay": 2.5, "text": "Jack Nicklaus has won the most majors."},
            {"delay": 0.7, "text": "He won eighteen major championships between 1962 and 1986."}
          ],
          "close_delay": 0.2
        },
        "schedule_file": "",
        "respond_with_gold": false,
        "gold_delay_seconds": 0.5
      },
      "http": {"url": "", "model": "", "api_key_env": "", "system_prompt": "", "timeout_seconds": 60.0}
    },
    "infill": {
      "kind": "scripted",
      "scripted": {"latency_seconds": 0.15, "mode": "echo", "canned_text": "I don't know.",
                   "silence_phrase": "One moment."},
      "http": {"url": "", "model": "", "max_tokens": 48, "timeout_seconds": 30.0}
    },
    "classifier": {
      "kind": "none",
      "http": {"url": "", "max_in_flight": 4, "timeout_seconds": 30.0}
    },
    "eval": {"mode": "runtime", "timeout_seconds": 60.0, "sample": 0, "sampling_seed": 0},
    "gateway": {"token_env": "", "static_dir": "", "transcript_dir": "", "subscriber_buffer": 1024}
  })");
}

namespace {

/// Float slots take any number; integer slots take integers only.
bool same_kind(const Json& slot, const Json& value) {
  if (slot.is_number_float()) return value.is_number();
  if (slot.is_number_integer()) return value.is_number_integer();
  return slot.type() == value.type();
}

void merge_at(Json& target, const Json& patch, const std::string& path) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const auto key = path.empty() ? it.key() : path + "." + it.key();
    if (!target.contains(it.key())) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
    auto& slot = target[it.key()];
    if (key == "backend.scripted.schedule") {
      if (!it.value().is_object()) throw Error(ErrorCode::InvalidConfig, "schedule must be an object");
      slot = it.value();
      continue;
    }
    if (slot.is_object()) {
      if (!it.value().is_object()) throw Error(ErrorCode::InvalidConfig, "'" + key + "' must be an object");
      merge_at(slot, it.value(), key);
      continue;
    }
    if (!same_kind(slot, it.value())) {
      throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects " + std::string(slot.type_name()));
    }
    slot = slot.is_number_float() ? Json(it.value().get<double>()) : it.value();
  }
}

const Json& at_path(const Json& j, std::initializer_list<const char*> path) {
  const Json* cur = &j;
  for (const char* p : path) cur = &cur->at(p);
  return *cur;
}

template <typename T>
T get(const Json& j, std::initializer_list<const char*> path) {
  return at_path(j, path).get<T>();
}

std::string read_file(const std::string& path, ErrorCode code) {
  std::ifstream in(path);
  if (!in) throw Error(code, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_one_of(const std::string& key, const std::string& value, std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (value == o) return;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown " + key + " '" + value + "'");
}

}  // namespace

void merge_config(Json& config, const Json& patch) {
  if (!patch.is_object()) throw Error(ErrorCode::InvalidConfig, "configuration must be a JSON object");
  merge_at(config, patch, "");
}

Json load_config(const std::string& path) {
  Json patch;
  try {
    patch = Json::parse(read_file(path, ErrorCode::ParseError));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, path + ": " + ex.what());
  }
  auto config = default_config();
  merge_config(config, patch);
  return config;
}

void apply_override(Json& config, std::string_view dotted_key, std::string_view value) {
  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = std::string(value);
  }
  Json patch = parsed;
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    auto dot = dotted_key.find('.', pos);
    parts.emplace_back(dotted_key.substr(pos, dot == std::string_view::npos ? dotted_key.npos : dot - pos));
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  const Json* slot = &config;
  for (const auto& p : parts) {
    if (p.empty() || !slot->is_object() || !slot->contains(p)) {
      throw Error(ErrorCode::InvalidConfig, "unknown key '" + std::string(dotted_key) + "'");
    }
    slot = &slot->at(p);
  }
  // String slots keep the raw text even when it happens to parse as JSON.
  if (slot->is_string() && !patch.is_string()) patch = std::string(value);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  merge_config(config, patch);
}

void apply_env_overrides(Json& config) {
  constexpr std::string_view prefix = "INFILL_CFG_";
  for (char** env = environ; env != nullptr && *env != nullptr; ++env) {
    std::string_view entry(*env);
    if (entry.substr(0, prefix.size()) != prefix) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key;
    const auto name = entry.substr(prefix.size(), eq - prefix.size());
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (name[i] == '_' && i + 1 < name.size() && name[i + 1] == '_') {
        key.push_back('.');
        ++i;
      } else {
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(name[i]))));
      }
    }
    apply_override(config, key, entry.substr(eq + 1));
  }
}

void validate_config(const Json& config) {
  try {
    require_one_of("clock", get<std::string>(config, {"clock"}), {"wall", "virtual"});
    SilencePolicy policy{get<double>(config, {"silence", "period_seconds"}),
                         get<int>(config, {"silence", "max_consecutive"})};
    policy.validate();
    const auto backend = get<std::string>(config, {"backend", "kind"});
    require_one_of("backend.kind", backend, {"scripted", "http"});
    if (backend == "http" && get<std::string>(config, {"backend", "http", "url"}).empty()) {
      throw Error(ErrorCode::InvalidConfig, "backend.http.url is required");
    }
    if (backend == "scripted") {
      if (get<double>(config, {"backend", "scripted", "gold_delay_seconds"}) < 0) {
        throw Error(ErrorCode::InvalidConfig, "backend.scripted.gold_delay_seconds must be non-negative");
      }
      if (get<std::string>(config, {"backend", "scripted", "schedule_file"}).empty()) {
        schedule_from_json(at_path(config, {"backend", "scripted", "schedule"}).dump());
      }
    }
    const auto infill = get<std::string>(config, {"infill", "kind"});
    require_one_of("infill.kind", infill, {"scripted", "http"});
    if (infill == "scripted") {
      require_one_of("infill.scripted.mode", get<std::string>(config, {"infill", "scripted", "mode"}),
                     {"echo", "canned"});
      if (get<double>(config, {"infill", "scripted", "latency_seconds"}) < 0) {
        throw Error(ErrorCode::InvalidConfig, "infill.scripted.latency_seconds must be non-negative");
      }
    }
    if (infill == "http" && get<std::string>(config, {"infill", "http", "url"}).empty()) {
      throw Error(ErrorCode::InvalidConfig, "infill.http.url is required");
    }
    const auto classifier = get<std::string>(config, {"classifier", "kind"});
    require_one_of("classifier.kind", classifier, {"none", "lexical", "http"});
    if (classifier == "http" && get<std::string>(config, {"classifier", "http", "url"}).empty()) {
      throw Error(ErrorCode::InvalidConfig, "classifier.http.url is required");
    }
    const auto max_in_flight = get<int>(config, {"classifier", "http", "max_in_flight"});
    if (max_in_flight < 1 || max_in_flight > 1024) {
      throw Error(ErrorCode::InvalidConfig, "classifier.http.max_in_flight must be within 1..1024");
    }
    system_mode_from_string(get<std::string>(config, {"eval", "mode"}));
    if (get<double>(config, {"eval", "timeout_seconds"}) <= 0) {
      throw Error(ErrorCode::InvalidConfig, "eval.timeout_seconds must be positive");
    }
    if (get<long long>(config, {"eval", "sample"}) < 0) {
      throw Error(ErrorCode::InvalidConfig, "eval.sample must be non-negative");
    }
    if (get<int>(config, {"gateway", "subscriber_buffer"}) < 1) {
      throw Error(ErrorCode::InvalidConfig, "gateway.subscriber_buffer must be positive");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidConfig, ex.what());
  }
}

GoldTable gold_table(const std::vector<QAItem>& items) {
  GoldTable table;
  for (const auto& item : items) table.emplace(item.question, item.gold_answers.front());
  return table;
}

SystemUnderTest Runtime::system() const {
  return SystemUnderTest{mode, backend.get(), infill.get(), clock.get(), policy, classifier.get(), label};
}

Runtime build_runtime(const Json& config, const GoldTable* gold) {
  validate_config(config);
  Runtime rt;
  rt.label = get<std::string>(config, {"label"});
  rt.mode = system_mode_from_string(get<std::string>(config, {"eval", "mode"}));
  rt.policy = SilencePolicy{get<double>(config, {"silence", "period_seconds"}),
                            get<int>(config, {"silence", "max_consecutive"})};
  if (get<std::string>(config, {"clock"}) == "virtual") {
    rt.clock = std::make_unique<VirtualClock>();
  } else {
    rt.clock = std::make_unique<SteadyClock>();
  }

  const auto& backend = at_path(config, {"backend"});
  if (backend.at("kind") == "http") {
    const auto& h = backend.at("http");
    HttpBackendConfig c;
    c.url = h.at("url");
    c.model = h.at("model");
    c.api_key_env = h.at("api_key_env");
    if (!h.at("system_prompt").get<std::string>().empty()) c.system_prompt = h.at("system_prompt");
    c.timeout_seconds = h.at("timeout_seconds");
    rt.backend = std::make_unique<HttpBackend>(std::move(c));
  } else {
    const auto& s = backend.at("scripted");
    if (s.at("respond_with_gold").get<bool>()) {
      if (gold == nullptr) throw Error(ErrorCode::InvalidConfig, "respond_with_gold needs QA items");
      const double delay = s.at("gold_delay_seconds");
      rt.backend = std::make_unique<ScriptedBackend>(
          [table = *gold, delay](const DialogueHistory& history) {
            ScriptedSchedule out;
            const auto it = table.find(history.messages().back().text);
            out.chunks.push_back({delay, it == table.end() ? "I do not have that answer."
                                                           : "The answer is " + it->second + "."});
            out.close_delay_seconds = 0.1;
            return out;
          },
          "scripted-gold");
    } else {
      const auto file = s.at("schedule_file").get<std::string>();
      auto schedule = file.empty() ? schedule_from_json(s.at("schedule").dump())
                                   : schedule_from_json(read_file(file, ErrorCode::InvalidConfig));
      rt.backend = std::make_unique<ScriptedBackend>(std::move(schedule));
    }
  }

  const auto& infill = at_path(config, {"infill"});
  if (infill.at("kind") == "http") {
    const auto& h = infill.at("http");
    HttpInfillConfig c;
    c.url = h.at("url");
    c.model = h.at("model");
    c.max_tokens = h.at("max_tokens");
    c.timeout_seconds = h.at("timeout_seconds");
    rt.infill = std::make_unique<HttpInfill>(std::move(c));
  } else {
    const auto& s = infill.at("scripted");
    auto fn = s.at("mode") == "canned" ? ScriptedInfill::canned(s.at("canned_text"))
                                       : ScriptedInfill::echo(s.at("silence_phrase"));
    rt.infill = std::make_unique<ScriptedInfill>(s.at("latency_seconds").get<double>(), std::move(fn));
  }

  const auto& classifier = at_path(config, {"classifier"});
  if (classifier.at("kind") == "lexical") {
    rt.classifier = std::make_unique<LexicalOracle>();
  } else if (classifier.at("kind") == "http") {
    const auto& h = classifier.at("http");
    HttpClassifierConfig c;
    c.url = h.at("url");
    c.max_in_flight = h.at("max_in_flight");
    c.timeout_seconds = h.at("timeout_seconds");
    rt.classifier = std::make_unique<HttpClassifier>(std::move(c));
  }
  return rt;
}

}  // namespace infill

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "infill/adapters.hpp"
#include "infill/clock.hpp"
#include "infill/entailment.hpp"
#include "infill/eval.hpp"
#include "infill/json_io.hpp"
#include "infill/turn_engine.hpp"

namespace infill {

/// The full configuration tree with every key at its default. Overrides and
/// files may only set keys that exist here.
Json default_config();

/// Reads a JSON file and merges it over the defaults. Throws ParseError for
/// unreadable or malformed files and InvalidConfig for unknown keys.
Json load_config(const std::string& path);

/// Merges `patch` into `config` key by key. Throws InvalidConfig for keys
/// missing from the defaults or values of a different JSON type. Schedules
/// are replaced wholesale.
void merge_config(Json& config, const Json& patch);

/// Sets one dotted key, e.g. "silence.period_seconds". The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(Json& config, std::string_view dotted_key, std::string_view value);

/// Applies every environment variable named INFILL_CFG_<PATH>, where the path
/// uses "__" between levels: INFILL_CFG_SILENCE__PERIOD_SECONDS=0.5.
void apply_env_overrides(Json& config);

/// Checks kinds, ranges and required fields. Throws InvalidConfig.
void validate_config(const Json& config);

/// Adapter instances built from a configuration.
struct Runtime {
  std::unique_ptr<Clock> clock;
  std::unique_ptr<Backend> backend;
  std::unique_ptr<Infill> infill;
  std::unique_ptr<Classifier> classifier;  // null when classifier.kind is "none"
  SilencePolicy policy;
  SystemMode mode = SystemMode::Runtime;
  std::string label;

  SystemUnderTest system() const;
};

/// Question -> answer table used by a scripted backend configured with
/// respond_with_gold.
using GoldTable = std::map<std::string, std::string>;
GoldTable gold_table(const std::vector<QAItem>& items);

/// Throws InvalidConfig, including when respond_with_gold is set without a
/// gold table.
Runtime build_runtime(const Json& config, const GoldTable* gold = nullptr);

}  // namespace infill

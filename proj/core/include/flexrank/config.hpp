// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flexrank/trainer.hpp"

namespace flexrank {

inline constexpr int kConfigSchemaVersion = 1;

struct OutputPaths {
    std::string dir = "out";
    std::string trace = "trace.jsonl";
    std::string metrics = "metrics.csv";
    std::string checkpoint = "checkpoint.txt";
    std::string effective_config = "effective_config.json";

    friend bool operator==(const OutputPaths&, const OutputPaths&) = default;
};

/// A training run as described by a JSON document.
///
/// Required: schema_version, name, model.input_dim, model.layers (with
/// out for linear layers), task.kind, and every schedule field. Everything
/// else has a default, and serialize_config always writes every field.
struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::string name;
    TrainConfig train;
    OutputPaths output;
    /// Dotted-path overrides already applied, in order ("schedule.b0=2").
    std::vector<std::string> overrides;
};

/// Strict parse: unknown fields, wrong types, and missing required fields
/// throw ConfigError naming the field path. `overrides` are "path=value"
/// strings applied to the document before decoding; a value that is not
/// valid JSON is taken as a string.
ExperimentConfig parse_config(std::string_view json_text, const std::vector<std::string>& overrides = {});

/// Pretty-printed JSON with every default materialized and a fixed key order.
std::string serialize_config(const ExperimentConfig& config);

/// FNV-1a of the serialized config, as 16 lowercase hex digits. The output
/// section and the override log are excluded.
std::string config_hash(const ExperimentConfig& config);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

} // namespace flexrank

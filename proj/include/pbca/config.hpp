#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbca/data.hpp"
#include "pbca/model.hpp"

namespace pbca::config {

/// History / horizon pairs of the public benchmark datasets.
struct Preset {
    const char* name;
    std::size_t history;
    std::size_t horizon;
};

std::span<const Preset> presets();
const Preset& find_preset(const std::string& name);

// How the CLI reads a CSV into a dataset.
struct DataOptions {
    std::vector<std::string> columns;  // empty: every non-timestamp column
    std::string timestamp_column = "auto";  // "auto", "none" or a column name
    std::string missing_token;
    data::Scaling scaling = data::Scaling::zscore;
    bool strict_split = false;
};

struct RunConfig {
    model::ForecastConfig model;
    DataOptions data;
};

// `key = value` lines; '#' starts a comment. Unknown keys are a ConfigError.
RunConfig parse(std::istream& in, const std::string& source = "<config>");
RunConfig load(const std::string& path);

// Applies one key; returns false when the key is not a model key.
bool apply_model_key(model::ForecastConfig& cfg, const std::string& key, const std::string& value);

// Model keys only, in a stable order; parse_model_text reads them back.
std::string model_text(const model::ForecastConfig& cfg);
model::ForecastConfig parse_model_text(const std::string& text);
std::string data_text(const DataOptions& opts);

// Resolves "auto" to the first header cell named t, time, timestamp, date or
// datetime; "none" to no timestamp column.
std::optional<std::string> resolve_timestamp(const std::string& option, const std::vector<std::string>& header);

// CSV -> interpolated, scaled, windowed and split dataset. Sets
// cfg.variables from the number of value columns read.
data::PreparedData load_dataset(const std::string& csv_path, const DataOptions& opts, model::ForecastConfig& cfg);

attention::LagMasking parse_masking(const std::string& s);
const char* masking_name(attention::LagMasking m);

}  // namespace pbca::config

#include "pbca/config.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pbca/error.hpp"

namespace pbca::config {

namespace {

constexpr std::array<Preset, 6> kPresets{{
    {"PSE", 96, 4},
    {"PW", 548, 7},
    {"NAB", 72, 6},
    {"AQ", 192, 6},
    {"AEP", 216, 6},
    {"OLD", 548, 7},
}};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

std::span<const Preset> presets() {
    return kPresets;
}

const Preset& find_preset(const std::string& name) {
    for (const auto& p : kPresets) {
        if (name == p.name) return p;
    }
    throw ConfigError("unknown dataset preset '" + name + "'");
}

attention::LagMasking parse_masking(const std::string& s) {
    if (s == "exclude") return attention::LagMasking::exclude;
    if (s == "literal") return attention::LagMasking::literal;
    if (s == "disabled") return attention::LagMasking::disabled;
    throw ConfigError("unknown masking '" + s + "' (exclude | literal | disabled)");
}

const char* masking_name(attention::LagMasking m) {
    switch (m) {
        case attention::LagMasking::exclude: return "exclude";
        case attention::LagMasking::literal: return "literal";
        case attention::LagMasking::disabled: return "disabled";
    }
    return "unknown";
}

bool apply_model_key(model::ForecastConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "history") cfg.history = to_size(key, value);
    else if (key == "horizon") cfg.horizon = to_size(key, value);
    else if (key == "hidden") cfg.hidden = to_size(key, value);
    else if (key == "attention_units") cfg.attention_units = to_size(key, value);
    else if (key == "variables") cfg.variables = to_size(key, value);
    else if (key == "target") cfg.target = to_size(key, value);
    else if (key == "variant") cfg.variant = model::parse_variant(value);
    else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
    else if (key == "l2") cfg.l2 = to_double(key, value);
    else if (key == "batch_size") cfg.batch_size = to_size(key, value);
    else if (key == "max_epochs") cfg.max_epochs = to_size(key, value);
    else if (key == "patience") cfg.patience = to_size(key, value);
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "masking") cfg.masking = parse_masking(value);
    else if (key == "regularize_all") cfg.regularize_all = to_bool(key, value);
    else if (key == "clip_norm") cfg.clip_norm = to_double(key, value);
    else if (key == "training_input") {
        if (value == "teacher-forced") cfg.training_input = model::DecoderInput::teacher_forced;
        else if (value == "free-running") cfg.training_input = model::DecoderInput::free_running;
        else throw ConfigError("training_input: expected teacher-forced or free-running");
    } else if (key == "preset") {
        const auto& p = find_preset(value);
        cfg.history = p.history;
        cfg.horizon = p.horizon;
    } else {
        return false;
    }
    return true;
}

RunConfig parse(std::istream& in, const std::string& source) {
    RunConfig rc;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (apply_model_key(rc.model, key, value)) continue;
            if (key == "columns") rc.data.columns = split_list(value);
            else if (key == "timestamp_column") rc.data.timestamp_column = value;
            else if (key == "missing_token") rc.data.missing_token = value;
            else if (key == "scaling") rc.data.scaling = data::parse_scaling(value);
            else if (key == "strict_split") rc.data.strict_split = to_bool(key, value);
            else throw ConfigError("unknown key '" + key + "'");
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rc;
}

RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse(in, path);
}

std::string model_text(const model::ForecastConfig& cfg) {
    std::ostringstream os;
    os << "history = " << cfg.history << '\n'
       << "horizon = " << cfg.horizon << '\n'
       << "hidden = " << cfg.hidden << '\n'
       << "attention_units = " << cfg.attention_units << '\n'
       << "variables = " << cfg.variables << '\n'
       << "target = " << cfg.target << '\n'
       << "variant = " << model::variant_name(cfg.variant) << '\n'
       << "learning_rate = " << exact(cfg.learning_rate) << '\n'
       << "l2 = " << exact(cfg.l2) << '\n'
       << "batch_size = " << cfg.batch_size << '\n'
       << "max_epochs = " << cfg.max_epochs << '\n'
       << "patience = " << cfg.patience << '\n'
       << "seed = " << cfg.seed << '\n'
       << "masking = " << masking_name(cfg.masking) << '\n'
       << "regularize_all = " << (cfg.regularize_all ? "true" : "false") << '\n'
       << "clip_norm = " << exact(cfg.clip_norm) << '\n'
       << "training_input = " << model::decoder_input_name(cfg.training_input) << '\n';
    return os.str();
}

std::string data_text(const DataOptions& opts) {
    std::ostringstream os;
    if (!opts.columns.empty()) {
        os << "columns = ";
        for (std::size_t i = 0; i < opts.columns.size(); ++i) os << (i ? "," : "") << opts.columns[i];
        os << '\n';
    }
    os << "timestamp_column = " << opts.timestamp_column << '\n';
    if (!opts.missing_token.empty()) os << "missing_token = " << opts.missing_token << '\n';
    os << "scaling = " << data::scaling_name(opts.scaling) << '\n'
       << "strict_split = " << (opts.strict_split ? "true" : "false") << '\n';
    return os.str();
}

std::optional<std::string> resolve_timestamp(const std::string& option, const std::vector<std::string>& header) {
    if (option == "none" || option.empty()) return std::nullopt;
    if (option != "auto") return option;
    for (const auto& name : header) {
        if (name == "t" || name == "time" || name == "timestamp" || name == "date" || name == "datetime") return name;
    }
    return std::nullopt;
}

data::PreparedData load_dataset(const std::string& csv_path, const DataOptions& opts, model::ForecastConfig& cfg) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open data file " + csv_path);
    std::string header_line;
    std::getline(in, header_line);
    const auto header = split_list(header_line);
    in.seekg(0);

    data::CsvSchema schema;
    schema.columns = opts.columns;
    schema.missing_token = opts.missing_token;
    schema.timestamp_column = resolve_timestamp(opts.timestamp_column, header);
    const auto raw = data::parse_csv(in, schema, csv_path);
    const auto clean = data::interpolate_missing(raw);
    cfg.variables = clean.variables();
    cfg.validate();
    return data::prepare(clean, cfg.history, cfg.horizon, cfg.target, opts.scaling, opts.strict_split);
}

model::ForecastConfig parse_model_text(const std::string& text) {
    std::istringstream in(text);
    const RunConfig rc = parse(in, "__config__");
    return rc.model;
}

}  // namespace pbca::config

#include "pbca/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "pbca/error.hpp"

namespace pbca::data {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t begin = 0;
    while (true) {
        const auto comma = line.find(',', begin);
        cells.push_back(trim(std::string_view(line).substr(begin, comma - begin)));
        if (comma == std::string::npos) break;
        begin = comma + 1;
    }
    return cells;
}

}  // namespace

RawSeries parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(source + ": missing header row");
    const auto header = split_line(line);

    std::optional<std::size_t> ts_col;
    if (schema.timestamp_column) {
        const auto it = std::find(header.begin(), header.end(), *schema.timestamp_column);
        if (it == header.end()) throw SchemaError(source + ": no timestamp column '" + *schema.timestamp_column + "'");
        ts_col = static_cast<std::size_t>(it - header.begin());
    }

    RawSeries raw;
    std::vector<std::size_t> picks;
    if (schema.columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (ts_col && *ts_col == c) continue;
            picks.push_back(c);
            raw.names.push_back(header[c]);
        }
    } else {
        for (const auto& name : schema.columns) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw SchemaError(source + ": header has no column '" + name + "'");
            picks.push_back(static_cast<std::size_t>(it - header.begin()));
            raw.names.push_back(name);
        }
    }
    if (picks.empty()) throw SchemaError(source + ": no value columns");

    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(source + ": row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                             " cells, header has " + std::to_string(header.size()));
        }
        std::vector<std::optional<double>> row;
        row.reserve(picks.size());
        for (auto c : picks) {
            const auto& cell = cells[c];
            if (cell == schema.missing_token || cell.empty()) {
                row.emplace_back(std::nullopt);
                continue;
            }
            double v = 0.0;
            const auto* first = cell.data();
            const auto* last = cell.data() + cell.size();
            if (*first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
                throw ParseError(source + ": row " + std::to_string(row_no) + ", column '" + header[c] +
                                 "': cannot parse '" + cell + "'");
            }
            row.emplace_back(v);
        }
        raw.rows.push_back(std::move(row));
    }
    raw.metadata = source;
    return raw;
}

RawSeries load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return parse_csv(in, schema, path);
}

const char* scaling_name(Scaling s) {
    switch (s) {
        case Scaling::none: return "none";
        case Scaling::zscore: return "zscore";
        case Scaling::minmax: return "minmax";
    }
    return "unknown";
}

Scaling parse_scaling(const std::string& s) {
    if (s == "none") return Scaling::none;
    if (s == "zscore" || s == "z-score") return Scaling::zscore;
    if (s == "minmax" || s == "min-max") return Scaling::minmax;
    throw ConfigError("unknown scaling '" + s + "' (none | zscore | minmax)");
}

CleanSeries interpolate_missing(const RawSeries& raw) {
    const std::size_t k_count = raw.names.size();
    const std::size_t length = raw.rows.size();
    if (length == 0) throw DataError("series has no rows");

    CleanSeries out;
    out.names = raw.names;
    out.columns.assign(k_count, std::vector<double>(length, 0.0));
    for (std::size_t k = 0; k < k_count; ++k) {
        std::vector<std::size_t> present;
        for (std::size_t t = 0; t < length; ++t) {
            if (raw.rows[t].size() != k_count) throw DataError("row " + std::to_string(t) + " has the wrong width");
            if (raw.rows[t][k]) present.push_back(t);
        }
        if (present.empty()) throw DataError("variable '" + raw.names[k] + "' is entirely missing");

        auto& col = out.columns[k];
        for (std::size_t t = 0; t <= present.front(); ++t) col[t] = *raw.rows[present.front()][k];
        for (std::size_t t = present.back(); t < length; ++t) col[t] = *raw.rows[present.back()][k];
        for (std::size_t p = 0; p + 1 < present.size(); ++p) {
            const std::size_t a = present[p];
            const std::size_t b = present[p + 1];
            const double va = *raw.rows[a][k];
            const double vb = *raw.rows[b][k];
            col[a] = va;
            for (std::size_t t = a + 1; t < b; ++t) {
                const double w = static_cast<double>(t - a) / static_cast<double>(b - a);
                col[t] = va + w * (vb - va);
            }
            col[b] = vb;
        }
    }
    out.stats.kind = Scaling::none;
    out.stats.offset.assign(k_count, 0.0);
    out.stats.scale.assign(k_count, 1.0);
    return out;
}

ScalingStats compute_stats(const CleanSeries& series, Scaling kind, std::size_t begin, std::size_t end) {
    if (begin >= end || end > series.length()) throw DataError("empty row range for scaling statistics");
    ScalingStats stats;
    stats.kind = kind;
    for (std::size_t k = 0; k < series.variables(); ++k) {
        const auto& col = series.columns[k];
        double offset = 0.0;
        double scale = 1.0;
        if (kind == Scaling::zscore) {
            double sum = 0.0;
            for (std::size_t t = begin; t < end; ++t) sum += col[t];
            const double mean = sum / static_cast<double>(end - begin);
            double ss = 0.0;
            for (std::size_t t = begin; t < end; ++t) ss += (col[t] - mean) * (col[t] - mean);
            offset = mean;
            scale = std::sqrt(ss / static_cast<double>(end - begin));
        } else if (kind == Scaling::minmax) {
            const auto [lo, hi] = std::minmax_element(col.begin() + static_cast<std::ptrdiff_t>(begin),
                                                      col.begin() + static_cast<std::ptrdiff_t>(end));
            offset = *lo;
            scale = *hi - *lo;
        }
        if (!(scale > 0.0)) throw DataError("variable '" + series.names[k] + "' has zero variance");
        stats.offset.push_back(offset);
        stats.scale.push_back(scale);
    }
    return stats;
}

CleanSeries standardize(const CleanSeries& series, const std::optional<ScalingStats>& stats) {
    const ScalingStats use = stats ? *stats : compute_stats(series, Scaling::zscore, 0, series.length());
    if (use.offset.size() != series.variables() || use.scale.size() != series.variables()) {
        throw ContractError("scaling statistics cover a different variable count");
    }
    CleanSeries out = series;
    for (std::size_t k = 0; k < out.variables(); ++k) {
        if (!(use.scale[k] > 0.0)) throw DataError("variable '" + series.names[k] + "' has zero variance");
        for (auto& v : out.columns[k]) v = (v - use.offset[k]) / use.scale[k];
    }
    out.stats = use;
    return out;
}

double inverse_value(const ScalingStats& stats, std::size_t variable, double scaled) {
    return scaled * stats.scale.at(variable) + stats.offset.at(variable);
}

CleanSeries inverse_standardize(const CleanSeries& series) {
    CleanSeries out = series;
    for (std::size_t k = 0; k < out.variables(); ++k) {
        for (auto& v : out.columns[k]) v = inverse_value(series.stats, k, v);
        out.stats.offset[k] = 0.0;
        out.stats.scale[k] = 1.0;
    }
    out.stats.kind = Scaling::none;
    return out;
}

const char* partition_name(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::validation: return "validation";
        case Partition::test: return "test";
    }
    return "unknown";
}

Range WindowedDataset::range(Partition p) const {
    switch (p) {
        case Partition::train: return train;
        case Partition::validation: return validation;
        case Partition::test: return test;
    }
    return {};
}

std::span<const Example> WindowedDataset::partition(Partition p) const {
    const Range r = range(p);
    return std::span<const Example>(examples).subspan(r.begin, r.size());
}

WindowedDataset window(const CleanSeries& series, std::size_t history, std::size_t horizon, std::size_t target) {
    if (history == 0 || horizon == 0) throw ContractError("history and horizon must be positive");
    if (target >= series.variables()) throw ContractError("target variable out of range");
    const std::size_t length = series.length();
    if (length < history + horizon) {
        throw DataError("series of length " + std::to_string(length) + " is shorter than T + T' = " +
                        std::to_string(history + horizon));
    }
    WindowedDataset ds;
    ds.history = history;
    ds.horizon = horizon;
    ds.variables = series.variables();
    ds.target = target;
    const std::size_t count = length - history - horizon + 1;
    ds.examples.reserve(count);
    for (std::size_t e = 0; e < count; ++e) {
        Example ex;
        ex.start = e;
        ex.inputs.reserve(history * ds.variables);
        for (std::size_t r = 0; r < history; ++r) {
            for (std::size_t k = 0; k < ds.variables; ++k) ex.inputs.push_back(series.columns[k][e + r]);
        }
        for (std::size_t r = 0; r < horizon; ++r) ex.targets.push_back(series.columns[target][e + history + r]);
        ds.examples.push_back(std::move(ex));
    }
    ds.train = {0, count};
    return ds;
}

SplitBounds split_bounds(std::size_t examples) {
    // 0.5625 = 9/16 and 0.75 = 3/4, so integer division is the exact floor.
    return {examples * 9 / 16, examples * 3 / 4};
}

WindowedDataset split(WindowedDataset dataset, bool strict) {
    const std::size_t n = dataset.examples.size();
    if (n < 3) throw DataError("need at least 3 windows to split, have " + std::to_string(n));
    const auto b = split_bounds(n);
    const std::size_t gap = strict ? dataset.history + dataset.horizon - 1 : 0;
    if (b.train_end <= gap || b.validation_end - b.train_end <= gap || n == b.validation_end) {
        throw DataError("split of " + std::to_string(n) + " windows leaves an empty partition");
    }
    dataset.train = {0, b.train_end - gap};
    dataset.validation = {b.train_end, b.validation_end - gap};
    dataset.test = {b.validation_end, n};
    return dataset;
}

PreparedData prepare(const CleanSeries& series, std::size_t history, std::size_t horizon, std::size_t target,
                     Scaling scaling, bool strict) {
    // Split the raw windows first to learn which rows the training block touches.
    const WindowedDataset raw = split(window(series, history, horizon, target), strict);
    const std::size_t rows_end = raw.train.end - 1 + history + horizon;
    ScalingStats stats;
    if (scaling == Scaling::none) {
        stats.kind = Scaling::none;
        stats.offset.assign(series.variables(), 0.0);
        stats.scale.assign(series.variables(), 1.0);
    } else {
        stats = compute_stats(series, scaling, 0, rows_end);
    }
    const CleanSeries scaled = standardize(series, stats);
    return {split(window(scaled, history, horizon, target), strict), stats};
}

CleanSeries synth_periodic(const SynthSpec& spec) {
    if (spec.length == 0) throw ContractError("synthetic series needs a positive length");
    if (!(spec.noise_stddev >= 0.0)) throw ContractError("noise stddev must be non-negative");
    double longest = 0.0;
    for (const auto& c : spec.components) {
        if (!(c.period > 0.0)) throw ContractError("component period must be positive");
        longest = std::max(longest, c.period);
    }
    if (static_cast<double>(spec.length) <= longest) throw ContractError("series must be longer than every period");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    CleanSeries out;
    out.names = {"value"};
    out.columns.assign(1, std::vector<double>(spec.length, 0.0));
    for (std::size_t t = 0; t < spec.length; ++t) {
        const double tt = static_cast<double>(t);
        double x = spec.slope * tt;
        for (const auto& c : spec.components) x += c.amplitude * std::sin(2.0 * std::numbers::pi * tt / c.period);
        if (spec.noise_stddev > 0.0) x += spec.noise_stddev * noise(rng);
        out.columns[0][t] = x;
    }
    out.stats.kind = Scaling::none;
    out.stats.offset = {0.0};
    out.stats.scale = {1.0};
    return out;
}

void write_csv(std::ostream& out, const CleanSeries& series, bool with_index) {
    if (with_index) out << "t";
    for (std::size_t k = 0; k < series.variables(); ++k) out << ((k || with_index) ? "," : "") << series.names[k];
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t t = 0; t < series.length(); ++t) {
        if (with_index) out << t;
        for (std::size_t k = 0; k < series.variables(); ++k) {
            out << ((k || with_index) ? "," : "") << series.columns[k][t];
        }
        out << '\n';
    }
}

}  // namespace pbca::data

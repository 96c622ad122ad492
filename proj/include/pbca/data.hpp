#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pbca::data {

struct RawSeries {
    std::vector<std::string> names;
    // rows[t][k]; nullopt marks a missing entry.
    std::vector<std::vector<std::optional<double>>> rows;
    std::string metadata;
};

struct CsvSchema {
    // Value columns to read, in this order. Empty: every non-timestamp column.
    std::vector<std::string> columns;
    std::string missing_token;
    // Column carried in the file but ignored for math.
    std::optional<std::string> timestamp_column;
};

RawSeries load_csv(const std::string& path, const CsvSchema& schema);
RawSeries parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<stream>");

enum class Scaling { none, zscore, minmax };

const char* scaling_name(Scaling s);
Scaling parse_scaling(const std::string& s);

/// x' = (x - offset) / scale, per variable.
struct ScalingStats {
    Scaling kind = Scaling::zscore;
    std::vector<double> offset;
    std::vector<double> scale;
};

struct CleanSeries {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;  // [K][L]
    ScalingStats stats;                        // identity until standardized

    [[nodiscard]] std::size_t variables() const noexcept { return columns.size(); }
    [[nodiscard]] std::size_t length() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
};

// Linear interpolation of interior gaps; leading and trailing gaps take the
// nearest present value.
CleanSeries interpolate_missing(const RawSeries& raw);

// Stats over rows [begin, end) of every variable.
ScalingStats compute_stats(const CleanSeries& series, Scaling kind, std::size_t begin, std::size_t end);

// Applies `stats`, or stats of the whole series when none are supplied.
CleanSeries standardize(const CleanSeries& series, const std::optional<ScalingStats>& stats = std::nullopt);
double inverse_value(const ScalingStats& stats, std::size_t variable, double scaled);
CleanSeries inverse_standardize(const CleanSeries& series);

struct Example {
    std::size_t start = 0;             // first input row
    std::vector<double> inputs;        // [T][K], row-major
    std::vector<double> targets;       // T' values of the target variable
};

enum class Partition { train, validation, test };

const char* partition_name(Partition p);

struct Range {
    std::size_t begin = 0;
    std::size_t end = 0;
    [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
};

struct WindowedDataset {
    std::size_t history = 0;
    std::size_t horizon = 0;
    std::size_t variables = 0;
    std::size_t target = 0;
    std::vector<Example> examples;
    // Unsplit datasets put every example in train.
    Range train, validation, test;

    [[nodiscard]] Range range(Partition p) const;
    [[nodiscard]] std::span<const Example> partition(Partition p) const;
};

// Stride-1 windows: example e reads rows e..e+T-1 and predicts the target
// variable at rows e+T..e+T+T'-1.
WindowedDataset window(const CleanSeries& series, std::size_t history, std::size_t horizon, std::size_t target);

struct SplitBounds {
    std::size_t train_end = 0;       // floor(0.5625 N)
    std::size_t validation_end = 0;  // floor(0.75 N)
};

SplitBounds split_bounds(std::size_t examples);

// Train / validation / test = 56.25% / 18.75% / 25% of the windows, by first
// input row. `strict` drops windows whose rows reach into the next block.
WindowedDataset split(WindowedDataset dataset, bool strict = false);

struct PreparedData {
    WindowedDataset dataset;
    ScalingStats stats;
};

// Scaling stats come from the rows touched by training windows only.
PreparedData prepare(const CleanSeries& series, std::size_t history, std::size_t horizon, std::size_t target,
                     Scaling scaling, bool strict = false);

struct PeriodicComponent {
    double period = 0.0;
    double amplitude = 0.0;
};

struct SynthSpec {
    std::size_t length = 0;
    std::vector<PeriodicComponent> components;
    double noise_stddev = 0.0;
    double slope = 0.0;
    std::uint64_t seed = 0;
};

// x_t = sum_c a_c sin(2 pi t / p_c) + slope t + N(0, noise^2), t = 0..L-1.
CleanSeries synth_periodic(const SynthSpec& spec);

void write_csv(std::ostream& out, const CleanSeries& series, bool with_index = true);

}  // namespace pbca::data

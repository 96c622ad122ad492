#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pbca/autodiff.hpp"
#include "pbca/data.hpp"
#include "pbca/model.hpp"

namespace pbca::metrics {

using Series2D = std::vector<std::vector<double>>;

struct MetricReport {
    double mse = 0.0;
    double smape = 0.0;
    std::vector<double> example_squared_errors;  // per-example mean over the horizon
    std::vector<double> example_smape;
};

double mse(const Series2D& predicted, const Series2D& actual);

// Mean of 2|p - y| / (|p| + |y|), with 0/0 terms counted as 0. Range [0, 2].
double smape(const Series2D& predicted, const Series2D& actual);

MetricReport evaluate(const Series2D& predicted, const Series2D& actual);

// Squared errors of every horizon point, example-major.
std::vector<double> point_squared_errors(const Series2D& predicted, const Series2D& actual);

struct TTestResult {
    double t = 0.0;
    double degrees_of_freedom = 0.0;
    double p = 1.0;  // two-sided
    bool significant = false;
};

/// Paired t-test on d = a - b. All-zero differences give p = 1; zero spread
/// with a nonzero mean gives |t| = inf and p = 0.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

// I_x(a, b), evaluated with a Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

/// r(l) = sum_t (x_t - m)(x_{t+l} - m) / sum_t (x_t - m)^2 for l = 0..max_lag.
std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag);

/// Mean attention weight of each input position over examples and horizon
/// steps. Position j (0-based) is labelled with lag T - j, its distance to the
/// first forecast step.
struct AttentionProfile {
    std::vector<double> mean_weights;
    std::vector<std::size_t> lags;
    std::size_t history = 0;
    std::size_t horizon = 0;

    [[nodiscard]] std::size_t argmax_position() const;
    [[nodiscard]] std::size_t argmax_lag() const { return lags.at(argmax_position()); }
};

// Averages per-example [T', T] weight matrices.
AttentionProfile average_weights(std::span<const Tensor> weights);

AttentionProfile average_attention(const model::ForecastModel& m, const data::WindowedDataset& dataset,
                                   data::Partition partition = data::Partition::test,
                                   std::size_t attention_index = 0);

}  // namespace pbca::metrics

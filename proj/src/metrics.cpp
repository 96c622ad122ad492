#include "pbca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pbca/error.hpp"

namespace pbca::metrics {

namespace {

void check_pairs(const Series2D& predicted, const Series2D& actual) {
    if (predicted.empty()) throw ContractError("no forecasts to score");
    if (predicted.size() != actual.size()) throw ContractError("forecast and target counts differ");
    for (std::size_t e = 0; e < predicted.size(); ++e) {
        if (predicted[e].size() != actual[e].size() || predicted[e].empty()) {
            throw ContractError("forecast " + std::to_string(e) + " does not match its target length");
        }
    }
}

double smape_term(double p, double y) {
    const double denom = std::abs(p) + std::abs(y);
    return denom == 0.0 ? 0.0 : 2.0 * std::abs(p - y) / denom;
}

double continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kTolerance = 1e-12;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double mm = m;
        const double m2 = 2.0 * mm;
        double aa = mm * (b - mm) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + mm) * (qab + mm) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double step = d * c;
        h *= step;
        if (std::abs(step - 1.0) < kTolerance) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double mse(const Series2D& predicted, const Series2D& actual) {
    return evaluate(predicted, actual).mse;
}

double smape(const Series2D& predicted, const Series2D& actual) {
    return evaluate(predicted, actual).smape;
}

MetricReport evaluate(const Series2D& predicted, const Series2D& actual) {
    check_pairs(predicted, actual);
    MetricReport r;
    double se_total = 0.0;
    double smape_total = 0.0;
    std::size_t points = 0;
    for (std::size_t e = 0; e < predicted.size(); ++e) {
        double se = 0.0;
        double sm = 0.0;
        for (std::size_t i = 0; i < predicted[e].size(); ++i) {
            const double d = predicted[e][i] - actual[e][i];
            se += d * d;
            sm += smape_term(predicted[e][i], actual[e][i]);
        }
        se_total += se;
        smape_total += sm;
        points += predicted[e].size();
        r.example_squared_errors.push_back(se / static_cast<double>(predicted[e].size()));
        r.example_smape.push_back(sm / static_cast<double>(predicted[e].size()));
    }
    r.mse = se_total / static_cast<double>(points);
    r.smape = smape_total / static_cast<double>(points);
    return r;
}

std::vector<double> point_squared_errors(const Series2D& predicted, const Series2D& actual) {
    check_pairs(predicted, actual);
    std::vector<double> out;
    for (std::size_t e = 0; e < predicted.size(); ++e) {
        for (std::size_t i = 0; i < predicted[e].size(); ++i) {
            const double d = predicted[e][i] - actual[e][i];
            out.push_back(d * d);
        }
    }
    return out;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw ContractError("incomplete beta needs x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double front =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * continued_fraction(a, b, x) / a;
    return 1.0 - front * continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw ContractError("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b, double alpha) {
    if (a.size() != b.size()) throw ContractError("paired samples differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw ContractError("paired t-test needs at least 2 pairs");

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    TTestResult r;
    r.degrees_of_freedom = static_cast<double>(n - 1);
    const bool all_zero = std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; });
    if (all_zero) {
        r.t = 0.0;
        r.p = 1.0;
    } else if (sd == 0.0) {
        r.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
    } else {
        r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
        r.p = std::clamp(student_t_two_sided_p(r.t, r.degrees_of_freedom), 0.0, 1.0);
    }
    r.significant = r.p < alpha;
    return r;
}

std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag) {
    const std::size_t n = series.size();
    if (n <= max_lag) throw ContractError("series must be longer than max_lag");
    const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
    double denom = 0.0;
    for (double x : series) denom += (x - mean) * (x - mean);
    if (!(denom > 0.0)) throw DataError("autocorrelation of a zero-variance series");

    std::vector<double> r;
    r.reserve(max_lag + 1);
    r.push_back(1.0);
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t) acc += (series[t] - mean) * (series[t + lag] - mean);
        r.push_back(acc / denom);
    }
    return r;
}

std::size_t AttentionProfile::argmax_position() const {
    if (mean_weights.empty()) throw ContractError("empty attention profile");
    std::size_t best = 0;
    for (std::size_t j = 1; j < mean_weights.size(); ++j) {
        if (mean_weights[j] > mean_weights[best]) best = j;
    }
    return best;
}

AttentionProfile average_weights(std::span<const Tensor> weights) {
    if (weights.empty()) throw ContractError("no attention weights to average");
    const std::size_t horizon = weights.front().rows();
    const std::size_t history = weights.front().cols();
    AttentionProfile p;
    p.history = history;
    p.horizon = horizon;
    p.mean_weights.assign(history, 0.0);
    for (const auto& w : weights) {
        if (w.rows() != horizon || w.cols() != history) throw ShapeError("attention weight matrices differ in shape");
        for (std::size_t i = 0; i < horizon; ++i) {
            for (std::size_t j = 0; j < history; ++j) p.mean_weights[j] += w.at(i, j);
        }
    }
    const double count = static_cast<double>(weights.size() * horizon);
    for (auto& v : p.mean_weights) v /= count;
    for (std::size_t j = 0; j < history; ++j) p.lags.push_back(history - j);
    return p;
}

AttentionProfile average_attention(const model::ForecastModel& m, const data::WindowedDataset& dataset,
                                   data::Partition partition, std::size_t attention_index) {
    const auto examples = dataset.partition(partition);
    if (examples.empty()) throw ContractError("attention profile of an empty partition");
    if (attention_index >= m.attentions().size()) throw ContractError("attention index out of range");
    std::vector<Tensor> weights;
    weights.reserve(examples.size());
    for (const auto& ex : examples) {
        auto res = model::forward(m, ex.inputs, std::nullopt, model::DecoderInput::free_running);
        weights.push_back(std::move(res.attention[attention_index]));
    }
    return average_weights(weights);
}

}  // namespace pbca::metrics

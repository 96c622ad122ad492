#pragma once

// Straight-line forward pass, written against parameter names only and
// templated on the scalar type. Used as an oracle for the graph-based model;
// the long double instance backs extended-precision finite differences.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pbca/error.hpp"
#include "pbca/model.hpp"

namespace reference {

template <typename S>
using VecT = std::vector<S>;
using Vec = VecT<double>;

template <typename S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

class Params {
public:
    explicit Params(const pbca::ParameterSet& ps) : ps_(ps) {}

    const pbca::Tensor& get(const std::string& name) const {
        const auto slot = ps_.find(name);
        if (!slot) throw pbca::ContractError("reference: no parameter " + name);
        return ps_.value(*slot);
    }

    bool has(const std::string& name) const { return ps_.find(name).has_value(); }

private:
    const pbca::ParameterSet& ps_;
};

// y = M x for a [rows, cols] tensor.
template <typename S>
VecT<S> mat_vec(const pbca::Tensor& m, const VecT<S>& x) {
    VecT<S> y(m.rows(), S(0));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) y[r] += S(m.at(r, c)) * x[c];
    }
    return y;
}

template <typename S>
struct StateT {
    VecT<S> h, c;
};
using State = StateT<double>;

template <typename S>
StateT<S> lstm_step(const Params& p, const std::string& prefix, const VecT<S>& x, const StateT<S>& prev) {
    const auto& get = [&](const char* name) -> const pbca::Tensor& { return p.get(prefix + "." + name); };
    const std::size_t n = prev.h.size();
    const VecT<S> wi = mat_vec(get("w_input"), x), wf = mat_vec(get("w_forget"), x);
    const VecT<S> wc = mat_vec(get("w_cell"), x), wo = mat_vec(get("w_output"), x);
    const VecT<S> ri = mat_vec(get("r_input"), prev.h), rf = mat_vec(get("r_forget"), prev.h);
    const VecT<S> rc = mat_vec(get("r_cell"), prev.h), ro = mat_vec(get("r_output"), prev.h);
    StateT<S> next{VecT<S>(n), VecT<S>(n)};
    for (std::size_t k = 0; k < n; ++k) {
        const S i = sigmoid(wi[k] + ri[k] + S(get("b_input")[k]) + S(get("p_input")[k]) * prev.c[k]);
        const S f = sigmoid(wf[k] + rf[k] + S(get("b_forget")[k]) + S(get("p_forget")[k]) * prev.c[k]);
        const S g = std::tanh(wc[k] + rc[k] + S(get("b_cell")[k]));
        next.c[k] = f * prev.c[k] + i * g;
        const S o = sigmoid(wo[k] + ro[k] + S(get("b_output")[k]) + S(get("p_output")[k]) * next.c[k]);
        next.h[k] = o * std::tanh(next.c[k]);
    }
    return next;
}

// T states of length 2n for one variable's column.
template <typename S>
std::vector<VecT<S>> encode(const Params& p, const std::string& prefix, const VecT<S>& column, std::size_t n) {
    using Vec = VecT<S>;
    using State = StateT<S>;
    const std::size_t T = column.size();
    std::vector<Vec> fwd(T), bwd(T);
    State s{Vec(n, S(0)), Vec(n, S(0))};
    for (std::size_t t = 0; t < T; ++t) {
        s = lstm_step(p, prefix + ".fwd", {column[t]}, s);
        fwd[t] = s.h;
    }
    s = {Vec(n, S(0)), Vec(n, S(0))};
    for (std::size_t t = T; t-- > 0;) {
        s = lstm_step(p, prefix + ".bwd", {column[t]}, s);
        bwd[t] = s.h;
    }
    std::vector<Vec> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        out[t] = fwd[t];
        out[t].insert(out[t].end(), bwd[t].begin(), bwd[t].end());
    }
    return out;
}

template <typename S>
struct OutputT {
    VecT<S> predictions;
    std::vector<std::vector<VecT<S>>> weights;  // [attention][step] -> T weights
};
using Output = OutputT<double>;

template <typename S>
OutputT<S> forward_as(const pbca::model::ForecastModel& model, const Vec& window, const Vec* targets) {
    using pbca::model::Variant;
    using Vec = VecT<S>;
    using State = StateT<S>;
    const auto& cfg = model.config();
    const Params p(model.params());
    const std::size_t T = cfg.history, K = cfg.variables, n = cfg.hidden;
    const bool per_variable = cfg.variant == Variant::pi3 || pbca::model::is_multivariate(cfg.variant);
    const std::size_t encoders = per_variable ? K : 1;

    std::vector<std::vector<Vec>> states(encoders);
    for (std::size_t e = 0; e < encoders; ++e) {
        const std::size_t var = per_variable ? e : cfg.target;
        Vec column(T);
        for (std::size_t t = 0; t < T; ++t) column[t] = S(window[t * K + var]);
        states[e] = encode(p, "encoder" + std::to_string(e), column, n);
    }

    // Attention modules and their key sequences.
    std::vector<std::vector<Vec>> keys;
    if (cfg.variant == Variant::pi3) {
        std::vector<Vec> joined(T);
        for (std::size_t j = 0; j < T; ++j) {
            for (const auto& s : states) joined[j].insert(joined[j].end(), s[j].begin(), s[j].end());
        }
        keys.push_back(joined);
    } else {
        keys = states;
    }

    const auto mech = pbca::model::mechanism_of(cfg.variant);
    OutputT<S> out;
    out.weights.assign(keys.size(), {});
    State s{Vec(n, S(0)), Vec(n, S(0))};
    S y_prev = S(window[(T - 1) * K + cfg.target]);
    for (std::size_t i = 0; i < cfg.horizon; ++i) {
        Vec context;
        for (std::size_t a = 0; a < keys.size(); ++a) {
            const std::string prefix = "attention" + std::to_string(a);
            const auto& W = p.get(prefix + ".w_a");
            const auto& U = p.get(prefix + ".u_a");
            const auto& v = p.get(prefix + ".v_a");
            const Vec q = mat_vec(W, s.h);
            Vec e(T, S(0));
            std::vector<bool> masked(T, false);
            for (std::size_t j = 0; j < T; ++j) {
                const std::size_t lag = i + T - j;
                Vec key_term;
                if (mech == pbca::attention::Mechanism::content) {
                    key_term = mat_vec(U, keys[a][j]);
                } else {
                    if (lag > T && cfg.masking != pbca::attention::LagMasking::disabled) {
                        masked[j] = cfg.masking == pbca::attention::LagMasking::exclude;
                        continue;
                    }
                    const auto& pi = p.get(prefix + ".pi");
                    if (mech == pbca::attention::Mechanism::pi1) {
                        key_term = mat_vec(U, keys[a][j]);
                        for (auto& x : key_term) x *= S(pi[lag - 1]);
                    } else {
                        Vec scaled = keys[a][j];
                        for (std::size_t r = 0; r < scaled.size(); ++r) scaled[r] *= S(pi.at(r, lag - 1));
                        key_term = mat_vec(U, scaled);
                    }
                }
                S acc = 0;
                for (std::size_t u = 0; u < v.size(); ++u) acc += S(v[u]) * std::tanh(q[u] + key_term[u]);
                e[j] = acc;
            }
            S mx = -INFINITY;
            for (std::size_t j = 0; j < T; ++j) {
                if (!masked[j]) mx = std::max(mx, e[j]);
            }
            Vec w(T, S(0));
            S z = 0;
            for (std::size_t j = 0; j < T; ++j) {
                if (masked[j]) continue;
                w[j] = std::exp(e[j] - mx);
                z += w[j];
            }
            Vec c(keys[a][0].size(), S(0));
            for (std::size_t j = 0; j < T; ++j) {
                w[j] /= z;
                for (std::size_t r = 0; r < c.size(); ++r) c[r] += w[j] * keys[a][j][r];
            }
            out.weights[a].push_back(w);
            context.insert(context.end(), c.begin(), c.end());
        }
        Vec x{y_prev};
        x.insert(x.end(), context.begin(), context.end());
        s = lstm_step(p, "decoder", x, s);
        const auto& wout = p.get("output.weight");
        S y = S(p.get("output.bias")[0]);
        for (std::size_t k = 0; k < n; ++k) y += S(wout[k]) * s.h[k];
        out.predictions.push_back(y);
        y_prev = targets ? S((*targets)[i]) : y;
    }
    return out;
}

inline Output forward(const pbca::model::ForecastModel& model, const Vec& window, const Vec* targets) {
    return forward_as<double>(model, window, targets);
}

// Mean squared error plus l2 times the squared penalized entries.
template <typename S>
S loss_as(const pbca::model::ForecastModel& model, const Vec& window, const Vec& targets, bool teacher_forced) {
    const auto out = forward_as<S>(model, window, teacher_forced ? &targets : nullptr);
    S sse = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const S d = out.predictions[i] - S(targets[i]);
        sse += d * d;
    }
    const auto& cfg = model.config();
    const auto& ps = model.params();
    S penalty = 0;
    for (pbca::Slot s = 0; s < ps.size(); ++s) {
        if (ps.penalty(s) != pbca::Penalty::weight && !cfg.regularize_all) continue;
        for (double v : ps.value(s).values()) penalty += S(v) * S(v);
    }
    return sse / S(targets.size()) + S(cfg.l2) * penalty;
}

struct GradientComparison {
    double max_relative_error = 0.0;
    std::string worst;
    double backprop = 0.0;
    double central_difference = 0.0;
};

// Central differences of the long double loss with step epsilon per entry,
// measured as |bp - cd| / max(|cd|, 1e-8) against `analytic`.
inline GradientComparison compare_gradient(pbca::model::ForecastModel model, const Vec& window, const Vec& targets,
                                           bool teacher_forced, const pbca::GradientMap& analytic,
                                           double epsilon = 1e-5) {
    GradientComparison out;
    auto& ps = model.params();
    for (pbca::Slot s = 0; s < ps.size(); ++s) {
        for (std::size_t k = 0; k < ps.value(s).size(); ++k) {
            const double saved = ps.value(s)[k];
            // Actual steps after rounding the perturbed point to double.
            ps.value(s)[k] = saved + epsilon;
            const double up_step = ps.value(s)[k] - saved;
            const long double up = loss_as<long double>(model, window, targets, teacher_forced);
            ps.value(s)[k] = saved - epsilon;
            const double down_step = saved - ps.value(s)[k];
            const long double down = loss_as<long double>(model, window, targets, teacher_forced);
            ps.value(s)[k] = saved;
            const double cd = static_cast<double>((up - down) / (static_cast<long double>(up_step) + down_step));
            const double bp = analytic[s][k];
            const double err = std::abs(bp - cd) / std::max(std::abs(cd), 1e-8);
            if (err >= out.max_relative_error) {
                out = {err, ps.name(s) + "[" + std::to_string(k) + "]", bp, cd};
            }
        }
    }
    return out;
}

}  // namespace reference

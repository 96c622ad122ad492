#include "pbca/attention.hpp"

#include "pbca/error.hpp"

namespace pbca::attention {

const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::content: return "content";
        case Mechanism::pi1: return "pi1";
        case Mechanism::pi2: return "pi2";
        case Mechanism::pi3: return "pi3";
    }
    return "unknown";
}

LagIndex lag_index(std::size_t output, std::size_t input, std::size_t history) {
    if (input >= history) throw ContractError("input position out of history");
    return {output, input, output + history - input};
}

AttentionParams add_attention(ParameterSet& params, const std::string& prefix, Mechanism mechanism,
                              std::size_t units, std::size_t state_size, std::size_t key_size,
                              std::size_t history, std::size_t horizon, std::mt19937_64& rng) {
    if (units == 0 || state_size == 0 || key_size == 0 || history == 0 || horizon == 0) {
        throw ContractError("attention sizes must be positive");
    }
    if (mechanism == Mechanism::pi3 && key_size % (2 * state_size) != 0) {
        throw ShapeError("pi3 key size " + std::to_string(key_size) + " is not a multiple of 2n = " +
                         std::to_string(2 * state_size));
    }
    AttentionParams p;
    p.mechanism = mechanism;
    p.units = units;
    p.state_size = state_size;
    p.key_size = key_size;
    p.history = history;
    p.horizon = horizon;
    p.w_a = params.add(prefix + ".w_a", uniform_init({units, state_size}, state_size, rng), Penalty::weight);
    p.u_a = params.add(prefix + ".u_a", uniform_init({units, key_size}, key_size, rng), Penalty::weight);
    p.v_a = params.add(prefix + ".v_a", uniform_init({units}, units, rng), Penalty::weight);
    const std::size_t lags = history + horizon;
    switch (mechanism) {
        case Mechanism::content:
            break;
        case Mechanism::pi1:
            p.pi = params.add(prefix + ".pi", Tensor({lags}, 1.0), Penalty::position);
            break;
        case Mechanism::pi2:
        case Mechanism::pi3:
            p.pi = params.add(prefix + ".pi", Tensor({key_size, lags}, 1.0), Penalty::position);
            break;
    }
    return p;
}

AttentionKeys prepare_keys(Graph& g, const ParameterSet& params, const AttentionParams& p,
                           std::span<const NodeId> states) {
    if (states.size() != p.history) {
        throw ShapeError("attention expects " + std::to_string(p.history) + " encoder states, got " +
                         std::to_string(states.size()));
    }
    AttentionKeys keys;
    keys.states.assign(states.begin(), states.end());
    for (auto s : states) {
        if (g.dims(s) != Dims{p.key_size}) {
            throw ShapeError("encoder state " + format_dims(g.dims(s)) + " does not match key size " +
                             std::to_string(p.key_size));
        }
    }
    if (p.mechanism == Mechanism::content || p.mechanism == Mechanism::pi1) {
        const NodeId u = params.node(g, p.u_a);
        keys.projected.reserve(states.size());
        for (auto s : states) keys.projected.push_back(g.matmul(u, s));
    }
    return keys;
}

namespace {

void require(const AttentionParams& p, Mechanism want) {
    if (p.mechanism != want) {
        throw ContractError(std::string("attention parameters are ") + mechanism_name(p.mechanism) + ", scorer needs " +
                            mechanism_name(want));
    }
}

void require_step(const AttentionParams& p, std::size_t output) {
    if (output >= p.horizon) {
        throw ContractError("output step " + std::to_string(output) + " out of horizon " + std::to_string(p.horizon));
    }
}

// v' tanh(query + key_term)
NodeId additive(Graph& g, NodeId v, NodeId query, NodeId key_term) {
    return g.sum(g.hadamard(v, g.tanh(g.add(query, key_term))));
}

// Shared driver: `key_term(j, lag)` builds the encoder-side term for a
// position that is scored.
template <typename KeyTerm>
Scores position_scores(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                       NodeId s_prev, const AttentionKeys& keys, LagMasking masking, KeyTerm key_term) {
    require_step(p, output);
    if (keys.states.size() != p.history) throw ShapeError("keys do not cover the history");
    const NodeId query = g.matmul(params.node(g, p.w_a), s_prev);
    const NodeId v = params.node(g, p.v_a);
    std::optional<NodeId> zero;

    Scores out;
    out.mask.assign(p.history, 0);
    std::vector<NodeId> entries;
    entries.reserve(p.history);
    for (std::size_t j = 0; j < p.history; ++j) {
        const auto idx = lag_index(output, j, p.history);
        if (!idx.valid(p.history) && masking != LagMasking::disabled) {
            if (!zero) zero = g.constant(0.0);
            entries.push_back(*zero);
            if (masking == LagMasking::exclude) out.mask[j] = 1;
            continue;
        }
        entries.push_back(additive(g, v, query, key_term(j, idx.lag)));
    }
    out.values = g.concat(entries);
    return out;
}

Scores matrix_scores(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                     NodeId s_prev, const AttentionKeys& keys, LagMasking masking) {
    const NodeId u = params.node(g, p.u_a);
    const NodeId pi = params.node(g, *p.pi);
    return position_scores(g, params, p, output, s_prev, keys, masking, [&](std::size_t j, std::size_t lag) {
        const NodeId reweighted = g.hadamard(g.column_lookup(pi, lag - 1), keys.states[j]);
        return g.matmul(u, reweighted);
    });
}

}  // namespace

Scores score_content(Graph& g, const ParameterSet& params, const AttentionParams& p, NodeId s_prev,
                     const AttentionKeys& keys) {
    require(p, Mechanism::content);
    if (keys.projected.size() != p.history) throw ContractError("keys were not projected for content attention");
    const NodeId query = g.matmul(params.node(g, p.w_a), s_prev);
    const NodeId v = params.node(g, p.v_a);
    std::vector<NodeId> entries;
    entries.reserve(p.history);
    for (std::size_t j = 0; j < p.history; ++j) entries.push_back(additive(g, v, query, keys.projected[j]));
    return {g.concat(entries), std::vector<std::uint8_t>(p.history, 0)};
}

Scores score_pi1(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                 NodeId s_prev, const AttentionKeys& keys, LagMasking masking) {
    require(p, Mechanism::pi1);
    if (keys.projected.size() != p.history) throw ContractError("keys were not projected for pi1 attention");
    const NodeId pi = params.node(g, *p.pi);
    return position_scores(g, params, p, output, s_prev, keys, masking, [&](std::size_t j, std::size_t lag) {
        return g.matmul(keys.projected[j], g.scalar_lookup(pi, lag - 1));
    });
}

Scores score_pi2(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                 NodeId s_prev, const AttentionKeys& keys, LagMasking masking) {
    require(p, Mechanism::pi2);
    return matrix_scores(g, params, p, output, s_prev, keys, masking);
}

Scores score_pi3(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                 NodeId s_prev, const AttentionKeys& keys, LagMasking masking) {
    require(p, Mechanism::pi3);
    if (p.key_size % (2 * p.state_size) != 0) throw ShapeError("pi3 key size must be 2Kn");
    return matrix_scores(g, params, p, output, s_prev, keys, masking);
}

Scores score(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output, NodeId s_prev,
             const AttentionKeys& keys, LagMasking masking) {
    switch (p.mechanism) {
        case Mechanism::content: return score_content(g, params, p, s_prev, keys);
        case Mechanism::pi1: return score_pi1(g, params, p, output, s_prev, keys, masking);
        case Mechanism::pi2: return score_pi2(g, params, p, output, s_prev, keys, masking);
        case Mechanism::pi3: return score_pi3(g, params, p, output, s_prev, keys, masking);
    }
    throw ContractError("unknown attention mechanism");
}

AttentionResult normalize_and_context(Graph& g, const Scores& scores, std::span<const NodeId> states) {
    const auto& d = g.dims(scores.values);
    if (d.size() != 1 || d[0] != states.size()) {
        throw ShapeError("score vector " + format_dims(d) + " does not match " + std::to_string(states.size()) +
                         " states");
    }
    AttentionResult out;
    out.weights = g.softmax_masked(scores.values, scores.mask);
    std::optional<NodeId> context;
    for (std::size_t j = 0; j < states.size(); ++j) {
        if (!scores.mask.empty() && scores.mask[j]) continue;
        const NodeId term = g.matmul(states[j], g.scalar_lookup(out.weights, j));
        context = context ? g.add(*context, term) : term;
    }
    out.context = *context;
    return out;
}

NodeId multivariate_concat_context(Graph& g, std::span<const NodeId> contexts) {
    if (contexts.empty()) throw ContractError("no contexts to concatenate");
    const auto& first = g.dims(contexts.front());
    for (auto c : contexts) {
        if (g.dims(c) != first) {
            throw ShapeError("context " + format_dims(g.dims(c)) + " differs from " + format_dims(first));
        }
    }
    return g.concat(contexts);
}

}  // namespace pbca::attention

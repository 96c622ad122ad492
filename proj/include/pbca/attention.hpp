#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pbca/autodiff.hpp"
#include "pbca/parameters.hpp"

namespace pbca::attention {

// content: e_ij = v' tanh(W s + U h_j)
// pi1:     e_ij = v' tanh(W s + pi[lag] * U h_j)
// pi2:     e_ij = v' tanh(W s + U (pi[:, lag] .* h_j))
// pi3:     pi2 over per-variable encoder states concatenated into one key.
enum class Mechanism { content, pi1, pi2, pi3 };

const char* mechanism_name(Mechanism m);

// How positions whose lag exceeds the history are treated.
//   exclude   - weight exactly 0, left out of the softmax normalizer
//   literal   - score forced to 0 but still normalized (weight e^0 / Z)
//   disabled  - every position scored with its lag coordinate
enum class LagMasking { exclude, literal, disabled };

/// Output step `output` (0-based, < T') against input position `input`
/// (0-based, < T). `lag` is the 1-based distance output+T-input, so the
/// matching pi coordinate is lag-1. Valid iff lag <= T, i.e. input >= output.
struct LagIndex {
    std::size_t output = 0;
    std::size_t input = 0;
    std::size_t lag = 0;

    [[nodiscard]] bool valid(std::size_t history) const noexcept { return lag <= history; }
};

LagIndex lag_index(std::size_t output, std::size_t input, std::size_t history);

struct AttentionParams {
    Mechanism mechanism = Mechanism::content;
    std::size_t units = 0;       // m
    std::size_t state_size = 0;  // decoder hidden size n
    std::size_t key_size = 0;    // H: 2n, or 2Kn for pi3
    std::size_t history = 0;     // T
    std::size_t horizon = 0;     // T'
    Slot w_a = 0;                // [m, n]
    Slot u_a = 0;                // [m, H]
    Slot v_a = 0;                // [m]
    std::optional<Slot> pi;      // pi1: [T+T'], pi2/pi3: [H, T+T']
};

// pi starts at all-ones, so a fresh model scores exactly like content attention.
AttentionParams add_attention(ParameterSet& params, const std::string& prefix, Mechanism mechanism,
                              std::size_t units, std::size_t state_size, std::size_t key_size,
                              std::size_t history, std::size_t horizon, std::mt19937_64& rng);

/// Encoder states for one example plus, for content/pi1, the projections
/// U_a h_j, which do not depend on the output step.
struct AttentionKeys {
    std::vector<NodeId> states;
    std::vector<NodeId> projected;
};

AttentionKeys prepare_keys(Graph& g, const ParameterSet& params, const AttentionParams& p,
                           std::span<const NodeId> states);

/// Raw scores for one output step; mask[j] != 0 excludes position j.
struct Scores {
    NodeId values = 0;
    std::vector<std::uint8_t> mask;
};

Scores score_content(Graph& g, const ParameterSet& params, const AttentionParams& p, NodeId s_prev,
                     const AttentionKeys& keys);
Scores score_pi1(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                 NodeId s_prev, const AttentionKeys& keys, LagMasking masking = LagMasking::exclude);
Scores score_pi2(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                 NodeId s_prev, const AttentionKeys& keys, LagMasking masking = LagMasking::exclude);
Scores score_pi3(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output,
                 NodeId s_prev, const AttentionKeys& keys, LagMasking masking = LagMasking::exclude);

// Dispatches on p.mechanism.
Scores score(Graph& g, const ParameterSet& params, const AttentionParams& p, std::size_t output, NodeId s_prev,
             const AttentionKeys& keys, LagMasking masking = LagMasking::exclude);

struct AttentionResult {
    NodeId weights = 0;  // alpha_i, length T
    NodeId context = 0;  // c_i = sum_j alpha_ij h_j
};

AttentionResult normalize_and_context(Graph& g, const Scores& scores, std::span<const NodeId> states);

// [c(1); ...; c(K)] in variable order.
NodeId multivariate_concat_context(Graph& g, std::span<const NodeId> contexts);

}  // namespace pbca::attention

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pbca/autodiff.hpp"
#include "pbca/parameters.hpp"

namespace pbca::recurrent {

/// Slots of one peephole LSTM cell. Gate order everywhere: input, forget,
/// cell candidate, output. The candidate gate has no peephole.
///
///   i = sigmoid(W_i x + R_i h + p_i * c_prev + b_i)
///   f = sigmoid(W_f x + R_f h + p_f * c_prev + b_f)
///   c = f * c_prev + i * tanh(W_c x + R_c h + b_c)
///   o = sigmoid(W_o x + R_o h + p_o * c + b_o)
///   h = o * tanh(c)
struct PeepholeLstmParams {
    std::size_t hidden = 0;
    std::size_t input = 0;
    Slot w_input = 0, w_forget = 0, w_cell = 0, w_output = 0;  // hidden x input
    Slot r_input = 0, r_forget = 0, r_cell = 0, r_output = 0;  // hidden x hidden
    Slot p_input = 0, p_forget = 0, p_output = 0;              // hidden
    Slot b_input = 0, b_forget = 0, b_cell = 0, b_output = 0;  // hidden
};

// Registers a cell under `prefix`. Weights are uniform in +-1/sqrt(fan_in),
// the forget bias starts at +1 and the other biases at 0.
PeepholeLstmParams add_lstm(ParameterSet& params, const std::string& prefix, std::size_t input,
                            std::size_t hidden, std::mt19937_64& rng);

struct LstmState {
    NodeId hidden = 0;
    NodeId cell = 0;
};

LstmState zero_state(Graph& g, std::size_t hidden);

LstmState lstm_peephole_step(Graph& g, const ParameterSet& params, const PeepholeLstmParams& cell, NodeId x,
                             const LstmState& prev);

/// Per-position encoder states h_j = [forward_j; backward_j], each 2n long.
struct EncoderOutput {
    std::vector<NodeId> states;
    std::size_t width = 0;  // 2n
};

EncoderOutput encode_bidirectional(Graph& g, const ParameterSet& params, std::span<const NodeId> sequence,
                                   const PeepholeLstmParams& forward, const PeepholeLstmParams& backward);

// lstm_peephole_step on concat(y_prev, context).
LstmState decoder_step(Graph& g, const ParameterSet& params, const PeepholeLstmParams& cell, NodeId y_prev,
                       const LstmState& prev, NodeId context);

struct OutputProjection {
    std::size_t hidden = 0;
    Slot weight = 0;  // [1, hidden]
    Slot bias = 0;    // [1]
};

OutputProjection add_output_projection(ParameterSet& params, const std::string& prefix, std::size_t hidden,
                                       std::mt19937_64& rng);

// W_out * s.hidden + b_out, a length-1 node.
NodeId output_projection(Graph& g, const ParameterSet& params, const LstmState& state,
                         const OutputProjection& proj);

}  // namespace pbca::recurrent

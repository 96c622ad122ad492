#include "pbca/recurrent.hpp"

#include "pbca/error.hpp"

namespace pbca::recurrent {

namespace {

std::size_t vector_length(const Graph& g, NodeId id) {
    const auto& d = g.dims(id);
    if (d.size() != 1) throw ShapeError("expected a vector node, got " + format_dims(d));
    return d[0];
}

// W x + R h + b, plus p * c when a peephole slot is given.
NodeId gate_preactivation(Graph& g, const ParameterSet& params, Slot w, Slot r, Slot b, NodeId x, NodeId h) {
    const NodeId wx = g.matmul(params.node(g, w), x);
    const NodeId rh = g.matmul(params.node(g, r), h);
    return g.add(g.add(wx, rh), params.node(g, b));
}

NodeId peephole(Graph& g, const ParameterSet& params, NodeId pre, Slot p, NodeId c) {
    return g.add(pre, g.hadamard(params.node(g, p), c));
}

}  // namespace

PeepholeLstmParams add_lstm(ParameterSet& params, const std::string& prefix, std::size_t input,
                            std::size_t hidden, std::mt19937_64& rng) {
    if (input == 0 || hidden == 0) throw ContractError("LSTM sizes must be positive");
    PeepholeLstmParams cell;
    cell.hidden = hidden;
    cell.input = input;
    const std::size_t fan_in = input + hidden;
    auto weight = [&](const char* name, std::size_t cols) {
        return params.add(prefix + "." + name, uniform_init({hidden, cols}, fan_in, rng), Penalty::weight);
    };
    auto peep = [&](const char* name) {
        return params.add(prefix + "." + name, uniform_init({hidden}, fan_in, rng), Penalty::weight);
    };
    auto bias = [&](const char* name, double v) {
        return params.add(prefix + "." + name, Tensor({hidden}, v), Penalty::bias);
    };
    cell.w_input = weight("w_input", input);
    cell.w_forget = weight("w_forget", input);
    cell.w_cell = weight("w_cell", input);
    cell.w_output = weight("w_output", input);
    cell.r_input = weight("r_input", hidden);
    cell.r_forget = weight("r_forget", hidden);
    cell.r_cell = weight("r_cell", hidden);
    cell.r_output = weight("r_output", hidden);
    cell.p_input = peep("p_input");
    cell.p_forget = peep("p_forget");
    cell.p_output = peep("p_output");
    cell.b_input = bias("b_input", 0.0);
    cell.b_forget = bias("b_forget", 1.0);
    cell.b_cell = bias("b_cell", 0.0);
    cell.b_output = bias("b_output", 0.0);
    return cell;
}

LstmState zero_state(Graph& g, std::size_t hidden) {
    const NodeId zero = g.constant(Tensor({hidden}));
    return {zero, zero};
}

LstmState lstm_peephole_step(Graph& g, const ParameterSet& params, const PeepholeLstmParams& cell, NodeId x,
                             const LstmState& prev) {
    if (vector_length(g, x) != cell.input) {
        throw ShapeError("LSTM input has length " + std::to_string(vector_length(g, x)) + ", cell expects " +
                         std::to_string(cell.input));
    }
    if (vector_length(g, prev.hidden) != cell.hidden || vector_length(g, prev.cell) != cell.hidden) {
        throw ShapeError("LSTM state length does not match hidden size " + std::to_string(cell.hidden));
    }
    const NodeId in_gate = g.sigmoid(peephole(
        g, params, gate_preactivation(g, params, cell.w_input, cell.r_input, cell.b_input, x, prev.hidden),
        cell.p_input, prev.cell));
    const NodeId forget_gate = g.sigmoid(peephole(
        g, params, gate_preactivation(g, params, cell.w_forget, cell.r_forget, cell.b_forget, x, prev.hidden),
        cell.p_forget, prev.cell));
    const NodeId candidate =
        g.tanh(gate_preactivation(g, params, cell.w_cell, cell.r_cell, cell.b_cell, x, prev.hidden));
    const NodeId c = g.add(g.hadamard(forget_gate, prev.cell), g.hadamard(in_gate, candidate));
    const NodeId out_gate = g.sigmoid(peephole(
        g, params, gate_preactivation(g, params, cell.w_output, cell.r_output, cell.b_output, x, prev.hidden),
        cell.p_output, c));
    return {g.hadamard(out_gate, g.tanh(c)), c};
}

EncoderOutput encode_bidirectional(Graph& g, const ParameterSet& params, std::span<const NodeId> sequence,
                                   const PeepholeLstmParams& forward, const PeepholeLstmParams& backward) {
    if (sequence.empty()) throw ContractError("cannot encode an empty sequence");
    if (forward.hidden != backward.hidden) throw ShapeError("forward and backward encoders differ in hidden size");
    const std::size_t steps = sequence.size();

    std::vector<NodeId> fwd(steps);
    LstmState state = zero_state(g, forward.hidden);
    for (std::size_t t = 0; t < steps; ++t) {
        state = lstm_peephole_step(g, params, forward, sequence[t], state);
        fwd[t] = state.hidden;
    }
    std::vector<NodeId> bwd(steps);
    state = zero_state(g, backward.hidden);
    for (std::size_t t = steps; t-- > 0;) {
        state = lstm_peephole_step(g, params, backward, sequence[t], state);
        bwd[t] = state.hidden;
    }

    EncoderOutput out;
    out.width = 2 * forward.hidden;
    out.states.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) out.states.push_back(g.concat({fwd[t], bwd[t]}));
    return out;
}

LstmState decoder_step(Graph& g, const ParameterSet& params, const PeepholeLstmParams& cell, NodeId y_prev,
                       const LstmState& prev, NodeId context) {
    const std::size_t need = vector_length(g, y_prev) + vector_length(g, context);
    if (need != cell.input) {
        throw ShapeError("decoder input is " + std::to_string(need) + " wide (target + context), cell expects " +
                         std::to_string(cell.input));
    }
    return lstm_peephole_step(g, params, cell, g.concat({y_prev, context}), prev);
}

OutputProjection add_output_projection(ParameterSet& params, const std::string& prefix, std::size_t hidden,
                                       std::mt19937_64& rng) {
    OutputProjection proj;
    proj.hidden = hidden;
    proj.weight = params.add(prefix + ".weight", uniform_init({1, hidden}, hidden, rng), Penalty::weight);
    proj.bias = params.add(prefix + ".bias", Tensor({1}), Penalty::bias);
    return proj;
}

NodeId output_projection(Graph& g, const ParameterSet& params, const LstmState& state,
                         const OutputProjection& proj) {
    if (vector_length(g, state.hidden) != proj.hidden) {
        throw ShapeError("projection expects hidden size " + std::to_string(proj.hidden));
    }
    return g.add(g.matmul(params.node(g, proj.weight), state.hidden), params.node(g, proj.bias));
}

}  // namespace pbca::recurrent

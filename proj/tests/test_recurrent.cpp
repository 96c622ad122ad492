#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pbca/error.hpp"
#include "pbca/recurrent.hpp"

using namespace pbca;
using namespace pbca::recurrent;

namespace {

struct Cell {
    ParameterSet params;
    PeepholeLstmParams lstm;
};

Cell make_cell(std::size_t input, std::size_t hidden, std::uint64_t seed) {
    Cell c;
    std::mt19937_64 rng(seed);
    c.lstm = add_lstm(c.params, "cell", input, hidden, rng);
    return c;
}

void zero_all(ParameterSet& params) {
    for (Slot s = 0; s < params.size(); ++s) {
        for (auto& v : params.value(s).values()) v = 0.0;
    }
}

void randomize(ParameterSet& params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Slot s = 0; s < params.size(); ++s) {
        for (auto& v : params.value(s).values()) v = u(rng);
    }
}

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

// Scalar-by-scalar peephole step, written independently of the graph code.
struct RefState {
    std::vector<double> h, c;
};

RefState reference_step(const ParameterSet& ps, const PeepholeLstmParams& p, const std::vector<double>& x,
                        const RefState& prev) {
    const std::size_t n = p.hidden;
    auto pre = [&](Slot w, Slot r, Slot b, std::size_t k) {
        double acc = ps.value(b)[k];
        for (std::size_t q = 0; q < p.input; ++q) acc += ps.value(w).at(k, q) * x[q];
        for (std::size_t q = 0; q < n; ++q) acc += ps.value(r).at(k, q) * prev.h[q];
        return acc;
    };
    RefState next{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t k = 0; k < n; ++k) {
        const double i = sigmoid(pre(p.w_input, p.r_input, p.b_input, k) + ps.value(p.p_input)[k] * prev.c[k]);
        const double f = sigmoid(pre(p.w_forget, p.r_forget, p.b_forget, k) + ps.value(p.p_forget)[k] * prev.c[k]);
        const double g = std::tanh(pre(p.w_cell, p.r_cell, p.b_cell, k));
        next.c[k] = f * prev.c[k] + i * g;
        const double o = sigmoid(pre(p.w_output, p.r_output, p.b_output, k) + ps.value(p.p_output)[k] * next.c[k]);
        next.h[k] = o * std::tanh(next.c[k]);
    }
    return next;
}

std::vector<double> values(const Graph& g, NodeId id) {
    const auto v = g.value(id);
    return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("zero parameters and state give a zero step") {
    auto c = make_cell(2, 3, 1);
    zero_all(c.params);
    Graph g;
    const auto x = g.constant(Tensor({2}));
    const auto s = lstm_peephole_step(g, c.params, c.lstm, x, zero_state(g, 3));
    const auto root = g.concat({s.hidden, s.cell});
    const auto v = g.evaluate(root, c.params.values());
    for (double e : v.values()) CHECK(e == 0.0);
}

TEST_CASE("saturated forget and input gates carry the cell state") {
    auto c = make_cell(1, 2, 1);
    zero_all(c.params);
    for (auto& v : c.params.value(c.lstm.b_forget).values()) v = 20.0;
    for (auto& v : c.params.value(c.lstm.b_input).values()) v = -20.0;
    Graph g;
    const auto x = g.constant(Tensor::vector({0.3}));
    const LstmState prev{g.constant(Tensor::vector({0.1, -0.2})), g.constant(Tensor::vector({0.7, -1.3}))};
    const auto s = lstm_peephole_step(g, c.params, c.lstm, x, prev);
    g.evaluate(s.cell, c.params.values());
    CHECK(std::abs(g.value(s.cell)[0] - 0.7) < 1e-8);
    CHECK(std::abs(g.value(s.cell)[1] + 1.3) < 1e-8);
}

TEST_CASE("single step matches the scalar reference") {
    auto c = make_cell(1, 2, 47);
    randomize(c.params, 47);
    Graph g;
    const auto s = lstm_peephole_step(g, c.params, c.lstm, g.constant(Tensor::vector({0.5})), zero_state(g, 2));
    g.evaluate(g.concat({s.hidden, s.cell}), c.params.values());
    const auto ref = reference_step(c.params, c.lstm, {0.5}, {{0, 0}, {0, 0}});
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(std::abs(g.value(s.hidden)[k] - ref.h[k]) <= 1e-12);
        CHECK(std::abs(g.value(s.cell)[k] - ref.c[k]) <= 1e-12);
    }
}

TEST_CASE("multi-step sequence matches the scalar reference") {
    auto c = make_cell(3, 4, 5);
    randomize(c.params, 6);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Graph g;
    LstmState s = zero_state(g, 4);
    RefState ref{std::vector<double>(4), std::vector<double>(4)};
    for (int t = 0; t < 10; ++t) {
        std::vector<double> x{u(rng), u(rng), u(rng)};
        s = lstm_peephole_step(g, c.params, c.lstm, g.constant(Tensor::vector(x)), s);
        ref = reference_step(c.params, c.lstm, x, ref);
    }
    g.evaluate(g.concat({s.hidden, s.cell}), c.params.values());
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::abs(g.value(s.hidden)[k] - ref.h[k]) <= 1e-12);
        CHECK(std::abs(g.value(s.cell)[k] - ref.c[k]) <= 1e-12);
    }
}

TEST_CASE("step dimension mismatch is a shape error") {
    auto c = make_cell(2, 3, 1);
    Graph g;
    CHECK_THROWS_AS(lstm_peephole_step(g, c.params, c.lstm, g.constant(Tensor({3})), zero_state(g, 3)), ShapeError);
    CHECK_THROWS_AS(lstm_peephole_step(g, c.params, c.lstm, g.constant(Tensor({2})), zero_state(g, 2)), ShapeError);
}

TEST_CASE("initialization ranges") {
    auto c = make_cell(2, 3, 9);
    const double bound = 1.0 / std::sqrt(5.0);
    for (double v : c.params.value(c.lstm.w_input).values()) CHECK(std::abs(v) <= bound);
    for (double v : c.params.value(c.lstm.r_cell).values()) CHECK(std::abs(v) <= bound);
    CHECK(c.params.value(c.lstm.b_forget) == Tensor({3}, 1.0));
    CHECK(c.params.value(c.lstm.b_input) == Tensor({3}, 0.0));
    CHECK(c.params.penalty(c.lstm.b_cell) == Penalty::bias);
    CHECK(c.params.penalty(c.lstm.w_output) == Penalty::weight);
}

struct Bidi {
    ParameterSet params;
    PeepholeLstmParams fwd, bwd;
};

Bidi make_bidi(std::size_t input, std::size_t hidden, std::uint64_t seed) {
    Bidi b;
    std::mt19937_64 rng(seed);
    b.fwd = add_lstm(b.params, "fwd", input, hidden, rng);
    b.bwd = add_lstm(b.params, "bwd", input, hidden, rng);
    return b;
}

std::vector<NodeId> sequence_nodes(Graph& g, const std::vector<double>& xs) {
    std::vector<NodeId> seq;
    for (double x : xs) seq.push_back(g.constant(Tensor::vector({x})));
    return seq;
}

TEST_CASE("bidirectional encoder shapes") {
    auto b = make_bidi(1, 3, 2);
    Graph g;
    const auto seq = sequence_nodes(g, {1, 2, 3, 4, 5});
    const auto out = encode_bidirectional(g, b.params, seq, b.fwd, b.bwd);
    CHECK(out.states.size() == 5);
    CHECK(out.width == 6);
    for (auto s : out.states) CHECK(g.dims(s) == Dims{6});
}

TEST_CASE("empty sequence is a contract error") {
    auto b = make_bidi(1, 3, 2);
    Graph g;
    CHECK_THROWS_AS(encode_bidirectional(g, b.params, {}, b.fwd, b.bwd), ContractError);
}

TEST_CASE("zero encoder parameters give zero states") {
    auto b = make_bidi(1, 2, 2);
    zero_all(b.params);
    Graph g;
    const auto out = encode_bidirectional(g, b.params, sequence_nodes(g, {0.5, -1, 2}), b.fwd, b.bwd);
    const auto v = g.evaluate(g.concat(out.states), b.params.values());
    for (double e : v.values()) CHECK(e == 0.0);
}

TEST_CASE("palindrome with shared weights mirrors the halves") {
    Bidi b;
    std::mt19937_64 rng(4);
    b.fwd = add_lstm(b.params, "fwd", 1, 3, rng);
    b.bwd = b.fwd;
    Graph g;
    const std::vector<double> xs{0.2, -0.7, 1.1, -0.7, 0.2};
    const auto out = encode_bidirectional(g, b.params, sequence_nodes(g, xs), b.fwd, b.bwd);
    g.evaluate(g.concat(out.states), b.params.values());
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const auto a = values(g, out.states[j]);
        const auto m = values(g, out.states[xs.size() - 1 - j]);
        for (std::size_t k = 0; k < 3; ++k) CHECK(a[k] == m[3 + k]);
    }
}

TEST_CASE("forward half ignores later inputs, backward half earlier ones") {
    auto b = make_bidi(1, 3, 12);
    const std::vector<double> base{0.1, 0.4, -0.3, 0.9, -0.5, 0.2};
    const std::size_t j = 2;
    auto run = [&](const std::vector<double>& xs) {
        Graph g;
        const auto out = encode_bidirectional(g, b.params, sequence_nodes(g, xs), b.fwd, b.bwd);
        g.evaluate(g.concat(out.states), b.params.values());
        return values(g, out.states[j]);
    };
    const auto ref = run(base);
    auto later = base;
    later[4] += 1.0;
    auto earlier = base;
    earlier[0] -= 1.0;
    const auto a = run(later);
    const auto e = run(earlier);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(a[k] == ref[k]);
        CHECK(e[3 + k] == ref[3 + k]);
    }
    CHECK(a[3] != ref[3]);
    CHECK(e[0] != ref[0]);
}

TEST_CASE("long sequences stay finite and bounded") {
    auto c = make_cell(1, 4, 21);
    randomize(c.params, 22);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    Graph g;
    LstmState s = zero_state(g, 4);
    for (int t = 0; t < 1000; ++t) s = lstm_peephole_step(g, c.params, c.lstm, g.constant(Tensor::vector({u(rng)})), s);
    g.evaluate(g.concat({s.hidden, s.cell}), c.params.values());
    for (double v : g.value(s.hidden)) CHECK(std::abs(v) < 1.0);
    for (double v : g.value(s.cell)) CHECK(std::isfinite(v));
}

TEST_CASE("decoder step is the cell on the concatenated input") {
    auto c = make_cell(9, 4, 31);
    Graph g;
    const auto y = g.constant(Tensor::vector({0.25}));
    std::vector<double> ctx(8);
    for (std::size_t k = 0; k < 8; ++k) ctx[k] = 0.1 * static_cast<double>(k) - 0.3;
    const auto context = g.constant(Tensor::vector(ctx));
    const LstmState prev{g.constant(Tensor::vector({0.1, 0.2, 0.3, 0.4})), g.constant(Tensor::vector({-0.1, 0, 0.1, 0.2}))};
    const auto a = decoder_step(g, c.params, c.lstm, y, prev, context);
    const auto b = lstm_peephole_step(g, c.params, c.lstm, g.concat({y, context}), prev);
    g.evaluate(g.concat({a.hidden, a.cell, b.hidden, b.cell}), c.params.values());
    CHECK(values(g, a.hidden) == values(g, b.hidden));
    CHECK(values(g, a.cell) == values(g, b.cell));
}

TEST_CASE("decoder with zero parameters stays at zero") {
    auto c = make_cell(3, 2, 1);
    zero_all(c.params);
    Graph g;
    const auto s = decoder_step(g, c.params, c.lstm, g.constant(Tensor::vector({1.0})), zero_state(g, 2),
                                g.constant(Tensor::vector({0.5, -0.5})));
    const auto v = g.evaluate(g.concat({s.hidden, s.cell}), c.params.values());
    for (double e : v.values()) CHECK(e == 0.0);
}

TEST_CASE("decoder width contract") {
    auto c = make_cell(8, 4, 1);
    Graph g;
    const auto y = g.constant(Tensor::vector({0.0}));
    const auto context = g.constant(Tensor({8}));
    CHECK_THROWS_AS(decoder_step(g, c.params, c.lstm, y, zero_state(g, 4), context), ShapeError);
}

TEST_CASE("output projection") {
    ParameterSet params;
    std::mt19937_64 rng(3);
    const auto proj = add_output_projection(params, "out", 4, rng);
    Graph g;
    const std::vector<double> h{0.3, -0.8, 0.5, 0.1};
    const LstmState s{g.constant(Tensor::vector(h)), g.constant(Tensor({4}))};
    const auto y = output_projection(g, params, s, proj);

    SUBCASE("bias only") {
        params.value(proj.weight) = Tensor({1, 4}, 0.0);
        params.value(proj.bias) = Tensor::vector({1.5});
        CHECK(g.evaluate(y, params.values())[0] == 1.5);
    }
    SUBCASE("selector") {
        params.value(proj.weight) = Tensor::matrix(1, 4, {1, 0, 0, 0});
        params.value(proj.bias) = Tensor::vector({0.0});
        CHECK(g.evaluate(y, params.values())[0] == 0.3);
    }
    SUBCASE("dot product") {
        params.value(proj.bias) = Tensor::vector({0.25});
        double dot = 0.25;
        for (std::size_t k = 0; k < 4; ++k) dot += params.value(proj.weight)[k] * h[k];
        CHECK(std::abs(g.evaluate(y, params.values())[0] - dot) <= 1e-15);
    }
    SUBCASE("mismatch") {
        const LstmState bad{g.constant(Tensor({3})), g.constant(Tensor({3}))};
        CHECK_THROWS_AS(output_projection(g, params, bad, proj), ShapeError);
    }
}

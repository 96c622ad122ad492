#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pbca/autodiff.hpp"
#include "pbca/error.hpp"

using namespace pbca;

namespace {

Tensor random_tensor(const Dims& dims, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(dims);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// Values of a graph with no parameters.
Tensor eval(Graph& g, NodeId root) {
    return g.evaluate(root, {});
}

}  // namespace

TEST_CASE("tanh of zero is zero") {
    Graph g;
    const auto r = g.tanh(g.constant(0.0));
    CHECK(eval(g, r)[0] == 0.0);
}

TEST_CASE("softmax of equal scores is uniform") {
    Graph g;
    const auto r = g.softmax(g.constant(Tensor::vector({0, 0, 0})));
    const auto v = eval(g, r);
    for (std::size_t k = 0; k < 3; ++k) CHECK(v[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("matmul 2x3 by 3-vector") {
    Graph g;
    const auto a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    const auto b = g.constant(Tensor::vector({1, 0, -1}));
    const auto r = g.matmul(a, b);
    CHECK(g.dims(r) == Dims{2});
    const auto v = eval(g, r);
    CHECK(v[0] == -2.0);
    CHECK(v[1] == -2.0);
}

TEST_CASE("matmul agrees with a triple loop") {
    std::mt19937_64 rng(3);
    const auto a = random_tensor({4, 5}, rng);
    const auto b = random_tensor({5, 3}, rng);
    Graph g;
    const auto r = g.matmul(g.constant(a), g.constant(b));
    const auto v = eval(g, r);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 5; ++k) acc += a.at(i, k) * b.at(k, j);
            CHECK(v.at(i, j) == doctest::Approx(acc).epsilon(1e-14));
        }
    }
}

TEST_CASE("shape errors at build time") {
    Graph g;
    const auto a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    const auto b = g.constant(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
    CHECK_THROWS_AS(g.add(a, b), ShapeError);
    CHECK_THROWS_AS(g.hadamard(b, g.constant(Tensor::vector({1, 2, 3}))), ShapeError);
    CHECK_THROWS_AS(g.slice(b, 1, 2), ShapeError);
    CHECK_THROWS_AS(g.column_lookup(a, 3), ShapeError);
    CHECK_THROWS_AS(g.scalar_lookup(b, 2), ShapeError);
}

TEST_CASE("binding with wrong dims is a shape error") {
    Graph g;
    const auto p = g.parameter(0, {2});
    const auto r = g.sum(p);
    const std::vector<Tensor> bad{Tensor::vector({1, 2, 3})};
    CHECK_THROWS_AS(g.evaluate(r, bad), ShapeError);
}

TEST_CASE("non-finite values raise a numeric error") {
    Graph g;
    const auto p = g.parameter(0, {1});
    const auto r = g.square(p);
    const std::vector<Tensor> bind{Tensor::vector({1e200})};
    CHECK_THROWS_AS(g.evaluate(r, bind), NumericError);
}

TEST_CASE("square gradient") {
    Graph g;
    const auto x = g.parameter(0, {1});
    const auto loss = g.square(x);
    const std::vector<Tensor> bind{Tensor::vector({3.0})};
    g.evaluate(loss, bind);
    const auto grad = g.backward(loss);
    CHECK(grad[0][0] == 6.0);
}

TEST_CASE("sum of softmax has zero gradient") {
    Graph g;
    const auto e = g.parameter(0, {4});
    const auto loss = g.sum(g.softmax(e));
    const std::vector<Tensor> bind{Tensor::vector({0.3, -1.2, 2.0, 0.1})};
    g.evaluate(loss, bind);
    const auto grad = g.backward(loss);
    for (double v : grad[0].values()) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("non-scalar loss is a contract error") {
    Graph g;
    const auto x = g.parameter(0, {2});
    const auto y = g.tanh(x);
    const std::vector<Tensor> bind{Tensor::vector({1, 2})};
    g.evaluate(y, bind);
    CHECK_THROWS_AS((void)g.backward(y), ContractError);
    CHECK_THROWS_AS(finite_diff_check([](Graph& h) { return h.tanh(h.parameter(0, {2})); }, bind), ContractError);
}

TEST_CASE("unreached parameters get zero gradients") {
    Graph g;
    const auto x = g.parameter(0, {1});
    g.parameter(1, {3});
    const auto loss = g.square(x);
    const std::vector<Tensor> bind{Tensor::vector({2.0}), Tensor::vector({1, 2, 3})};
    g.evaluate(loss, bind);
    const auto grad = g.backward(loss);
    REQUIRE(grad.size() == 2);
    CHECK(grad[1] == Tensor({3}, 0.0));
}

TEST_CASE("finite difference check on simple functions") {
    SUBCASE("quadratic is exact") {
        const std::vector<Tensor> point{Tensor::vector({1.0})};
        const auto r = finite_diff_check([](Graph& g) { return g.square(g.parameter(0, {1})); }, point);
        CHECK(r.max_relative_error < 1e-8);
    }
    SUBCASE("constant has no gradient") {
        const std::vector<Tensor> point{Tensor::vector({0.7, 0.2})};
        const auto r = finite_diff_check(
            [](Graph& g) {
                g.parameter(0, {2});
                return g.constant(4.0);
            },
            point);
        CHECK(r.max_relative_error == 0.0);
    }
}

TEST_CASE("mixed five-node graph matches finite differences") {
    std::mt19937_64 rng(11);
    const std::vector<Tensor> point{random_tensor({3, 3}, rng), random_tensor({3}, rng), random_tensor({3}, rng)};
    const auto f = [](Graph& g) {
        const auto w = g.parameter(0, {3, 3});
        const auto x = g.parameter(1, {3});
        const auto y = g.parameter(2, {3});
        const auto h = g.tanh(g.matmul(w, x));
        return g.sum(g.hadamard(h, y));
    };
    CHECK(finite_diff_check(f, point).max_relative_error < 1e-4);
}

// Each op is checked on its own so a failure names the op.
TEST_CASE("every op passes a gradient check on random inputs") {
    std::mt19937_64 rng(2024);
    const Tensor m = random_tensor({3, 4}, rng);
    const Tensor v = random_tensor({4}, rng);
    const Tensor w = random_tensor({4}, rng);
    const Tensor weights = random_tensor({4}, rng);

    // Reduces any vector node to a scalar with non-uniform weights.
    const auto reduce = [weights](Graph& g, NodeId node) {
        const auto& d = g.dims(node);
        if (d == Dims{1}) return node;
        const std::size_t len = d.size() == 1 ? d[0] : d[0] * d[1];
        std::vector<double> c(len);
        for (std::size_t k = 0; k < len; ++k) c[k] = weights[k % weights.size()] + 0.1 * static_cast<double>(k);
        const auto flat = d.size() == 1 ? node : g.concat([&] {
            std::vector<NodeId> cols;
            for (std::size_t col = 0; col < d[1]; ++col) cols.push_back(g.column_lookup(node, col));
            return cols;
        }());
        return g.sum(g.hadamard(flat, g.constant(Tensor::vector(c))));
    };

    struct Case {
        const char* name;
        std::vector<Tensor> point;
        std::function<NodeId(Graph&)> build;
    };
    const std::vector<Case> cases{
        {"matmul", {m, v}, [&](Graph& g) { return reduce(g, g.matmul(g.parameter(0, {3, 4}), g.parameter(1, {4}))); }},
        {"add", {v, w}, [&](Graph& g) { return reduce(g, g.add(g.parameter(0, {4}), g.parameter(1, {4}))); }},
        {"hadamard", {v, w}, [&](Graph& g) { return reduce(g, g.hadamard(g.parameter(0, {4}), g.parameter(1, {4}))); }},
        {"tanh", {v}, [&](Graph& g) { return reduce(g, g.tanh(g.parameter(0, {4}))); }},
        {"sigmoid", {v}, [&](Graph& g) { return reduce(g, g.sigmoid(g.parameter(0, {4}))); }},
        {"softmax-masked", {v}, [&](Graph& g) { return reduce(g, g.softmax_masked(g.parameter(0, {4}), {0, 1, 0, 0})); }},
        {"concat", {v, w}, [&](Graph& g) { return reduce(g, g.concat({g.parameter(0, {4}), g.parameter(1, {4})})); }},
        {"slice", {v}, [&](Graph& g) { return reduce(g, g.slice(g.parameter(0, {4}), 1, 2)); }},
        {"column-lookup", {m}, [&](Graph& g) { return reduce(g, g.column_lookup(g.parameter(0, {3, 4}), 2)); }},
        {"scalar-lookup", {v}, [&](Graph& g) { return reduce(g, g.scalar_lookup(g.parameter(0, {4}), 3)); }},
        {"sum", {m}, [&](Graph& g) { return g.sum(g.parameter(0, {3, 4})); }},
        {"mean", {v}, [&](Graph& g) { return g.mean(g.hadamard(g.parameter(0, {4}), g.parameter(0, {4}))); }},
        {"square", {v}, [&](Graph& g) { return reduce(g, g.square(g.parameter(0, {4}))); }},
        {"matmul row x matrix", {v, m}, [&](Graph& g) {
             const auto row = g.parameter(0, {4});
             const auto mat = g.parameter(1, {3, 4});
             return reduce(g, g.matmul(mat, g.tanh(row)));
         }},
        {"scalar times vector", {Tensor::vector({0.4}), v}, [&](Graph& g) {
             return reduce(g, g.matmul(g.parameter(1, {4}), g.parameter(0, {1})));
         }},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        const auto r = finite_diff_check(c.build, c.point);
        CHECK(r.max_relative_error < 1e-4);
    }
}

TEST_CASE("masked softmax invariants") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 9);
        std::vector<double> s(n);
        std::vector<std::uint8_t> mask(n);
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = u(rng);
            mask[k] = coin(rng) ? 1 : 0;
        }
        mask[n - 1] = 0;
        Graph g;
        const auto r = g.softmax_masked(g.constant(Tensor::vector(s)), mask);
        const auto v = eval(g, r);
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(v[k] >= 0.0);
            if (mask[k]) CHECK(v[k] == 0.0);
            total += v[k];
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("fully masked softmax is a contract error") {
    Graph g;
    const auto s = g.constant(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(g.softmax_masked(s, {1, 1}), ContractError);
}

TEST_CASE("lookups route gradient to the selected entry only") {
    std::mt19937_64 rng(8);
    const Tensor m = random_tensor({3, 5}, rng);
    Graph g;
    const auto p = g.parameter(0, {3, 5});
    const auto col = g.column_lookup(p, 2);
    const auto loss = g.sum(g.square(g.add(g.scalar_lookup(col, 1), g.constant(Tensor::vector({0.5})))));
    const std::vector<Tensor> bind{m};
    g.evaluate(loss, bind);
    const auto grad = g.backward(loss);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 5; ++c) {
            if (r == 1 && c == 2) CHECK(grad[0].at(r, c) == 2.0 * (m.at(1, 2) + 0.5));
            else CHECK(grad[0].at(r, c) == 0.0);
        }
    }
}

TEST_CASE("evaluation is bit-deterministic and re-bindable") {
    std::mt19937_64 rng(9);
    const std::vector<Tensor> a{random_tensor({4, 4}, rng), random_tensor({4}, rng)};
    const std::vector<Tensor> b{random_tensor({4, 4}, rng), random_tensor({4}, rng)};
    Graph g;
    const auto loss = g.sum(g.sigmoid(g.matmul(g.parameter(0, {4, 4}), g.tanh(g.parameter(1, {4})))));
    const auto first = g.evaluate(loss, a);
    const auto ga = g.backward(loss);
    g.evaluate(loss, b);
    const auto again = g.evaluate(loss, a);
    CHECK(first == again);
    CHECK(g.backward(loss).slots == ga.slots);
}

TEST_CASE("topological order holds by construction") {
    Graph g;
    const auto a = g.constant(1.0);
    const auto b = g.tanh(a);
    const auto c = g.add(a, b);
    for (NodeId id = 0; id < g.size(); ++id) {
        for (auto op : g.node(id).operands) CHECK(op < id);
    }
    CHECK(g.node(c).op == Op::add);
}

TEST_CASE("gradient map accumulate and scale") {
    GradientMap a{{Tensor::vector({1, 2})}};
    GradientMap b{{Tensor::vector({3, 4})}};
    a.accumulate(b);
    a.scale(0.5);
    CHECK(a[0] == Tensor::vector({2, 3}));
}

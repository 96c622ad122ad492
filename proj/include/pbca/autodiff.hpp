#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pbca {

using Dims = std::vector<std::size_t>;

std::string format_dims(const Dims& dims);

/// Dense row-major float64 array. Vectors have rank 1, matrices rank 2.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Dims dims, double fill = 0.0);
    Tensor(Dims dims, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    [[nodiscard]] const Dims& dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
    [[nodiscard]] std::size_t rows() const noexcept { return dims_.empty() ? 0 : dims_[0]; }
    [[nodiscard]] std::size_t cols() const noexcept { return dims_.size() < 2 ? 1 : dims_[1]; }

    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<double> values() noexcept { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    bool operator==(const Tensor&) const = default;

private:
    Dims dims_;
    std::vector<double> values_;
};

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
    constant,
    parameter,
    matmul,
    add,
    hadamard,
    tanh,
    sigmoid,
    softmax_masked,
    concat,
    slice,
    column_lookup,
    scalar_lookup,
    sum,
    mean,
    square,
};

const char* op_name(Op op);

struct GraphNode {
    NodeId id = 0;
    Op op = Op::constant;
    std::vector<NodeId> operands;
    Dims dims;
    // parameter: binding slot; slice: offset; lookups: selected index.
    std::size_t index = 0;
    // slice: element count.
    std::size_t length = 0;
    // softmax_masked: 1 marks an excluded entry.
    std::vector<std::uint8_t> mask;
};

/// Gradient of a scalar loss with respect to every bound parameter, indexed by
/// binding slot. Slots the loss does not reach hold zeros.
struct GradientMap {
    std::vector<Tensor> slots;

    [[nodiscard]] std::size_t size() const noexcept { return slots.size(); }
    const Tensor& operator[](std::size_t slot) const { return slots[slot]; }
    Tensor& operator[](std::size_t slot) { return slots[slot]; }

    // Element-wise this += other (slot by slot, ascending).
    void accumulate(const GradientMap& other);
    void scale(double factor);
};

/// Computation graph built in topological order: every operand id is smaller
/// than the id of the node that consumes it. Shapes are inferred while the
/// graph is built; values are filled by evaluate(), gradients by backward().
///
/// Parameters are placeholders bound by slot number at evaluation time, so
/// one graph can be re-evaluated at perturbed parameter values.
class Graph {
public:
    NodeId constant(Tensor value);
    NodeId constant(double value) { return constant(Tensor::scalar(value)); }
    // One node per slot: repeated calls with the same slot return the same node.
    NodeId parameter(std::size_t slot, const Dims& dims);

    // [r,k] x [k,c]. A rank-1 operand of length n is treated as an [n,1]
    // column; the result is rank 1 whenever `b` is.
    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId tanh(NodeId a);
    NodeId sigmoid(NodeId a);
    // Softmax over a vector; entries with mask[k] != 0 get exactly 0 and are
    // excluded from both the max and the normalizer.
    NodeId softmax_masked(NodeId scores, std::vector<std::uint8_t> mask);
    NodeId softmax(NodeId scores);
    NodeId concat(std::span<const NodeId> parts);
    NodeId concat(std::initializer_list<NodeId> parts) {
        return concat(std::span<const NodeId>(parts.begin(), parts.size()));
    }
    NodeId slice(NodeId a, std::size_t offset, std::size_t length);
    // Column `col` of a matrix, as a vector.
    NodeId column_lookup(NodeId matrix, std::size_t col);
    // Element `index` of a vector, as a length-1 tensor.
    NodeId scalar_lookup(NodeId vec, std::size_t index);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId square(NodeId a);

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] const GraphNode& node(NodeId id) const { return nodes_.at(id); }
    [[nodiscard]] const Dims& dims(NodeId id) const { return nodes_.at(id).dims; }

    /// Fills values of nodes 0..root in ascending id order and returns the
    /// root value. `bindings[slot]` supplies every parameter node.
    Tensor evaluate(NodeId root, std::span<const Tensor> bindings);

    /// Gradient of a scalar loss node; evaluate() must have reached it.
    [[nodiscard]] GradientMap backward(NodeId loss) const;

    // Valid after evaluate() covered `id`.
    [[nodiscard]] std::span<const double> value(NodeId id) const;
    [[nodiscard]] Tensor value_tensor(NodeId id) const;

private:
    NodeId push(GraphNode node);
    [[nodiscard]] std::string describe(NodeId id) const;

    std::vector<GraphNode> nodes_;
    std::vector<std::size_t> offsets_;  // value offset of each node in the arena
    std::size_t arena_size_ = 0;
    std::vector<std::size_t> constant_index_;  // per node; into constants_
    std::vector<Tensor> constants_;
    std::vector<NodeId> slot_nodes_;  // slot -> node, or kNoNode
    std::vector<double> arena_;
    std::vector<Dims> binding_dims_;
    std::size_t evaluated_ = 0;  // number of nodes with valid values
};

/// Builds a scalar loss from parameter slots (one per entry of `point`).
using GraphBuilder = std::function<NodeId(Graph&)>;

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_slot = 0;
    std::size_t worst_index = 0;
    double backprop = 0.0;
    double central_difference = 0.0;
};

/// Compares backward() against central differences at `point`, coordinate by
/// coordinate: |bp - cd| / max(|cd|, 1e-8).
GradientCheckResult finite_diff_check(const GraphBuilder& f, std::span<const Tensor> point,
                                      double epsilon = 1e-5);

}  // namespace pbca

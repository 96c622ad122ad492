#include "pbca/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pbca/error.hpp"

namespace pbca {

namespace {

constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

std::size_t element_count(const Dims& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

// Effective [rows, cols] of a matmul operand.
std::pair<std::size_t, std::size_t> as_matrix(const Dims& dims) {
    if (dims.size() == 1) return {dims[0], 1};
    return {dims[0], dims[1]};
}

double sigmoid_value(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

std::string format_dims(const Dims& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)), values_(element_count(dims_), fill) {
    for (auto d : dims_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive: " + format_dims(dims_));
    }
}

Tensor::Tensor(Dims dims, std::vector<double> values) : dims_(std::move(dims)), values_(std::move(values)) {
    for (auto d : dims_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive: " + format_dims(dims_));
    }
    if (element_count(dims_) != values_.size()) {
        throw ShapeError("tensor " + format_dims(dims_) + " needs " + std::to_string(element_count(dims_)) +
                         " values, got " + std::to_string(values_.size()));
    }
}

Tensor Tensor::scalar(double value) {
    return Tensor({1}, std::vector<double>{value});
}

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

void GradientMap::accumulate(const GradientMap& other) {
    if (slots.empty()) {
        slots = other.slots;
        return;
    }
    if (slots.size() != other.slots.size()) throw ShapeError("gradient maps cover different slot counts");
    for (std::size_t s = 0; s < slots.size(); ++s) {
        auto dst = slots[s].values();
        auto src = other.slots[s].values();
        if (dst.size() != src.size()) throw ShapeError("gradient slot " + std::to_string(s) + " size mismatch");
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
}

void GradientMap::scale(double factor) {
    for (auto& t : slots) {
        for (auto& v : t.values()) v *= factor;
    }
}

const char* op_name(Op op) {
    switch (op) {
        case Op::constant: return "constant";
        case Op::parameter: return "parameter";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::hadamard: return "hadamard";
        case Op::tanh: return "tanh";
        case Op::sigmoid: return "sigmoid";
        case Op::softmax_masked: return "softmax-masked";
        case Op::concat: return "concat";
        case Op::slice: return "slice";
        case Op::column_lookup: return "column-lookup";
        case Op::scalar_lookup: return "scalar-lookup";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::square: return "square";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Graph construction

std::string Graph::describe(NodeId id) const {
    const auto& n = nodes_.at(id);
    return std::string(op_name(n.op)) + " #" + std::to_string(id) + " " + format_dims(n.dims);
}

NodeId Graph::push(GraphNode node) {
    if (nodes_.size() >= kNoNode) throw ContractError("graph too large");
    node.id = static_cast<NodeId>(nodes_.size());
    for (auto operand : node.operands) {
        if (operand >= node.id) throw ContractError("operand #" + std::to_string(operand) + " does not exist yet");
    }
    offsets_.push_back(arena_size_);
    arena_size_ += element_count(node.dims);
    constant_index_.push_back(0);
    nodes_.push_back(std::move(node));
    return nodes_.back().id;
}

NodeId Graph::constant(Tensor value) {
    if (value.rank() == 0) throw ShapeError("constant must have rank >= 1");
    GraphNode n;
    n.op = Op::constant;
    n.dims = value.dims();
    const auto id = push(std::move(n));
    constant_index_[id] = constants_.size();
    constants_.push_back(std::move(value));
    return id;
}

NodeId Graph::parameter(std::size_t slot, const Dims& dims) {
    if (slot < slot_nodes_.size() && slot_nodes_[slot] != kNoNode) {
        const auto existing = slot_nodes_[slot];
        if (nodes_[existing].dims != dims) {
            throw ShapeError("parameter slot " + std::to_string(slot) + " redeclared as " + format_dims(dims) +
                             ", first declared by " + describe(existing));
        }
        return existing;
    }
    if (dims.empty() || element_count(dims) == 0) throw ShapeError("parameter dims must be positive");
    GraphNode n;
    n.op = Op::parameter;
    n.dims = dims;
    n.index = slot;
    const auto id = push(std::move(n));
    if (slot >= slot_nodes_.size()) slot_nodes_.resize(slot + 1, kNoNode);
    slot_nodes_[slot] = id;
    return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const auto& da = dims(a);
    const auto& db = dims(b);
    if (da.size() > 2 || db.size() > 2) throw ShapeError("matmul supports rank <= 2: " + describe(a) + ", " + describe(b));
    auto [r, k] = as_matrix(da);
    auto [k2, c] = as_matrix(db);
    if (k != k2) throw ShapeError("matmul inner dimensions differ: " + describe(a) + " x " + describe(b));
    GraphNode n;
    n.op = Op::matmul;
    n.operands = {a, b};
    n.dims = db.size() == 1 ? Dims{r} : Dims{r, c};
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    if (dims(a) != dims(b)) throw ShapeError("add operands differ: " + describe(a) + " + " + describe(b));
    GraphNode n;
    n.op = Op::add;
    n.operands = {a, b};
    n.dims = dims(a);
    return push(std::move(n));
}

NodeId Graph::hadamard(NodeId a, NodeId b) {
    if (dims(a) != dims(b)) throw ShapeError("hadamard operands differ: " + describe(a) + " * " + describe(b));
    GraphNode n;
    n.op = Op::hadamard;
    n.operands = {a, b};
    n.dims = dims(a);
    return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
    GraphNode n;
    n.op = Op::tanh;
    n.operands = {a};
    n.dims = dims(a);
    return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
    GraphNode n;
    n.op = Op::sigmoid;
    n.operands = {a};
    n.dims = dims(a);
    return push(std::move(n));
}

NodeId Graph::softmax_masked(NodeId scores, std::vector<std::uint8_t> mask) {
    const auto& d = dims(scores);
    if (d.size() != 1) throw ShapeError("softmax needs a vector: " + describe(scores));
    if (mask.empty()) mask.assign(d[0], 0);
    if (mask.size() != d[0]) {
        throw ShapeError("softmax mask length " + std::to_string(mask.size()) + " vs " + describe(scores));
    }
    if (std::all_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) {
        throw ContractError("softmax with every entry masked: " + describe(scores));
    }
    GraphNode n;
    n.op = Op::softmax_masked;
    n.operands = {scores};
    n.dims = d;
    n.mask = std::move(mask);
    return push(std::move(n));
}

NodeId Graph::softmax(NodeId scores) {
    return softmax_masked(scores, {});
}

NodeId Graph::concat(std::span<const NodeId> parts) {
    if (parts.empty()) throw ContractError("concat of nothing");
    std::size_t total = 0;
    for (auto p : parts) {
        if (dims(p).size() != 1) throw ShapeError("concat needs vectors: " + describe(p));
        total += dims(p)[0];
    }
    GraphNode n;
    n.op = Op::concat;
    n.operands.assign(parts.begin(), parts.end());
    n.dims = {total};
    return push(std::move(n));
}

NodeId Graph::slice(NodeId a, std::size_t offset, std::size_t length) {
    const auto& d = dims(a);
    if (d.size() != 1) throw ShapeError("slice needs a vector: " + describe(a));
    if (length == 0 || offset + length > d[0]) {
        throw ShapeError("slice [" + std::to_string(offset) + ", +" + std::to_string(length) + ") out of " + describe(a));
    }
    GraphNode n;
    n.op = Op::slice;
    n.operands = {a};
    n.dims = {length};
    n.index = offset;
    n.length = length;
    return push(std::move(n));
}

NodeId Graph::column_lookup(NodeId matrix, std::size_t col) {
    const auto& d = dims(matrix);
    if (d.size() != 2) throw ShapeError("column lookup needs a matrix: " + describe(matrix));
    if (col >= d[1]) throw ShapeError("column " + std::to_string(col) + " out of " + describe(matrix));
    GraphNode n;
    n.op = Op::column_lookup;
    n.operands = {matrix};
    n.dims = {d[0]};
    n.index = col;
    return push(std::move(n));
}

NodeId Graph::scalar_lookup(NodeId vec, std::size_t index) {
    const auto& d = dims(vec);
    if (d.size() != 1) throw ShapeError("scalar lookup needs a vector: " + describe(vec));
    if (index >= d[0]) throw ShapeError("index " + std::to_string(index) + " out of " + describe(vec));
    GraphNode n;
    n.op = Op::scalar_lookup;
    n.operands = {vec};
    n.dims = {1};
    n.index = index;
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    GraphNode n;
    n.op = Op::sum;
    n.operands = {a};
    n.dims = {1};
    return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
    GraphNode n;
    n.op = Op::mean;
    n.operands = {a};
    n.dims = {1};
    return push(std::move(n));
}

NodeId Graph::square(NodeId a) {
    GraphNode n;
    n.op = Op::square;
    n.operands = {a};
    n.dims = dims(a);
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Evaluation

std::span<const double> Graph::value(NodeId id) const {
    if (id >= evaluated_) throw ContractError("node #" + std::to_string(id) + " has not been evaluated");
    return {arena_.data() + offsets_[id], element_count(nodes_[id].dims)};
}

Tensor Graph::value_tensor(NodeId id) const {
    auto v = value(id);
    return Tensor(nodes_[id].dims, std::vector<double>(v.begin(), v.end()));
}

Tensor Graph::evaluate(NodeId root, std::span<const Tensor> bindings) {
    if (root >= nodes_.size()) throw ContractError("root #" + std::to_string(root) + " is not in the graph");
    arena_.resize(arena_size_);
    binding_dims_.clear();
    binding_dims_.reserve(bindings.size());
    for (const auto& b : bindings) binding_dims_.push_back(b.dims());
    evaluated_ = 0;

    double* arena = arena_.data();
    for (NodeId id = 0; id <= root; ++id) {
        const auto& n = nodes_[id];
        double* out = arena + offsets_[id];
        const std::size_t count = element_count(n.dims);
        auto in = [&](std::size_t k) -> const double* { return arena + offsets_[n.operands[k]]; };

        switch (n.op) {
            case Op::constant: {
                const auto& c = constants_[constant_index_[id]];
                std::copy(c.values().begin(), c.values().end(), out);
                break;
            }
            case Op::parameter: {
                if (n.index >= bindings.size()) {
                    throw ContractError("parameter slot " + std::to_string(n.index) + " is unbound (" + describe(id) + ")");
                }
                const auto& b = bindings[n.index];
                if (b.dims() != n.dims) {
                    throw ShapeError("binding for slot " + std::to_string(n.index) + " has dims " +
                                     format_dims(b.dims()) + ", node " + describe(id) + " expects " +
                                     format_dims(n.dims));
                }
                std::copy(b.values().begin(), b.values().end(), out);
                break;
            }
            case Op::matmul: {
                auto [r, k] = as_matrix(dims(n.operands[0]));
                auto c = as_matrix(dims(n.operands[1])).second;
                const double* a = in(0);
                const double* b = in(1);
                if (c == 1) {
                    for (std::size_t i = 0; i < r; ++i) {
                        const double* row = a + i * k;
                        double acc = 0.0;
                        for (std::size_t p = 0; p < k; ++p) acc += row[p] * b[p];
                        out[i] = acc;
                    }
                    break;
                }
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * c + j];
                        out[i * c + j] = acc;
                    }
                }
                break;
            }
            case Op::add: {
                const double* a = in(0);
                const double* b = in(1);
                for (std::size_t i = 0; i < count; ++i) out[i] = a[i] + b[i];
                break;
            }
            case Op::hadamard: {
                const double* a = in(0);
                const double* b = in(1);
                for (std::size_t i = 0; i < count; ++i) out[i] = a[i] * b[i];
                break;
            }
            case Op::tanh: {
                const double* a = in(0);
                for (std::size_t i = 0; i < count; ++i) out[i] = std::tanh(a[i]);
                break;
            }
            case Op::sigmoid: {
                const double* a = in(0);
                for (std::size_t i = 0; i < count; ++i) out[i] = sigmoid_value(a[i]);
                break;
            }
            case Op::softmax_masked: {
                const double* a = in(0);
                double top = -std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < count; ++i) {
                    if (!n.mask[i]) top = std::max(top, a[i]);
                }
                double total = 0.0;
                for (std::size_t i = 0; i < count; ++i) {
                    out[i] = n.mask[i] ? 0.0 : std::exp(a[i] - top);
                    total += out[i];
                }
                for (std::size_t i = 0; i < count; ++i) out[i] /= total;
                break;
            }
            case Op::concat: {
                double* dst = out;
                for (std::size_t k = 0; k < n.operands.size(); ++k) {
                    const auto len = element_count(dims(n.operands[k]));
                    std::copy(in(k), in(k) + len, dst);
                    dst += len;
                }
                break;
            }
            case Op::slice: {
                std::copy(in(0) + n.index, in(0) + n.index + n.length, out);
                break;
            }
            case Op::column_lookup: {
                const auto& d = dims(n.operands[0]);
                for (std::size_t r = 0; r < d[0]; ++r) out[r] = in(0)[r * d[1] + n.index];
                break;
            }
            case Op::scalar_lookup: {
                out[0] = in(0)[n.index];
                break;
            }
            case Op::sum:
            case Op::mean: {
                const auto len = element_count(dims(n.operands[0]));
                double acc = 0.0;
                for (std::size_t i = 0; i < len; ++i) acc += in(0)[i];
                out[0] = n.op == Op::mean ? acc / static_cast<double>(len) : acc;
                break;
            }
            case Op::square: {
                const double* a = in(0);
                for (std::size_t i = 0; i < count; ++i) out[i] = a[i] * a[i];
                break;
            }
        }

        for (std::size_t i = 0; i < count; ++i) {
            if (!std::isfinite(out[i])) {
                throw NumericError("non-finite value in " + describe(id) + " at element " + std::to_string(i));
            }
        }
        evaluated_ = id + 1u;
    }
    return value_tensor(root);
}

// ---------------------------------------------------------------------------
// Reverse sweep

GradientMap Graph::backward(NodeId loss) const {
    if (loss >= nodes_.size()) throw ContractError("loss #" + std::to_string(loss) + " is not in the graph");
    if (nodes_[loss].dims != Dims{1}) throw ContractError("loss must be scalar, got " + describe(loss));
    if (loss >= evaluated_) throw ContractError("evaluate() has not reached the loss node");

    // Reused across calls; page faults on a fresh buffer dominate small graphs.
    thread_local std::vector<double> grad;
    grad.assign(offsets_[loss] + 1, 0.0);
    std::vector<std::uint8_t> touched(loss + 1u, 0);
    grad[offsets_[loss]] = 1.0;
    touched[loss] = 1;

    const double* val = arena_.data();
    for (NodeId id = loss + 1u; id-- > 0;) {
        if (!touched[id]) continue;
        const auto& n = nodes_[id];
        const std::size_t count = element_count(n.dims);
        const double* g = grad.data() + offsets_[id];
        const double* y = val + offsets_[id];
        auto gin = [&](std::size_t k) {
            touched[n.operands[k]] = 1;
            return grad.data() + offsets_[n.operands[k]];
        };
        auto vin = [&](std::size_t k) { return val + offsets_[n.operands[k]]; };

        switch (n.op) {
            case Op::constant:
            case Op::parameter:
                break;
            case Op::matmul: {
                auto [r, k] = as_matrix(dims(n.operands[0]));
                auto c = as_matrix(dims(n.operands[1])).second;
                const double* a = vin(0);
                const double* b = vin(1);
                double* ga = gin(0);
                if (c == 1) {
                    // Matrix-vector: ga += g b^T, gb += a^T g, both row-contiguous.
                    double* gb = gin(1);
                    for (std::size_t i = 0; i < r; ++i) {
                        const double gi = g[i];
                        double* ga_row = ga + i * k;
                        const double* a_row = a + i * k;
                        for (std::size_t p = 0; p < k; ++p) {
                            ga_row[p] += gi * b[p];
                            gb[p] += a_row[p] * gi;
                        }
                    }
                    break;
                }
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * b[p * c + j];
                        ga[i * k + p] += acc;
                    }
                }
                double* gb = gin(1);
                for (std::size_t p = 0; p < k; ++p) {
                    for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < r; ++i) acc += a[i * k + p] * g[i * c + j];
                        gb[p * c + j] += acc;
                    }
                }
                break;
            }
            case Op::add: {
                double* ga = gin(0);
                for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
                double* gb = gin(1);
                for (std::size_t i = 0; i < count; ++i) gb[i] += g[i];
                break;
            }
            case Op::hadamard: {
                const double* a = vin(0);
                const double* b = vin(1);
                double* ga = gin(0);
                for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * b[i];
                double* gb = gin(1);
                for (std::size_t i = 0; i < count; ++i) gb[i] += g[i] * a[i];
                break;
            }
            case Op::tanh: {
                double* ga = gin(0);
                for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::sigmoid: {
                double* ga = gin(0);
                for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::softmax_masked: {
                double dot = 0.0;
                for (std::size_t i = 0; i < count; ++i) dot += y[i] * g[i];
                double* ga = gin(0);
                for (std::size_t i = 0; i < count; ++i) {
                    if (!n.mask[i]) ga[i] += y[i] * (g[i] - dot);
                }
                break;
            }
            case Op::concat: {
                const double* src = g;
                for (std::size_t k = 0; k < n.operands.size(); ++k) {
                    const auto len = element_count(dims(n.operands[k]));
                    double* dst = gin(k);
                    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                    src += len;
                }
                break;
            }
            case Op::slice: {
                double* ga = gin(0) + n.index;
                for (std::size_t i = 0; i < n.length; ++i) ga[i] += g[i];
                break;
            }
            case Op::column_lookup: {
                const auto& d = dims(n.operands[0]);
                double* ga = gin(0);
                for (std::size_t r = 0; r < d[0]; ++r) ga[r * d[1] + n.index] += g[r];
                break;
            }
            case Op::scalar_lookup: {
                gin(0)[n.index] += g[0];
                break;
            }
            case Op::sum:
            case Op::mean: {
                const auto len = element_count(dims(n.operands[0]));
                const double d = n.op == Op::mean ? g[0] / static_cast<double>(len) : g[0];
                double* ga = gin(0);
                for (std::size_t i = 0; i < len; ++i) ga[i] += d;
                break;
            }
            case Op::square: {
                const double* a = vin(0);
                double* ga = gin(0);
                for (std::size_t i = 0; i < count; ++i) ga[i] += 2.0 * a[i] * g[i];
                break;
            }
        }
    }

    GradientMap out;
    out.slots.reserve(binding_dims_.size());
    for (const auto& d : binding_dims_) out.slots.emplace_back(d);
    for (std::size_t slot = 0; slot < slot_nodes_.size() && slot < out.slots.size(); ++slot) {
        const auto id = slot_nodes_[slot];
        if (id == kNoNode || id > loss || !touched[id]) continue;
        const double* g = grad.data() + offsets_[id];
        auto dst = out.slots[slot].values();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericError("non-finite gradient for parameter slot " + std::to_string(slot));
            }
            dst[i] = g[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

GradientCheckResult finite_diff_check(const GraphBuilder& f, std::span<const Tensor> point, double epsilon) {
    if (!(epsilon > 0.0)) throw ContractError("finite difference step must be positive");
    Graph g;
    const NodeId loss = f(g);
    if (g.dims(loss) != Dims{1}) throw ContractError("finite difference target must be scalar");

    std::vector<Tensor> probe(point.begin(), point.end());
    g.evaluate(loss, probe);
    const GradientMap analytic = g.backward(loss);

    GradientCheckResult result;
    for (std::size_t slot = 0; slot < probe.size(); ++slot) {
        for (std::size_t i = 0; i < probe[slot].size(); ++i) {
            const double saved = probe[slot][i];
            probe[slot][i] = saved + epsilon;
            const double up = g.evaluate(loss, probe)[0];
            probe[slot][i] = saved - epsilon;
            const double down = g.evaluate(loss, probe)[0];
            probe[slot][i] = saved;

            const double cd = (up - down) / (2.0 * epsilon);
            const double bp = analytic[slot][i];
            const double err = std::abs(bp - cd) / std::max(std::abs(cd), 1e-8);
            if (err > result.max_relative_error) {
                result = {err, slot, i, bp, cd};
            }
        }
    }
    return result;
}

}  // namespace pbca

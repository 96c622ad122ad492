#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pbca/autodiff.hpp"

namespace pbca {

using Slot = std::size_t;

// Whether a parameter takes part in the L2 penalty.
enum class Penalty { weight, bias, position };

/// Named trainable arrays addressed by slot; the slot order is the binding
/// order handed to Graph::evaluate.
class ParameterSet {
public:
    Slot add(std::string name, Tensor init, Penalty penalty);

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const Tensor> values() const noexcept { return values_; }
    [[nodiscard]] const Tensor& value(Slot s) const { return values_.at(s); }
    Tensor& value(Slot s) { return values_.at(s); }
    [[nodiscard]] const std::string& name(Slot s) const { return names_.at(s); }
    [[nodiscard]] Penalty penalty(Slot s) const { return penalties_.at(s); }
    [[nodiscard]] std::optional<Slot> find(std::string_view name) const;
    [[nodiscard]] std::size_t scalar_count() const;

    // Parameter node for `s` in `g`, declared with the stored dims.
    NodeId node(Graph& g, Slot s) const { return g.parameter(s, values_.at(s).dims()); }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::vector<Penalty> penalties_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) entries.
Tensor uniform_init(const Dims& dims, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace pbca

#include "pbca/parameters.hpp"

#include <cmath>

#include "pbca/error.hpp"

namespace pbca {

Slot ParameterSet::add(std::string name, Tensor init, Penalty penalty) {
    if (find(name)) throw ContractError("duplicate parameter name: " + name);
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    penalties_.push_back(penalty);
    return values_.size() - 1;
}

std::optional<Slot> ParameterSet::find(std::string_view name) const {
    for (Slot s = 0; s < names_.size(); ++s) {
        if (names_[s] == name) return s;
    }
    return std::nullopt;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

Tensor uniform_init(const Dims& dims, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor t(dims);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

}  // namespace pbca

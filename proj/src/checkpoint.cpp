#include "pbca/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "pbca/config.hpp"
#include "pbca/error.hpp"

namespace pbca::checkpoint {

static_assert(std::numeric_limits<double>::is_iec559, "checkpoints store IEEE-754 doubles");

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
    unsigned char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ConfigError("checkpoint truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
    return v;
}

}  // namespace

void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays) {
    out.write(kMagic, sizeof(kMagic) - 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        if (a.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("array name too long");
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(a.value.rank()));
        for (auto d : a.value.dims()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : a.value.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw ConfigError("failed writing checkpoint");
}

std::vector<NamedArray> read_arrays(std::istream& in) {
    char magic[sizeof(kMagic) - 1];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ConfigError("not a checkpoint: bad magic bytes");
    }
    const auto count = get_le<std::uint32_t>(in);
    std::vector<NamedArray> arrays;
    for (std::uint32_t a = 0; a < count; ++a) {
        NamedArray arr;
        const auto len = get_le<std::uint16_t>(in);
        arr.name.resize(len);
        if (len && !in.read(arr.name.data(), len)) throw ConfigError("checkpoint truncated");
        const auto rank = get_le<std::uint8_t>(in);
        if (rank == 0) throw ConfigError("checkpoint array '" + arr.name + "' has rank 0");
        Dims dims;
        std::size_t total = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            const auto d = get_le<std::uint32_t>(in);
            if (d == 0) throw ConfigError("checkpoint array '" + arr.name + "' has a zero dimension");
            dims.push_back(d);
            total *= d;
        }
        std::vector<double> values(total);
        for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
        arr.value = Tensor(std::move(dims), std::move(values));
        arrays.push_back(std::move(arr));
    }
    return arrays;
}

void save(std::ostream& out, const model::ForecastModel& m, const std::string& extra_config) {
    std::vector<NamedArray> arrays;
    const std::string text = config::model_text(m.config()) + extra_config;
    std::vector<double> bytes;
    bytes.reserve(text.size());
    for (unsigned char c : text) bytes.push_back(static_cast<double>(c));
    arrays.push_back({kConfigName, Tensor::vector(std::move(bytes))});
    const auto& params = m.params();
    for (Slot s = 0; s < params.size(); ++s) arrays.push_back({params.name(s), params.value(s)});
    write_arrays(out, arrays);
}

void save(const std::string& path, const model::ForecastModel& m, const std::string& extra_config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    save(out, m, extra_config);
}

Loaded load_full(std::istream& in) {
    const auto arrays = read_arrays(in);
    if (arrays.empty() || arrays.front().name != kConfigName) {
        throw ConfigError("checkpoint does not start with " + std::string(kConfigName));
    }
    std::string text;
    for (double v : arrays.front().value.values()) {
        if (!(v >= 0.0 && v <= 255.0) || v != static_cast<double>(static_cast<int>(v))) {
            throw ConfigError("corrupt config block in checkpoint");
        }
        text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    std::istringstream config_in(text);
    config::RunConfig run = config::parse(config_in, kConfigName);
    model::ForecastModel m(run.model);
    auto& params = m.params();
    if (arrays.size() - 1 != params.size()) {
        throw ConfigError("checkpoint has " + std::to_string(arrays.size() - 1) + " parameter arrays, model needs " +
                          std::to_string(params.size()));
    }
    for (std::size_t a = 1; a < arrays.size(); ++a) {
        const auto slot = params.find(arrays[a].name);
        if (!slot) throw ConfigError("checkpoint array '" + arrays[a].name + "' is not a model parameter");
        if (arrays[a].value.dims() != params.value(*slot).dims()) {
            throw ConfigError("checkpoint array '" + arrays[a].name + "' has dims " +
                              format_dims(arrays[a].value.dims()) + ", model expects " +
                              format_dims(params.value(*slot).dims()));
        }
        params.value(*slot) = arrays[a].value;
    }
    return {std::move(m), std::move(run)};
}

Loaded load_full(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    return load_full(in);
}

model::ForecastModel load(std::istream& in) {
    return load_full(in).model;
}

model::ForecastModel load(const std::string& path) {
    return load_full(path).model;
}

}  // namespace pbca::checkpoint

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pbca/autodiff.hpp"
#include "pbca/config.hpp"
#include "pbca/model.hpp"

namespace pbca::checkpoint {

// File layout, all integers little-endian:
//   "PBCA1\n"
//   u32 array count
//   per array: u16 name length, name bytes, u8 rank, rank x u32 dims,
//              prod(dims) x f64 values
// The first array is "__config__": the model config as key = value text,
// one byte per f64 element.
inline constexpr char kMagic[] = "PBCA1\n";
inline constexpr char kConfigName[] = "__config__";

struct NamedArray {
    std::string name;
    Tensor value;
};

void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_arrays(std::istream& in);

// `extra_config` is appended to the config block (e.g. data options).
void save(std::ostream& out, const model::ForecastModel& m, const std::string& extra_config = {});
void save(const std::string& path, const model::ForecastModel& m, const std::string& extra_config = {});

struct Loaded {
    model::ForecastModel model;
    config::RunConfig run;
};

Loaded load_full(std::istream& in);
Loaded load_full(const std::string& path);
model::ForecastModel load(std::istream& in);
model::ForecastModel load(const std::string& path);

}  // namespace pbca::checkpoint

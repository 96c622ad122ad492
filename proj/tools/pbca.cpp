// pbca: train, select, evaluate and inspect attention forecasting models.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pbca/checkpoint.hpp"
#include "pbca/config.hpp"
#include "pbca/data.hpp"
#include "pbca/error.hpp"
#include "pbca/metrics.hpp"
#include "pbca/model.hpp"

using namespace pbca;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Synth spec: length, components = "period:amplitude,...", noise, slope, seed.
data::SynthSpec load_synth_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synth spec " + path);
    data::SynthSpec spec;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = path + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "length") spec.length = std::stoull(value);
            else if (key == "noise") spec.noise_stddev = std::stod(value);
            else if (key == "slope") spec.slope = std::stod(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else if (key == "components") {
                std::stringstream ss(value);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    const auto colon = item.find(':');
                    if (colon == std::string::npos) throw ConfigError(where + "component must be period:amplitude");
                    spec.components.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
                }
            } else {
                throw ConfigError(where + "unknown key '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw ConfigError(where + "bad value for '" + key + "'");
        }
    }
    if (spec.length == 0) throw ConfigError(path + ": length must be positive");
    return spec;
}

void print_report(std::ostream& out, const model::TrainReport& report) {
    out << "epoch\ttrain_loss\tvalidation_mse\n";
    for (const auto& e : report.epochs) {
        out << e.epoch << '\t' << fmt(e.train_loss) << '\t' << fmt(e.validation_mse) << '\n';
    }
    if (report.best_epoch) out << "best_epoch\t" << report.epochs[*report.best_epoch].epoch << '\n';
    out << "wall_seconds\t" << fmt(report.wall_seconds) << '\n';
}

struct Loaded {
    model::ForecastModel model;
    data::PreparedData data;
};

Loaded load_model_and_data(const std::string& ckpt, const std::string& csv) {
    auto full = checkpoint::load_full(ckpt);
    auto cfg = full.run.model;
    auto prepared = config::load_dataset(csv, full.run.data, cfg);
    if (cfg.variables != full.model.config().variables) {
        throw DataError(csv + " has " + std::to_string(cfg.variables) + " value columns, model expects " +
                        std::to_string(full.model.config().variables));
    }
    return {std::move(full.model), std::move(prepared)};
}

int run_synth(const std::string& spec_path, const std::string& out_path) {
    const auto series = data::synth_periodic(load_synth_spec(spec_path));
    auto out = open_out(out_path);
    data::write_csv(out, series, true);
    return kExitOk;
}

int run_train(const std::string& csv, const std::string& cfg_path, const std::string& variant,
              const std::string& out_path, bool verbose) {
    auto run = config::load(cfg_path);
    if (!variant.empty()) run.model.variant = model::parse_variant(variant);
    auto prepared = config::load_dataset(csv, run.data, run.model);
    auto result = model::train(model::ForecastModel(run.model), prepared.dataset, verbose ? &std::cerr : nullptr);
    print_report(std::cout, result.report);
    checkpoint::save(out_path, result.model, config::data_text(run.data));
    return kExitOk;
}

int run_select(const std::string& csv, const std::string& cfg_path, const std::vector<std::string>& variants,
               const std::string& out_path, bool verbose) {
    auto run = config::load(cfg_path);
    auto prepared = config::load_dataset(csv, run.data, run.model);
    std::vector<model::ForecastModel> trained;
    for (const auto& name : variants) {
        auto cfg = run.model;
        cfg.variant = model::parse_variant(name);
        if (verbose) std::cerr << "training " << name << '\n';
        trained.push_back(model::train(model::ForecastModel(cfg), prepared.dataset, verbose ? &std::cerr : nullptr).model);
    }
    const auto sel = model::select_pi(trained, prepared.dataset);
    std::cout << "variant\tvalidation_mse\tchosen\n";
    for (std::size_t i = 0; i < trained.size(); ++i) {
        std::cout << model::variant_name(trained[i].config().variant) << '\t' << fmt(sel.validation_mse[i]) << '\t'
                  << (i == sel.chosen ? "*" : "") << '\n';
    }
    checkpoint::save(out_path, trained[sel.chosen], config::data_text(run.data));
    return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& csv) {
    const auto l = load_model_and_data(ckpt, csv);
    const auto f = model::predict(l.model, l.data.dataset, data::Partition::test);
    const auto r = metrics::evaluate(f.predicted, f.actual);
    std::cout << "examples\t" << f.predicted.size() << '\n'
              << "mse\t" << fmt(r.mse) << '\n'
              << "smape\t" << fmt(r.smape) << '\n';
    return kExitOk;
}

int run_compare(const std::string& ckpt_a, const std::string& ckpt_b, const std::string& csv, bool per_point) {
    const auto a = load_model_and_data(ckpt_a, csv);
    const auto b = load_model_and_data(ckpt_b, csv);
    const auto fa = model::predict(a.model, a.data.dataset, data::Partition::test);
    const auto fb = model::predict(b.model, b.data.dataset, data::Partition::test);
    if (fa.actual != fb.actual) throw DataError("models see different test targets; check their data options");
    std::vector<double> ea, eb;
    if (per_point) {
        ea = metrics::point_squared_errors(fa.predicted, fa.actual);
        eb = metrics::point_squared_errors(fb.predicted, fb.actual);
    } else {
        ea = metrics::evaluate(fa.predicted, fa.actual).example_squared_errors;
        eb = metrics::evaluate(fb.predicted, fb.actual).example_squared_errors;
    }
    const auto t = metrics::paired_ttest(ea, eb, 0.05);
    std::cout << "mse_a\t" << fmt(metrics::mse(fa.predicted, fa.actual)) << '\n'
              << "mse_b\t" << fmt(metrics::mse(fb.predicted, fb.actual)) << '\n'
              << "t\t" << fmt(t.t) << '\n'
              << "df\t" << fmt(t.degrees_of_freedom) << '\n'
              << "p\t" << fmt(t.p) << '\n'
              << "significant\t" << (t.significant ? "*" : "") << '\n';
    return kExitOk;
}

int run_attention(const std::string& ckpt, const std::string& csv, const std::string& out_path, std::size_t index) {
    const auto l = load_model_and_data(ckpt, csv);
    const auto p = metrics::average_attention(l.model, l.data.dataset, data::Partition::test, index);
    auto out = open_out(out_path);
    out << "lag,mean_weight\n";
    for (std::size_t j = 0; j < p.mean_weights.size(); ++j) out << p.lags[j] << ',' << fmt(p.mean_weights[j]) << '\n';
    std::cout << "argmax_lag\t" << p.lags[p.argmax_position()] << '\n';
    return kExitOk;
}

int run_acf(const std::string& csv, std::size_t max_lag, const std::string& out_path, const std::string& cfg_path) {
    config::DataOptions opts;
    if (!cfg_path.empty()) opts = config::load(cfg_path).data;
    std::ifstream in(csv);
    if (!in) throw DataError("cannot open data file " + csv);
    std::string header_line;
    std::getline(in, header_line);
    std::vector<std::string> header;
    {
        std::stringstream ss(header_line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(trim(cell));
    }
    in.seekg(0);
    data::CsvSchema schema;
    schema.columns = opts.columns;
    schema.missing_token = opts.missing_token;
    schema.timestamp_column = config::resolve_timestamp(opts.timestamp_column, header);
    const auto clean = data::interpolate_missing(data::parse_csv(in, schema, csv));
    auto out = open_out(out_path);
    out << "lag";
    for (const auto& name : clean.names) out << ',' << name;
    out << '\n';
    std::vector<std::vector<double>> acfs;
    for (const auto& col : clean.columns) acfs.push_back(metrics::autocorrelation(col, max_lag));
    for (std::size_t lag = 0; lag <= max_lag; ++lag) {
        out << lag;
        for (const auto& r : acfs) out << ',' << fmt(r[lag]);
        out << '\n';
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Position-based content attention forecasting"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log training progress to stderr");

    std::string spec_path, out_path, data_path, cfg_path, variant, model_path, model_a, model_b;
    std::vector<std::string> variants;
    std::size_t max_lag = 0;
    std::size_t attention_index = 0;
    bool per_point = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic periodic series");
    synth->add_option("--spec", spec_path)->required();
    synth->add_option("--out", out_path)->required();

    auto* train = app.add_subcommand("train", "Train one model");
    train->add_option("--data", data_path)->required();
    train->add_option("--config", cfg_path)->required();
    train->add_option("--variant", variant, "A | pi1 | pi2 | pi3 | multi-A | multi-pi1 | multi-pi2");
    train->add_option("--out", out_path)->required();

    auto* select = app.add_subcommand("select", "Train several variants and keep the best on validation");
    select->add_option("--data", data_path)->required();
    select->add_option("--config", cfg_path)->required();
    select->add_option("--variants", variants)->delimiter(',')->required();
    select->add_option("--out", out_path)->required();

    auto* eval = app.add_subcommand("eval", "MSE and SMAPE on the test split");
    eval->add_option("--model", model_path)->required();
    eval->add_option("--data", data_path)->required();

    auto* compare = app.add_subcommand("compare", "Paired t-test between two models");
    compare->add_option("--model-a", model_a)->required();
    compare->add_option("--model-b", model_b)->required();
    compare->add_option("--data", data_path)->required();
    compare->add_flag("--per-point", per_point, "Pair per-point squared errors instead of per-example MSE");

    auto* attention = app.add_subcommand("attention", "Export the averaged attention profile");
    attention->add_option("--model", model_path)->required();
    attention->add_option("--data", data_path)->required();
    attention->add_option("--out", out_path)->required();
    attention->add_option("--index", attention_index, "Attention module (multivariate variants)");

    auto* acf = app.add_subcommand("acf", "Export the autocorrelation function");
    acf->add_option("--data", data_path)->required();
    acf->add_option("--max-lag", max_lag)->required();
    acf->add_option("--out", out_path)->required();
    acf->add_option("--config", cfg_path, "Data options (columns, timestamp_column, missing_token)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*synth) return run_synth(spec_path, out_path);
        if (*train) return run_train(data_path, cfg_path, variant, out_path, verbose);
        if (*select) return run_select(data_path, cfg_path, variants, out_path, verbose);
        if (*eval) return run_eval(model_path, data_path);
        if (*compare) return run_compare(model_a, model_b, data_path, per_point);
        if (*attention) return run_attention(model_path, data_path, out_path, attention_index);
        if (*acf) return run_acf(data_path, max_lag, out_path, cfg_path);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

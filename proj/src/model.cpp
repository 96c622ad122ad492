#include "pbca/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "pbca/error.hpp"

namespace pbca::model {

using attention::Mechanism;

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::A: return "A";
        case Variant::pi1: return "pi1";
        case Variant::pi2: return "pi2";
        case Variant::pi3: return "pi3";
        case Variant::multi_A: return "multi-A";
        case Variant::multi_pi1: return "multi-pi1";
        case Variant::multi_pi2: return "multi-pi2";
    }
    return "unknown";
}

Variant parse_variant(const std::string& s) {
    for (auto v : {Variant::A, Variant::pi1, Variant::pi2, Variant::pi3, Variant::multi_A, Variant::multi_pi1,
                   Variant::multi_pi2}) {
        if (s == variant_name(v)) return v;
    }
    throw ConfigError("unknown variant '" + s + "' (A | pi1 | pi2 | pi3 | multi-A | multi-pi1 | multi-pi2)");
}

bool is_multivariate(Variant v) {
    return v == Variant::multi_A || v == Variant::multi_pi1 || v == Variant::multi_pi2;
}

Mechanism mechanism_of(Variant v) {
    switch (v) {
        case Variant::A:
        case Variant::multi_A: return Mechanism::content;
        case Variant::pi1:
        case Variant::multi_pi1: return Mechanism::pi1;
        case Variant::pi2:
        case Variant::multi_pi2: return Mechanism::pi2;
        case Variant::pi3: return Mechanism::pi3;
    }
    return Mechanism::content;
}

const char* decoder_input_name(DecoderInput d) {
    return d == DecoderInput::teacher_forced ? "teacher-forced" : "free-running";
}

void ForecastConfig::validate() const {
    if (history < 1 || horizon < 1) throw ConfigError("history and horizon must be >= 1");
    if (variables < 1) throw ConfigError("variables must be >= 1");
    if (target >= variables) throw ConfigError("target variable must be < variables");
    if (hidden < 1 || attention_units < 1) throw ConfigError("hidden and attention_units must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("l2 must be non-negative");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

// ---------------------------------------------------------------------------

ForecastModel::ForecastModel(ForecastConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const std::size_t n = config_.hidden;
    const bool per_variable = config_.variant == Variant::pi3 || is_multivariate(config_.variant);

    const std::size_t encoder_count = per_variable ? config_.variables : 1;
    for (std::size_t e = 0; e < encoder_count; ++e) {
        EncoderPair pair;
        pair.variable = per_variable ? e : config_.target;
        const std::string prefix = "encoder" + std::to_string(e);
        pair.forward = recurrent::add_lstm(params_, prefix + ".fwd", 1, n, rng);
        pair.backward = recurrent::add_lstm(params_, prefix + ".bwd", 1, n, rng);
        encoders_.push_back(pair);
    }

    const Mechanism mech = mechanism_of(config_.variant);
    if (config_.variant == Variant::pi3) {
        attentions_.push_back(attention::add_attention(params_, "attention0", mech, config_.attention_units, n,
                                                       2 * n * encoder_count, config_.history, config_.horizon,
                                                       rng));
        context_size_ = 2 * n * encoder_count;
    } else {
        for (std::size_t e = 0; e < encoder_count; ++e) {
            attentions_.push_back(attention::add_attention(params_, "attention" + std::to_string(e), mech,
                                                           config_.attention_units, n, 2 * n, config_.history,
                                                           config_.horizon, rng));
        }
        context_size_ = 2 * n * encoder_count;
    }

    decoder_ = recurrent::add_lstm(params_, "decoder", 1 + context_size_, n, rng);
    projection_ = recurrent::add_output_projection(params_, "output", n, rng);
}

// ---------------------------------------------------------------------------

ForwardGraph build_forward(Graph& g, const ForecastModel& model, std::span<const double> window,
                           std::optional<std::span<const double>> targets, DecoderInput mode) {
    const auto& cfg = model.config();
    const std::size_t steps = cfg.history;
    const std::size_t k_count = cfg.variables;
    if (window.size() != steps * k_count) {
        throw ShapeError("window has " + std::to_string(window.size()) + " values, model expects T*K = " +
                         std::to_string(steps * k_count));
    }
    if (mode == DecoderInput::teacher_forced && !targets) {
        throw ContractError("teacher-forced decoding needs targets");
    }
    if (targets && targets->size() != cfg.horizon) {
        throw ShapeError("targets have " + std::to_string(targets->size()) + " values, horizon is " +
                         std::to_string(cfg.horizon));
    }
    const auto& params = model.params();

    std::vector<recurrent::EncoderOutput> encoded;
    encoded.reserve(model.encoders().size());
    for (const auto& enc : model.encoders()) {
        std::vector<NodeId> seq;
        seq.reserve(steps);
        for (std::size_t t = 0; t < steps; ++t) seq.push_back(g.constant(window[t * k_count + enc.variable]));
        encoded.push_back(recurrent::encode_bidirectional(g, params, seq, enc.forward, enc.backward));
    }

    std::vector<attention::AttentionKeys> keys;
    const auto& atts = model.attentions();
    if (cfg.variant == Variant::pi3) {
        std::vector<NodeId> joined;
        joined.reserve(steps);
        for (std::size_t j = 0; j < steps; ++j) {
            std::vector<NodeId> parts;
            for (const auto& e : encoded) parts.push_back(e.states[j]);
            joined.push_back(g.concat(parts));
        }
        keys.push_back(attention::prepare_keys(g, params, atts[0], joined));
    } else {
        for (std::size_t a = 0; a < atts.size(); ++a) {
            keys.push_back(attention::prepare_keys(g, params, atts[a], encoded[a].states));
        }
    }

    ForwardGraph out;
    out.weights.assign(atts.size(), {});
    recurrent::LstmState state = recurrent::zero_state(g, cfg.hidden);
    NodeId y_prev = g.constant(window[(steps - 1) * k_count + cfg.target]);
    for (std::size_t i = 0; i < cfg.horizon; ++i) {
        std::vector<NodeId> contexts;
        contexts.reserve(atts.size());
        for (std::size_t a = 0; a < atts.size(); ++a) {
            auto sc = attention::score(g, params, atts[a], i, state.hidden, keys[a], cfg.masking);
            const auto res = attention::normalize_and_context(g, sc, keys[a].states);
            out.weights[a].push_back(res.weights);
            contexts.push_back(res.context);
            out.scores.push_back(std::move(sc));
        }
        const NodeId context = attention::multivariate_concat_context(g, contexts);
        out.contexts.push_back(std::move(contexts));
        state = recurrent::decoder_step(g, params, model.decoder(), y_prev, state, context);
        const NodeId y_hat = recurrent::output_projection(g, params, state, model.projection());
        out.predictions.push_back(y_hat);
        y_prev = mode == DecoderInput::teacher_forced ? g.constant((*targets)[i]) : y_hat;
    }
    out.last = out.predictions.back();
    return out;
}

namespace {

bool penalized(const ParameterSet& params, Slot s, bool regularize_all) {
    return regularize_all || params.penalty(s) == Penalty::weight;
}

}  // namespace

NodeId build_loss(Graph& g, const ForecastModel& model, const ForwardGraph& fwd, std::span<const double> targets) {
    if (targets.size() != fwd.predictions.size()) throw ContractError("predictions and targets differ in length");
    std::vector<double> negated(targets.begin(), targets.end());
    for (auto& v : negated) v = -v;
    const NodeId residual = g.add(g.concat(fwd.predictions), g.constant(Tensor::vector(std::move(negated))));
    NodeId total = g.mean(g.square(residual));

    const auto& cfg = model.config();
    if (cfg.l2 > 0.0) {
        const auto& params = model.params();
        std::optional<NodeId> penalty;
        for (Slot s = 0; s < params.size(); ++s) {
            if (!penalized(params, s, cfg.regularize_all)) continue;
            const NodeId term = g.sum(g.square(params.node(g, s)));
            penalty = penalty ? g.add(*penalty, term) : term;
        }
        if (penalty) total = g.add(total, g.matmul(*penalty, g.constant(cfg.l2)));
    }
    return total;
}

ForwardResult forward(const ForecastModel& model, std::span<const double> window,
                      std::optional<std::span<const double>> targets, DecoderInput mode) {
    Graph g;
    const auto fwd = build_forward(g, model, window, targets, mode);
    g.evaluate(fwd.last, model.params().values());

    ForwardResult out;
    for (auto p : fwd.predictions) out.predictions.push_back(g.value(p)[0]);
    const auto& cfg = model.config();
    for (const auto& per_step : fwd.weights) {
        Tensor w({cfg.horizon, cfg.history});
        for (std::size_t i = 0; i < per_step.size(); ++i) {
            const auto row = g.value(per_step[i]);
            std::copy(row.begin(), row.end(), w.values().begin() + static_cast<std::ptrdiff_t>(i * cfg.history));
        }
        out.attention.push_back(std::move(w));
    }
    return out;
}

double loss(std::span<const double> predictions, std::span<const double> targets, const ParameterSet& params,
            double l2, bool regularize_all) {
    if (predictions.size() != targets.size()) throw ContractError("predictions and targets differ in length");
    if (predictions.empty()) throw ContractError("empty predictions");
    double sse = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        sse += d * d;
    }
    double penalty = 0.0;
    for (Slot s = 0; s < params.size(); ++s) {
        if (!penalized(params, s, regularize_all)) continue;
        double sq = 0.0;
        for (double v : params.value(s).values()) sq += v * v;
        penalty += sq;
    }
    return sse / static_cast<double>(predictions.size()) + l2 * penalty;
}

// ---------------------------------------------------------------------------

AdamState make_adam(const ParameterSet& params) {
    AdamState st;
    for (const auto& v : params.values()) {
        st.first_moment.emplace_back(v.dims());
        st.second_moment.emplace_back(v.dims());
    }
    return st;
}

void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, double learning_rate) {
    if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
        throw ShapeError("gradient / optimizer state do not match the parameter set");
    }
    for (Slot s = 0; s < params.size(); ++s) {
        if (grads[s].dims() != params.value(s).dims()) {
            throw ShapeError("gradient for " + params.name(s) + " has dims " + format_dims(grads[s].dims()));
        }
        for (double g : grads[s].values()) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter " + params.name(s));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (Slot s = 0; s < params.size(); ++s) {
        auto theta = params.value(s).values();
        auto m = state.first_moment[s].values();
        auto v = state.second_moment[s].values();
        auto g = grads[s].values();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            theta[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

double clip_global_norm(GradientMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& t : grads.slots) {
        for (double v : t.values()) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
    return norm;
}

// ---------------------------------------------------------------------------

double example_gradient(const ForecastModel& model, const data::Example& ex, DecoderInput mode, GradientMap& out) {
    Graph g;
    const auto fwd = build_forward(g, model, ex.inputs, std::span<const double>(ex.targets), mode);
    const NodeId l = build_loss(g, model, fwd, ex.targets);
    const double value = g.evaluate(l, model.params().values())[0];
    out = g.backward(l);
    return value;
}

Forecasts predict(const ForecastModel& model, const data::WindowedDataset& dataset, data::Partition partition) {
    Forecasts out;
    for (const auto& ex : dataset.partition(partition)) {
        out.predicted.push_back(forward(model, ex.inputs, std::nullopt, DecoderInput::free_running).predictions);
        out.actual.push_back(ex.targets);
    }
    return out;
}

double partition_mse(const ForecastModel& model, const data::WindowedDataset& dataset, data::Partition partition) {
    const auto examples = dataset.partition(partition);
    if (examples.empty()) throw ContractError(std::string("partition ") + data::partition_name(partition) + " is empty");
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& ex : examples) {
        const auto pred = forward(model, ex.inputs, std::nullopt, DecoderInput::free_running).predictions;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - ex.targets[i];
            total += d * d;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

TrainResult train(ForecastModel model, const data::WindowedDataset& dataset, std::ostream* log) {
    const auto start = std::chrono::steady_clock::now();
    const auto& cfg = model.config();
    if (dataset.history != cfg.history || dataset.horizon != cfg.horizon || dataset.variables != cfg.variables) {
        throw ContractError("dataset windows do not match the model configuration");
    }
    const auto train_set = dataset.partition(data::Partition::train);
    if (train_set.empty()) throw ContractError("empty training split");

    TrainReport report;
    if (cfg.max_epochs > 0 && dataset.partition(data::Partition::validation).empty()) {
        throw ContractError("empty validation split");
    }

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
    AdamState adam = make_adam(model.params());
    ParameterSet best = model.params();
    double best_mse = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train_set.size());

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + cfg.batch_size);
            GradientMap batch;
            GradientMap one;
            for (std::size_t k = b; k < e; ++k) {
                loss_sum += example_gradient(model, train_set[order[k]], cfg.training_input, one);
                batch.accumulate(one);
            }
            batch.scale(1.0 / static_cast<double>(e - b));
            if (cfg.clip_norm > 0.0) clip_global_norm(batch, cfg.clip_norm);
            adam_step(model.params(), batch, adam, cfg.learning_rate);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.validation_mse = partition_mse(model, dataset, data::Partition::validation);
        report.epochs.push_back(rec);
        if (log) {
            *log << "epoch\t" << epoch << "\ttrain_loss\t" << rec.train_loss << "\tvalidation_mse\t"
                 << rec.validation_mse << '\n'
                 << std::flush;
        }
        if (rec.validation_mse < best_mse) {
            best_mse = rec.validation_mse;
            best = model.params();
            report.best_epoch = report.epochs.size() - 1;
        } else if (report.best_epoch && report.epochs.size() - 1 - *report.best_epoch >= cfg.patience) {
            break;
        }
    }
    if (report.best_epoch) model.params() = best;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(model), std::move(report)};
}

namespace {

int tie_rank(Variant v) {
    switch (v) {
        case Variant::pi1: return 0;
        case Variant::pi2: return 1;
        case Variant::pi3: return 2;
        case Variant::multi_pi1: return 3;
        case Variant::multi_pi2: return 4;
        case Variant::A: return 5;
        case Variant::multi_A: return 6;
    }
    return 7;
}

}  // namespace

std::size_t select_index(std::span<const double> mse, std::span<const Variant> variants) {
    if (mse.empty()) throw ContractError("no candidates to select from");
    if (mse.size() != variants.size()) throw ContractError("one variant per candidate MSE needed");
    std::size_t chosen = 0;
    for (std::size_t c = 1; c < mse.size(); ++c) {
        if (mse[c] < mse[chosen] || (mse[c] == mse[chosen] && tie_rank(variants[c]) < tie_rank(variants[chosen]))) {
            chosen = c;
        }
    }
    return chosen;
}

Selection select_pi(std::span<const ForecastModel> candidates, const data::WindowedDataset& dataset) {
    if (candidates.empty()) throw ContractError("no candidates to select from");
    Selection sel;
    std::vector<Variant> variants;
    for (const auto& m : candidates) {
        sel.validation_mse.push_back(partition_mse(m, dataset, data::Partition::validation));
        variants.push_back(m.config().variant);
    }
    sel.chosen = select_index(sel.validation_mse, variants);
    return sel;
}

}  // namespace pbca::model

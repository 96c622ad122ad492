#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbca/attention.hpp"
#include "pbca/autodiff.hpp"
#include "pbca/data.hpp"
#include "pbca/parameters.hpp"
#include "pbca/recurrent.hpp"

namespace pbca::model {

// A, pi1, pi2: one encoder over the target variable.
// pi3: one encoder per variable, states concatenated under a single attention.
// multi_*: one encoder and one attention per variable, contexts concatenated.
enum class Variant { A, pi1, pi2, pi3, multi_A, multi_pi1, multi_pi2 };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);
bool is_multivariate(Variant v);
attention::Mechanism mechanism_of(Variant v);

enum class DecoderInput { teacher_forced, free_running };

const char* decoder_input_name(DecoderInput d);

struct ForecastConfig {
    std::size_t history = 48;         // T
    std::size_t horizon = 4;          // T'
    std::size_t hidden = 16;          // n
    std::size_t attention_units = 256; // m
    std::size_t variables = 1;        // K
    std::size_t target = 0;
    Variant variant = Variant::pi1;
    double learning_rate = 1e-3;
    double l2 = 1e-4;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 1;
    attention::LagMasking masking = attention::LagMasking::exclude;
    // Also penalize biases and pi.
    bool regularize_all = false;
    // Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;
    DecoderInput training_input = DecoderInput::teacher_forced;

    void validate() const;
};

struct EncoderPair {
    std::size_t variable = 0;
    recurrent::PeepholeLstmParams forward;
    recurrent::PeepholeLstmParams backward;
};

class ForecastModel {
public:
    // Builds the architecture and draws initial weights from config.seed.
    explicit ForecastModel(ForecastConfig config);

    [[nodiscard]] const ForecastConfig& config() const noexcept { return config_; }
    [[nodiscard]] const ParameterSet& params() const noexcept { return params_; }
    ParameterSet& params() noexcept { return params_; }
    [[nodiscard]] const std::vector<EncoderPair>& encoders() const noexcept { return encoders_; }
    [[nodiscard]] const std::vector<attention::AttentionParams>& attentions() const noexcept { return attentions_; }
    [[nodiscard]] const recurrent::PeepholeLstmParams& decoder() const noexcept { return decoder_; }
    [[nodiscard]] const recurrent::OutputProjection& projection() const noexcept { return projection_; }
    [[nodiscard]] std::size_t context_size() const noexcept { return context_size_; }

private:
    ForecastConfig config_;
    ParameterSet params_;
    std::vector<EncoderPair> encoders_;
    std::vector<attention::AttentionParams> attentions_;
    recurrent::PeepholeLstmParams decoder_;
    recurrent::OutputProjection projection_;
    std::size_t context_size_ = 0;
};

/// Graph handles of one forward pass.
struct ForwardGraph {
    std::vector<NodeId> predictions;               // T' nodes of length 1
    std::vector<std::vector<NodeId>> weights;      // [attention][output step] -> alpha_i
    std::vector<std::vector<NodeId>> contexts;     // [output step] -> per-attention contexts
    std::vector<attention::Scores> scores;         // [attention * T' + i]
    NodeId last = 0;                               // last prediction node
};

// `window` is [T][K] row-major. Teacher forcing needs `targets`.
ForwardGraph build_forward(Graph& g, const ForecastModel& model, std::span<const double> window,
                           std::optional<std::span<const double>> targets, DecoderInput mode);

// mean((y_hat - y)^2) + l2 * sum of squared penalized entries.
NodeId build_loss(Graph& g, const ForecastModel& model, const ForwardGraph& fwd, std::span<const double> targets);

struct ForwardResult {
    std::vector<double> predictions;
    std::vector<Tensor> attention;  // per attention module, [T', T]
};

ForwardResult forward(const ForecastModel& model, std::span<const double> window,
                      std::optional<std::span<const double>> targets, DecoderInput mode);

double loss(std::span<const double> predictions, std::span<const double> targets, const ParameterSet& params,
            double l2, bool regularize_all = false);

struct AdamState {
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam(const ParameterSet& params);

void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, double learning_rate);

// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_global_norm(GradientMap& grads, double max_norm);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double validation_mse = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::optional<std::size_t> best_epoch;  // index into epochs
    double wall_seconds = 0.0;
};

struct TrainResult {
    ForecastModel model;
    TrainReport report;
};

// Loss and gradient of one example; used by train and by gradient checks.
double example_gradient(const ForecastModel& model, const data::Example& ex, DecoderInput mode, GradientMap& out);

TrainResult train(ForecastModel model, const data::WindowedDataset& dataset, std::ostream* log = nullptr);

struct Forecasts {
    std::vector<std::vector<double>> predicted;
    std::vector<std::vector<double>> actual;
};

// Free-running forecasts for every example of a partition.
Forecasts predict(const ForecastModel& model, const data::WindowedDataset& dataset, data::Partition partition);

double partition_mse(const ForecastModel& model, const data::WindowedDataset& dataset, data::Partition partition);

struct Selection {
    std::size_t chosen = 0;
    std::vector<double> validation_mse;
};

// Index of the smallest MSE; ties go to pi1, then pi2, then pi3.
std::size_t select_index(std::span<const double> mse, std::span<const Variant> variants);

// Minimal free-running validation MSE, chosen by select_index.
Selection select_pi(std::span<const ForecastModel> candidates, const data::WindowedDataset& dataset);

}  // namespace pbca::model

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurodecode/dataset.hpp"
#include "neurodecode/linalg.hpp"
#include "neurodecode/rng.hpp"

namespace neurodecode {

// Feed-forward classifier parameters. weights[l] maps layer l's input to its
// potentials: shape layer_dims[l+1] x layer_dims[l]. The last layer is the
// softmax layer. dropout_input / dropout_hidden record the rates the params
// were trained under; Test-mode evaluation scales each weight by one minus
// the drop rate of its input layer, so they must travel with the weights for
// a trained model to be evaluable on its own.
struct NetworkParams {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    double dropout_input = 0.0;
    double dropout_hidden = 0.0;

    std::size_t hidden_layers() const { return layer_dims.size() - 2; }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t class_count() const { return layer_dims.back(); }

    void validate() const;
};

struct TrainConfig {
    std::vector<double> learning_rate_grid{0.1, 1.0};
    std::size_t batch_size = 100;
    double dropout_input = 0.2;
    double dropout_hidden = 0.5;
    std::size_t patience_epochs = 100;
    std::size_t max_epochs = 10000;
    double init_std = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
};

// live[0] is the input-layer mask (length d); live[l] masks hidden layer l.
// 1 keeps the unit, 0 drops it. The softmax layer is never masked.
struct DropoutMasks {
    std::vector<std::vector<std::uint8_t>> live;
};

DropoutMasks sample_masks(std::span<const std::size_t> layer_dims, double p_input,
                          double p_hidden, Rng& rng);

// potentials[l] holds a^(l+1) (potentials[L] are the softmax logits);
// activations[l] holds z^(l) with activations[0] the (possibly masked) input.
// masks is empty for Test-mode traces.
struct ForwardTrace {
    std::vector<std::vector<double>> potentials;
    std::vector<std::vector<double>> activations;
    std::vector<double> log_probs;
    DropoutMasks masks;
};

ForwardTrace forward(const NetworkParams& params, std::span<const double> x);  // Test mode
ForwardTrace forward(const NetworkParams& params, std::span<const double> x,
                     const DropoutMasks& masks);  // Train mode

// Borrowed view into a dataset's samples; cheap to shuffle and slice.
struct SampleView {
    std::span<const double> features;
    std::size_t label = 0;
};

std::vector<SampleView> views_of(const Dataset& dataset);

// Summed (not averaged) negative log-likelihood of the true labels.
double nll_loss(const NetworkParams& params, std::span<const SampleView> batch);  // Test mode
double nll_loss(const NetworkParams& params, std::span<const SampleView> batch,
                std::span<const DropoutMasks> masks);  // Train mode, one mask set per sample

struct Gradient {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

// Gradient of the summed Train-mode loss over the batch under the given
// per-sample masks. Accumulation is sequential in batch order. When
// batch_loss is non-null the loss computed on the way is stored there.
Gradient backward(const NetworkParams& params, std::span<const SampleView> batch,
                  std::span<const DropoutMasks> masks, double* batch_loss = nullptr);

NetworkParams sgd_step(const NetworkParams& params, const Gradient& grad, double eta);
void sgd_step_inplace(NetworkParams& params, const Gradient& grad, double eta);

NetworkParams init_params(std::span<const std::size_t> layer_dims, double init_std,
                          std::uint64_t seed);

struct EpochStats {
    double train_loss = 0.0;
    double validation_accuracy = 0.0;
};

struct TrainReport {
    double chosen_learning_rate = 0.0;
    std::size_t epochs_run = 0;
    double best_validation_accuracy = 0.0;
    std::vector<EpochStats> history;
};

struct TrainResult {
    NetworkParams params;
    TrainReport report;
};

// Minibatch SGD over a learning-rate grid with early stopping on validation
// accuracy. Only a strict improvement resets patience; the parameters of the
// best-validation epoch are returned. Grid ties go to the smaller rate.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& valid_data,
                  std::span<const std::size_t> layer_dims);

std::size_t predict(const NetworkParams& params, std::span<const double> x);
double accuracy(const NetworkParams& params, const Dataset& dataset);

// Round-trips are bit-exact for finite weights.
std::string params_to_json(const NetworkParams& params);
NetworkParams params_from_json(const std::string& text);
std::string train_report_to_json(const TrainReport& report);
TrainReport train_report_from_json(const std::string& text);

}  // namespace neurodecode

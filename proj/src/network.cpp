#include "neurodecode/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "neurodecode/errors.hpp"

namespace neurodecode {
namespace {

using nlohmann::json;

void check_layer_dims(std::span<const std::size_t> dims) {
    if (dims.size() < 2)
        throw ValidationError("layer_dims must list at least the input and class layers");
    for (std::size_t n : dims)
        if (n == 0) throw ValidationError("layer_dims entries must be >= 1");
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    double max_logit = logits[0];
    for (double v : logits) max_logit = std::max(max_logit, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - max_logit);
    const double log_sum = std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - max_logit - log_sum;
    return out;
}

void check_masks(const NetworkParams& params, const DropoutMasks& masks) {
    const std::size_t expected = params.hidden_layers() + 1;
    if (masks.live.size() != expected)
        throw ValidationError("dropout masks: expected " + std::to_string(expected) +
                              " mask layers, got " + std::to_string(masks.live.size()));
    for (std::size_t l = 0; l < expected; ++l)
        if (masks.live[l].size() != params.layer_dims[l])
            throw ValidationError("dropout masks: layer " + std::to_string(l) + " mask has " +
                                  std::to_string(masks.live[l].size()) + " entries, expected " +
                                  std::to_string(params.layer_dims[l]));
}

ForwardTrace forward_impl(const NetworkParams& params, std::span<const double> x,
                          const DropoutMasks* masks) {
    if (params.layer_dims.size() < 2)
        throw ValidationError("forward: params have no layers");
    if (x.size() != params.input_dim())
        throw ValidationError("forward: input has length " + std::to_string(x.size()) +
                              ", expected " + std::to_string(params.input_dim()));
    if (masks) check_masks(params, *masks);

    const std::size_t n_layers = params.weights.size();
    ForwardTrace trace;
    trace.potentials.resize(n_layers);
    trace.activations.resize(n_layers);

    trace.activations[0].assign(x.begin(), x.end());
    if (masks)
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!masks->live[0][i]) trace.activations[0][i] = 0.0;

    for (std::size_t l = 0; l < n_layers; ++l) {
        const Matrix& w = params.weights[l];
        const std::vector<double>& z_prev = trace.activations[l];
        // Test mode rescales each weight by one minus the drop rate of the
        // layer feeding it; biases are never scaled.
        const double scale =
            masks ? 1.0 : 1.0 - (l == 0 ? params.dropout_input : params.dropout_hidden);
        std::vector<double>& a = trace.potentials[l];
        a.resize(w.rows());
        for (std::size_t i = 0; i < w.rows(); ++i) {
            double dot = 0.0;
            const std::span<const double> row = w.row(i);
            for (std::size_t j = 0; j < z_prev.size(); ++j) dot += row[j] * z_prev[j];
            a[i] = params.biases[l][i] + scale * dot;
        }
        if (l + 1 < n_layers) {
            std::vector<double>& z = trace.activations[l + 1];
            z.resize(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) z[i] = a[i] > 0.0 ? a[i] : 0.0;
            if (masks)
                for (std::size_t i = 0; i < z.size(); ++i)
                    if (!masks->live[l + 1][i]) z[i] = 0.0;
        }
    }
    trace.log_probs = log_softmax(trace.potentials.back());
    if (masks) trace.masks = *masks;
    return trace;
}

Gradient zero_gradient(const NetworkParams& params) {
    Gradient grad;
    grad.weights.reserve(params.weights.size());
    grad.biases.reserve(params.biases.size());
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        grad.weights.emplace_back(params.weights[l].rows(), params.weights[l].cols());
        grad.biases.emplace_back(params.biases[l].size(), 0.0);
    }
    return grad;
}

void check_same_shape(const NetworkParams& params, const Gradient& grad) {
    if (grad.weights.size() != params.weights.size() || grad.biases.size() != params.biases.size())
        throw ValidationError("gradient layer count does not match params");
    for (std::size_t l = 0; l < grad.weights.size(); ++l)
        if (grad.weights[l].rows() != params.weights[l].rows() ||
            grad.weights[l].cols() != params.weights[l].cols() ||
            grad.biases[l].size() != params.biases[l].size())
            throw ValidationError("gradient shape mismatch at layer " + std::to_string(l));
}

std::set<std::string> subject_ids(const Dataset& dataset) {
    std::set<std::string> ids;
    for (const Sample& s : dataset.samples) ids.insert(s.subject_id);
    return ids;
}

}  // namespace

void NetworkParams::validate() const {
    check_layer_dims(layer_dims);
    const std::size_t n_layers = layer_dims.size() - 1;
    if (weights.size() != n_layers || biases.size() != n_layers)
        throw ValidationError("params: expected " + std::to_string(n_layers) +
                              " weight/bias layers");
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l])
            throw ValidationError("params: weight layer " + std::to_string(l) + " is " +
                                  std::to_string(weights[l].rows()) + "x" +
                                  std::to_string(weights[l].cols()) + ", expected " +
                                  std::to_string(layer_dims[l + 1]) + "x" +
                                  std::to_string(layer_dims[l]));
        if (biases[l].size() != layer_dims[l + 1])
            throw ValidationError("params: bias layer " + std::to_string(l) + " has wrong size");
        for (double v : weights[l].entries())
            if (!std::isfinite(v)) throw ValidationError("params: non-finite weight");
        for (double v : biases[l])
            if (!std::isfinite(v)) throw ValidationError("params: non-finite bias");
    }
    if (!(dropout_input >= 0.0 && dropout_input < 1.0) ||
        !(dropout_hidden >= 0.0 && dropout_hidden < 1.0))
        throw ValidationError("params: dropout rates must lie in [0, 1)");
}

void TrainConfig::validate() const {
    if (learning_rate_grid.empty())
        throw ValidationError("train config: learning_rate_grid is empty");
    for (double eta : learning_rate_grid)
        if (!std::isfinite(eta) || eta <= 0.0)
            throw ValidationError("train config: learning rates must be positive and finite");
    if (batch_size == 0) throw ValidationError("train config: batch_size must be >= 1");
    if (patience_epochs == 0) throw ValidationError("train config: patience_epochs must be >= 1");
    if (!(dropout_input >= 0.0 && dropout_input < 1.0) ||
        !(dropout_hidden >= 0.0 && dropout_hidden < 1.0))
        throw ValidationError("train config: dropout probabilities must lie in [0, 1)");
    if (!std::isfinite(init_std) || init_std < 0.0)
        throw ValidationError("train config: init_std must be >= 0");
}

DropoutMasks sample_masks(std::span<const std::size_t> layer_dims, double p_input,
                          double p_hidden, Rng& rng) {
    check_layer_dims(layer_dims);
    if (!(p_input >= 0.0 && p_input < 1.0) || !(p_hidden >= 0.0 && p_hidden < 1.0))
        throw ValidationError("sample_masks: probabilities must lie in [0, 1)");
    const std::size_t n_hidden = layer_dims.size() - 2;
    DropoutMasks masks;
    masks.live.resize(n_hidden + 1);
    for (std::size_t l = 0; l <= n_hidden; ++l) {
        const double p = l == 0 ? p_input : p_hidden;
        masks.live[l].resize(layer_dims[l]);
        for (std::uint8_t& bit : masks.live[l]) bit = rng.uniform() < p ? 0 : 1;
    }
    return masks;
}

ForwardTrace forward(const NetworkParams& params, std::span<const double> x) {
    return forward_impl(params, x, nullptr);
}

ForwardTrace forward(const NetworkParams& params, std::span<const double> x,
                     const DropoutMasks& masks) {
    return forward_impl(params, x, &masks);
}

std::vector<SampleView> views_of(const Dataset& dataset) {
    std::vector<SampleView> views;
    views.reserve(dataset.samples.size());
    for (const Sample& s : dataset.samples) views.push_back({s.features, s.label});
    return views;
}

double nll_loss(const NetworkParams& params, std::span<const SampleView> batch) {
    if (batch.empty()) throw ValidationError("nll_loss: empty batch");
    double loss = 0.0;
    for (const SampleView& s : batch) {
        if (s.label >= params.class_count())
            throw ValidationError("nll_loss: label " + std::to_string(s.label) +
                                  " outside [0, " + std::to_string(params.class_count()) + ")");
        loss -= forward(params, s.features).log_probs[s.label];
    }
    return loss;
}

double nll_loss(const NetworkParams& params, std::span<const SampleView> batch,
                std::span<const DropoutMasks> masks) {
    if (batch.empty()) throw ValidationError("nll_loss: empty batch");
    if (masks.size() != batch.size())
        throw ValidationError("nll_loss: " + std::to_string(masks.size()) + " mask sets for " +
                              std::to_string(batch.size()) + " samples");
    double loss = 0.0;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (batch[n].label >= params.class_count())
            throw ValidationError("nll_loss: label " + std::to_string(batch[n].label) +
                                  " outside [0, " + std::to_string(params.class_count()) + ")");
        loss -= forward(params, batch[n].features, masks[n]).log_probs[batch[n].label];
    }
    return loss;
}

Gradient backward(const NetworkParams& params, std::span<const SampleView> batch,
                  std::span<const DropoutMasks> masks, double* batch_loss) {
    if (batch.empty()) throw ValidationError("backward: empty batch");
    if (masks.size() != batch.size())
        throw ValidationError("backward: " + std::to_string(masks.size()) + " mask sets for " +
                              std::to_string(batch.size()) + " samples");

    Gradient grad = zero_gradient(params);
    const std::size_t n_layers = params.weights.size();
    double loss = 0.0;
    std::vector<double> delta;
    std::vector<double> prev_delta;

    for (std::size_t n = 0; n < batch.size(); ++n) {
        const SampleView& s = batch[n];
        if (s.label >= params.class_count())
            throw ValidationError("backward: label " + std::to_string(s.label) + " outside [0, " +
                                  std::to_string(params.class_count()) + ")");
        const ForwardTrace trace = forward(params, s.features, masks[n]);
        loss -= trace.log_probs[s.label];

        delta.resize(params.class_count());
        for (std::size_t k = 0; k < delta.size(); ++k)
            delta[k] = std::exp(trace.log_probs[k]) - (k == s.label ? 1.0 : 0.0);

        for (std::size_t l = n_layers; l-- > 0;) {
            const std::vector<double>& z = trace.activations[l];
            Matrix& gw = grad.weights[l];
            std::vector<double>& gb = grad.biases[l];
            for (std::size_t i = 0; i < delta.size(); ++i) {
                gb[i] += delta[i];
                const double di = delta[i];
                const std::span<double> grow = gw.row(i);
                for (std::size_t j = 0; j < z.size(); ++j) grow[j] += di * z[j];
            }
            if (l == 0) break;

            const Matrix& w = params.weights[l];
            prev_delta.assign(w.cols(), 0.0);
            for (std::size_t i = 0; i < delta.size(); ++i) {
                const double di = delta[i];
                const std::span<const double> row = w.row(i);
                for (std::size_t j = 0; j < w.cols(); ++j) prev_delta[j] += row[j] * di;
            }
            // dropped units and dead ReLUs (a <= 0) pass no gradient
            const std::vector<double>& a_prev = trace.potentials[l - 1];
            const std::vector<std::uint8_t>& live = masks[n].live[l];
            for (std::size_t j = 0; j < prev_delta.size(); ++j)
                if (!live[j] || !(a_prev[j] > 0.0)) prev_delta[j] = 0.0;
            std::swap(delta, prev_delta);
        }
    }
    if (batch_loss) *batch_loss = loss;
    return grad;
}

NetworkParams sgd_step(const NetworkParams& params, const Gradient& grad, double eta) {
    NetworkParams out = params;
    sgd_step_inplace(out, grad, eta);
    return out;
}

void sgd_step_inplace(NetworkParams& params, const Gradient& grad, double eta) {
    check_same_shape(params, grad);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        std::vector<double>& w = params.weights[l].entries();
        const std::vector<double>& g = grad.weights[l].entries();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * g[i];
        for (std::size_t i = 0; i < params.biases[l].size(); ++i)
            params.biases[l][i] -= eta * grad.biases[l][i];
    }
}

NetworkParams init_params(std::span<const std::size_t> layer_dims, double init_std,
                          std::uint64_t seed) {
    check_layer_dims(layer_dims);
    if (!std::isfinite(init_std) || init_std < 0.0)
        throw ValidationError("init_params: init_std must be >= 0");

    NetworkParams params;
    params.layer_dims.assign(layer_dims.begin(), layer_dims.end());
    const std::size_t n_layers = layer_dims.size() - 1;
    Rng rng(seed);
    for (std::size_t l = 0; l < n_layers; ++l) {
        Matrix w(layer_dims[l + 1], layer_dims[l]);
        if (l + 1 < n_layers)  // softmax-layer weights stay zero
            for (double& v : w.entries()) v = rng.normal(0.0, init_std);
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(layer_dims[l + 1], 0.0);
    }
    return params;
}

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& valid_data,
                  std::span<const std::size_t> layer_dims) {
    config.validate();
    check_layer_dims(layer_dims);
    train_data.validate();
    valid_data.validate();
    if (train_data.samples.empty()) throw ValidationError("train: training set is empty");
    if (valid_data.samples.empty()) throw ValidationError("train: validation set is empty");
    if (train_data.d != layer_dims.front() || valid_data.d != layer_dims.front())
        throw ValidationError("train: layer_dims input width " +
                              std::to_string(layer_dims.front()) +
                              " does not match dataset d = " + std::to_string(train_data.d));
    if (train_data.class_count != layer_dims.back() || valid_data.class_count != layer_dims.back())
        throw ValidationError("train: layer_dims class width does not match dataset classes");

    const std::set<std::string> train_subjects = subject_ids(train_data);
    for (const std::string& id : subject_ids(valid_data))
        if (train_subjects.count(id))
            throw ValidationError("train: subject " + id +
                                  " appears in both training and validation sets");

    const std::vector<SampleView> all_views = views_of(train_data);

    std::vector<double> grid = config.learning_rate_grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    TrainResult chosen;
    double chosen_acc = -1.0;
    bool have_chosen = false;

    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double eta = grid[g];
        NetworkParams params =
            init_params(layer_dims, config.init_std, derive_seed(config.seed, Stream::Init, {g}));
        params.dropout_input = config.dropout_input;
        params.dropout_hidden = config.dropout_hidden;
        Rng shuffle_rng(derive_seed(config.seed, Stream::Shuffle, {g}));
        Rng mask_rng(derive_seed(config.seed, Stream::DropoutMask, {g}));

        NetworkParams best_params = params;
        double best_acc = -1.0;
        std::size_t stale = 0;
        std::vector<EpochStats> history;

        std::vector<std::size_t> order(all_views.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<SampleView> batch;
        std::vector<DropoutMasks> masks;

        for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
            shuffle_rng.shuffle(order);
            double epoch_loss = 0.0;
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t end = std::min(order.size(), start + config.batch_size);
                batch.clear();
                masks.clear();
                for (std::size_t i = start; i < end; ++i) {
                    batch.push_back(all_views[order[i]]);
                    masks.push_back(sample_masks(layer_dims, config.dropout_input,
                                                 config.dropout_hidden, mask_rng));
                }
                double batch_loss = 0.0;
                const Gradient grad = backward(params, batch, masks, &batch_loss);
                if (!std::isfinite(batch_loss)) {
                    std::ostringstream msg;
                    msg << "training diverged: non-finite loss at epoch " << epoch
                        << " with learning rate " << eta;
                    throw NumericalError(msg.str());
                }
                epoch_loss += batch_loss;
                sgd_step_inplace(params, grad, eta);
            }
            const double val_acc = accuracy(params, valid_data);
            history.push_back({epoch_loss, val_acc});
            if (val_acc > best_acc) {
                best_acc = val_acc;
                best_params = params;
                stale = 0;
            } else if (++stale >= config.patience_epochs) {
                break;
            }
        }
        if (history.empty()) best_acc = accuracy(params, valid_data);

        if (!have_chosen || best_acc > chosen_acc) {
            have_chosen = true;
            chosen_acc = best_acc;
            chosen.params = std::move(best_params);
            chosen.report.chosen_learning_rate = eta;
            chosen.report.epochs_run = history.size();
            chosen.report.best_validation_accuracy = best_acc;
            chosen.report.history = std::move(history);
        }
    }
    return chosen;
}

std::size_t predict(const NetworkParams& params, std::span<const double> x) {
    const ForwardTrace trace = forward(params, x);
    std::size_t best = 0;
    for (std::size_t k = 1; k < trace.log_probs.size(); ++k)
        if (trace.log_probs[k] > trace.log_probs[best]) best = k;
    return best;
}

double accuracy(const NetworkParams& params, const Dataset& dataset) {
    if (dataset.samples.empty()) throw ValidationError("accuracy: empty dataset");
    std::size_t correct = 0;
    for (const Sample& s : dataset.samples)
        if (predict(params, s.features) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(dataset.samples.size());
}

std::string params_to_json(const NetworkParams& params) {
    params.validate();
    json j;
    j["layer_dims"] = params.layer_dims;
    j["dropout_input"] = params.dropout_input;
    j["dropout_hidden"] = params.dropout_hidden;
    json weights = json::array();
    for (const Matrix& w : params.weights) weights.push_back(w.entries());
    j["weights"] = std::move(weights);
    j["biases"] = params.biases;
    return j.dump(2);
}

NetworkParams params_from_json(const std::string& text) {
    const json j = jsonutil::parse_json(text, "network params");
    NetworkParams params;
    if (!j.contains("layer_dims") || !j.at("layer_dims").is_array())
        throw ValidationError("network params: layer_dims array missing");
    for (const json& v : j.at("layer_dims")) params.layer_dims.push_back(v.get<std::size_t>());
    check_layer_dims(params.layer_dims);
    params.dropout_input = jsonutil::get_real(j, "dropout_input", 0.0);
    params.dropout_hidden = jsonutil::get_real(j, "dropout_hidden", 0.0);
    if (!j.contains("weights") || !j.at("weights").is_array() || !j.contains("biases") ||
        !j.at("biases").is_array())
        throw ValidationError("network params: weights/biases arrays missing");
    const json& jw = j.at("weights");
    const json& jb = j.at("biases");
    const std::size_t n_layers = params.layer_dims.size() - 1;
    if (jw.size() != n_layers || jb.size() != n_layers)
        throw ValidationError("network params: expected " + std::to_string(n_layers) + " layers");
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t rows = params.layer_dims[l + 1];
        const std::size_t cols = params.layer_dims[l];
        if (!jw.at(l).is_array() || jw.at(l).size() != rows * cols)
            throw ValidationError("network params: weight layer " + std::to_string(l) +
                                  " must hold " + std::to_string(rows * cols) + " entries");
        Matrix w(rows, cols);
        for (std::size_t i = 0; i < rows * cols; ++i)
            w.entries()[i] = jw.at(l).at(i).get<double>();
        params.weights.push_back(std::move(w));
        if (!jb.at(l).is_array() || jb.at(l).size() != rows)
            throw ValidationError("network params: bias layer " + std::to_string(l) +
                                  " must hold " + std::to_string(rows) + " entries");
        std::vector<double> b(rows);
        for (std::size_t i = 0; i < rows; ++i) b[i] = jb.at(l).at(i).get<double>();
        params.biases.push_back(std::move(b));
    }
    params.validate();
    return params;
}

nlohmann::json train_report_to_json_value(const TrainReport& report) {
    json j;
    j["chosen_learning_rate"] = report.chosen_learning_rate;
    j["epochs_run"] = report.epochs_run;
    j["best_validation_accuracy"] = report.best_validation_accuracy;
    json history = json::array();
    for (const EpochStats& e : report.history) {
        json entry;
        entry["train_loss"] = e.train_loss;
        entry["validation_accuracy"] = e.validation_accuracy;
        history.push_back(std::move(entry));
    }
    j["history"] = std::move(history);
    return j;
}

TrainReport train_report_from_json_value(const nlohmann::json& j) {
    TrainReport report;
    report.chosen_learning_rate = jsonutil::get_real(j, "chosen_learning_rate", 0.0);
    report.epochs_run = jsonutil::get_count(j, "epochs_run", 0);
    report.best_validation_accuracy = jsonutil::get_real(j, "best_validation_accuracy", 0.0);
    if (j.contains("history"))
        for (const json& entry : j.at("history"))
            report.history.push_back({jsonutil::get_real(entry, "train_loss", 0.0),
                                      jsonutil::get_real(entry, "validation_accuracy", 0.0)});
    return report;
}

std::string train_report_to_json(const TrainReport& report) {
    return train_report_to_json_value(report).dump(2);
}

TrainReport train_report_from_json(const std::string& text) {
    return train_report_from_json_value(jsonutil::parse_json(text, "train report"));
}

}  // namespace neurodecode

#include "neurodecode/sensitivity.hpp"

#include <cmath>
#include <string>

#include "json_util.hpp"
#include "neurodecode/errors.hpp"

namespace neurodecode {
namespace {

using nlohmann::json;

void check_class(const NetworkParams& params, std::size_t k) {
    if (k >= params.class_count())
        throw ValidationError("class index " + std::to_string(k) + " outside [0, " +
                              std::to_string(params.class_count()) + ")");
}

void check_dataset(const NetworkParams& params, const Dataset& dataset) {
    if (dataset.samples.empty()) throw ValidationError("sensitivity: empty dataset");
    if (dataset.d != params.input_dim())
        throw ValidationError("sensitivity: dataset has d = " + std::to_string(dataset.d) +
                              ", network expects " + std::to_string(params.input_dim()));
}

}  // namespace

double log_posterior(const NetworkParams& params, std::span<const double> x, std::size_t k) {
    check_class(params, k);
    return forward(params, x).log_probs[k];
}

std::vector<double> input_gradient(const NetworkParams& params, std::span<const double> x,
                                   std::size_t k) {
    check_class(params, k);
    const ForwardTrace trace = forward(params, x);
    const std::size_t n_layers = params.weights.size();

    // d log_softmax_k / d logits = indicator(k) - probabilities
    std::vector<double> delta(params.class_count());
    for (std::size_t j = 0; j < delta.size(); ++j)
        delta[j] = (j == k ? 1.0 : 0.0) - std::exp(trace.log_probs[j]);

    std::vector<double> prev;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& w = params.weights[l];
        const double scale = 1.0 - (l == 0 ? params.dropout_input : params.dropout_hidden);
        prev.assign(w.cols(), 0.0);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double di = scale * delta[i];
            const std::span<const double> row = w.row(i);
            for (std::size_t j = 0; j < w.cols(); ++j) prev[j] += row[j] * di;
        }
        if (l == 0) return prev;
        const std::vector<double>& a = trace.potentials[l - 1];
        for (std::size_t j = 0; j < prev.size(); ++j)
            if (!(a[j] > 0.0)) prev[j] = 0.0;
        std::swap(delta, prev);
    }
    return prev;  // unreachable: every params object has at least one layer
}

SensitivityKernel sensitivity_kernel(const NetworkParams& params, const Dataset& dataset,
                                     std::size_t k) {
    check_class(params, k);
    check_dataset(params, dataset);

    SensitivityKernel kernel;
    kernel.class_index = k;
    kernel.sample_count = dataset.samples.size();
    kernel.matrix = Matrix(dataset.d, dataset.d);
    for (const Sample& s : dataset.samples) {
        const std::vector<double> g = input_gradient(params, s.features, k);
        outer_accumulate(kernel.matrix, g, 1.0);
    }
    const double inv = 1.0 / static_cast<double>(kernel.sample_count);
    for (double& v : kernel.matrix.entries()) v *= inv;
    return kernel;
}

SensitivityMap sensitivity_map(const SensitivityKernel& kernel) {
    SensitivityMap map;
    map.class_index = kernel.class_index;
    map.values.reserve(kernel.matrix.rows());
    for (std::size_t i = 0; i < kernel.matrix.rows(); ++i)
        map.values.push_back(kernel.matrix(i, i));
    return map;
}

PsaResult psa(const SensitivityKernel& kernel, std::size_t m) {
    const std::size_t d = kernel.matrix.rows();
    if (m > d)
        throw ValidationError("psa: asked for " + std::to_string(m) + " maps from a " +
                              std::to_string(d) + "-feature kernel");
    const EigenPairs pairs = sym_eigen(kernel.matrix);
    PsaResult result;
    result.class_index = kernel.class_index;
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<double> v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = pairs.eigenvectors(i, j);
        result.psms.push_back(std::move(v));
        result.eigenvalues.push_back(pairs.eigenvalues[j]);
    }
    return result;
}

double directional_sensitivity(const NetworkParams& params, const Dataset& dataset,
                               std::size_t k, std::span<const double> v) {
    check_class(params, k);
    check_dataset(params, dataset);
    if (v.size() != dataset.d)
        throw ValidationError("directional_sensitivity: direction has length " +
                              std::to_string(v.size()) + ", expected " +
                              std::to_string(dataset.d));
    double norm_sq = 0.0;
    for (double c : v) norm_sq += c * c;
    if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-9)
        throw ValidationError("directional_sensitivity: direction must have unit length");

    double total = 0.0;
    for (const Sample& s : dataset.samples) {
        const std::vector<double> g = input_gradient(params, s.features, k);
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += v[i] * g[i];
        total += dot * dot;
    }
    return total * (1.0 / static_cast<double>(dataset.samples.size()));
}

std::string sensitivity_map_to_json(const SensitivityMap& map, const std::string& class_name) {
    json j;
    j["class_index"] = map.class_index;
    j["class_name"] = class_name;
    j["values"] = map.values;
    return j.dump(2);
}

std::string psa_to_json(const PsaResult& result, const std::string& class_name) {
    json j;
    j["class_index"] = result.class_index;
    j["class_name"] = class_name;
    j["eigenvalues"] = result.eigenvalues;
    j["psms"] = result.psms;
    return j.dump(2);
}

}  // namespace neurodecode

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "neurodecode/dataset.hpp"
#include "neurodecode/linalg.hpp"
#include "neurodecode/network.hpp"

namespace neurodecode {

// Per-feature mean squared partial derivative of one class's log posterior.
struct SensitivityMap {
    std::size_t class_index = 0;
    std::vector<double> values;  // length d, each >= 0
};

// Mean outer product of log-posterior input gradients over a dataset:
// (1/N) sum_n g_n g_n^T. Symmetric positive semidefinite; its diagonal is
// the sensitivity map.
struct SensitivityKernel {
    std::size_t class_index = 0;
    Matrix matrix;
    std::size_t sample_count = 0;
};

// Ranked principal sensitivity maps: the kernel's dominant eigenvectors,
// with eigenvalues equal to the directional sensitivity along each map.
struct PsaResult {
    std::size_t class_index = 0;
    std::vector<std::vector<double>> psms;  // psms[j] is the (j+1)-th map
    std::vector<double> eigenvalues;        // matching, non-increasing
};

// Test-mode log probability of class k; a projection of forward's output.
double log_posterior(const NetworkParams& params, std::span<const double> x, std::size_t k);

// Exact gradient of log_posterior with respect to the input, backpropagated
// through the Test-mode (weight-scaled, maskless) network.
std::vector<double> input_gradient(const NetworkParams& params, std::span<const double> x,
                                   std::size_t k);

// Gradients are accumulated in dataset order, then scaled by 1/N.
SensitivityKernel sensitivity_kernel(const NetworkParams& params, const Dataset& dataset,
                                     std::size_t k);

SensitivityMap sensitivity_map(const SensitivityKernel& kernel);

// Top-m eigenpairs of the kernel. m must not exceed d.
PsaResult psa(const SensitivityKernel& kernel, std::size_t m);

// Mean of (v . gradient)^2 over the dataset for a unit vector v; equals the
// kernel quadratic form v^T K v.
double directional_sensitivity(const NetworkParams& params, const Dataset& dataset,
                               std::size_t k, std::span<const double> v);

std::string sensitivity_map_to_json(const SensitivityMap& map, const std::string& class_name);
std::string psa_to_json(const PsaResult& result, const std::string& class_name);

}  // namespace neurodecode

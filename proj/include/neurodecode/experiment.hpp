#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "neurodecode/analysis.hpp"
#include "neurodecode/dataset.hpp"
#include "neurodecode/network.hpp"
#include "neurodecode/sensitivity.hpp"

namespace neurodecode {

// Where the samples come from: a CSV file on disk, or the synthetic
// generator. When synthetic, the generator seed is derived from the master
// experiment seed so one seed pins the whole pipeline.
struct DataSource {
    bool use_csv = false;
    std::filesystem::path csv;
    SynthConfig synth;
};

struct PsaConfig {
    std::size_t m = 3;
    std::string reference = "test";  // test | valid | train | all
    Linkage linkage = Linkage::Average;
};

struct ExperimentConfig {
    DataSource data;
    // Hidden-layer widths per candidate model; an empty list is a linear
    // (softmax-only) classifier.
    std::vector<std::vector<std::size_t>> architectures{{64, 64}};
    TrainConfig train;
    std::size_t n_test_subjects = 10;
    std::size_t n_valid_subjects = 10;
    std::size_t n_train_subjects = 80;
    std::size_t folds = 10;
    std::size_t fold_index = 0;  // the fold used by single-split commands
    std::vector<std::size_t> sweep_train_sizes;
    PsaConfig psa;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ArchReport {
    std::vector<std::size_t> hidden_dims;
    std::vector<double> fold_accuracy;
    double mean_accuracy = 0.0;
    double sd_accuracy = 0.0;  // population deviation over folds
    std::vector<TrainReport> fold_reports;
};

struct CvReport {
    double prior_chance_level = 0.0;
    std::vector<ArchReport> architectures;
};

// Loads the configured CSV, or synthesizes with a seed derived from the
// master seed.
Dataset load_source(const ExperimentConfig& config);

// File-name stem for an architecture: "linear" or "h<w0>-<w1>-...".
std::string architecture_name(const std::vector<std::size_t>& hidden_dims);

// Subject-wise cross validation of every architecture. Persists
// manifest.json, cv_report.json, and per-fold parameter files to
// config.output_dir. NEURODECODE_THREADS caps parallel fold jobs.
CvReport run_cv(const ExperimentConfig& config);

// run_cv once per training-set size, reusing the same subject order so the
// test and validation assignments never change; writes sweep.csv plus one
// subdirectory of cv artifacts per size.
std::vector<std::pair<std::size_t, CvReport>> run_size_sweep(const ExperimentConfig& config);

// Per-class sensitivity analysis of trained parameters against a reference
// dataset, followed by the cross-class similarity/cluster/threshold exports.
void run_psa(const ExperimentConfig& config, const NetworkParams& params,
             const Dataset& reference);

// Similarity, dendrogram, and threshold exports from an existing collection.
void run_analysis(const std::filesystem::path& output_dir, const PsmCollection& collection,
                  const std::vector<std::string>& class_names, Linkage linkage);

std::string experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const std::string& text);
std::string cv_report_to_json(const CvReport& report);
CvReport cv_report_from_json(const std::string& text);

// One row per map: class name, 1-based rank, then the d components.
std::string psm_collection_to_csv(const PsmCollection& collection,
                                  const std::vector<std::string>& class_names);
// Returns the collection plus the class names in first-appearance order.
std::pair<PsmCollection, std::vector<std::string>> psm_collection_from_csv(
    const std::string& text);

// Command-line entry point; returns the process exit code (0 ok,
// 1 validation failure, 2 numerical failure).
int run_cli(int argc, char** argv);

}  // namespace neurodecode

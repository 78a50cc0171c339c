#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "neurodecode/linalg.hpp"

namespace neurodecode {

struct Sample {
    std::string subject_id;
    std::vector<double> features;
    std::size_t label = 0;
};

struct Dataset {
    std::size_t d = 0;
    std::size_t class_count = 0;
    std::vector<std::string> class_names;  // size class_count
    std::vector<Sample> samples;

    void validate() const;  // throws ValidationError on any broken invariant

    // Distinct subject ids in ascending lexicographic order.
    std::vector<std::string> sorted_subject_ids() const;
    std::vector<std::size_t> class_counts() const;
};

// Column-wise standardization with the population (divide by n) deviation.
// Constant columns come back as all zeros instead of erroring, since real
// region-averaged data can be degenerate.
Matrix zscore(const Matrix& columns);

// Per-sample mean over the voxels assigned to each region. region_labels has
// one entry per input column; every region in [0, region_count) must appear.
Matrix region_average(const Matrix& voxels, std::span<const std::size_t> region_labels,
                      std::size_t region_count);

struct SplitSpec {
    std::size_t fold_index = 0;
    std::size_t n_test_subjects = 10;
    std::size_t n_valid_subjects = 10;
    std::size_t n_train_subjects = 80;
    std::vector<std::string> subject_order;
};

struct Splits {
    Dataset train;
    Dataset valid;
    Dataset test;
};

// Seeded Fisher-Yates permutation of the dataset's sorted subject ids.
std::vector<std::string> subject_order_for(const Dataset& dataset, std::uint64_t seed);

// Subject-wise split: test subjects for fold i are
// subject_order[i*n_test, (i+1)*n_test); validation then training subjects
// are taken, in order, from the rest. Sample order inside each split keeps
// dataset order.
Splits make_splits(const Dataset& dataset, const SplitSpec& spec);

struct SynthConfig {
    std::size_t n_subjects = 100;
    std::size_t d = 116;
    std::size_t class_count = 7;
    std::vector<std::size_t> scans_per_class;  // empty selects the default counts
    double prototype_scale = 1.0;
    double subject_distortion_scale = 0.5;
    double noise_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<std::size_t> effective_scans_per_class() const;
};

// Per-class scan counts of the reference acquisition protocol; the largest
// class holds 405 of 1940 scans (~20.88%).
std::vector<std::size_t> reference_scan_counts();
// Same proportions scaled by `scale` and rounded half away from zero, with a
// floor of one scan per class.
std::vector<std::size_t> reference_scan_counts(double scale);

// Multi-subject synthetic generator. Class prototypes live in R^d; each
// subject sees them through its own gain and additive distortion, plus
// per-scan noise; each subject's block is then z-scored column-wise.
Dataset synthesize(const SynthConfig& config);

// Largest class fraction; the accuracy floor any decoder has to beat.
double prior_chance_level(const Dataset& dataset);

Dataset load_dataset_csv(const std::filesystem::path& path);
void save_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);

std::string synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& text);
std::string split_spec_to_json(const SplitSpec& spec);
SplitSpec split_spec_from_json(const std::string& text);

}  // namespace neurodecode

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "neurodecode/linalg.hpp"

namespace neurodecode {

// One ranked principal sensitivity map of one class. psm_rank is 1-based:
// rank 1 is the dominant map.
struct PsmEntry {
    std::size_t class_index = 0;
    std::size_t psm_rank = 1;
    std::vector<double> vector;
};

struct PsmCollection {
    std::vector<PsmEntry> entries;

    void validate() const;  // same dimension, unit norms
};

struct SimilarityLabel {
    std::size_t class_index = 0;
    std::size_t psm_rank = 1;
};

// Pairwise absolute cosine similarity; symmetric with a unit diagonal.
struct SimilarityMatrix {
    std::vector<SimilarityLabel> labels;
    Matrix values;
};

enum class Linkage { Single, Complete, Average };

// Clusters carry scipy-style ids: originals are 0..n-1 and the cluster made
// by merge step s gets id n + s.
struct MergeStep {
    std::size_t cluster_a = 0;
    std::size_t cluster_b = 0;
    double merge_distance = 0.0;
};

struct Dendrogram {
    std::vector<MergeStep> merges;
    std::vector<std::size_t> leaf_order;
};

// Per-feature sign of the deviations that are at least one standard
// deviation away from the map's mean; everything closer is zeroed.
struct ThresholdedMap {
    std::vector<double> values;  // the analysed map
    std::vector<int> signs;      // each -1, 0, or +1
};

// |dot(v1, v2)| clamped to [0, 1]; both inputs must be unit vectors.
double abs_cosine(std::span<const double> v1, std::span<const double> v2);

SimilarityMatrix similarity_matrix(const PsmCollection& collection);

// Agglomerative clustering on distance 1 - similarity. Ties merge the pair
// with the lexicographically smallest cluster ids; leaf order comes from a
// traversal that descends first into the branch holding the lowest original
// index.
Dendrogram cluster(const SimilarityMatrix& matrix, Linkage linkage = Linkage::Average);

ThresholdedMap threshold_map(std::span<const double> psm);

Linkage linkage_from_name(const std::string& name);
std::string linkage_name(Linkage linkage);

// CSV with header labels "<class>_psm<rank>"; class_names maps class
// indices to names.
std::string similarity_to_csv(const SimilarityMatrix& matrix,
                              const std::vector<std::string>& class_names);
std::string dendrogram_to_json(const Dendrogram& dendrogram);
std::string threshold_to_csv(const ThresholdedMap& map);

}  // namespace neurodecode

#include "neurodecode/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "json_util.hpp"
#include "neurodecode/errors.hpp"

namespace neurodecode {
namespace {

using nlohmann::json;

void check_unit(std::span<const double> v, const char* what) {
    double norm_sq = 0.0;
    for (double c : v) {
        if (!std::isfinite(c)) throw ValidationError(std::string(what) + ": non-finite entry");
        norm_sq += c * c;
    }
    if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-9)
        throw ValidationError(std::string(what) + ": vector must have unit length");
}

// Distance between two clusters from the original distance table. Members
// are iterated in ascending index order so accumulation is deterministic.
double cluster_distance(const Matrix& dist, const std::vector<std::size_t>& a,
                        const std::vector<std::size_t>& b, Linkage linkage) {
    double best_min = std::numeric_limits<double>::infinity();
    double best_max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i : a)
        for (std::size_t j : b) {
            const double d = dist(i, j);
            best_min = std::min(best_min, d);
            best_max = std::max(best_max, d);
            sum += d;
        }
    switch (linkage) {
        case Linkage::Single: return best_min;
        case Linkage::Complete: return best_max;
        case Linkage::Average: break;
    }
    return sum / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace

void PsmCollection::validate() const {
    if (entries.empty()) throw ValidationError("psm collection: no entries");
    const std::size_t d = entries.front().vector.size();
    if (d == 0) throw ValidationError("psm collection: zero-length vectors");
    for (const PsmEntry& e : entries) {
        if (e.vector.size() != d)
            throw ValidationError("psm collection: mixed vector lengths (" + std::to_string(d) +
                                  " vs " + std::to_string(e.vector.size()) + ")");
        check_unit(e.vector, "psm collection");
    }
}

double abs_cosine(std::span<const double> v1, std::span<const double> v2) {
    if (v1.size() != v2.size())
        throw ValidationError("abs_cosine: vectors have different lengths");
    check_unit(v1, "abs_cosine");
    check_unit(v2, "abs_cosine");
    double dot = 0.0;
    for (std::size_t i = 0; i < v1.size(); ++i) dot += v1[i] * v2[i];
    return std::clamp(std::abs(dot), 0.0, 1.0);
}

SimilarityMatrix similarity_matrix(const PsmCollection& collection) {
    collection.validate();
    const std::size_t n = collection.entries.size();
    SimilarityMatrix out;
    out.values = Matrix(n, n);
    for (const PsmEntry& e : collection.entries)
        out.labels.push_back({e.class_index, e.psm_rank});
    for (std::size_t i = 0; i < n; ++i) {
        out.values(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s =
                abs_cosine(collection.entries[i].vector, collection.entries[j].vector);
            out.values(i, j) = s;
            out.values(j, i) = s;
        }
    }
    return out;
}

Dendrogram cluster(const SimilarityMatrix& matrix, Linkage linkage) {
    const std::size_t n = matrix.labels.size();
    if (n == 0) throw ValidationError("cluster: empty similarity matrix");
    if (matrix.values.rows() != n || matrix.values.cols() != n)
        throw ValidationError("cluster: matrix size does not match label count");
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(matrix.values(i, i) - 1.0) > 1e-12)
            throw ValidationError("cluster: diagonal must be 1");
        for (std::size_t j = 0; j < n; ++j) {
            const double v = matrix.values(i, j);
            if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
                throw ValidationError("cluster: similarity outside [0, 1]");
            if (std::abs(v - matrix.values(j, i)) > 1e-12)
                throw ValidationError("cluster: similarity matrix is not symmetric");
        }
    }

    Matrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            dist(i, j) = i == j ? 0.0 : std::max(0.0, 1.0 - matrix.values(i, j));

    // 0..n-1 are the originals; merge step s creates cluster n + s.
    std::vector<std::vector<std::size_t>> members(2 * n - 1);
    std::vector<std::pair<std::size_t, std::size_t>> children(2 * n - 1, {0, 0});
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};

    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i) active.push_back(i);

    Dendrogram out;
    for (std::size_t step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_a = 0, best_b = 0;
        // active is kept ascending, so this scan order is lexicographic in
        // the cluster-id pair and a strict < keeps the smallest tied pair
        for (std::size_t ai = 0; ai < active.size(); ++ai)
            for (std::size_t bi = ai + 1; bi < active.size(); ++bi) {
                const double d = cluster_distance(dist, members[active[ai]],
                                                  members[active[bi]], linkage);
                if (d < best) {
                    best = d;
                    best_a = active[ai];
                    best_b = active[bi];
                }
            }
        const std::size_t fresh = n + step;
        std::merge(members[best_a].begin(), members[best_a].end(), members[best_b].begin(),
                   members[best_b].end(), std::back_inserter(members[fresh]));
        children[fresh] = {best_a, best_b};
        out.merges.push_back({best_a, best_b, best});
        active.erase(std::remove_if(active.begin(), active.end(),
                                    [&](std::size_t id) { return id == best_a || id == best_b; }),
                     active.end());
        active.push_back(fresh);  // the fresh id is the largest: order stays ascending
    }

    // depth-first walk, descending first into the branch that contains the
    // lowest original index; for all-tied inputs this reproduces input order
    std::vector<std::size_t> stack = {2 * n - 2};
    while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        if (id < n) {
            out.leaf_order.push_back(id);
            continue;
        }
        std::size_t first = children[id].first;
        std::size_t second = children[id].second;
        if (members[second].front() < members[first].front()) std::swap(first, second);
        stack.push_back(second);  // visited after `first`
        stack.push_back(first);
    }
    return out;
}

ThresholdedMap threshold_map(std::span<const double> psm) {
    if (psm.size() < 2)
        throw ValidationError("threshold_map: need at least two features, got " +
                              std::to_string(psm.size()));
    ThresholdedMap out;
    out.values.assign(psm.begin(), psm.end());
    out.signs.assign(psm.size(), 0);
    double lo = psm[0], hi = psm[0];
    double sum = 0.0;
    for (double v : psm) {
        if (!std::isfinite(v)) throw ValidationError("threshold_map: non-finite entry");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    // a constant map has no deviation signal at all; calling it out early
    // also keeps rounding in the mean from minting spurious +/-1 entries
    if (lo == hi) return out;

    const double mean = sum / static_cast<double>(psm.size());
    double sq = 0.0;
    for (double v : psm) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(psm.size()));
    for (std::size_t i = 0; i < psm.size(); ++i) {
        const double dev = psm[i] - mean;
        if (std::abs(dev) >= sd) out.signs[i] = dev > 0.0 ? 1 : -1;
    }
    return out;
}

Linkage linkage_from_name(const std::string& name) {
    if (name == "single") return Linkage::Single;
    if (name == "complete") return Linkage::Complete;
    if (name == "average") return Linkage::Average;
    throw ValidationError("unknown linkage \"" + name +
                          "\" (expected single, complete, or average)");
}

std::string linkage_name(Linkage linkage) {
    switch (linkage) {
        case Linkage::Single: return "single";
        case Linkage::Complete: return "complete";
        case Linkage::Average: break;
    }
    return "average";
}

std::string similarity_to_csv(const SimilarityMatrix& matrix,
                              const std::vector<std::string>& class_names) {
    const std::size_t n = matrix.labels.size();
    if (matrix.values.rows() != n || matrix.values.cols() != n)
        throw ValidationError("similarity CSV: matrix size does not match label count");
    std::vector<std::string> names;
    for (const SimilarityLabel& l : matrix.labels) {
        if (l.class_index >= class_names.size())
            throw ValidationError("similarity CSV: class index " +
                                  std::to_string(l.class_index) + " has no name");
        const std::string& cls = class_names[l.class_index];
        if (cls.find(',') != std::string::npos || cls.find('\n') != std::string::npos)
            throw ValidationError("similarity CSV: class name contains a delimiter");
        names.push_back(cls + "_psm" + std::to_string(l.psm_rank));
    }
    std::ostringstream out;
    out << "label";
    for (const std::string& name : names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        out << names[i];
        for (std::size_t j = 0; j < n; ++j)
            out << ',' << jsonutil::format_double(matrix.values(i, j));
        out << '\n';
    }
    return out.str();
}

std::string dendrogram_to_json(const Dendrogram& dendrogram) {
    json j;
    json merges = json::array();
    for (const MergeStep& m : dendrogram.merges) {
        json step;
        step["cluster_a"] = m.cluster_a;
        step["cluster_b"] = m.cluster_b;
        step["merge_distance"] = m.merge_distance;
        merges.push_back(std::move(step));
    }
    j["merges"] = std::move(merges);
    j["leaf_order"] = dendrogram.leaf_order;
    return j.dump(2);
}

std::string threshold_to_csv(const ThresholdedMap& map) {
    if (map.values.size() != map.signs.size())
        throw ValidationError("threshold CSV: values and signs differ in length");
    std::ostringstream out;
    out << "feature,value,sign\n";
    for (std::size_t i = 0; i < map.values.size(); ++i)
        out << i << ',' << jsonutil::format_double(map.values[i]) << ',' << map.signs[i] << '\n';
    return out.str();
}

}  // namespace neurodecode

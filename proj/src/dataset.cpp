#include "neurodecode/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json_util.hpp"
#include "neurodecode/errors.hpp"
#include "neurodecode/rng.hpp"

namespace neurodecode {

namespace jsonutil {

std::uint64_t get_count(const nlohmann::json& j, const char* key, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const nlohmann::json& v = j.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        throw ValidationError(std::string("config field '") + key + "' must be an integer");
    if (v.is_number_integer() && v.get<std::int64_t>() < 0)
        throw ValidationError(std::string("config field '") + key + "' must be non-negative");
    return v.get<std::uint64_t>();
}

double get_real(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    const nlohmann::json& v = j.at(key);
    if (!v.is_number())
        throw ValidationError(std::string("config field '") + key + "' must be a number");
    return v.get<double>();
}

nlohmann::json parse_json(const std::string& text, const char* what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed ") + what + " JSON: " + e.what());
    }
}

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

}  // namespace jsonutil

namespace {

using nlohmann::json;
using jsonutil::get_count;
using jsonutil::get_real;
using jsonutil::parse_json;

const char* const kDefaultClassNames[7] = {"Emotion",    "Gambling", "Language", "Motor",
                                           "Relational", "Social",   "WM"};

std::vector<std::string> default_class_names(std::size_t class_count) {
    std::vector<std::string> names;
    names.reserve(class_count);
    if (class_count == 7) {
        names.assign(std::begin(kDefaultClassNames), std::end(kDefaultClassNames));
    } else {
        for (std::size_t c = 0; c < class_count; ++c) names.push_back("class" + std::to_string(c));
    }
    return names;
}

using jsonutil::format_double;

}  // namespace

void Dataset::validate() const {
    if (class_count == 0) throw ValidationError("dataset: class_count must be positive");
    if (class_names.size() != class_count)
        throw ValidationError("dataset: class_names size does not match class_count");
    for (const Sample& s : samples) {
        if (s.features.size() != d)
            throw ValidationError("dataset: sample of subject " + s.subject_id + " has " +
                                  std::to_string(s.features.size()) + " features, expected " +
                                  std::to_string(d));
        if (s.label >= class_count)
            throw ValidationError("dataset: sample of subject " + s.subject_id +
                                  " has label " + std::to_string(s.label) + " outside [0, " +
                                  std::to_string(class_count) + ")");
        for (double x : s.features)
            if (!std::isfinite(x))
                throw ValidationError("dataset: non-finite feature for subject " + s.subject_id);
    }
}

std::vector<std::string> Dataset::sorted_subject_ids() const {
    std::set<std::string> ids;
    for (const Sample& s : samples) ids.insert(s.subject_id);
    return std::vector<std::string>(ids.begin(), ids.end());
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (const Sample& s : samples) ++counts[s.label];
    return counts;
}

Matrix zscore(const Matrix& columns) {
    if (columns.rows() < 2)
        throw ValidationError("zscore: need at least 2 rows, got " +
                              std::to_string(columns.rows()));
    const std::size_t n = columns.rows();
    const std::size_t d = columns.cols();
    Matrix out(n, d);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += columns(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = columns(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        if (sd == 0.0) {
            for (std::size_t i = 0; i < n; ++i) out(i, j) = 0.0;
        } else {
            for (std::size_t i = 0; i < n; ++i) out(i, j) = (columns(i, j) - mean) / sd;
        }
    }
    return out;
}

Matrix region_average(const Matrix& voxels, std::span<const std::size_t> region_labels,
                      std::size_t region_count) {
    if (region_labels.size() != voxels.cols())
        throw ValidationError("region_average: " + std::to_string(region_labels.size()) +
                              " labels for " + std::to_string(voxels.cols()) + " voxel columns");
    if (region_count == 0) throw ValidationError("region_average: region_count must be positive");
    std::vector<std::size_t> sizes(region_count, 0);
    for (std::size_t v = 0; v < region_labels.size(); ++v) {
        if (region_labels[v] >= region_count)
            throw ValidationError("region_average: voxel " + std::to_string(v) +
                                  " has region label " + std::to_string(region_labels[v]) +
                                  " outside [0, " + std::to_string(region_count) + ")");
        ++sizes[region_labels[v]];
    }
    for (std::size_t r = 0; r < region_count; ++r)
        if (sizes[r] == 0)
            throw ValidationError("region_average: region " + std::to_string(r) +
                                  " has no voxels");

    Matrix out(voxels.rows(), region_count);
    for (std::size_t i = 0; i < voxels.rows(); ++i) {
        for (std::size_t v = 0; v < region_labels.size(); ++v)
            out(i, region_labels[v]) += voxels(i, v);
        for (std::size_t r = 0; r < region_count; ++r)
            out(i, r) /= static_cast<double>(sizes[r]);
    }
    return out;
}

std::vector<std::string> subject_order_for(const Dataset& dataset, std::uint64_t seed) {
    std::vector<std::string> order = dataset.sorted_subject_ids();
    Rng rng(derive_seed(seed, Stream::SubjectOrder));
    rng.shuffle(order);
    return order;
}

Splits make_splits(const Dataset& dataset, const SplitSpec& spec) {
    const std::vector<std::string> ids = dataset.sorted_subject_ids();
    if (spec.subject_order.size() != ids.size() ||
        !std::is_permutation(spec.subject_order.begin(), spec.subject_order.end(), ids.begin()))
        throw ValidationError("make_splits: subject_order is not a permutation of the dataset's " +
                              std::to_string(ids.size()) + " subjects");
    const std::size_t total = spec.subject_order.size();
    if (spec.n_test_subjects == 0)
        throw ValidationError("make_splits: n_test_subjects must be positive");
    if (spec.n_test_subjects + spec.n_valid_subjects + spec.n_train_subjects > total)
        throw ValidationError("make_splits: fold sizes " + std::to_string(spec.n_test_subjects) +
                              "+" + std::to_string(spec.n_valid_subjects) + "+" +
                              std::to_string(spec.n_train_subjects) + " exceed " +
                              std::to_string(total) + " subjects");
    const std::size_t test_begin = spec.fold_index * spec.n_test_subjects;
    const std::size_t test_end = test_begin + spec.n_test_subjects;
    if (test_end > total)
        throw ValidationError("make_splits: fold " + std::to_string(spec.fold_index) +
                              " needs subjects [" + std::to_string(test_begin) + ", " +
                              std::to_string(test_end) + ") of only " + std::to_string(total));

    std::unordered_set<std::string> test_ids(spec.subject_order.begin() + test_begin,
                                             spec.subject_order.begin() + test_end);
    std::vector<std::string> remaining;
    remaining.reserve(total - spec.n_test_subjects);
    for (const std::string& id : spec.subject_order)
        if (!test_ids.count(id)) remaining.push_back(id);
    if (remaining.size() < spec.n_valid_subjects + spec.n_train_subjects)
        throw ValidationError("make_splits: not enough non-test subjects for fold " +
                              std::to_string(spec.fold_index));

    std::unordered_set<std::string> valid_ids(remaining.begin(),
                                              remaining.begin() + spec.n_valid_subjects);
    std::unordered_set<std::string> train_ids(
        remaining.begin() + spec.n_valid_subjects,
        remaining.begin() + spec.n_valid_subjects + spec.n_train_subjects);

    Splits splits;
    for (Dataset* part : {&splits.train, &splits.valid, &splits.test}) {
        part->d = dataset.d;
        part->class_count = dataset.class_count;
        part->class_names = dataset.class_names;
    }
    for (const Sample& s : dataset.samples) {
        if (test_ids.count(s.subject_id))
            splits.test.samples.push_back(s);
        else if (valid_ids.count(s.subject_id))
            splits.valid.samples.push_back(s);
        else if (train_ids.count(s.subject_id))
            splits.train.samples.push_back(s);
    }
    return splits;
}

std::vector<std::size_t> reference_scan_counts() { return {176, 253, 316, 284, 232, 274, 405}; }

std::vector<std::size_t> reference_scan_counts(double scale) {
    if (!(scale > 0.0)) throw ValidationError("reference_scan_counts: scale must be positive");
    std::vector<std::size_t> counts = reference_scan_counts();
    for (std::size_t& c : counts)
        c = static_cast<std::size_t>(
            std::max<long long>(1, std::llround(static_cast<double>(c) * scale)));
    return counts;
}

void SynthConfig::validate() const {
    if (n_subjects == 0) throw ValidationError("synth config: n_subjects must be >= 1");
    if (d == 0) throw ValidationError("synth config: d must be >= 1");
    if (class_count == 0) throw ValidationError("synth config: class_count must be >= 1");
    if (!(prototype_scale >= 0.0) || !(subject_distortion_scale >= 0.0) || !(noise_scale >= 0.0))
        throw ValidationError("synth config: scales must be >= 0");
    const std::vector<std::size_t> scans = effective_scans_per_class();
    std::size_t total = 0;
    for (std::size_t c : scans) {
        if (c == 0) throw ValidationError("synth config: scans_per_class entries must be >= 1");
        total += c;
    }
    if (total < 2)
        throw ValidationError("synth config: need at least 2 scans per subject for per-subject "
                              "standardization");
}

std::vector<std::size_t> SynthConfig::effective_scans_per_class() const {
    if (!scans_per_class.empty()) {
        if (scans_per_class.size() != class_count)
            throw ValidationError("synth config: scans_per_class has " +
                                  std::to_string(scans_per_class.size()) + " entries for " +
                                  std::to_string(class_count) + " classes");
        return scans_per_class;
    }
    if (class_count == 7) return reference_scan_counts();
    throw ValidationError("synth config: scans_per_class required when class_count != 7");
}

Dataset synthesize(const SynthConfig& config) {
    config.validate();
    const std::vector<std::size_t> scans = config.effective_scans_per_class();
    const std::size_t scans_per_subject =
        std::accumulate(scans.begin(), scans.end(), std::size_t{0});

    Rng rng(config.seed);
    std::vector<std::vector<double>> prototypes(config.class_count, std::vector<double>(config.d));
    for (auto& proto : prototypes)
        for (double& x : proto) x = rng.normal(0.0, config.prototype_scale);

    int id_width = 3;
    for (std::size_t v = config.n_subjects - 1; v >= 1000; v /= 10) ++id_width;

    Dataset out;
    out.d = config.d;
    out.class_count = config.class_count;
    out.class_names = default_class_names(config.class_count);
    out.samples.reserve(config.n_subjects * scans_per_subject);

    std::vector<double> distortion(config.d);
    for (std::size_t s = 0; s < config.n_subjects; ++s) {
        std::ostringstream id;
        id << "s" << std::setw(id_width) << std::setfill('0') << s;

        for (double& x : distortion) x = rng.normal(0.0, config.subject_distortion_scale);
        const double gain = std::clamp(rng.normal(1.0, 0.1), 0.5, 1.5);

        Matrix block(scans_per_subject, config.d);
        std::vector<std::size_t> labels;
        labels.reserve(scans_per_subject);
        std::size_t row = 0;
        for (std::size_t c = 0; c < config.class_count; ++c) {
            for (std::size_t scan = 0; scan < scans[c]; ++scan, ++row) {
                for (std::size_t i = 0; i < config.d; ++i)
                    block(row, i) =
                        gain * prototypes[c][i] + distortion[i] + rng.normal(0.0, config.noise_scale);
                labels.push_back(c);
            }
        }
        const Matrix standardized = zscore(block);
        for (std::size_t r = 0; r < scans_per_subject; ++r) {
            Sample sample;
            sample.subject_id = id.str();
            sample.label = labels[r];
            sample.features.assign(standardized.row(r).begin(), standardized.row(r).end());
            out.samples.push_back(std::move(sample));
        }
    }
    return out;
}

double prior_chance_level(const Dataset& dataset) {
    if (dataset.samples.empty())
        throw ValidationError("prior_chance_level: dataset is empty");
    const std::vector<std::size_t> counts = dataset.class_counts();
    const std::size_t largest = *std::max_element(counts.begin(), counts.end());
    return static_cast<double>(largest) / static_cast<double>(dataset.samples.size());
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset CSV: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty dataset CSV: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
    if (header.size() < 3 || header[0] != "subject_id" || header[1] != "label")
        throw ValidationError("dataset CSV header must start with subject_id,label,f0,...: " +
                              path.string());
    const std::size_t d = header.size() - 2;
    for (std::size_t i = 0; i < d; ++i)
        if (header[2 + i] != "f" + std::to_string(i))
            throw ValidationError("dataset CSV: feature column " + std::to_string(i) +
                                  " must be named f" + std::to_string(i));

    Dataset out;
    out.d = d;
    std::size_t max_label = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Sample sample;
        sample.features.reserve(d);
        std::size_t field = 0;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string token =
                line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (field == 0) {
                if (token.empty())
                    throw ValidationError("dataset CSV line " + std::to_string(line_no) +
                                          ": empty subject_id");
                sample.subject_id = token;
            } else if (field == 1) {
                std::size_t label = 0;
                const auto res =
                    std::from_chars(token.data(), token.data() + token.size(), label);
                if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
                    throw ValidationError("dataset CSV line " + std::to_string(line_no) +
                                          ": label '" + token + "' is not a non-negative integer");
                sample.label = label;
            } else {
                double value = 0.0;
                const auto res =
                    std::from_chars(token.data(), token.data() + token.size(), value);
                if (res.ec != std::errc{} || res.ptr != token.data() + token.size() ||
                    !std::isfinite(value))
                    throw ValidationError("dataset CSV line " + std::to_string(line_no) +
                                          ": bad feature value '" + token + "'");
                sample.features.push_back(value);
            }
            ++field;
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (field != d + 2)
            throw ValidationError("dataset CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(d + 2) + " fields, got " + std::to_string(field));
        max_label = std::max(max_label, sample.label);
        out.samples.push_back(std::move(sample));
    }
    if (out.samples.empty()) throw ValidationError("dataset CSV has no samples: " + path.string());
    out.class_count = max_label + 1;
    out.class_names = default_class_names(out.class_count);
    out.validate();
    return out;
}

void save_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    for (const Sample& s : dataset.samples)
        if (s.subject_id.find_first_of(",\n\r") != std::string::npos)
            throw ValidationError("save_dataset_csv: subject id '" + s.subject_id +
                                  "' contains a delimiter");
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write dataset CSV: " + path.string());
    out << "subject_id,label";
    for (std::size_t i = 0; i < dataset.d; ++i) out << ",f" << i;
    out << "\n";
    for (const Sample& s : dataset.samples) {
        out << s.subject_id << "," << s.label;
        for (double x : s.features) out << "," << format_double(x);
        out << "\n";
    }
    if (!out) throw ValidationError("failed writing dataset CSV: " + path.string());
}

nlohmann::json synth_config_to_json_value(const SynthConfig& config) {
    json j;
    j["n_subjects"] = config.n_subjects;
    j["d"] = config.d;
    j["class_count"] = config.class_count;
    j["scans_per_class"] = config.scans_per_class;
    j["prototype_scale"] = config.prototype_scale;
    j["subject_distortion_scale"] = config.subject_distortion_scale;
    j["noise_scale"] = config.noise_scale;
    j["seed"] = config.seed;
    return j;
}

std::string synth_config_to_json(const SynthConfig& config) {
    return synth_config_to_json_value(config).dump(2);
}

SynthConfig synth_config_from_json(const std::string& text) {
    return synth_config_from_json_value(parse_json(text, "synth config"));
}

SynthConfig synth_config_from_json_value(const nlohmann::json& j) {
    SynthConfig config;
    config.n_subjects = get_count(j, "n_subjects", config.n_subjects);
    config.d = get_count(j, "d", config.d);
    config.class_count = get_count(j, "class_count", config.class_count);
    if (j.contains("scans_per_class")) {
        const json& arr = j.at("scans_per_class");
        if (!arr.is_array())
            throw ValidationError("synth config: scans_per_class must be an array");
        config.scans_per_class.clear();
        for (const json& v : arr) {
            if (!v.is_number_integer() && !v.is_number_unsigned())
                throw ValidationError("synth config: scans_per_class entries must be integers");
            if (v.is_number_integer() && v.get<std::int64_t>() < 0)
                throw ValidationError("synth config: scans_per_class entries must be >= 0");
            config.scans_per_class.push_back(v.get<std::size_t>());
        }
    }
    config.prototype_scale = get_real(j, "prototype_scale", config.prototype_scale);
    config.subject_distortion_scale =
        get_real(j, "subject_distortion_scale", config.subject_distortion_scale);
    config.noise_scale = get_real(j, "noise_scale", config.noise_scale);
    config.seed = get_count(j, "seed", config.seed);
    config.validate();
    return config;
}

std::string split_spec_to_json(const SplitSpec& spec) {
    json j;
    j["fold_index"] = spec.fold_index;
    j["n_test_subjects"] = spec.n_test_subjects;
    j["n_valid_subjects"] = spec.n_valid_subjects;
    j["n_train_subjects"] = spec.n_train_subjects;
    j["subject_order"] = spec.subject_order;
    return j.dump(2);
}

SplitSpec split_spec_from_json(const std::string& text) {
    const json j = parse_json(text, "split spec");
    SplitSpec spec;
    spec.fold_index = get_count(j, "fold_index", spec.fold_index);
    spec.n_test_subjects = get_count(j, "n_test_subjects", spec.n_test_subjects);
    spec.n_valid_subjects = get_count(j, "n_valid_subjects", spec.n_valid_subjects);
    spec.n_train_subjects = get_count(j, "n_train_subjects", spec.n_train_subjects);
    if (j.contains("subject_order")) {
        const json& arr = j.at("subject_order");
        if (!arr.is_array()) throw ValidationError("split spec: subject_order must be an array");
        spec.subject_order.clear();
        for (const json& v : arr) {
            if (!v.is_string())
                throw ValidationError("split spec: subject_order entries must be strings");
            spec.subject_order.push_back(v.get<std::string>());
        }
    }
    return spec;
}

}  // namespace neurodecode

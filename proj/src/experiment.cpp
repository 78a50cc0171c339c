#include "neurodecode/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "json_util.hpp"
#include "neurodecode/errors.hpp"
#include "neurodecode/rng.hpp"

namespace neurodecode {
namespace {

using nlohmann::json;
using jsonutil::format_double;
using jsonutil::get_count;
using jsonutil::get_real;
using jsonutil::parse_json;

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw ValidationError("failed to write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string sanitize_name(const std::string& name) {
    std::string safe;
    for (char c : name)
        safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
    return safe.empty() ? "_" : safe;
}

std::size_t as_count(const json& v, const char* what) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer()) {
        const std::int64_t x = v.get<std::int64_t>();
        if (x < 0) throw ValidationError(std::string(what) + " must be non-negative");
        return static_cast<std::size_t>(x);
    }
    throw ValidationError(std::string(what) + " must be an integer");
}

double parse_double_token(const std::string& token, const char* what) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ValidationError(std::string(what) + ": bad number \"" + token + "\"");
    return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> tokens;
    std::string token;
    std::istringstream in(line);
    while (std::getline(in, token, ',')) tokens.push_back(token);
    if (!line.empty() && line.back() == ',') tokens.push_back("");
    return tokens;
}

// NEURODECODE_THREADS caps how many worker threads process the job list;
// unset or 1 keeps everything on the calling thread.
std::size_t configured_thread_count(std::size_t jobs) {
    const char* env = std::getenv("NEURODECODE_THREADS");
    std::size_t wanted = 1;
    if (env != nullptr && *env != '\0') {
        const char* end = env + std::strlen(env);
        std::size_t parsed = 0;
        const auto res = std::from_chars(env, end, parsed);
        if (res.ec != std::errc{} || res.ptr != end || parsed == 0)
            throw ValidationError("NEURODECODE_THREADS must be a positive integer, got \"" +
                                  std::string(env) + "\"");
        wanted = parsed;
    }
    return std::min(wanted, std::max<std::size_t>(jobs, 1));
}

// Runs jobs 0..count-1, possibly across threads. Results must be written to
// preassigned slots; the first failing job (in index order) is rethrown.
void run_jobs(std::size_t count, const std::function<void(std::size_t)>& work) {
    const std::size_t threads = configured_thread_count(count);
    if (threads <= 1) {
        for (std::size_t j = 0; j < count; ++j) work(j);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t j = t; j < count; j += threads) {
                try {
                    work(j);
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            }
        });
    for (std::thread& worker : pool) worker.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

TrainConfig train_config_from_json_value(const json& j) {
    TrainConfig config;
    if (j.contains("learning_rate_grid")) {
        const json& grid = j.at("learning_rate_grid");
        if (!grid.is_array())
            throw ValidationError("experiment config: learning_rate_grid must be an array");
        config.learning_rate_grid.clear();
        for (const json& v : grid) {
            if (!v.is_number())
                throw ValidationError("experiment config: learning rates must be numbers");
            config.learning_rate_grid.push_back(v.get<double>());
        }
    }
    config.batch_size = get_count(j, "batch_size", config.batch_size);
    config.dropout_input = get_real(j, "dropout_input", config.dropout_input);
    config.dropout_hidden = get_real(j, "dropout_hidden", config.dropout_hidden);
    config.patience_epochs = get_count(j, "patience_epochs", config.patience_epochs);
    config.max_epochs = get_count(j, "max_epochs", config.max_epochs);
    config.init_std = get_real(j, "init_std", config.init_std);
    return config;
}

json train_config_to_json_value(const TrainConfig& config) {
    json j;
    j["learning_rate_grid"] = config.learning_rate_grid;
    j["batch_size"] = config.batch_size;
    j["dropout_input"] = config.dropout_input;
    j["dropout_hidden"] = config.dropout_hidden;
    j["patience_epochs"] = config.patience_epochs;
    j["max_epochs"] = config.max_epochs;
    j["init_std"] = config.init_std;
    return j;
}

json arch_report_to_json_value(const ArchReport& report) {
    json j;
    j["hidden_dims"] = report.hidden_dims;
    j["fold_accuracy"] = report.fold_accuracy;
    j["mean_accuracy"] = report.mean_accuracy;
    j["sd_accuracy"] = report.sd_accuracy;
    json fold_reports = json::array();
    for (const TrainReport& r : report.fold_reports)
        fold_reports.push_back(train_report_to_json_value(r));
    j["fold_reports"] = std::move(fold_reports);
    return j;
}

ArchReport arch_report_from_json_value(const json& j) {
    ArchReport report;
    if (j.contains("hidden_dims"))
        for (const json& v : j.at("hidden_dims"))
            report.hidden_dims.push_back(as_count(v, "cv report: hidden width"));
    if (!j.contains("fold_accuracy") || !j.at("fold_accuracy").is_array())
        throw ValidationError("cv report: fold_accuracy array missing");
    for (const json& v : j.at("fold_accuracy")) {
        if (!v.is_number()) throw ValidationError("cv report: fold_accuracy must hold numbers");
        report.fold_accuracy.push_back(v.get<double>());
    }
    report.mean_accuracy = get_real(j, "mean_accuracy", 0.0);
    report.sd_accuracy = get_real(j, "sd_accuracy", 0.0);
    if (j.contains("fold_reports"))
        for (const json& r : j.at("fold_reports"))
            report.fold_reports.push_back(train_report_from_json_value(r));
    return report;
}

// Population mean and standard deviation of the per-fold accuracies.
void fill_summary(ArchReport& report) {
    double sum = 0.0;
    for (double a : report.fold_accuracy) sum += a;
    report.mean_accuracy = sum / static_cast<double>(report.fold_accuracy.size());
    double sq = 0.0;
    for (double a : report.fold_accuracy)
        sq += (a - report.mean_accuracy) * (a - report.mean_accuracy);
    report.sd_accuracy = std::sqrt(sq / static_cast<double>(report.fold_accuracy.size()));
}

SplitSpec split_spec_for(const ExperimentConfig& config, std::size_t fold,
                         std::vector<std::string> order) {
    SplitSpec spec;
    spec.fold_index = fold;
    spec.n_test_subjects = config.n_test_subjects;
    spec.n_valid_subjects = config.n_valid_subjects;
    spec.n_train_subjects = config.n_train_subjects;
    spec.subject_order = std::move(order);
    return spec;
}

json fold_manifest_entry(std::size_t fold, const Splits& splits) {
    json entry;
    entry["fold_index"] = fold;
    entry["test_subjects"] = splits.test.sorted_subject_ids();
    entry["valid_subjects"] = splits.valid.sorted_subject_ids();
    entry["train_subjects"] = splits.train.sorted_subject_ids();
    return entry;
}

std::vector<std::size_t> layer_dims_for(const Dataset& dataset,
                                        const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> dims;
    dims.push_back(dataset.d);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(dataset.class_count);
    return dims;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (architectures.empty())
        throw ValidationError("experiment config: at least one architecture is required");
    for (const std::vector<std::size_t>& hidden : architectures)
        for (std::size_t width : hidden)
            if (width == 0)
                throw ValidationError("experiment config: hidden widths must be >= 1");
    train.validate();
    if (n_test_subjects == 0 || n_valid_subjects == 0 || n_train_subjects == 0)
        throw ValidationError("experiment config: split sizes must be >= 1");
    if (folds == 0) throw ValidationError("experiment config: folds must be >= 1");
    if (fold_index >= folds)
        throw ValidationError("experiment config: fold_index " + std::to_string(fold_index) +
                              " outside [0, " + std::to_string(folds) + ")");
    for (std::size_t m : sweep_train_sizes)
        if (m == 0) throw ValidationError("experiment config: sweep sizes must be >= 1");
    if (psa.m == 0) throw ValidationError("experiment config: psa.m must be >= 1");
    if (psa.reference != "test" && psa.reference != "valid" && psa.reference != "train" &&
        psa.reference != "all")
        throw ValidationError("experiment config: psa.reference must be test, valid, train, "
                              "or all, got \"" + psa.reference + "\"");
    if (data.use_csv) {
        if (data.csv.empty()) throw ValidationError("experiment config: csv path is empty");
    } else {
        data.synth.validate();
    }
}

Dataset load_source(const ExperimentConfig& config) {
    if (config.data.use_csv) {
        Dataset dataset = load_dataset_csv(config.data.csv);
        dataset.validate();
        return dataset;
    }
    // one master seed pins the whole pipeline, so the generator's own seed
    // field is replaced by a derived stream
    SynthConfig synth = config.data.synth;
    synth.seed = derive_seed(config.seed, Stream::Data);
    return synthesize(synth);
}

std::string architecture_name(const std::vector<std::size_t>& hidden_dims) {
    if (hidden_dims.empty()) return "linear";
    std::string name = "h";
    for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
        if (i > 0) name += '-';
        name += std::to_string(hidden_dims[i]);
    }
    return name;
}

CvReport run_cv(const ExperimentConfig& config) {
    config.validate();
    if (config.output_dir.empty()) throw ValidationError("run_cv: output directory not set");
    const Dataset dataset = load_source(config);
    const std::vector<std::string> order = subject_order_for(dataset, config.seed);
    if (config.folds * config.n_test_subjects > order.size())
        throw ValidationError("run_cv: " + std::to_string(config.folds) + " folds of " +
                              std::to_string(config.n_test_subjects) +
                              " test subjects exceed the " + std::to_string(order.size()) +
                              " available subjects");
    std::filesystem::create_directories(config.output_dir);

    std::vector<Splits> splits;
    splits.reserve(config.folds);
    for (std::size_t f = 0; f < config.folds; ++f)
        splits.push_back(make_splits(dataset, split_spec_for(config, f, order)));

    json manifest;
    manifest["subject_order"] = order;
    json folds = json::array();
    for (std::size_t f = 0; f < config.folds; ++f)
        folds.push_back(fold_manifest_entry(f, splits[f]));
    manifest["folds"] = std::move(folds);
    write_text(config.output_dir / "manifest.json", manifest.dump(2));

    const std::size_t n_arch = config.architectures.size();
    const std::size_t jobs = config.folds * n_arch;
    std::vector<double> test_accuracy(jobs, 0.0);
    std::vector<TrainReport> reports(jobs);

    run_jobs(jobs, [&](std::size_t job) {
        const std::size_t f = job / n_arch;
        const std::size_t a = job % n_arch;
        const std::vector<std::size_t>& hidden = config.architectures[a];
        const std::string context =
            "fold " + std::to_string(f) + ", architecture " + architecture_name(hidden) + ": ";
        try {
            TrainConfig tc = config.train;
            tc.seed = derive_seed(config.seed, Stream::Train, {f, a});
            const TrainResult result =
                train(tc, splits[f].train, splits[f].valid, layer_dims_for(dataset, hidden));
            test_accuracy[job] = accuracy(result.params, splits[f].test);
            reports[job] = result.report;
            write_text(config.output_dir / ("params_fold" + std::to_string(f) + "_" +
                                            architecture_name(hidden) + ".json"),
                       params_to_json(result.params));
        } catch (const NumericalError& e) {
            throw NumericalError(context + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(context + e.what());
        }
    });

    CvReport report;
    report.prior_chance_level = prior_chance_level(dataset);
    for (std::size_t a = 0; a < n_arch; ++a) {
        ArchReport arch;
        arch.hidden_dims = config.architectures[a];
        for (std::size_t f = 0; f < config.folds; ++f) {
            arch.fold_accuracy.push_back(test_accuracy[f * n_arch + a]);
            arch.fold_reports.push_back(reports[f * n_arch + a]);
        }
        fill_summary(arch);
        report.architectures.push_back(std::move(arch));
    }
    write_text(config.output_dir / "cv_report.json", cv_report_to_json(report));
    return report;
}

std::vector<std::pair<std::size_t, CvReport>> run_size_sweep(const ExperimentConfig& config) {
    config.validate();
    if (config.output_dir.empty())
        throw ValidationError("run_size_sweep: output directory not set");
    if (config.sweep_train_sizes.empty())
        throw ValidationError("run_size_sweep: sweep_train_sizes is empty");

    const Dataset dataset = load_source(config);
    const std::size_t subjects = dataset.sorted_subject_ids().size();
    const std::size_t largest =
        *std::max_element(config.sweep_train_sizes.begin(), config.sweep_train_sizes.end());
    if (largest + config.n_test_subjects + config.n_valid_subjects > subjects)
        throw ValidationError("run_size_sweep: training size " + std::to_string(largest) +
                              " plus test and validation subjects exceeds the " +
                              std::to_string(subjects) + " available subjects");
    std::filesystem::create_directories(config.output_dir);

    std::vector<std::pair<std::size_t, CvReport>> results;
    for (std::size_t m : config.sweep_train_sizes) {
        ExperimentConfig sub = config;
        sub.n_train_subjects = m;
        sub.sweep_train_sizes.clear();
        sub.output_dir = config.output_dir / ("M" + std::to_string(m));
        results.emplace_back(m, run_cv(sub));
    }

    std::ostringstream csv;
    csv << "M,mean,sd\n";
    for (const auto& [m, report] : results) {
        const ArchReport& first = report.architectures.front();
        csv << m << ',' << format_double(first.mean_accuracy) << ','
            << format_double(first.sd_accuracy) << '\n';
    }
    write_text(config.output_dir / "sweep.csv", csv.str());
    return results;
}

void run_psa(const ExperimentConfig& config, const NetworkParams& params,
             const Dataset& reference) {
    config.validate();
    if (config.output_dir.empty()) throw ValidationError("run_psa: output directory not set");
    params.validate();
    reference.validate();
    if (reference.samples.empty()) throw ValidationError("run_psa: reference dataset is empty");
    if (reference.d != params.input_dim())
        throw ValidationError("run_psa: reference has d = " + std::to_string(reference.d) +
                              ", network expects " + std::to_string(params.input_dim()));
    if (reference.class_count != params.class_count())
        throw ValidationError("run_psa: reference class count does not match the network");
    std::filesystem::create_directories(config.output_dir);

    PsmCollection collection;
    for (std::size_t k = 0; k < reference.class_count; ++k) {
        const SensitivityKernel kernel = sensitivity_kernel(params, reference, k);
        const SensitivityMap map = sensitivity_map(kernel);
        const PsaResult result = psa(kernel, config.psa.m);
        const std::string safe = sanitize_name(reference.class_names[k]);
        write_text(config.output_dir / ("sensitivity_map_" + safe + ".json"),
                   sensitivity_map_to_json(map, reference.class_names[k]));
        write_text(config.output_dir / ("psa_" + safe + ".json"),
                   psa_to_json(result, reference.class_names[k]));
        for (std::size_t r = 0; r < result.psms.size(); ++r) {
            std::ostringstream csv;
            csv << "feature,value\n";
            for (std::size_t i = 0; i < result.psms[r].size(); ++i)
                csv << i << ',' << format_double(result.psms[r][i]) << '\n';
            write_text(config.output_dir /
                           ("psm_" + safe + "_" + std::to_string(r + 1) + ".csv"),
                       csv.str());
            collection.entries.push_back({k, r + 1, result.psms[r]});
        }
    }
    write_text(config.output_dir / "psm_collection.csv",
               psm_collection_to_csv(collection, reference.class_names));
    run_analysis(config.output_dir, collection, reference.class_names, config.psa.linkage);
}

void run_analysis(const std::filesystem::path& output_dir, const PsmCollection& collection,
                  const std::vector<std::string>& class_names, Linkage linkage) {
    collection.validate();
    if (output_dir.empty()) throw ValidationError("run_analysis: output directory not set");
    std::filesystem::create_directories(output_dir);

    const SimilarityMatrix sim = similarity_matrix(collection);
    write_text(output_dir / "similarity.csv", similarity_to_csv(sim, class_names));
    write_text(output_dir / "dendrogram.json", dendrogram_to_json(cluster(sim, linkage)));
    for (const PsmEntry& entry : collection.entries) {
        if (entry.class_index >= class_names.size())
            throw ValidationError("run_analysis: class index " +
                                  std::to_string(entry.class_index) + " has no name");
        const std::string safe = sanitize_name(class_names[entry.class_index]);
        write_text(output_dir / ("threshold_" + safe + "_" + std::to_string(entry.psm_rank) +
                                 ".csv"),
                   threshold_to_csv(threshold_map(entry.vector)));
    }
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
    json j;
    json data;
    if (config.data.use_csv)
        data["csv"] = config.data.csv.string();
    else
        data["synth"] = synth_config_to_json_value(config.data.synth);
    j["data"] = std::move(data);
    j["architectures"] = config.architectures;
    j["train"] = train_config_to_json_value(config.train);
    json split;
    split["n_test_subjects"] = config.n_test_subjects;
    split["n_valid_subjects"] = config.n_valid_subjects;
    split["n_train_subjects"] = config.n_train_subjects;
    split["folds"] = config.folds;
    split["fold_index"] = config.fold_index;
    j["split"] = std::move(split);
    j["sweep_train_sizes"] = config.sweep_train_sizes;
    json psa_section;
    psa_section["m"] = config.psa.m;
    psa_section["reference"] = config.psa.reference;
    psa_section["linkage"] = linkage_name(config.psa.linkage);
    j["psa"] = std::move(psa_section);
    j["output_dir"] = config.output_dir.string();
    j["seed"] = config.seed;
    return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    const json j = parse_json(text, "experiment config");
    ExperimentConfig config;
    if (j.contains("data")) {
        const json& data = j.at("data");
        if (!data.is_object())
            throw ValidationError("experiment config: data must be an object");
        const bool has_csv = data.contains("csv");
        const bool has_synth = data.contains("synth");
        if (has_csv == has_synth)
            throw ValidationError(
                "experiment config: data needs exactly one of \"csv\" or \"synth\"");
        if (has_csv) {
            if (!data.at("csv").is_string())
                throw ValidationError("experiment config: csv must be a path string");
            config.data.use_csv = true;
            config.data.csv = data.at("csv").get<std::string>();
        } else {
            config.data.synth = synth_config_from_json_value(data.at("synth"));
        }
    }
    if (j.contains("architectures")) {
        const json& archs = j.at("architectures");
        if (!archs.is_array())
            throw ValidationError("experiment config: architectures must be an array");
        config.architectures.clear();
        for (const json& arch : archs) {
            if (!arch.is_array())
                throw ValidationError(
                    "experiment config: each architecture must be an array of widths");
            std::vector<std::size_t> hidden;
            for (const json& w : arch)
                hidden.push_back(as_count(w, "experiment config: hidden width"));
            config.architectures.push_back(std::move(hidden));
        }
    }
    if (j.contains("train")) config.train = train_config_from_json_value(j.at("train"));
    if (j.contains("split")) {
        const json& split = j.at("split");
        config.n_test_subjects = get_count(split, "n_test_subjects", config.n_test_subjects);
        config.n_valid_subjects = get_count(split, "n_valid_subjects", config.n_valid_subjects);
        config.n_train_subjects = get_count(split, "n_train_subjects", config.n_train_subjects);
        config.folds = get_count(split, "folds", config.folds);
        config.fold_index = get_count(split, "fold_index", config.fold_index);
    }
    if (j.contains("sweep_train_sizes")) {
        const json& sizes = j.at("sweep_train_sizes");
        if (!sizes.is_array())
            throw ValidationError("experiment config: sweep_train_sizes must be an array");
        for (const json& v : sizes)
            config.sweep_train_sizes.push_back(as_count(v, "experiment config: sweep size"));
    }
    if (j.contains("psa")) {
        const json& psa_section = j.at("psa");
        config.psa.m = get_count(psa_section, "m", config.psa.m);
        if (psa_section.contains("reference")) {
            if (!psa_section.at("reference").is_string())
                throw ValidationError("experiment config: psa.reference must be a string");
            config.psa.reference = psa_section.at("reference").get<std::string>();
        }
        if (psa_section.contains("linkage")) {
            if (!psa_section.at("linkage").is_string())
                throw ValidationError("experiment config: psa.linkage must be a string");
            config.psa.linkage = linkage_from_name(psa_section.at("linkage").get<std::string>());
        }
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string())
            throw ValidationError("experiment config: output_dir must be a string");
        config.output_dir = j.at("output_dir").get<std::string>();
    }
    config.seed = get_count(j, "seed", config.seed);
    config.validate();
    return config;
}

std::string cv_report_to_json(const CvReport& report) {
    json j;
    j["prior_chance_level"] = report.prior_chance_level;
    json archs = json::array();
    for (const ArchReport& arch : report.architectures)
        archs.push_back(arch_report_to_json_value(arch));
    j["architectures"] = std::move(archs);
    return j.dump(2);
}

CvReport cv_report_from_json(const std::string& text) {
    const json j = parse_json(text, "cv report");
    CvReport report;
    report.prior_chance_level = get_real(j, "prior_chance_level", 0.0);
    if (!j.contains("architectures") || !j.at("architectures").is_array())
        throw ValidationError("cv report: architectures array missing");
    for (const json& arch : j.at("architectures"))
        report.architectures.push_back(arch_report_from_json_value(arch));
    return report;
}

std::string psm_collection_to_csv(const PsmCollection& collection,
                                  const std::vector<std::string>& class_names) {
    collection.validate();
    const std::size_t d = collection.entries.front().vector.size();
    std::ostringstream out;
    out << "class,rank";
    for (std::size_t i = 0; i < d; ++i) out << ",f" << i;
    out << '\n';
    for (const PsmEntry& entry : collection.entries) {
        if (entry.class_index >= class_names.size())
            throw ValidationError("psm collection CSV: class index " +
                                  std::to_string(entry.class_index) + " has no name");
        const std::string& name = class_names[entry.class_index];
        if (name.find(',') != std::string::npos || name.find('\n') != std::string::npos)
            throw ValidationError("psm collection CSV: class name contains a delimiter");
        out << name << ',' << entry.psm_rank;
        for (double v : entry.vector) out << ',' << format_double(v);
        out << '\n';
    }
    return out.str();
}

std::pair<PsmCollection, std::vector<std::string>> psm_collection_from_csv(
    const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("psm collection CSV: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "class" || header[1] != "rank")
        throw ValidationError("psm collection CSV: header must start with class,rank,f0");
    const std::size_t d = header.size() - 2;
    for (std::size_t i = 0; i < d; ++i)
        if (header[i + 2] != "f" + std::to_string(i))
            throw ValidationError("psm collection CSV: feature column " + std::to_string(i) +
                                  " must be named f" + std::to_string(i));

    PsmCollection collection;
    std::vector<std::string> names;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> tokens = split_csv_line(line);
        if (tokens.size() != d + 2)
            throw ValidationError("psm collection CSV: line " + std::to_string(line_no) +
                                  " has " + std::to_string(tokens.size()) + " fields, expected " +
                                  std::to_string(d + 2));
        PsmEntry entry;
        const auto found = std::find(names.begin(), names.end(), tokens[0]);
        if (found == names.end()) {
            entry.class_index = names.size();
            names.push_back(tokens[0]);
        } else {
            entry.class_index = static_cast<std::size_t>(found - names.begin());
        }
        const double rank = parse_double_token(tokens[1], "psm collection CSV rank");
        if (rank < 1.0 || rank != std::floor(rank))
            throw ValidationError("psm collection CSV: rank must be a positive integer");
        entry.psm_rank = static_cast<std::size_t>(rank);
        for (std::size_t i = 0; i < d; ++i)
            entry.vector.push_back(parse_double_token(tokens[i + 2], "psm collection CSV value"));
        collection.entries.push_back(std::move(entry));
    }
    collection.validate();
    return {std::move(collection), std::move(names)};
}

namespace {

struct CliArgs {
    std::string subcommand;
    std::optional<std::string> config_path;
    std::optional<std::string> out;
    std::optional<std::string> params_path;
    std::optional<std::string> psms_path;
    std::optional<std::string> linkage;
    std::optional<std::uint64_t> seed;
};

void print_usage(std::ostream& out) {
    out << "usage: neurodecode <subcommand> [flags]\n"
           "\n"
           "subcommands:\n"
           "  synth    write the configured synthetic dataset as CSV\n"
           "  train    train every architecture on one subject split\n"
           "  cv       subject-wise cross validation over all folds\n"
           "  sweep    cross validation at each configured training-set size\n"
           "  psa      principal sensitivity analysis of saved parameters\n"
           "  analyze  similarity, dendrogram, and threshold maps from saved maps\n"
           "\n"
           "flags:\n"
           "  --config <path>   experiment config JSON (required except analyze)\n"
           "  --out <path>      output directory (synth: output CSV file)\n"
           "  --seed <n>        override the config's master seed\n"
           "  --params <path>   trained parameter JSON (psa)\n"
           "  --psms <path>     saved map collection CSV (analyze)\n"
           "  --linkage <name>  single, complete, or average (analyze)\n";
}

bool parse_cli_args(int argc, char** argv, CliArgs& args) {
    args.subcommand = argv[1];
    for (int i = 2; i < argc; i += 2) {
        const std::string flag = argv[i];
        if (i + 1 >= argc) {
            std::cerr << "error: flag " << flag << " needs a value\n";
            return false;
        }
        const std::string value = argv[i + 1];
        if (flag == "--config") {
            args.config_path = value;
        } else if (flag == "--out") {
            args.out = value;
        } else if (flag == "--params") {
            args.params_path = value;
        } else if (flag == "--psms") {
            args.psms_path = value;
        } else if (flag == "--linkage") {
            args.linkage = value;
        } else if (flag == "--seed") {
            std::uint64_t parsed = 0;
            const char* begin = value.data();
            const char* end = begin + value.size();
            const auto res = std::from_chars(begin, end, parsed);
            if (res.ec != std::errc{} || res.ptr != end) {
                std::cerr << "error: --seed needs an unsigned integer, got \"" << value
                          << "\"\n";
                return false;
            }
            args.seed = parsed;
        } else {
            std::cerr << "error: unknown flag " << flag << "\n";
            return false;
        }
    }
    return true;
}

std::filesystem::path default_run_dir(const std::string& subcommand, std::uint64_t seed) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm parts{};
    gmtime_r(&now, &parts);
    std::ostringstream name;
    name << subcommand << '-' << std::put_time(&parts, "%Y%m%d-%H%M%S") << '-' << seed;
    return name.str();
}

ExperimentConfig load_cli_config(const CliArgs& args) {
    if (!args.config_path)
        throw ValidationError("subcommand " + args.subcommand + " needs --config <path>");
    ExperimentConfig config = experiment_config_from_json(read_text(*args.config_path));
    if (args.seed) config.seed = *args.seed;
    return config;
}

void resolve_output_dir(ExperimentConfig& config, const CliArgs& args) {
    if (args.out) config.output_dir = *args.out;
    if (config.output_dir.empty())
        config.output_dir = default_run_dir(args.subcommand, config.seed);
}

Dataset reference_dataset(const ExperimentConfig& config, const Dataset& dataset) {
    if (config.psa.reference == "all") return dataset;
    const std::vector<std::string> order = subject_order_for(dataset, config.seed);
    const Splits splits =
        make_splits(dataset, split_spec_for(config, config.fold_index, order));
    if (config.psa.reference == "test") return splits.test;
    if (config.psa.reference == "valid") return splits.valid;
    return splits.train;
}

int cli_synth(const CliArgs& args) {
    ExperimentConfig config = load_cli_config(args);
    if (config.data.use_csv)
        throw ValidationError("synth needs a synthetic data source in the config");
    const Dataset dataset = load_source(config);
    std::filesystem::path out_path;
    if (args.out) {
        out_path = *args.out;
    } else {
        const std::filesystem::path dir = config.output_dir.empty()
                                              ? default_run_dir(args.subcommand, config.seed)
                                              : config.output_dir;
        std::filesystem::create_directories(dir);
        out_path = dir / "synthetic.csv";
    }
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    save_dataset_csv(dataset, out_path);
    std::cerr << "wrote " << dataset.samples.size() << " samples ("
              << dataset.sorted_subject_ids().size() << " subjects) to " << out_path.string()
              << "\n";
    return 0;
}

int cli_train(const CliArgs& args) {
    ExperimentConfig config = load_cli_config(args);
    resolve_output_dir(config, args);
    const Dataset dataset = load_source(config);
    const std::vector<std::string> order = subject_order_for(dataset, config.seed);
    const Splits splits =
        make_splits(dataset, split_spec_for(config, config.fold_index, order));
    std::filesystem::create_directories(config.output_dir);

    json manifest;
    manifest["subject_order"] = order;
    manifest["folds"] = json::array({fold_manifest_entry(config.fold_index, splits)});
    write_text(config.output_dir / "manifest.json", manifest.dump(2));

    const std::size_t n_arch = config.architectures.size();
    std::vector<double> test_accuracy(n_arch, 0.0);
    run_jobs(n_arch, [&](std::size_t a) {
        const std::vector<std::size_t>& hidden = config.architectures[a];
        const std::string context = "architecture " + architecture_name(hidden) + ": ";
        try {
            TrainConfig tc = config.train;
            tc.seed = derive_seed(config.seed, Stream::Train, {config.fold_index, a});
            const TrainResult result =
                train(tc, splits.train, splits.valid, layer_dims_for(dataset, hidden));
            test_accuracy[a] = accuracy(result.params, splits.test);
            write_text(config.output_dir /
                           ("params_" + architecture_name(hidden) + ".json"),
                       params_to_json(result.params));
            write_text(config.output_dir /
                           ("train_report_" + architecture_name(hidden) + ".json"),
                       train_report_to_json(result.report));
        } catch (const NumericalError& e) {
            throw NumericalError(context + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(context + e.what());
        }
    });

    json summary;
    summary["prior_chance_level"] = prior_chance_level(dataset);
    summary["fold_index"] = config.fold_index;
    json archs = json::array();
    for (std::size_t a = 0; a < n_arch; ++a) {
        json entry;
        entry["hidden_dims"] = config.architectures[a];
        entry["test_accuracy"] = test_accuracy[a];
        archs.push_back(std::move(entry));
        std::cerr << "architecture " << architecture_name(config.architectures[a])
                  << ": test accuracy " << test_accuracy[a] << "\n";
    }
    summary["architectures"] = std::move(archs);
    write_text(config.output_dir / "summary.json", summary.dump(2));
    std::cerr << "results in " << config.output_dir.string() << "\n";
    return 0;
}

int cli_cv(const CliArgs& args) {
    ExperimentConfig config = load_cli_config(args);
    resolve_output_dir(config, args);
    const CvReport report = run_cv(config);
    for (const ArchReport& arch : report.architectures)
        std::cerr << "architecture " << architecture_name(arch.hidden_dims) << ": mean accuracy "
                  << arch.mean_accuracy << " (sd " << arch.sd_accuracy << ", chance "
                  << report.prior_chance_level << ")\n";
    std::cerr << "results in " << config.output_dir.string() << "\n";
    return 0;
}

int cli_sweep(const CliArgs& args) {
    ExperimentConfig config = load_cli_config(args);
    resolve_output_dir(config, args);
    const std::vector<std::pair<std::size_t, CvReport>> results = run_size_sweep(config);
    for (const auto& [m, report] : results)
        std::cerr << "M=" << m << ": mean accuracy "
                  << report.architectures.front().mean_accuracy << "\n";
    std::cerr << "results in " << config.output_dir.string() << "\n";
    return 0;
}

int cli_psa(const CliArgs& args) {
    ExperimentConfig config = load_cli_config(args);
    resolve_output_dir(config, args);
    if (!args.params_path) throw ValidationError("psa needs --params <path>");
    const NetworkParams params = params_from_json(read_text(*args.params_path));
    const Dataset dataset = load_source(config);
    const Dataset reference = reference_dataset(config, dataset);
    run_psa(config, params, reference);
    std::cerr << "analysed " << reference.class_count << " classes over "
              << reference.samples.size() << " reference samples; results in "
              << config.output_dir.string() << "\n";
    return 0;
}

int cli_analyze(const CliArgs& args) {
    if (!args.psms_path) throw ValidationError("analyze needs --psms <path>");
    const auto [collection, names] = psm_collection_from_csv(read_text(*args.psms_path));
    Linkage linkage = Linkage::Average;
    if (args.linkage) linkage = linkage_from_name(*args.linkage);
    std::filesystem::path out_dir;
    if (args.out)
        out_dir = *args.out;
    else
        out_dir = default_run_dir(args.subcommand, args.seed.value_or(0));
    run_analysis(out_dir, collection, names, linkage);
    std::cerr << "analysed " << collection.entries.size() << " maps; results in "
              << out_dir.string() << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    if (argc < 2) {
        print_usage(std::cerr);
        return 1;
    }
    const std::string subcommand = argv[1];
    if (subcommand == "help" || subcommand == "--help" || subcommand == "-h") {
        print_usage(std::cerr);
        return 0;
    }
    CliArgs args;
    if (!parse_cli_args(argc, argv, args)) {
        print_usage(std::cerr);
        return 1;
    }
    try {
        if (subcommand == "synth") return cli_synth(args);
        if (subcommand == "train") return cli_train(args);
        if (subcommand == "cv") return cli_cv(args);
        if (subcommand == "sweep") return cli_sweep(args);
        if (subcommand == "psa") return cli_psa(args);
        if (subcommand == "analyze") return cli_analyze(args);
        std::cerr << "error: unknown subcommand \"" << subcommand << "\"\n";
        print_usage(std::cerr);
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace neurodecode

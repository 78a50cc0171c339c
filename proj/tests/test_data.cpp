#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <vector>

#include "neurodecode/dataset.hpp"
#include "neurodecode/errors.hpp"

using neurodecode::Dataset;
using neurodecode::Matrix;
using neurodecode::Sample;
using neurodecode::Splits;
using neurodecode::SplitSpec;
using neurodecode::SynthConfig;
using neurodecode::ValidationError;

namespace {

Dataset tiny_dataset(const std::vector<std::size_t>& class_counts) {
    Dataset ds;
    ds.d = 2;
    ds.class_count = class_counts.size();
    for (std::size_t c = 0; c < ds.class_count; ++c)
        ds.class_names.push_back("class" + std::to_string(c));
    for (std::size_t c = 0; c < class_counts.size(); ++c)
        for (std::size_t i = 0; i < class_counts[c]; ++i)
            ds.samples.push_back(Sample{"subj", {0.0, 0.0}, c});
    return ds;
}

std::vector<std::string> identity_order(std::size_t n) {
    std::vector<std::string> order;
    for (std::size_t i = 0; i < n; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "s%03zu", i);
        order.emplace_back(buf);
    }
    return order;
}

Dataset subjects_dataset(std::size_t n_subjects, std::size_t scans_each = 2) {
    Dataset ds;
    ds.d = 1;
    ds.class_count = 2;
    ds.class_names = {"class0", "class1"};
    const std::vector<std::string> ids = identity_order(n_subjects);
    for (std::size_t s = 0; s < n_subjects; ++s)
        for (std::size_t k = 0; k < scans_each; ++k)
            ds.samples.push_back(Sample{ids[s], {double(s)}, k % 2});
    return ds;
}

std::set<std::string> subject_set(const Dataset& ds) {
    std::set<std::string> ids;
    for (const Sample& s : ds.samples) ids.insert(s.subject_id);
    return ids;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("zscore standardizes columns with the population deviation") {
    Matrix m(3, 1);
    m(0, 0) = 1.0;
    m(1, 0) = 2.0;
    m(2, 0) = 3.0;
    const Matrix z = neurodecode::zscore(m);
    const double expected = std::sqrt(1.5);  // 1 / sqrt(2/3)
    CHECK(z(0, 0) == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(z(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(z(2, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("zscore maps constant columns to zero") {
    Matrix m(3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
        m(i, 0) = 5.0;
        m(i, 1) = double(i);
    }
    const Matrix z = neurodecode::zscore(m);
    for (std::size_t i = 0; i < 3; ++i) CHECK(z(i, 0) == 0.0);
}

TEST_CASE("zscore output has mean 0 and deviation 1 per column") {
    Matrix m(50, 4);
    std::uint64_t state = 99;
    for (auto& x : m.entries()) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        x = double(state >> 40) / 1048576.0 + 3.0;
    }
    const Matrix z = neurodecode::zscore(m);
    for (std::size_t j = 0; j < 4; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < 50; ++i) mean += z(i, j);
        mean /= 50.0;
        for (std::size_t i = 0; i < 50; ++i) var += (z(i, j) - mean) * (z(i, j) - mean);
        var /= 50.0;
        CHECK(std::abs(mean) <= 1e-10);
        CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-10);
    }

    // idempotence: standardizing standardized data changes nothing
    const Matrix zz = neurodecode::zscore(z);
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(zz(i, j) - z(i, j)) <= 1e-9);
}

TEST_CASE("zscore needs at least two rows") {
    CHECK_THROWS_AS(neurodecode::zscore(Matrix(1, 3)), ValidationError);
    CHECK_THROWS_AS(neurodecode::zscore(Matrix(0, 3)), ValidationError);
}

TEST_CASE("region_average averages voxel columns into regions") {
    Matrix voxels(1, 3);
    voxels(0, 0) = 1.0;
    voxels(0, 1) = 3.0;
    voxels(0, 2) = 10.0;
    const std::vector<std::size_t> labels{0, 0, 1};
    const Matrix out = neurodecode::region_average(voxels, labels, 2);
    REQUIRE(out.cols() == 2);
    CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(out(0, 1) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("region_average with one region returns per-sample means") {
    Matrix voxels(2, 4);
    for (std::size_t j = 0; j < 4; ++j) {
        voxels(0, j) = double(j);        // mean 1.5
        voxels(1, j) = double(2 * j);    // mean 3.0
    }
    const std::vector<std::size_t> labels{0, 0, 0, 0};
    const Matrix out = neurodecode::region_average(voxels, labels, 1);
    CHECK(out(0, 0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(out(1, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("region_average with identity labeling is the identity") {
    Matrix voxels(2, 3);
    for (auto& x : voxels.entries()) x = double(&x - voxels.entries().data());
    const std::vector<std::size_t> labels{0, 1, 2};
    const Matrix out = neurodecode::region_average(voxels, labels, 3);
    CHECK(out.entries() == voxels.entries());
}

TEST_CASE("region_average preserves the per-sample weighted mean") {
    Matrix voxels(3, 5);
    std::uint64_t state = 7;
    for (auto& x : voxels.entries()) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        x = double(state >> 40) / 1048576.0;
    }
    const std::vector<std::size_t> labels{0, 1, 1, 2, 2};
    const Matrix out = neurodecode::region_average(voxels, labels, 3);
    const std::vector<std::size_t> sizes{1, 2, 2};
    for (std::size_t i = 0; i < 3; ++i) {
        double direct = 0.0;
        for (std::size_t v = 0; v < 5; ++v) direct += voxels(i, v);
        direct /= 5.0;
        double weighted = 0.0;
        for (std::size_t r = 0; r < 3; ++r) weighted += out(i, r) * double(sizes[r]) / 5.0;
        CHECK(std::abs(direct - weighted) <= 1e-10);
    }
}

TEST_CASE("region_average rejects empty regions and bad labels") {
    Matrix voxels(1, 2);
    const std::vector<std::size_t> labels{0, 0};
    CHECK_THROWS_WITH_AS(neurodecode::region_average(voxels, labels, 2),
                         doctest::Contains("region 1"), ValidationError);
    const std::vector<std::size_t> bad{0, 5};
    CHECK_THROWS_AS(neurodecode::region_average(voxels, bad, 2), ValidationError);
}

TEST_CASE("make_splits follows the subject order") {
    const Dataset ds = subjects_dataset(100);
    SplitSpec spec;
    spec.subject_order = identity_order(100);

    const Splits splits = neurodecode::make_splits(ds, spec);
    std::set<std::string> want_test(spec.subject_order.begin(), spec.subject_order.begin() + 10);
    std::set<std::string> want_valid(spec.subject_order.begin() + 10,
                                     spec.subject_order.begin() + 20);
    std::set<std::string> want_train(spec.subject_order.begin() + 20, spec.subject_order.end());
    CHECK(subject_set(splits.test) == want_test);
    CHECK(subject_set(splits.valid) == want_valid);
    CHECK(subject_set(splits.train) == want_train);

    SUBCASE("smaller training sets take the earliest remaining subjects") {
        SplitSpec small = spec;
        small.n_train_subjects = 30;
        const Splits s2 = neurodecode::make_splits(ds, small);
        std::set<std::string> want(spec.subject_order.begin() + 20,
                                   spec.subject_order.begin() + 50);
        CHECK(subject_set(s2.train) == want);
        CHECK(subject_set(s2.test) == want_test);
        CHECK(subject_set(s2.valid) == want_valid);
    }
}

TEST_CASE("make_splits keeps sample order and metadata") {
    Dataset ds = subjects_dataset(4, 3);
    SplitSpec spec;
    spec.subject_order = identity_order(4);
    spec.n_test_subjects = 1;
    spec.n_valid_subjects = 1;
    spec.n_train_subjects = 2;
    const Splits splits = neurodecode::make_splits(ds, spec);
    CHECK(splits.train.d == ds.d);
    CHECK(splits.train.class_count == ds.class_count);
    CHECK(splits.train.class_names == ds.class_names);
    // dataset order within a split is preserved
    for (const Dataset* part : {&splits.train, &splits.valid, &splits.test}) {
        std::vector<double> firsts;
        for (const Sample& s : part->samples) firsts.push_back(s.features[0]);
        CHECK(std::is_sorted(firsts.begin(), firsts.end()));
    }
}

TEST_CASE("fold test sets partition the subjects") {
    const Dataset ds = subjects_dataset(100);
    SplitSpec spec;
    spec.subject_order = neurodecode::subject_order_for(ds, 17);
    std::set<std::string> seen;
    for (std::size_t fold = 0; fold < 10; ++fold) {
        spec.fold_index = fold;
        const Splits splits = neurodecode::make_splits(ds, spec);
        const std::set<std::string> test = subject_set(splits.test);
        const std::set<std::string> valid = subject_set(splits.valid);
        const std::set<std::string> train = subject_set(splits.train);
        CHECK(test.size() == 10);
        CHECK(valid.size() == 10);
        CHECK(train.size() == 80);
        for (const std::string& id : test) {
            CHECK(!valid.count(id));
            CHECK(!train.count(id));
            CHECK(!seen.count(id));
            seen.insert(id);
        }
        for (const std::string& id : valid) CHECK(!train.count(id));
    }
    CHECK(seen.size() == 100);
}

TEST_CASE("make_splits validates its inputs") {
    const Dataset ds = subjects_dataset(20);
    SplitSpec spec;
    spec.subject_order = identity_order(20);
    spec.n_test_subjects = 5;
    spec.n_valid_subjects = 5;
    spec.n_train_subjects = 20;  // 5 + 5 + 20 > 20
    CHECK_THROWS_AS(neurodecode::make_splits(ds, spec), ValidationError);

    spec.n_train_subjects = 10;
    spec.fold_index = 4;  // test range [20, 25) outside the 20 subjects
    CHECK_THROWS_AS(neurodecode::make_splits(ds, spec), ValidationError);

    spec.fold_index = 0;
    spec.subject_order.pop_back();
    CHECK_THROWS_AS(neurodecode::make_splits(ds, spec), ValidationError);
}

TEST_CASE("subject_order_for is a seeded permutation of the sorted ids") {
    const Dataset ds = subjects_dataset(30);
    const std::vector<std::string> a = neurodecode::subject_order_for(ds, 5);
    const std::vector<std::string> b = neurodecode::subject_order_for(ds, 5);
    const std::vector<std::string> c = neurodecode::subject_order_for(ds, 6);
    CHECK(a == b);
    CHECK(a != c);
    std::vector<std::string> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == ds.sorted_subject_ids());
}

TEST_CASE("synthesize is deterministic per seed") {
    SynthConfig config;
    config.n_subjects = 3;
    config.d = 5;
    config.class_count = 3;
    config.scans_per_class = {2, 3, 2};
    config.seed = 11;
    const Dataset a = neurodecode::synthesize(config);
    const Dataset b = neurodecode::synthesize(config);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].subject_id == b.samples[i].subject_id);
        CHECK(a.samples[i].label == b.samples[i].label);
        CHECK(a.samples[i].features == b.samples[i].features);
    }
    config.seed = 12;
    const Dataset c = neurodecode::synthesize(config);
    bool any_different = false;
    for (std::size_t i = 0; i < a.samples.size() && !any_different; ++i)
        any_different = a.samples[i].features != c.samples[i].features;
    CHECK(any_different);
}

TEST_CASE("synthesize with no noise and no distortion repeats the class pattern") {
    SynthConfig config;
    config.n_subjects = 2;
    config.d = 4;
    config.class_count = 2;
    config.scans_per_class = {3, 3};
    config.noise_scale = 0.0;
    config.subject_distortion_scale = 0.0;
    config.seed = 3;
    const Dataset ds = neurodecode::synthesize(config);
    // same subject + same class => identical feature vectors (standardization
    // is an affine per-column map, so equality survives it)
    for (const Sample& a : ds.samples)
        for (const Sample& b : ds.samples)
            if (a.subject_id == b.subject_id && a.label == b.label)
                CHECK(a.features == b.features);
}

TEST_CASE("synthesize default counts make the largest class about 20.9 percent") {
    SynthConfig config;
    config.n_subjects = 1;
    config.seed = 2;
    config.d = 3;
    const Dataset ds = neurodecode::synthesize(config);
    CHECK(ds.samples.size() == 1940);
    const std::vector<std::size_t> counts = ds.class_counts();
    CHECK(counts == std::vector<std::size_t>{176, 253, 316, 284, 232, 274, 405});
    CHECK(*std::max_element(counts.begin(), counts.end()) == 405);
    CHECK(neurodecode::prior_chance_level(ds) == doctest::Approx(0.2088).epsilon(2.5e-3));
    CHECK(ds.class_names.back() == "WM");
}

TEST_CASE("synthesize validates its config") {
    SynthConfig config;
    config.n_subjects = 0;
    CHECK_THROWS_AS(neurodecode::synthesize(config), ValidationError);
    config.n_subjects = 1;
    config.class_count = 3;  // no counts given for a non-default class count
    CHECK_THROWS_AS(neurodecode::synthesize(config), ValidationError);
    config.scans_per_class = {1, 1, 0};
    CHECK_THROWS_AS(neurodecode::synthesize(config), ValidationError);
    config.scans_per_class = {2, 1, 1};
    config.noise_scale = -1.0;
    CHECK_THROWS_AS(neurodecode::synthesize(config), ValidationError);
}

TEST_CASE("prior_chance_level returns the largest class fraction") {
    CHECK(neurodecode::prior_chance_level(
              tiny_dataset({176, 253, 316, 284, 232, 274, 405})) ==
          doctest::Approx(405.0 / 1940.0).epsilon(1e-12));
    CHECK(neurodecode::prior_chance_level(tiny_dataset({3, 3, 3, 3, 3, 3, 3})) ==
          doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(neurodecode::prior_chance_level(tiny_dataset({9})) == 1.0);
    CHECK_THROWS_AS(neurodecode::prior_chance_level(tiny_dataset({0, 0})), ValidationError);
}

TEST_CASE("dataset CSV round-trips exactly") {
    SynthConfig config;
    config.n_subjects = 3;
    config.d = 4;
    config.class_count = 2;
    config.scans_per_class = {2, 2};
    config.seed = 21;
    const Dataset ds = neurodecode::synthesize(config);

    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "neurodecode_test_roundtrip.csv";
    neurodecode::save_dataset_csv(ds, path);
    const Dataset loaded = neurodecode::load_dataset_csv(path);
    std::filesystem::remove(path);

    REQUIRE(loaded.samples.size() == ds.samples.size());
    CHECK(loaded.d == ds.d);
    CHECK(loaded.class_count == ds.class_count);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(loaded.samples[i].subject_id == ds.samples[i].subject_id);
        CHECK(loaded.samples[i].label == ds.samples[i].label);
        CHECK(loaded.samples[i].features == ds.samples[i].features);  // bit-exact
    }
}

TEST_CASE("dataset CSV loader rejects malformed files") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "neurodecode_test_bad.csv";
    auto write_file = [&path](const std::string& text) {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
    };

    write_file("wrong,header,f0\n");
    CHECK_THROWS_AS(neurodecode::load_dataset_csv(path), ValidationError);
    write_file("subject_id,label,f0\ns0,0,1.5,9.9\n");  // ragged row
    CHECK_THROWS_AS(neurodecode::load_dataset_csv(path), ValidationError);
    write_file("subject_id,label,f0\ns0,-1,1.5\n");  // negative label
    CHECK_THROWS_AS(neurodecode::load_dataset_csv(path), ValidationError);
    write_file("subject_id,label,f0\ns0,0,abc\n");  // non-numeric feature
    CHECK_THROWS_AS(neurodecode::load_dataset_csv(path), ValidationError);
    write_file("subject_id,label,f0\n");  // no samples
    CHECK_THROWS_AS(neurodecode::load_dataset_csv(path), ValidationError);
    fs::remove(path);
}

TEST_CASE("synth config JSON uses the documented field names") {
    SynthConfig config;
    config.n_subjects = 5;
    config.d = 8;
    config.class_count = 2;
    config.scans_per_class = {3, 4};
    config.prototype_scale = 1.5;
    config.subject_distortion_scale = 0.25;
    config.noise_scale = 0.75;
    config.seed = 99;
    const std::string text = neurodecode::synth_config_to_json(config);
    for (const char* key : {"n_subjects", "d", "class_count", "scans_per_class",
                            "prototype_scale", "subject_distortion_scale", "noise_scale", "seed"})
        CHECK(text.find(std::string("\"") + key + "\"") != std::string::npos);

    const SynthConfig back = neurodecode::synth_config_from_json(text);
    CHECK(back.n_subjects == config.n_subjects);
    CHECK(back.d == config.d);
    CHECK(back.class_count == config.class_count);
    CHECK(back.scans_per_class == config.scans_per_class);
    CHECK(back.prototype_scale == config.prototype_scale);
    CHECK(back.subject_distortion_scale == config.subject_distortion_scale);
    CHECK(back.noise_scale == config.noise_scale);
    CHECK(back.seed == config.seed);

    CHECK_THROWS_AS(neurodecode::synth_config_from_json("{oops"), ValidationError);
    CHECK_THROWS_AS(neurodecode::synth_config_from_json("{\"n_subjects\": -2}"), ValidationError);
}

TEST_CASE("split spec JSON uses the documented field names") {
    SplitSpec spec;
    spec.fold_index = 2;
    spec.n_test_subjects = 3;
    spec.n_valid_subjects = 4;
    spec.n_train_subjects = 5;
    spec.subject_order = {"b", "a", "c"};
    const std::string text = neurodecode::split_spec_to_json(spec);
    for (const char* key : {"fold_index", "n_test_subjects", "n_valid_subjects",
                            "n_train_subjects", "subject_order"})
        CHECK(text.find(std::string("\"") + key + "\"") != std::string::npos);
    const SplitSpec back = neurodecode::split_spec_from_json(text);
    CHECK(back.fold_index == spec.fold_index);
    CHECK(back.n_test_subjects == spec.n_test_subjects);
    CHECK(back.n_valid_subjects == spec.n_valid_subjects);
    CHECK(back.n_train_subjects == spec.n_train_subjects);
    CHECK(back.subject_order == spec.subject_order);
}

}  // TEST_SUITE

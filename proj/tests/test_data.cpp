#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "memto/data.hpp"
#include "memto/errors.hpp"
#include "memto/rng.hpp"

using namespace memto;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& content) {
        static int counter = 0;
        path = "memto_test_data_" + std::to_string(counter++) + ".csv";
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

RawSeries series_from(std::initializer_list<std::initializer_list<double>> rows) {
    RawSeries s;
    const Index T = static_cast<Index>(rows.size());
    const Index n = static_cast<Index>(rows.begin()->size());
    s.values.resize(T, n);
    Index t = 0;
    for (const auto& row : rows) {
        Index c = 0;
        for (double v : row) s.values(t, c++) = v;
        ++t;
    }
    return s;
}

} // namespace

TEST_CASE("load_csv parses values without labels") {
    TempFile f("1,2\n3,4\n5,6\n");
    RawSeries s = load_csv(f.path, false);
    CHECK(s.length() == 3);
    CHECK(s.channels() == 2);
    CHECK(s.values(0, 0) == 1.0);
    CHECK(s.values(2, 1) == 6.0);
    CHECK_FALSE(s.has_labels());
}

TEST_CASE("load_csv parses a trailing label column") {
    TempFile f("1,2,0\n3,4,1\n5,6,0\n");
    RawSeries s = load_csv(f.path, true);
    CHECK(s.channels() == 2);
    CHECK(s.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("load_csv names the offending cell") {
    TempFile f("1,2\n3,abc\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path, false),
                         doctest::Contains("row 2, column 2"), DataError);
}

TEST_CASE("load_csv rejects ragged rows") {
    TempFile f("1,2\n3\n");
    CHECK_THROWS_AS(load_csv(f.path, false), DataError);
}

TEST_CASE("load_csv rejects non-finite cells") {
    TempFile f("1,inf\n3,4\n");
    CHECK_THROWS_AS(load_csv(f.path, false), DataError);
    TempFile g("1,nan\n3,4\n");
    CHECK_THROWS_AS(load_csv(g.path, false), DataError);
}

TEST_CASE("load_csv rejects labels outside {0,1}") {
    TempFile f("1,2,2\n");
    CHECK_THROWS_AS(load_csv(f.path, true), DataError);
}

TEST_CASE("load_csv honors the header flag") {
    TempFile f("a,b\n1,2\n");
    RawSeries s = load_csv(f.path, false, true);
    CHECK(s.length() == 1);
    CHECK_THROWS_AS(load_csv(f.path, false, false), DataError);
}

TEST_CASE("csv round trip preserves values exactly") {
    Rng rng(11);
    RawSeries s;
    s.values.resize(23, 3);
    for (Index t = 0; t < 23; ++t) {
        for (Index c = 0; c < 3; ++c) s.values(t, c) = rng.normal() * 1e3;
    }
    s.labels.assign(23, 0);
    s.labels[7] = 1;
    TempFile f("");
    save_csv(s, f.path, true);
    RawSeries back = load_csv(f.path, true);
    CHECK(back.values == s.values);
    CHECK(back.labels == s.labels);
}

TEST_CASE("fit_normalizer floors the std of a constant channel") {
    RawSeries s = series_from({{5.0}, {5.0}, {5.0}});
    auto stats = fit_normalizer(s);
    CHECK(stats.mean(0) == 5.0);
    CHECK(stats.std(0) == NormalizationStats::kStdFloor);
}

TEST_CASE("fit_normalizer on symmetric data") {
    RawSeries s = series_from({{-1.0}, {1.0}});
    auto stats = fit_normalizer(s);
    CHECK(stats.mean(0) == 0.0);
    CHECK(stats.std(0) == 1.0);
}

TEST_CASE("fit_normalizer uses the population std") {
    // mean of {0,1,2,3} is 1.5, population variance 1.25
    RawSeries s = series_from({{0.0}, {1.0}, {2.0}, {3.0}});
    auto stats = fit_normalizer(s);
    CHECK(stats.mean(0) == doctest::Approx(1.5));
    CHECK(stats.std(0) == doctest::Approx(1.1180339887498949).epsilon(1e-12));
}

TEST_CASE("fit_normalizer rejects an empty series") {
    RawSeries s;
    s.values.resize(0, 2);
    CHECK_THROWS_AS(fit_normalizer(s), DataError);
}

TEST_CASE("normalize with self-fitted stats gives zero mean unit std") {
    Rng rng(3);
    RawSeries s;
    s.values.resize(100, 4);
    for (Index t = 0; t < 100; ++t) {
        for (Index c = 0; c < 4; ++c) s.values(t, c) = 2.0 + 3.0 * rng.normal();
    }
    RawSeries z = normalize(s, fit_normalizer(s));
    for (Index c = 0; c < 4; ++c) {
        CHECK(z.values.col(c).mean() == doctest::Approx(0.0).epsilon(1e-9));
        const double var = z.values.col(c).array().square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("normalize with identity stats is the identity") {
    RawSeries s = series_from({{1.0, 2.0}, {3.0, 4.0}});
    NormalizationStats stats;
    stats.mean = Vec::Zero(2);
    stats.std = Vec::Ones(2);
    CHECK(normalize(s, stats).values == s.values);
}

TEST_CASE("normalize arithmetic") {
    RawSeries s = series_from({{7.0}});
    NormalizationStats stats;
    stats.mean = Vec::Constant(1, 5.0);
    stats.std = Vec::Constant(1, 2.0);
    CHECK(normalize(s, stats).values(0, 0) == 1.0);
}

TEST_CASE("normalize rejects channel mismatch") {
    RawSeries s = series_from({{1.0, 2.0}});
    NormalizationStats stats;
    stats.mean = Vec::Zero(3);
    stats.std = Vec::Ones(3);
    CHECK_THROWS_AS(normalize(s, stats), DataError);
}

TEST_CASE("normalization is invertible above the std floor") {
    Rng rng(17);
    RawSeries s;
    s.values.resize(64, 5);
    for (Index t = 0; t < 64; ++t) {
        for (Index c = 0; c < 5; ++c) s.values(t, c) = rng.uniform(-10.0, 10.0);
    }
    auto stats = fit_normalizer(s);
    RawSeries back = denormalize(normalize(s, stats), stats);
    CHECK((back.values - s.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("train-mode windows drop the remainder") {
    RawSeries s;
    s.values.resize(250, 2);
    for (Index t = 0; t < 250; ++t) s.values.row(t).setConstant(static_cast<double>(t));
    auto batch = window(s, 100, WindowMode::kTrain);
    CHECK(batch.count() == 2);
    CHECK(batch.origin == std::vector<Index>{0, 100});
    CHECK(batch.pad_rows == 0);
}

TEST_CASE("score-mode windows pad by repeating the last timestamp") {
    RawSeries s;
    s.values.resize(250, 2);
    for (Index t = 0; t < 250; ++t) s.values.row(t).setConstant(static_cast<double>(t));
    auto batch = window(s, 100, WindowMode::kScore);
    CHECK(batch.count() == 3);
    CHECK(batch.pad_rows == 50);
    CHECK(batch.count() * 100 - batch.pad_rows == 250);
    // padded rows repeat row 249
    for (Index r = 50; r < 100; ++r) {
        CHECK(batch.windows[2](r, 0) == 249.0);
    }
}

TEST_CASE("exact multiple gives one window in both modes") {
    RawSeries s;
    s.values.resize(100, 1);
    s.values.setZero();
    CHECK(window(s, 100, WindowMode::kTrain).count() == 1);
    auto scored = window(s, 100, WindowMode::kScore);
    CHECK(scored.count() == 1);
    CHECK(scored.pad_rows == 0);
}

TEST_CASE("train-mode windowing rejects a series shorter than one window") {
    RawSeries s;
    s.values.resize(99, 1);
    s.values.setZero();
    CHECK_THROWS_AS(window(s, 100, WindowMode::kTrain), DataError);
    CHECK(window(s, 100, WindowMode::kScore).count() == 1);
}

TEST_CASE("train-mode windows tile the series") {
    Rng rng(5);
    RawSeries s;
    s.values.resize(437, 3);
    for (Index t = 0; t < 437; ++t) {
        for (Index c = 0; c < 3; ++c) s.values(t, c) = rng.normal();
    }
    auto batch = window(s, 50, WindowMode::kTrain);
    CHECK(batch.count() == 8);
    Mat stitched(8 * 50, 3);
    for (Index w = 0; w < 8; ++w) {
        stitched.middleRows(w * 50, 50) = batch.windows[static_cast<size_t>(w)];
    }
    CHECK(stitched == s.values.topRows(400));
}

TEST_CASE("split_train_val splits chronologically") {
    RawSeries s;
    s.values.resize(10, 1);
    for (Index t = 0; t < 10; ++t) s.values(t, 0) = static_cast<double>(t);
    auto [train, val] = split_train_val(s, 0.8);
    CHECK(train.length() == 8);
    CHECK(val.length() == 2);
    CHECK(val.values(0, 0) == 8.0);
}

TEST_CASE("split_train_val floors") {
    RawSeries s;
    s.values.resize(5, 1);
    s.values.setZero();
    auto [train, val] = split_train_val(s, 0.8);
    CHECK(train.length() == 4);
    CHECK(val.length() == 1);
}

TEST_CASE("split_train_val rejects a degenerate ratio") {
    RawSeries s;
    s.values.resize(4, 1);
    s.values.setZero();
    CHECK_THROWS_AS(split_train_val(s, 1.0), UsageError);
    CHECK_THROWS_AS(split_train_val(s, 0.0), UsageError);
}

TEST_CASE("synthetic generation is deterministic under a fixed seed") {
    SyntheticSpec spec;
    spec.train_length = 600;
    spec.test_length = 400;
    spec.channels = 3;
    spec.seed = 9;
    SyntheticData a = generate_synthetic(spec);
    SyntheticData b = generate_synthetic(spec);
    CHECK(a.train.values == b.train.values);
    CHECK(a.test.values == b.test.values);
    CHECK(a.test.labels == b.test.labels);
}

TEST_CASE("synthetic train split is anomaly free and unlabeled") {
    SyntheticSpec spec;
    spec.train_length = 500;
    spec.test_length = 300;
    spec.channels = 2;
    spec.seed = 2;
    SyntheticData d = generate_synthetic(spec);
    CHECK_FALSE(d.train.has_labels());
    CHECK(d.test.has_labels());
}

TEST_CASE("synthetic label count matches the requested ratio") {
    SyntheticSpec spec;
    spec.train_length = 1000;
    spec.test_length = 10000;
    spec.channels = 4;
    spec.anomaly_ratio = 0.01;
    spec.seed = 7;
    SyntheticData d = generate_synthetic(spec);
    Index labeled = 0;
    for (int v : d.test.labels) labeled += v;
    CHECK(labeled == 100);
}

TEST_CASE("spikes deviate at least five sigmas from the clean signal") {
    SyntheticSpec spec;
    spec.train_length = 500;
    spec.test_length = 2000;
    spec.channels = 3;
    spec.noise_std = 0.2;
    spec.anomaly_ratio = 0.02;
    spec.kinds = {AnomalyKind::kSpike};
    spec.seed = 4;
    SyntheticData d = generate_synthetic(spec);
    Index labeled = 0;
    for (Index t = 0; t < spec.test_length; ++t) {
        if (d.test.labels[static_cast<size_t>(t)] != 1) continue;
        ++labeled;
        const double dev =
            (d.test.values.row(t) - d.test_clean.row(t)).cwiseAbs().maxCoeff();
        CHECK(dev >= 5.0 * spec.noise_std);
    }
    CHECK(labeled == 40);
}

TEST_CASE("synthetic rejects a ratio outside (0,1)") {
    SyntheticSpec spec;
    spec.anomaly_ratio = 1.5;
    CHECK_THROWS_AS(generate_synthetic(spec), UsageError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "memto/rng.hpp"
#include "memto/tape.hpp"
#include "support/finite_diff.hpp"

using namespace memto;
using memto::testsupport::check_gradients;

namespace {

Mat random_mat(Index rows, Index cols, Rng& rng, double scale = 1.0) {
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    }
    return m;
}

// Runs the finite-difference oracle for a scalar graph built by `build` from
// leaf matrices stored outside the tape.
void expect_gradients_match(std::vector<Mat>& leaves,
                            const std::function<Var(Tape&, std::vector<Var>&)>& build,
                            double tolerance = 1e-6) {
    auto eval = [&] {
        Tape tape;
        std::vector<Var> nodes;
        nodes.reserve(leaves.size());
        for (const Mat& m : leaves) nodes.push_back(tape.input(m));
        return build(tape, nodes).value()(0, 0);
    };

    Tape tape;
    std::vector<Var> nodes;
    for (const Mat& m : leaves) nodes.push_back(tape.input(m));
    Var root = build(tape, nodes);
    tape.backward(root);

    std::vector<Mat*> values;
    std::vector<Mat> analytic;
    std::vector<std::string> names;
    for (size_t i = 0; i < leaves.size(); ++i) {
        values.push_back(&leaves[i]);
        analytic.push_back(nodes[i].grad());
        names.push_back("leaf" + std::to_string(i));
    }
    auto report = check_gradients(eval, values, analytic, names);
    INFO("worst coordinate: " << report.worst);
    CHECK(report.max_rel_error < tolerance);
}

} // namespace

TEST_CASE("matmul and add_row gradients") {
    Rng rng(1);
    std::vector<Mat> leaves = {random_mat(3, 4, rng), random_mat(4, 2, rng),
                               random_mat(1, 2, rng)};
    expect_gradients_match(leaves, [](Tape& t, std::vector<Var>& v) {
        return t.sum_sq(t.add_row(t.matmul(v[0], v[1]), v[2]));
    });
}

TEST_CASE("elementwise ops gradients") {
    Rng rng(2);
    std::vector<Mat> leaves = {random_mat(3, 3, rng), random_mat(3, 3, rng)};
    expect_gradients_match(leaves, [](Tape& t, std::vector<Var>& v) {
        Var mixed = t.add(t.cmul(v[0], v[1]), t.affine(t.sub(v[0], v[1]), 0.5, 0.25));
        return t.sum(t.cmul(mixed, mixed));
    });
}

TEST_CASE("sigmoid and gelu gradients") {
    Rng rng(3);
    std::vector<Mat> leaves = {random_mat(4, 3, rng, 2.0)};
    expect_gradients_match(leaves, [](Tape& t, std::vector<Var>& v) {
        return t.sum(t.cmul(t.sigmoid(v[0]), t.gelu(v[0])));
    });
}

TEST_CASE("softmax_rows gradient with sharp temperature") {
    Rng rng(4);
    std::vector<Mat> leaves = {random_mat(5, 4, rng), random_mat(5, 4, rng)};
    // The 0.1 temperature scales logits tenfold, so central differences carry
    // more truncation error here than for the other ops.
    expect_gradients_match(
        leaves,
        [](Tape& t, std::vector<Var>& v) {
            return t.sum(t.cmul(t.softmax_rows(v[0], 0.1), v[1]));
        },
        1e-5);
}

TEST_CASE("softmax_rows values") {
    Tape t;
    Mat logits(2, 3);
    logits << 1.0, 1.0, 1.0, 0.0, std::log(2.0), std::log(7.0);
    Var y = t.softmax_rows(t.constant(logits), 1.0);
    CHECK(y.value()(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(y.value()(1, 0) == doctest::Approx(0.1));
    CHECK(y.value()(1, 1) == doctest::Approx(0.2));
    CHECK(y.value()(1, 2) == doctest::Approx(0.7));
    CHECK(y.value().rowwise().sum().isApproxToConstant(1.0, 1e-12));
}

TEST_CASE("softmax_rows survives extreme logits") {
    Tape t;
    Mat logits(1, 3);
    logits << 1e4, -1e4, 0.0;
    Var y = t.softmax_rows(t.constant(logits), 0.1);
    CHECK(y.value().allFinite());
    CHECK(y.value()(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("layer_norm_rows gradient") {
    Rng rng(5);
    std::vector<Mat> leaves = {random_mat(4, 6, rng), random_mat(1, 6, rng),
                               random_mat(1, 6, rng)};
    expect_gradients_match(leaves, [](Tape& t, std::vector<Var>& v) {
        return t.sum_sq(t.layer_norm_rows(v[0], v[1], v[2]));
    });
}

TEST_CASE("layer_norm_rows normalizes each row") {
    Tape t;
    Rng rng(6);
    Mat x = random_mat(3, 8, rng, 5.0);
    Var y = t.layer_norm_rows(t.constant(x), t.constant(Mat::Ones(1, 8)),
                              t.constant(Mat::Zero(1, 8)));
    for (Index r = 0; r < 3; ++r) {
        CHECK(y.value().row(r).mean() == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(y.value().row(r).array().square().mean() == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("concat, slice and vstack gradients") {
    Rng rng(7);
    std::vector<Mat> leaves = {random_mat(3, 2, rng), random_mat(3, 3, rng),
                               random_mat(2, 5, rng)};
    expect_gradients_match(leaves, [](Tape& t, std::vector<Var>& v) {
        Var joined = t.concat_cols(v[0], v[1]);        // 3x5
        Var stacked = t.vstack({joined, v[2]});        // 5x5
        Var mid = t.slice_cols(stacked, 1, 3);         // 5x3
        return t.sum_sq(t.transpose(mid));
    });
}

TEST_CASE("entropy gradient and value") {
    Rng rng(8);
    std::vector<Mat> leaves = {random_mat(4, 5, rng)};
    expect_gradients_match(leaves, [](Tape& t, std::vector<Var>& v) {
        return t.entropy(t.softmax_rows(v[0], 1.0));
    });

    Tape t;
    Mat onehot = Mat::Zero(2, 3);
    onehot(0, 1) = 1.0;
    onehot(1, 2) = 1.0;
    CHECK(t.entropy(t.constant(onehot)).value()(0, 0) == 0.0);
    Mat uniform = Mat::Constant(2, 4, 0.25);
    CHECK(t.entropy(t.constant(uniform)).value()(0, 0) ==
          doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("dropout scales by the keep probability") {
    Tape t;
    Rng rng(9);
    Mat x = Mat::Ones(50, 40);
    Var y = t.dropout(t.constant(x), 0.25, rng);
    double kept = 0.0;
    for (Index i = 0; i < 50; ++i) {
        for (Index j = 0; j < 40; ++j) {
            const double v = y.value()(i, j);
            CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
            if (v != 0.0) kept += 1.0;
        }
    }
    CHECK(kept / 2000.0 == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("gradients accumulate when a node fans out") {
    Rng rng(10);
    std::vector<Mat> leaves = {random_mat(3, 3, rng)};
    expect_gradients_match(leaves, [](Tape& t, std::vector<Var>& v) {
        Var a = t.sigmoid(v[0]);
        Var b = t.matmul(a, a); // same node used twice
        return t.sum(t.add(b, a));
    });
}

TEST_CASE("constants receive no gradient work") {
    Tape t;
    Mat x = Mat::Ones(2, 2);
    Var c = t.constant(x);
    Var in = t.input(x);
    Var y = t.sum(t.cmul(c, in));
    t.backward(y);
    CHECK(c.grad().size() == 0);
    CHECK(in.grad() == Mat::Ones(2, 2));
}

TEST_CASE("backward requires a scalar root") {
    Tape t;
    Var m = t.input(Mat::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(m), std::invalid_argument);
}

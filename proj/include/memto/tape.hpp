#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "memto/rng.hpp"

namespace memto {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle to a node on a tape; cheap to copy, valid until Tape::clear().
class Var {
public:
    Var() = default;
    const Mat& value() const;
    const Mat& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int index) : tape_(tape), index_(index) {}
    Tape* tape_ = nullptr;
    int index_ = -1;
};

// Reverse-mode autodiff over dense double matrices. Nodes are recorded in
// construction order, which is already a topological order, so the backward
// pass is a single reverse sweep. One tape per optimizer step; clear() resets
// it for the next batch.
class Tape {
public:
    // Leaves. `input` accumulates a gradient, `constant` does not.
    Var constant(Mat v);
    Var input(Mat v);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var cmul(Var a, Var b); // elementwise
    Var affine(Var a, double mul, double add); // mul*a + add elementwise
    Var transpose(Var a);
    Var add_row(Var a, Var row); // broadcast a 1xC row over every row of a

    Var sigmoid(Var a);
    Var gelu(Var a);

    // Row softmax with temperature: softmax(a_row / temperature), computed
    // with max-subtraction.
    Var softmax_rows(Var a, double temperature);

    // Per-row layer norm with learned 1xC scale/shift.
    Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);

    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, Eigen::Index start, Eigen::Index len);
    Var vstack(const std::vector<Var>& parts);

    // Inverted dropout; identity when rate == 0.
    Var dropout(Var a, double rate, Rng& rng);

    Var sum(Var a);    // 1x1
    Var sum_sq(Var a); // 1x1, squared Frobenius norm

    // 1x1: sum of -a*ln(a) over entries, with 0*ln(0) := 0. Entries must be
    // non-negative (softmax outputs).
    Var entropy(Var a);

    // Backpropagate from a 1x1 root.
    void backward(Var root);

    void clear();
    size_t size() const { return nodes_.size(); }

private:
    friend class Var;

    struct Node {
        Mat value;
        Mat grad; // empty until touched by backward
        bool needs_grad = false;
        std::function<void(Tape&)> back; // empty for leaves
    };

    Node& at(int i) { return nodes_[static_cast<size_t>(i)]; }
    const Node& at(int i) const { return nodes_[static_cast<size_t>(i)]; }
    Var make(Mat value, bool needs_grad, std::function<void(Tape&)> back);
    Mat& grad_ref(int i); // zero-initializes to the value's shape

    std::vector<Node> nodes_;
};

} // namespace memto

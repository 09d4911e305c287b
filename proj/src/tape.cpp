#include "memto/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace memto {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double phi_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double phi_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

Mat stable_sigmoid(const Mat& x) {
    Mat y(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double v = x(i, j);
            if (v >= 0.0) {
                y(i, j) = 1.0 / (1.0 + std::exp(-v));
            } else {
                const double e = std::exp(v);
                y(i, j) = e / (1.0 + e);
            }
        }
    }
    return y;
}

} // namespace

const Mat& Var::value() const { return tape_->at(index_).value; }
const Mat& Var::grad() const { return tape_->at(index_).grad; }

Var Tape::make(Mat value, bool needs_grad, std::function<void(Tape&)> back) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Mat& Tape::grad_ref(int i) {
    Node& node = at(i);
    if (node.grad.size() == 0) {
        node.grad = Mat::Zero(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

Var Tape::constant(Mat v) { return make(std::move(v), false, nullptr); }

Var Tape::input(Mat v) { return make(std::move(v), true, nullptr); }

Var Tape::matmul(Var a, Var b) {
    const int ia = a.index_, ib = b.index_;
    const bool ng = at(ia).needs_grad || at(ib).needs_grad;
    Mat value = at(ia).value * at(ib).value;
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, ib, iy](Tape& t) {
        const Mat& g = t.at(iy).grad;
        if (t.at(ia).needs_grad) t.grad_ref(ia).noalias() += g * t.at(ib).value.transpose();
        if (t.at(ib).needs_grad) t.grad_ref(ib).noalias() += t.at(ia).value.transpose() * g;
    });
}

Var Tape::add(Var a, Var b) {
    const int ia = a.index_, ib = b.index_;
    const bool ng = at(ia).needs_grad || at(ib).needs_grad;
    Mat value = at(ia).value + at(ib).value;
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, ib, iy](Tape& t) {
        const Mat& g = t.at(iy).grad;
        if (t.at(ia).needs_grad) t.grad_ref(ia) += g;
        if (t.at(ib).needs_grad) t.grad_ref(ib) += g;
    });
}

Var Tape::sub(Var a, Var b) {
    const int ia = a.index_, ib = b.index_;
    const bool ng = at(ia).needs_grad || at(ib).needs_grad;
    Mat value = at(ia).value - at(ib).value;
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, ib, iy](Tape& t) {
        const Mat& g = t.at(iy).grad;
        if (t.at(ia).needs_grad) t.grad_ref(ia) += g;
        if (t.at(ib).needs_grad) t.grad_ref(ib) -= g;
    });
}

Var Tape::cmul(Var a, Var b) {
    const int ia = a.index_, ib = b.index_;
    const bool ng = at(ia).needs_grad || at(ib).needs_grad;
    Mat value = at(ia).value.cwiseProduct(at(ib).value);
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, ib, iy](Tape& t) {
        const Mat& g = t.at(iy).grad;
        if (t.at(ia).needs_grad) t.grad_ref(ia) += g.cwiseProduct(t.at(ib).value);
        if (t.at(ib).needs_grad) t.grad_ref(ib) += g.cwiseProduct(t.at(ia).value);
    });
}

Var Tape::affine(Var a, double mul, double add) {
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    Mat value = (at(ia).value.array() * mul + add).matrix();
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy, mul](Tape& t) {
        if (t.at(ia).needs_grad) t.grad_ref(ia) += mul * t.at(iy).grad;
    });
}

Var Tape::transpose(Var a) {
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    Mat value = at(ia).value.transpose();
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy](Tape& t) {
        if (t.at(ia).needs_grad) t.grad_ref(ia) += t.at(iy).grad.transpose();
    });
}

Var Tape::add_row(Var a, Var row) {
    const int ia = a.index_, ir = row.index_;
    if (at(ir).value.rows() != 1 || at(ir).value.cols() != at(ia).value.cols()) {
        throw std::invalid_argument("add_row: row must be 1 x cols(a)");
    }
    const bool ng = at(ia).needs_grad || at(ir).needs_grad;
    Mat value = at(ia).value.rowwise() + at(ir).value.row(0);
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, ir, iy](Tape& t) {
        const Mat& g = t.at(iy).grad;
        if (t.at(ia).needs_grad) t.grad_ref(ia) += g;
        if (t.at(ir).needs_grad) t.grad_ref(ir) += g.colwise().sum();
    });
}

Var Tape::sigmoid(Var a) {
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    Mat value = stable_sigmoid(at(ia).value);
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy](Tape& t) {
        if (!t.at(ia).needs_grad) return;
        const Mat& y = t.at(iy).value;
        t.grad_ref(ia).array() +=
            t.at(iy).grad.array() * y.array() * (1.0 - y.array());
    });
}

Var Tape::gelu(Var a) {
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    const Mat& x = at(ia).value;
    Mat value(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            value(i, j) = x(i, j) * phi_cdf(x(i, j));
        }
    }
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy](Tape& t) {
        if (!t.at(ia).needs_grad) return;
        const Mat& x = t.at(ia).value;
        const Mat& g = t.at(iy).grad;
        Mat& da = t.grad_ref(ia);
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const double v = x(i, j);
                da(i, j) += g(i, j) * (phi_cdf(v) + v * phi_pdf(v));
            }
        }
    });
}

Var Tape::softmax_rows(Var a, double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("softmax temperature must be positive");
    }
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    const Mat& x = at(ia).value;
    Mat value(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        Eigen::ArrayXd e = ((x.row(r).array() - mx) / temperature).exp();
        value.row(r) = (e / e.sum()).matrix();
    }
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy, temperature](Tape& t) {
        if (!t.at(ia).needs_grad) return;
        const Mat& y = t.at(iy).value;
        const Mat& g = t.at(iy).grad;
        Mat& da = t.grad_ref(ia);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const double dot = g.row(r).dot(y.row(r));
            da.row(r).array() +=
                y.row(r).array() * (g.row(r).array() - dot) / temperature;
        }
    });
}

Var Tape::layer_norm_rows(Var a, Var gamma, Var beta, double eps) {
    const int ia = a.index_, ig = gamma.index_, ib = beta.index_;
    const Mat& x = at(ia).value;
    const Eigen::Index C = x.cols();
    if (at(ig).value.rows() != 1 || at(ig).value.cols() != C || at(ib).value.rows() != 1 ||
        at(ib).value.cols() != C) {
        throw std::invalid_argument("layer_norm_rows: gamma/beta must be 1 x cols(a)");
    }
    const bool ng = at(ia).needs_grad || at(ig).needs_grad || at(ib).needs_grad;

    // Cache the normalized rows and inverse stddev for the backward pass.
    Mat xhat(x.rows(), C);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(r) = is;
        xhat.row(r) = ((x.row(r).array() - mu) * is).matrix();
    }
    Mat value = (xhat.array().rowwise() * at(ig).value.row(0).array()).rowwise() +
                at(ib).value.row(0).array();

    // xhat/inv_std live on the tape as constants so the closure stays small.
    Var xhat_node = constant(std::move(xhat));
    Var inv_node = constant(inv_std);
    const int ixh = xhat_node.index_, iis = inv_node.index_;

    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, ig, ib, ixh, iis, iy](Tape& t) {
        const Mat& g = t.at(iy).grad;
        const Mat& xh = t.at(ixh).value;
        const Mat& is = t.at(iis).value;
        if (t.at(ib).needs_grad) t.grad_ref(ib) += g.colwise().sum();
        if (t.at(ig).needs_grad) t.grad_ref(ig) += g.cwiseProduct(xh).colwise().sum();
        if (!t.at(ia).needs_grad) return;
        const Eigen::ArrayXd gamma_col = t.at(ig).value.row(0).transpose().array();
        Mat& da = t.grad_ref(ia);
        const double C = static_cast<double>(xh.cols());
        for (Eigen::Index r = 0; r < xh.rows(); ++r) {
            const Eigen::ArrayXd gy = g.row(r).transpose().array() * gamma_col;
            const Eigen::ArrayXd xr = xh.row(r).transpose().array();
            const double m1 = gy.sum() / C;
            const double m2 = (gy * xr).sum() / C;
            da.row(r) += (((gy - m1 - xr * m2) * is(r, 0)).matrix()).transpose();
        }
    });
}

Var Tape::concat_cols(Var a, Var b) {
    const int ia = a.index_, ib = b.index_;
    if (at(ia).value.rows() != at(ib).value.rows()) {
        throw std::invalid_argument("concat_cols: row mismatch");
    }
    const bool ng = at(ia).needs_grad || at(ib).needs_grad;
    const Eigen::Index ca = at(ia).value.cols(), cb = at(ib).value.cols();
    Mat value(at(ia).value.rows(), ca + cb);
    value.leftCols(ca) = at(ia).value;
    value.rightCols(cb) = at(ib).value;
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, ib, iy, ca, cb](Tape& t) {
        const Mat& g = t.at(iy).grad;
        if (t.at(ia).needs_grad) t.grad_ref(ia) += g.leftCols(ca);
        if (t.at(ib).needs_grad) t.grad_ref(ib) += g.rightCols(cb);
    });
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index len) {
    const int ia = a.index_;
    if (start < 0 || len < 1 || start + len > at(ia).value.cols()) {
        throw std::invalid_argument("slice_cols: out of range");
    }
    const bool ng = at(ia).needs_grad;
    Mat value = at(ia).value.middleCols(start, len);
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy, start, len](Tape& t) {
        if (t.at(ia).needs_grad) {
            t.grad_ref(ia).middleCols(start, len) += t.at(iy).grad;
        }
    });
}

Var Tape::vstack(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("vstack: no parts");
    }
    std::vector<int> idx;
    idx.reserve(parts.size());
    Eigen::Index rows = 0;
    const Eigen::Index cols = at(parts.front().index_).value.cols();
    bool ng = false;
    for (const Var& p : parts) {
        if (at(p.index_).value.cols() != cols) {
            throw std::invalid_argument("vstack: column mismatch");
        }
        idx.push_back(p.index_);
        rows += at(p.index_).value.rows();
        ng = ng || at(p.index_).needs_grad;
    }
    Mat value(rows, cols);
    Eigen::Index at_row = 0;
    for (int i : idx) {
        value.middleRows(at_row, at(i).value.rows()) = at(i).value;
        at_row += at(i).value.rows();
    }
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [idx, iy](Tape& t) {
        const Mat& g = t.at(iy).grad;
        Eigen::Index at_row = 0;
        for (int i : idx) {
            const Eigen::Index r = t.at(i).value.rows();
            if (t.at(i).needs_grad) t.grad_ref(i) += g.middleRows(at_row, r);
            at_row += r;
        }
    });
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout rate must lie in [0,1)");
    }
    if (rate == 0.0) return a;
    const int ia = a.index_;
    const Mat& x = at(ia).value;
    const double keep = 1.0 - rate;
    Mat mask(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            mask(i, j) = rng.uniform() < rate ? 0.0 : 1.0 / keep;
        }
    }
    Var mask_node = constant(std::move(mask));
    return cmul(a, mask_node);
}

Var Tape::sum(Var a) {
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    Mat value(1, 1);
    value(0, 0) = at(ia).value.sum();
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy](Tape& t) {
        if (t.at(ia).needs_grad) t.grad_ref(ia).array() += t.at(iy).grad(0, 0);
    });
}

Var Tape::sum_sq(Var a) {
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    Mat value(1, 1);
    value(0, 0) = at(ia).value.squaredNorm();
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy](Tape& t) {
        if (t.at(ia).needs_grad) {
            t.grad_ref(ia) += 2.0 * t.at(iy).grad(0, 0) * t.at(ia).value;
        }
    });
}

Var Tape::entropy(Var a) {
    const int ia = a.index_;
    const bool ng = at(ia).needs_grad;
    const Mat& x = at(ia).value;
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double w = x(i, j);
            if (w < 0.0) throw std::invalid_argument("entropy: negative weight");
            if (w > 0.0) total -= w * std::log(w);
        }
    }
    Mat value(1, 1);
    value(0, 0) = total;
    const int iy = static_cast<int>(nodes_.size());
    return make(std::move(value), ng, [ia, iy](Tape& t) {
        if (!t.at(ia).needs_grad) return;
        const Mat& x = t.at(ia).value;
        const double g = t.at(iy).grad(0, 0);
        Mat& da = t.grad_ref(ia);
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const double w = x(i, j);
                if (w > 0.0) da(i, j) += g * (-std::log(w) - 1.0);
            }
        }
    });
}

void Tape::backward(Var root) {
    if (root.tape_ != this) {
        throw std::invalid_argument("backward: root is not on this tape");
    }
    Node& r = at(root.index_);
    if (r.value.rows() != 1 || r.value.cols() != 1) {
        throw std::invalid_argument("backward: root must be a 1x1 scalar");
    }
    grad_ref(root.index_)(0, 0) = 1.0;
    for (int i = root.index_; i >= 0; --i) {
        Node& node = at(i);
        if (node.back && node.needs_grad && node.grad.size() != 0) {
            node.back(*this);
        }
    }
}

void Tape::clear() { nodes_.clear(); }

} // namespace memto

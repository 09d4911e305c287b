#include "memto/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memto/errors.hpp"
#include "memto/rng.hpp"

namespace memto {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
    if (lambda < 0.0) throw UsageError("lambda must be >= 0");
    if (!(lr > 0.0)) throw UsageError("lr must be positive");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
    if (patience < 1) throw UsageError("patience must be >= 1");
    if (!(kmeans_sample_frac > 0.0 && kmeans_sample_frac <= 1.0)) {
        throw UsageError("kmeans_sample_frac must lie in (0,1]");
    }
    if (kmeans_iters < 1) throw UsageError("kmeans_iters must be >= 1");
    if (kmeans_tol < 0.0) throw UsageError("kmeans_tol must be >= 0");
}

double reconstruction_loss(const std::vector<Mat>& x, const std::vector<Mat>& x_hat) {
    if (x.empty() || x.size() != x_hat.size()) {
        throw DataError("reconstruction_loss: batch size mismatch");
    }
    double total = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i].rows() != x_hat[i].rows() || x[i].cols() != x_hat[i].cols()) {
            throw DataError("reconstruction_loss: window shape mismatch");
        }
        total += (x[i] - x_hat[i]).squaredNorm();
    }
    return total / static_cast<double>(x.size());
}

double entropy_loss(const std::vector<Mat>& read_weights) {
    if (read_weights.empty()) {
        throw DataError("entropy_loss: empty batch");
    }
    double total = 0.0;
    for (const Mat& w : read_weights) {
        for (Index j = 0; j < w.cols(); ++j) {
            for (Index i = 0; i < w.rows(); ++i) {
                const double v = w(i, j);
                if (v < 0.0) throw DataError("entropy_loss: negative weight");
                if (v > 0.0) total -= v * std::log(v);
            }
        }
    }
    return total / static_cast<double>(read_weights.size());
}

double total_loss(double rec, double entr, double lambda) { return rec + lambda * entr; }

namespace {

Index nearest_centroid(const Mat& centroids, const Eigen::RowVectorXd& point) {
    Index best = 0;
    double best_d = (centroids.row(0) - point).squaredNorm();
    for (Index c = 1; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

} // namespace

KMeansResult kmeans(const Mat& points, Index k, int max_iters, double tol, uint64_t seed) {
    const Index P = points.rows();
    if (k < 1) throw UsageError("kmeans: k must be >= 1");
    if (P < k) {
        throw DataError("kmeans: " + std::to_string(P) + " points for " + std::to_string(k) +
                        " clusters");
    }

    Rng rng(seed);
    KMeansResult result;
    result.centroids.resize(k, points.cols());

    // k-means++ seeding.
    result.centroids.row(0) = points.row(static_cast<Index>(rng.below(static_cast<uint64_t>(P))));
    Eigen::VectorXd dist2(P);
    for (Index i = 0; i < P; ++i) {
        dist2(i) = (points.row(i) - result.centroids.row(0)).squaredNorm();
    }
    for (Index c = 1; c < k; ++c) {
        const double total = dist2.sum();
        Index chosen;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            chosen = P - 1;
            for (Index i = 0; i < P; ++i) {
                target -= dist2(i);
                if (target <= 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = static_cast<Index>(rng.below(static_cast<uint64_t>(P)));
        }
        result.centroids.row(c) = points.row(chosen);
        for (Index i = 0; i < P; ++i) {
            dist2(i) = std::min(dist2(i), (points.row(i) - result.centroids.row(c)).squaredNorm());
        }
    }

    result.assignment.assign(static_cast<size_t>(P), 0);
    for (int iter = 0; iter < max_iters; ++iter) {
        // Assign, tracking the objective for the centroids entering this
        // iteration.
        double objective = 0.0;
        for (Index i = 0; i < P; ++i) {
            const Index a = nearest_centroid(result.centroids, points.row(i));
            result.assignment[static_cast<size_t>(i)] = static_cast<int>(a);
            objective += (points.row(i) - result.centroids.row(a)).squaredNorm();
        }
        result.objective.push_back(objective);
        ++result.iterations;

        // Means.
        Mat next = Mat::Zero(k, points.cols());
        std::vector<Index> counts(static_cast<size_t>(k), 0);
        for (Index i = 0; i < P; ++i) {
            const auto a = static_cast<size_t>(result.assignment[static_cast<size_t>(i)]);
            next.row(static_cast<Index>(a)) += points.row(i);
            ++counts[a];
        }
        for (Index c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) {
                next.row(c) /= static_cast<double>(counts[static_cast<size_t>(c)]);
            } else {
                next.row(c) = result.centroids.row(c); // repaired below
            }
        }

        // Empty-cluster repair: relocate onto the point currently farthest
        // from its own centroid.
        std::vector<char> stolen(static_cast<size_t>(P), 0);
        for (Index c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) continue;
            Index far = -1;
            double far_d = -1.0;
            for (Index i = 0; i < P; ++i) {
                if (stolen[static_cast<size_t>(i)]) continue;
                const auto a = static_cast<Index>(result.assignment[static_cast<size_t>(i)]);
                const double d = (points.row(i) - next.row(a)).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far >= 0) {
                next.row(c) = points.row(far);
                result.assignment[static_cast<size_t>(far)] = static_cast<int>(c);
                stolen[static_cast<size_t>(far)] = 1;
            }
        }

        double shift = 0.0;
        for (Index c = 0; c < k; ++c) {
            shift = std::max(shift, (next.row(c) - result.centroids.row(c)).norm());
        }
        result.shifts.push_back(shift);
        result.centroids = next;
        if (shift < tol) break;
    }

    // Final assignment against the returned centroids.
    for (Index i = 0; i < P; ++i) {
        result.assignment[static_cast<size_t>(i)] =
            static_cast<int>(nearest_centroid(result.centroids, points.row(i)));
    }
    return result;
}

KMeansResult init_memory_kmeans(Memto& model, const SubSeriesBatch& train_windows,
                                const TrainConfig& cfg) {
    cfg.validate();
    const Index N = train_windows.count();
    if (N < 1) throw DataError("init_memory_kmeans: no training windows");

    const Index sample = std::min<Index>(
        N, static_cast<Index>(std::ceil(cfg.kmeans_sample_frac * static_cast<double>(N))));

    Rng rng(cfg.seed ^ 0x6b6d65616e735331ull); // sampling stream
    std::vector<Index> order(static_cast<size_t>(N));
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(order);
    order.resize(static_cast<size_t>(sample));
    std::sort(order.begin(), order.end());

    const Index L = train_windows.window_length;
    const Index C = model.config().latent_dim;
    const Index M = model.config().memory_items;
    Mat queries(sample * L, C);
    for (Index i = 0; i < sample; ++i) {
        queries.middleRows(i * L, L) =
            model.encode(train_windows.windows[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    }
    if (queries.rows() < M) {
        throw DataError("init_memory_kmeans: fewer queries (" + std::to_string(queries.rows()) +
                        ") than memory items (" + std::to_string(M) + ")");
    }

    KMeansResult km = kmeans(queries, M, cfg.kmeans_iters, cfg.kmeans_tol,
                             cfg.seed ^ 0x6b6d65616e735332ull);
    model.bank().items = km.centroids;
    return km;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<Parameter>& params,
                const std::vector<std::pair<size_t, Var>>& binds) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [idx, node] : binds) {
        const Mat& g = node.grad();
        if (g.size() == 0) continue; // no gradient reached this parameter
        Parameter& p = params[idx];
        if (p.adam_m.size() == 0) {
            p.adam_m = Mat::Zero(p.value.rows(), p.value.cols());
            p.adam_v = Mat::Zero(p.value.rows(), p.value.cols());
        }
        p.adam_m = beta1_ * p.adam_m + (1.0 - beta1_) * g;
        p.adam_v = beta2_ * p.adam_v.array().matrix() +
                   (1.0 - beta2_) * g.array().square().matrix();
        const Mat m_hat = p.adam_m / bc1;
        const Mat v_hat = p.adam_v / bc2;
        p.value.array() -= lr_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
    }
}

namespace {

struct Snapshot {
    std::vector<Mat> values;
    Mat items;
};

Snapshot take_snapshot(const Memto& model) {
    Snapshot s;
    s.values.reserve(model.params().size());
    for (const auto& p : model.params()) s.values.push_back(p.value);
    s.items = model.bank().items;
    return s;
}

void restore_snapshot(Memto& model, const Snapshot& s) {
    for (size_t i = 0; i < s.values.size(); ++i) {
        model.params()[i].value = s.values[i];
    }
    model.bank().items = s.items;
}

Var compose_loss(Tape& tape, const Memto::ForwardPass& fwd, const Mat& x_flat, double lambda,
                 LossMode mode) {
    const double inv_batch = 1.0 / static_cast<double>(fwd.batch);
    if (mode == LossMode::kEntropyOnly) {
        return tape.affine(tape.entropy(fwd.read_weights), inv_batch, 0.0);
    }
    Var rec = tape.affine(tape.sum_sq(tape.sub(fwd.reconstruction, tape.constant(x_flat))),
                          inv_batch, 0.0);
    if (mode == LossMode::kReconstructionOnly || lambda == 0.0) {
        return rec;
    }
    Var entr = tape.affine(tape.entropy(fwd.read_weights), inv_batch, 0.0);
    return tape.add(rec, tape.affine(entr, lambda, 0.0));
}

Mat stack_windows(const std::vector<Mat>& windows) {
    const Index L = windows.front().rows();
    const Index n = windows.front().cols();
    Mat flat(static_cast<Index>(windows.size()) * L, n);
    for (size_t i = 0; i < windows.size(); ++i) {
        flat.middleRows(static_cast<Index>(i) * L, L) = windows[i];
    }
    return flat;
}

double eval_loss(const Memto& model, const SubSeriesBatch& batch, const TrainConfig& cfg,
                 LossMode mode) {
    Tape tape;
    double total = 0.0;
    Index counted = 0;
    const size_t step = static_cast<size_t>(cfg.batch_size);
    for (size_t start = 0; start < batch.windows.size(); start += step) {
        const size_t stop = std::min(batch.windows.size(), start + step);
        std::vector<Mat> group(batch.windows.begin() + static_cast<long>(start),
                               batch.windows.begin() + static_cast<long>(stop));
        tape.clear();
        auto fwd = model.forward(tape, group, RunMode::kEval);
        Var loss = compose_loss(tape, fwd, stack_windows(group), cfg.lambda, mode);
        total += loss.value()(0, 0) * static_cast<double>(group.size());
        counted += static_cast<Index>(group.size());
    }
    return total / static_cast<double>(counted);
}

PhaseReport run_phase(Memto& model, int phase_index, const SubSeriesBatch& train_windows,
                      const SubSeriesBatch& val_windows, const TrainConfig& cfg,
                      LossMode mode) {
    const Index N = train_windows.count();
    Rng shuffle_rng(cfg.seed ^ (0x7068617365000000ull + static_cast<uint64_t>(phase_index)));
    Rng dropout_rng(cfg.seed ^ (0x64726f7000000000ull + static_cast<uint64_t>(phase_index)));
    Adam adam(cfg.lr);
    Tape tape;

    PhaseReport report;
    Snapshot best = take_snapshot(model);

    std::vector<Index> order(static_cast<size_t>(N));
    std::iota(order.begin(), order.end(), Index{0});

    for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        Index counted = 0;
        for (Index start = 0; start < N; start += cfg.batch_size) {
            const Index stop = std::min(N, start + cfg.batch_size);
            std::vector<Mat> group;
            group.reserve(static_cast<size_t>(stop - start));
            for (Index i = start; i < stop; ++i) {
                group.push_back(train_windows.windows[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            }
            tape.clear();
            auto fwd = model.forward(tape, group, RunMode::kTrain, &dropout_rng);
            Var loss = compose_loss(tape, fwd, stack_windows(group), cfg.lambda, mode);
            const double loss_value = loss.value()(0, 0);
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("non-finite training loss in phase " +
                                      std::to_string(phase_index) + " at epoch " +
                                      std::to_string(epoch + 1));
            }
            tape.backward(loss);
            adam.step(model.params(), fwd.binds);
            model.bank().items = fwd.new_items.value(); // detach the written items
            epoch_loss += loss_value * static_cast<double>(group.size());
            counted += static_cast<Index>(group.size());
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(counted));

        const double val = eval_loss(model, val_windows, cfg, mode);
        if (!std::isfinite(val)) {
            throw DivergenceError("non-finite validation loss in phase " +
                                  std::to_string(phase_index) + " at epoch " +
                                  std::to_string(epoch + 1));
        }
        report.val_loss.push_back(val);
        report.stopped_epoch = epoch;

        if (val < report.best_val_loss) {
            report.best_val_loss = val;
            report.best_epoch = epoch;
            best = take_snapshot(model);
        } else if (epoch - report.best_epoch >= cfg.patience) {
            break;
        }
    }

    restore_snapshot(model, best);
    return report;
}

struct PreparedData {
    SubSeriesBatch train_windows;
    SubSeriesBatch val_windows;
};

PreparedData prepare(const Memto& model, const RawSeries& normalized, double split_ratio) {
    auto [train_part, val_part] = split_train_val(normalized, split_ratio);
    PreparedData out;
    out.train_windows = window(train_part, model.config().window_length, WindowMode::kTrain);
    out.val_windows = window(val_part, model.config().window_length, WindowMode::kTrain);
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

TrainResult train_two_phase(Memto& model, const RawSeries& train, const TrainConfig& cfg,
                            const TrainOptions& opts) {
    cfg.validate();
    TrainResult result;
    result.stats = fit_normalizer(train);
    const RawSeries normalized = normalize(train, result.stats);
    PreparedData data = prepare(model, normalized, opts.split_ratio);

    auto t0 = std::chrono::steady_clock::now();
    result.report.phase1 =
        run_phase(model, 1, data.train_windows, data.val_windows, cfg, opts.loss_mode);
    result.report.seconds_phase1 = seconds_since(t0);

    if (opts.skip_kmeans) {
        result.phase = "phase1";
        return result;
    }

    t0 = std::chrono::steady_clock::now();
    KMeansResult km = init_memory_kmeans(model, data.train_windows, cfg);
    result.report.seconds_kmeans = seconds_since(t0);
    result.report.kmeans_objective = km.objective;
    result.report.kmeans_shifts = km.shifts;
    result.report.kmeans_iterations = km.iterations;

    t0 = std::chrono::steady_clock::now();
    result.report.phase2 =
        run_phase(model, 2, data.train_windows, data.val_windows, cfg, opts.loss_mode);
    result.report.seconds_phase2 = seconds_since(t0);
    result.report.two_phase = true;
    result.phase = "phase2";
    return result;
}

TrainResult train_phase2_only(Memto& model, const RawSeries& train,
                              const NormalizationStats& stats, const TrainConfig& cfg,
                              const TrainOptions& opts) {
    cfg.validate();
    TrainResult result;
    result.stats = stats;
    const RawSeries normalized = normalize(train, stats);
    PreparedData data = prepare(model, normalized, opts.split_ratio);

    auto t0 = std::chrono::steady_clock::now();
    KMeansResult km = init_memory_kmeans(model, data.train_windows, cfg);
    result.report.seconds_kmeans = seconds_since(t0);
    result.report.kmeans_objective = km.objective;
    result.report.kmeans_shifts = km.shifts;
    result.report.kmeans_iterations = km.iterations;

    t0 = std::chrono::steady_clock::now();
    result.report.phase2 =
        run_phase(model, 2, data.train_windows, data.val_windows, cfg, opts.loss_mode);
    result.report.seconds_phase2 = seconds_since(t0);
    result.report.two_phase = true;
    result.phase = "phase2";
    return result;
}

namespace {

ordered_json phase_to_json(const PhaseReport& p) {
    return ordered_json{{"train_loss", p.train_loss},
                        {"val_loss", p.val_loss},
                        {"best_epoch", p.best_epoch},
                        {"stopped_epoch", p.stopped_epoch},
                        {"best_val_loss", p.best_val_loss}};
}

} // namespace

std::string report_to_json(const TrainReport& report) {
    ordered_json j;
    j["two_phase"] = report.two_phase;
    j["phase1"] = phase_to_json(report.phase1);
    if (report.two_phase) {
        j["kmeans"] = ordered_json{{"iterations", report.kmeans_iterations},
                                   {"objective", report.kmeans_objective},
                                   {"shifts", report.kmeans_shifts}};
        j["phase2"] = phase_to_json(report.phase2);
    }
    return j.dump(2) + "\n";
}

std::string timing_to_text(const TrainReport& report) {
    std::ostringstream out;
    out << "phase1_seconds " << report.seconds_phase1 << "\n";
    if (report.two_phase) {
        out << "kmeans_seconds " << report.seconds_kmeans << "\n";
        out << "phase2_seconds " << report.seconds_phase2 << "\n";
    }
    out << "total_seconds "
        << (report.seconds_phase1 + report.seconds_kmeans + report.seconds_phase2) << "\n";
    return out.str();
}

} // namespace memto

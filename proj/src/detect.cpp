#include "memto/detect.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "memto/errors.hpp"
#include "memto/tape.hpp"

namespace memto {

Vec latent_deviation(const Mat& queries, const Mat& items) {
    if (items.rows() < 1) throw DataError("latent_deviation: empty memory");
    if (queries.cols() != items.cols()) {
        throw DataError("latent_deviation: latent dimension mismatch");
    }
    Vec out(queries.rows());
    for (Index t = 0; t < queries.rows(); ++t) {
        double best = (queries.row(t) - items.row(0)).squaredNorm();
        for (Index i = 1; i < items.rows(); ++i) {
            const double d = (queries.row(t) - items.row(i)).squaredNorm();
            if (d < best) best = d; // strict <: ties keep the lowest index
        }
        out(t) = best;
    }
    return out;
}

Vec input_deviation(const Mat& x, const Mat& x_hat) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
        throw DataError("input_deviation: shape mismatch");
    }
    return (x - x_hat).rowwise().squaredNorm();
}

Vec anomaly_score(const Vec& lsd, const Vec& isd) {
    if (lsd.size() != isd.size()) {
        throw DataError("anomaly_score: length mismatch");
    }
    const Mat weights = stable_softmax_rows(lsd.transpose(), 1.0);
    return weights.row(0).transpose().cwiseProduct(isd);
}

Criterion criterion_from_name(const std::string& name) {
    if (name == "both") return Criterion::kBoth;
    if (name == "isd") return Criterion::kIsdOnly;
    if (name == "lsd") return Criterion::kLsdOnly;
    throw UsageError("unknown criterion '" + name + "' (expected both|isd|lsd)");
}

std::string criterion_name(Criterion c) {
    switch (c) {
        case Criterion::kBoth: return "both";
        case Criterion::kIsdOnly: return "isd";
        case Criterion::kLsdOnly: return "lsd";
    }
    return "unknown";
}

ScoreSeries score_series(const Memto& model, const NormalizationStats& stats,
                         const RawSeries& series, Criterion criterion, int threads) {
    if (series.channels() != model.config().channels) {
        throw DataError("series has " + std::to_string(series.channels()) +
                        " channels, checkpoint expects " +
                        std::to_string(model.config().channels));
    }
    const RawSeries normalized = normalize(series, stats);
    const SubSeriesBatch batch = window(normalized, model.config().window_length,
                                        WindowMode::kScore);
    const Index L = batch.window_length;
    const Index W = batch.count();
    const Index padded = W * L;

    Vec score(padded), lsd_all(padded), isd_all(padded);

    auto score_window = [&](Index w) {
        Tape tape;
        auto fwd = model.forward(tape, {batch.windows[static_cast<size_t>(w)]}, RunMode::kEval);
        const Vec lsd_w = latent_deviation(fwd.queries.value(), model.bank().items);
        const Vec isd_w =
            input_deviation(batch.windows[static_cast<size_t>(w)], fwd.reconstruction.value());
        Vec score_w;
        switch (criterion) {
            case Criterion::kBoth: score_w = anomaly_score(lsd_w, isd_w); break;
            case Criterion::kIsdOnly: score_w = isd_w; break;
            case Criterion::kLsdOnly: score_w = lsd_w; break;
        }
        score.segment(w * L, L) = score_w;
        lsd_all.segment(w * L, L) = lsd_w;
        isd_all.segment(w * L, L) = isd_w;
    };

    threads = std::max(1, threads);
    if (threads == 1 || W < 2) {
        for (Index w = 0; w < W; ++w) score_window(w);
    } else {
        std::vector<std::thread> pool;
        std::atomic<Index> next{0};
        const int workers = std::min<int>(threads, static_cast<int>(W));
        for (int i = 0; i < workers; ++i) {
            pool.emplace_back([&] {
                for (Index w = next.fetch_add(1); w < W; w = next.fetch_add(1)) {
                    score_window(w);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    ScoreSeries out;
    const Index T = series.length();
    out.score = score.head(T);
    out.lsd = lsd_all.head(T);
    out.isd = isd_all.head(T);
    out.labels = series.labels;
    return out;
}

double select_threshold(const Vec& train_scores, const Vec& val_scores, double p_percent) {
    if (!(p_percent > 0.0 && p_percent <= 100.0)) {
        throw UsageError("p_percent must lie in (0,100]");
    }
    const Index n = train_scores.size() + val_scores.size();
    if (n < 1) throw DataError("select_threshold: empty score pool");

    std::vector<double> pool;
    pool.reserve(static_cast<size_t>(n));
    pool.insert(pool.end(), train_scores.data(), train_scores.data() + train_scores.size());
    pool.insert(pool.end(), val_scores.data(), val_scores.data() + val_scores.size());
    std::sort(pool.begin(), pool.end());

    const double percentile = 100.0 - p_percent;
    Index rank = static_cast<Index>(
        std::ceil(percentile / 100.0 * static_cast<double>(n)));
    rank = std::max<Index>(1, std::min(rank, n));
    return pool[static_cast<size_t>(rank - 1)];
}

std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size()) {
        throw DataError("point_adjust: length mismatch");
    }
    std::vector<int> adjusted = pred;
    const size_t T = gt.size();
    size_t t = 0;
    while (t < T) {
        if (gt[t] != 1) {
            ++t;
            continue;
        }
        size_t end = t;
        while (end < T && gt[end] == 1) ++end;
        bool hit = false;
        for (size_t i = t; i < end && !hit; ++i) hit = pred[i] == 1;
        if (hit) {
            for (size_t i = t; i < end; ++i) adjusted[i] = 1;
        }
        t = end;
    }
    return adjusted;
}

EvalResult prf1(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size()) {
        throw DataError("prf1: length mismatch");
    }
    EvalResult r;
    for (size_t t = 0; t < pred.size(); ++t) {
        if (pred[t] == 1 && gt[t] == 1) ++r.tp;
        else if (pred[t] == 1 && gt[t] == 0) ++r.fp;
        else if (pred[t] == 0 && gt[t] == 1) ++r.fn;
    }
    r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp)
                                    : 0.0;
    r.recall = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn)
                                 : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

double lsd_ratio(const Mat& normal_queries, const Mat& abnormal_queries, const Mat& items) {
    if (normal_queries.rows() < 1 || abnormal_queries.rows() < 1) {
        throw DataError("lsd_ratio: both query sets must be nonempty");
    }
    const double mean_normal = latent_deviation(normal_queries, items).mean();
    const double mean_abnormal = latent_deviation(abnormal_queries, items).mean();
    if (mean_abnormal == 0.0) {
        throw DataError("lsd_ratio: abnormal mean deviation is zero");
    }
    return mean_normal / mean_abnormal;
}

LsdAnalysis analyze_lsd(const Memto& model, const NormalizationStats& stats,
                        const RawSeries& labeled) {
    if (!labeled.has_labels()) {
        throw DataError("analyze_lsd: series has no labels");
    }
    ScoreSeries scored = score_series(model, stats, labeled, Criterion::kLsdOnly);

    LsdAnalysis out;
    double sum_normal = 0.0, sum_abnormal = 0.0;
    for (Index t = 0; t < scored.length(); ++t) {
        if (labeled.labels[static_cast<size_t>(t)] == 1) {
            sum_abnormal += scored.lsd(t);
            ++out.abnormal_count;
        } else {
            sum_normal += scored.lsd(t);
            ++out.normal_count;
        }
    }
    if (out.abnormal_count == 0) {
        throw DataError("analyze_lsd: no abnormal timestamps in labels");
    }
    if (out.normal_count == 0) {
        throw DataError("analyze_lsd: no normal timestamps in labels");
    }
    out.mean_normal = sum_normal / static_cast<double>(out.normal_count);
    out.mean_abnormal = sum_abnormal / static_cast<double>(out.abnormal_count);
    if (out.mean_abnormal == 0.0) {
        throw DataError("analyze_lsd: abnormal mean deviation is zero");
    }
    out.ratio = out.mean_normal / out.mean_abnormal;
    return out;
}

namespace {

void format_g17(std::string& out, double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    out.append(buf, static_cast<size_t>(len));
}

} // namespace

void write_trace(const std::string& path, const ScoreSeries& scores) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace '" + path + "'");
    out << "index,score,lsd,isd,threshold,raw_pred,adjusted_pred,label\n";
    const bool preds = !scores.raw_pred.empty();
    std::string line;
    for (Index t = 0; t < scores.length(); ++t) {
        line.clear();
        line += std::to_string(t);
        line.push_back(',');
        format_g17(line, scores.score(t));
        line.push_back(',');
        format_g17(line, scores.lsd(t));
        line.push_back(',');
        format_g17(line, scores.isd(t));
        line.push_back(',');
        if (scores.has_threshold()) format_g17(line, scores.threshold);
        line.push_back(',');
        if (preds) line += std::to_string(scores.raw_pred[static_cast<size_t>(t)]);
        line.push_back(',');
        if (preds) line += std::to_string(scores.adjusted_pred[static_cast<size_t>(t)]);
        line.push_back(',');
        if (!scores.labels.empty()) line += std::to_string(scores.labels[static_cast<size_t>(t)]);
        line.push_back('\n');
        out << line;
    }
    if (!out) throw DataError("write failed for trace '" + path + "'");
}

ScoreSeries read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open trace '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("trace '" + path + "' is empty");
    if (line.rfind("index,score", 0) != 0) {
        throw DataError("'" + path + "' does not look like a score trace");
    }

    std::vector<double> score, lsd, isd;
    std::vector<int> raw_pred, adjusted_pred, labels;
    double threshold = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> cells;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        cells.clear();
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        cells.push_back(cur);
        if (cells.size() != 8) {
            throw DataError("trace row with " + std::to_string(cells.size()) +
                            " fields (expected 8) in '" + path + "'");
        }
        score.push_back(std::stod(cells[1]));
        lsd.push_back(std::stod(cells[2]));
        isd.push_back(std::stod(cells[3]));
        if (!cells[4].empty()) threshold = std::stod(cells[4]);
        if (!cells[5].empty()) raw_pred.push_back(std::stoi(cells[5]));
        if (!cells[6].empty()) adjusted_pred.push_back(std::stoi(cells[6]));
        if (!cells[7].empty()) labels.push_back(std::stoi(cells[7]));
    }

    ScoreSeries out;
    const Index T = static_cast<Index>(score.size());
    out.score = Eigen::Map<Vec>(score.data(), T);
    out.lsd = Eigen::Map<Vec>(lsd.data(), T);
    out.isd = Eigen::Map<Vec>(isd.data(), T);
    out.threshold = threshold;
    out.raw_pred = std::move(raw_pred);
    out.adjusted_pred = std::move(adjusted_pred);
    out.labels = std::move(labels);
    return out;
}

} // namespace memto

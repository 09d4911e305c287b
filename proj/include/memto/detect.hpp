#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "memto/data.hpp"
#include "memto/model.hpp"

namespace memto {

// Squared distance from each query row to its nearest memory item; ties go to
// the lowest item index.
Vec latent_deviation(const Mat& queries, const Mat& items);

// Per-timestamp squared reconstruction residual across channels.
Vec input_deviation(const Mat& x, const Mat& x_hat);

// Per-window anomaly score: softmax of the latent deviations (over the
// window, temperature 1) times the input deviations, elementwise.
Vec anomaly_score(const Vec& lsd, const Vec& isd);

enum class Criterion { kBoth, kIsdOnly, kLsdOnly };
Criterion criterion_from_name(const std::string& name);
std::string criterion_name(Criterion c);

// Per-timestamp scores for a whole series. `threshold`, `raw_pred` and
// `adjusted_pred` stay unset until evaluation fills them in.
struct ScoreSeries {
    Vec score;
    Vec lsd;
    Vec isd;
    std::vector<int> labels; // copied from the input series when present
    double threshold = std::numeric_limits<double>::quiet_NaN();
    std::vector<int> raw_pred;
    std::vector<int> adjusted_pred;

    Index length() const { return score.size(); }
    bool has_threshold() const { return !std::isnan(threshold); }
};

// Windows the series in score mode, runs the eval-mode forward per window,
// applies the criterion and truncates padding so there is exactly one row per
// timestamp. Deviations are computed in the normalized input space. `threads`
// splits windows across workers; outputs are written to preassigned slots so
// the result does not depend on the thread count.
ScoreSeries score_series(const Memto& model, const NormalizationStats& stats,
                         const RawSeries& series, Criterion criterion = Criterion::kBoth,
                         int threads = 1);

// Nearest-rank (100-p) percentile of the pooled train+validation scores. A
// point is anomalous iff score > threshold (strict).
double select_threshold(const Vec& train_scores, const Vec& val_scores, double p_percent);

// Marks every timestamp of a ground-truth segment detected when any of its
// timestamps is predicted; predictions outside segments are unchanged.
std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& gt);

struct EvalResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

// Pointwise precision/recall/F1; zero denominators yield zero.
EvalResult prf1(const std::vector<int>& pred, const std::vector<int>& gt);

// Mean latent deviation of normal queries divided by the abnormal mean.
double lsd_ratio(const Mat& normal_queries, const Mat& abnormal_queries, const Mat& items);

struct LsdAnalysis {
    double mean_normal = 0.0;
    double mean_abnormal = 0.0;
    double ratio = 0.0;
    Index normal_count = 0;
    Index abnormal_count = 0;
};

// Per-timestamp latent deviations for a labeled series, partitioned by label.
LsdAnalysis analyze_lsd(const Memto& model, const NormalizationStats& stats,
                        const RawSeries& labeled);

// Trace file: header row then one CSV row per timestamp with columns
// index,score,lsd,isd,threshold,raw_pred,adjusted_pred,label. Unset fields
// are empty.
void write_trace(const std::string& path, const ScoreSeries& scores);
ScoreSeries read_trace(const std::string& path);

} // namespace memto

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace memto {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// A length-T, n-channel real-valued series. Labels (1 = anomaly) are only
// present on test data; an empty vector means "no labels".
struct RawSeries {
    Mat values;                             // T x n
    std::vector<int> labels;                // empty or length T, entries in {0,1}
    std::vector<std::string> channel_names; // empty or length n

    Index length() const { return values.rows(); }
    Index channels() const { return values.cols(); }
    bool has_labels() const { return !labels.empty(); }
};

// Per-channel z-score statistics, fitted on the training split only.
struct NormalizationStats {
    static constexpr double kStdFloor = 1e-8;
    Vec mean; // n
    Vec std;  // n, floored at kStdFloor
};

enum class WindowMode { kTrain, kScore };

// Fixed-length windows cut from a series. In train mode the trailing
// remainder is dropped; in score mode the last window is padded by repeating
// the final timestamp and `pad_rows` records how much to truncate when
// stitching per-timestamp outputs back together.
struct SubSeriesBatch {
    std::vector<Mat> windows;  // each L x n
    std::vector<Index> origin; // start timestamp of each window
    Index window_length = 0;
    Index pad_rows = 0;

    Index count() const { return static_cast<Index>(windows.size()); }
};

enum class AnomalyKind { kSpike, kLevelShift, kSegmentNoise };

struct SyntheticSpec {
    Index train_length = 20000;
    Index test_length = 10000;
    Index channels = 8;
    std::vector<double> base_frequencies; // cycles per step; auto-filled when empty
    double noise_std = 0.1;
    double anomaly_ratio = 0.01; // fraction of test timestamps, in (0,1)
    std::vector<AnomalyKind> kinds = {AnomalyKind::kSpike, AnomalyKind::kLevelShift,
                                      AnomalyKind::kSegmentNoise};
    uint64_t seed = 0;
};

struct SyntheticData {
    RawSeries train;  // anomaly-free, label-free
    RawSeries test;   // labeled
    Mat test_clean;   // noise- and anomaly-free test signal, kept for diagnostics
};

// CSV: one row per timestamp, comma separated, optional trailing integer
// label column. Errors name the offending 1-based row/column.
RawSeries load_csv(const std::string& path, bool has_labels, bool skip_header = false);
void save_csv(const RawSeries& series, const std::string& path, bool with_labels);

NormalizationStats fit_normalizer(const RawSeries& train);
RawSeries normalize(const RawSeries& series, const NormalizationStats& stats);
RawSeries denormalize(const RawSeries& series, const NormalizationStats& stats);

SubSeriesBatch window(const RawSeries& series, Index length, WindowMode mode);

// Contiguous chronological split: first floor(ratio*T) rows / remainder.
std::pair<RawSeries, RawSeries> split_train_val(const RawSeries& train, double ratio = 0.8);

SyntheticData generate_synthetic(const SyntheticSpec& spec);

std::string anomaly_kind_name(AnomalyKind kind);
AnomalyKind anomaly_kind_from_name(const std::string& name);

} // namespace memto

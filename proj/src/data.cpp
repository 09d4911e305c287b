#include "memto/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "memto/errors.hpp"
#include "memto/rng.hpp"

namespace memto {

namespace {

double parse_cell(const std::string& cell, Index row, Index col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || begin == end) {
        throw DataError("csv parse error at row " + std::to_string(row + 1) + ", column " +
                        std::to_string(col + 1) + ": '" + cell + "' is not a number");
    }
    if (!std::isfinite(value)) {
        throw DataError("non-finite value at row " + std::to_string(row + 1) + ", column " +
                        std::to_string(col + 1));
    }
    return value;
}

void split_line(const std::string& line, std::vector<std::string>& cells) {
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
}

void format_value(std::string& out, double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    out.append(buf, static_cast<size_t>(len));
}

} // namespace

RawSeries load_csv(const std::string& path, bool has_labels, bool skip_header) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<std::string> cells;
    std::string line;
    Index columns = -1;
    Index row_index = 0;
    bool first = true;

    while (std::getline(in, line)) {
        if (first && skip_header) {
            first = false;
            continue;
        }
        first = false;
        if (line.empty() || line == "\r") continue;
        split_line(line, cells);
        const Index ncells = static_cast<Index>(cells.size());
        if (columns < 0) {
            columns = ncells;
            if (has_labels && columns < 2) {
                throw DataError("csv with labels needs at least two columns");
            }
        } else if (ncells != columns) {
            throw DataError("ragged csv: row " + std::to_string(row_index + 1) + " has " +
                            std::to_string(ncells) + " columns, expected " +
                            std::to_string(columns));
        }

        const Index value_cols = has_labels ? columns - 1 : columns;
        std::vector<double> row(static_cast<size_t>(value_cols));
        for (Index c = 0; c < value_cols; ++c) {
            row[static_cast<size_t>(c)] = parse_cell(cells[static_cast<size_t>(c)], row_index, c);
        }
        rows.push_back(std::move(row));

        if (has_labels) {
            const double raw = parse_cell(cells[static_cast<size_t>(columns - 1)], row_index,
                                          columns - 1);
            if (raw != 0.0 && raw != 1.0) {
                throw DataError("label at row " + std::to_string(row_index + 1) +
                                " is not in {0,1}");
            }
            labels.push_back(raw == 1.0 ? 1 : 0);
        }
        ++row_index;
    }

    if (rows.empty()) {
        throw DataError("csv '" + path + "' contains no data rows");
    }

    RawSeries series;
    const Index T = static_cast<Index>(rows.size());
    const Index n = static_cast<Index>(rows.front().size());
    series.values.resize(T, n);
    for (Index t = 0; t < T; ++t) {
        for (Index c = 0; c < n; ++c) {
            series.values(t, c) = rows[static_cast<size_t>(t)][static_cast<size_t>(c)];
        }
    }
    series.labels = std::move(labels);
    return series;
}

void save_csv(const RawSeries& series, const std::string& path, bool with_labels) {
    if (with_labels && !series.has_labels()) {
        throw DataError("cannot write labels: series has none");
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    std::string line;
    for (Index t = 0; t < series.length(); ++t) {
        line.clear();
        for (Index c = 0; c < series.channels(); ++c) {
            if (c > 0) line.push_back(',');
            format_value(line, series.values(t, c));
        }
        if (with_labels) {
            line.push_back(',');
            line.push_back(series.labels[static_cast<size_t>(t)] ? '1' : '0');
        }
        line.push_back('\n');
        out << line;
    }
    if (!out) {
        throw DataError("write failed for '" + path + "'");
    }
}

NormalizationStats fit_normalizer(const RawSeries& train) {
    if (train.length() < 1 || train.channels() < 1) {
        throw DataError("cannot fit normalizer on an empty series");
    }
    NormalizationStats stats;
    const Index n = train.channels();
    stats.mean = train.values.colwise().mean();
    stats.std.resize(n);
    const double T = static_cast<double>(train.length());
    for (Index c = 0; c < n; ++c) {
        const double var = (train.values.col(c).array() - stats.mean(c)).square().sum() / T;
        stats.std(c) = std::max(std::sqrt(var), NormalizationStats::kStdFloor);
    }
    return stats;
}

RawSeries normalize(const RawSeries& series, const NormalizationStats& stats) {
    if (series.channels() != stats.mean.size()) {
        throw DataError("channel count mismatch: series has " +
                        std::to_string(series.channels()) + ", stats have " +
                        std::to_string(stats.mean.size()));
    }
    RawSeries out = series;
    out.values = (series.values.rowwise() - stats.mean.transpose()).array().rowwise() /
                 stats.std.transpose().array();
    return out;
}

RawSeries denormalize(const RawSeries& series, const NormalizationStats& stats) {
    if (series.channels() != stats.mean.size()) {
        throw DataError("channel count mismatch: series has " +
                        std::to_string(series.channels()) + ", stats have " +
                        std::to_string(stats.mean.size()));
    }
    RawSeries out = series;
    out.values = (series.values.array().rowwise() * stats.std.transpose().array()).rowwise() +
                 stats.mean.transpose().array();
    return out;
}

SubSeriesBatch window(const RawSeries& series, Index length, WindowMode mode) {
    if (length < 1) {
        throw UsageError("window length must be >= 1");
    }
    const Index T = series.length();
    SubSeriesBatch batch;
    batch.window_length = length;

    if (mode == WindowMode::kTrain) {
        if (T < length) {
            throw DataError("series of length " + std::to_string(T) +
                            " is shorter than one training window (" + std::to_string(length) +
                            ")");
        }
        const Index count = T / length;
        batch.windows.reserve(static_cast<size_t>(count));
        for (Index i = 0; i < count; ++i) {
            batch.windows.push_back(series.values.middleRows(i * length, length));
            batch.origin.push_back(i * length);
        }
        return batch;
    }

    // Score mode: every timestamp must land in exactly one emitted row after
    // truncating the pad.
    const Index full = T / length;
    for (Index i = 0; i < full; ++i) {
        batch.windows.push_back(series.values.middleRows(i * length, length));
        batch.origin.push_back(i * length);
    }
    const Index rem = T - full * length;
    if (rem > 0) {
        Mat last(length, series.channels());
        last.topRows(rem) = series.values.bottomRows(rem);
        last.bottomRows(length - rem) = series.values.row(T - 1).replicate(length - rem, 1);
        batch.windows.push_back(std::move(last));
        batch.origin.push_back(full * length);
        batch.pad_rows = length - rem;
    }
    return batch;
}

std::pair<RawSeries, RawSeries> split_train_val(const RawSeries& train, double ratio) {
    if (train.length() < 2) {
        throw DataError("need at least two rows to split");
    }
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw UsageError("split ratio must lie strictly inside (0,1)");
    }
    Index head = static_cast<Index>(std::floor(ratio * static_cast<double>(train.length())));
    head = std::max<Index>(1, std::min(head, train.length() - 1));

    auto take = [&](Index start, Index count) {
        RawSeries part;
        part.values = train.values.middleRows(start, count);
        if (train.has_labels()) {
            part.labels.assign(train.labels.begin() + start, train.labels.begin() + start + count);
        }
        part.channel_names = train.channel_names;
        return part;
    };
    return {take(0, head), take(head, train.length() - head)};
}

namespace {

// Smooth multi-sine base signal with light cross-channel coupling.
Mat clean_signal(const SyntheticSpec& spec, const std::vector<double>& freqs,
                 const std::vector<double>& phases, Index start, Index count) {
    const Index n = spec.channels;
    Mat base(count, n);
    for (Index c = 0; c < n; ++c) {
        const double f = freqs[static_cast<size_t>(c)];
        const double ph = phases[static_cast<size_t>(c)];
        for (Index t = 0; t < count; ++t) {
            const double x = static_cast<double>(start + t);
            base(t, c) = std::sin(2.0 * M_PI * f * x + ph) +
                         0.4 * std::sin(2.0 * M_PI * 2.3 * f * x + 1.7 * ph);
        }
    }
    Mat mixed(count, n);
    for (Index c = 0; c < n; ++c) {
        mixed.col(c) = base.col(c) + 0.3 * base.col((c + 1) % n);
    }
    return mixed;
}

struct InjectionPlan {
    std::vector<Index> spike_positions;
    struct Segment {
        Index start;
        Index length;
        AnomalyKind kind;
    };
    std::vector<Segment> segments;
};

bool span_free(const std::vector<char>& used, Index start, Index len) {
    for (Index i = start; i < start + len; ++i) {
        if (used[static_cast<size_t>(i)]) return false;
    }
    return true;
}

// Spread the label budget over the test span: segments first, then spikes
// placed one per stratum so anomalies appear throughout the series rather
// than clumping.
InjectionPlan plan_injection(const SyntheticSpec& spec, Index budget, Rng& rng) {
    InjectionPlan plan;
    const Index T = spec.test_length;
    std::vector<char> used(static_cast<size_t>(T), 0);

    const bool want_spikes = std::find(spec.kinds.begin(), spec.kinds.end(),
                                       AnomalyKind::kSpike) != spec.kinds.end();
    std::vector<AnomalyKind> seg_kinds;
    for (AnomalyKind k : spec.kinds) {
        if (k != AnomalyKind::kSpike) seg_kinds.push_back(k);
    }

    Index seg_budget = 0;
    if (!seg_kinds.empty()) {
        seg_budget = want_spikes ? budget / 5 : budget;
    }
    Index spike_budget = budget - seg_budget;

    Index seg_index = 0;
    while (seg_budget > 0) {
        Index len = std::min<Index>(seg_budget, 8 + static_cast<Index>(rng.below(8)));
        const AnomalyKind kind = seg_kinds[static_cast<size_t>(seg_index) % seg_kinds.size()];
        ++seg_index;
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const Index start = static_cast<Index>(rng.below(static_cast<uint64_t>(T - len + 1)));
            if (span_free(used, start, len)) {
                std::fill(used.begin() + start, used.begin() + start + len, 1);
                plan.segments.push_back({start, len, kind});
                placed = true;
            }
        }
        if (!placed) break; // series too crowded; remaining budget goes to spikes
        seg_budget -= len;
    }
    spike_budget = budget - static_cast<Index>([&] {
        Index covered = 0;
        for (const auto& s : plan.segments) covered += s.length;
        return covered;
    }());

    if (!want_spikes) {
        return plan;
    }

    // One spike per stratum of width T/spike_budget, jittered inside it.
    if (spike_budget > 0) {
        const double stride = static_cast<double>(T) / static_cast<double>(spike_budget);
        for (Index s = 0; s < spike_budget; ++s) {
            const Index lo = static_cast<Index>(std::floor(stride * static_cast<double>(s)));
            const Index hi = std::min<Index>(
                T, static_cast<Index>(std::floor(stride * static_cast<double>(s + 1))));
            Index pos = -1;
            for (int attempt = 0; attempt < 200; ++attempt) {
                const Index cand =
                    lo + static_cast<Index>(rng.below(static_cast<uint64_t>(std::max<Index>(1, hi - lo))));
                if (!used[static_cast<size_t>(cand)]) {
                    pos = cand;
                    break;
                }
            }
            if (pos < 0) {
                // stratum fully occupied; fall back to a global search
                for (Index cand = 0; cand < T; ++cand) {
                    if (!used[static_cast<size_t>(cand)]) {
                        pos = cand;
                        break;
                    }
                }
            }
            if (pos < 0) break;
            used[static_cast<size_t>(pos)] = 1;
            plan.spike_positions.push_back(pos);
        }
    }
    return plan;
}

} // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (!(spec.anomaly_ratio > 0.0 && spec.anomaly_ratio < 1.0)) {
        throw UsageError("anomaly_ratio must lie strictly inside (0,1)");
    }
    if (spec.train_length < 1 || spec.test_length < 1 || spec.channels < 1) {
        throw UsageError("synthetic lengths and channel count must be positive");
    }
    if (spec.noise_std < 0.0) {
        throw UsageError("noise_std must be non-negative");
    }
    if (spec.kinds.empty()) {
        throw UsageError("at least one anomaly kind is required");
    }
    if (!spec.base_frequencies.empty() &&
        static_cast<Index>(spec.base_frequencies.size()) != spec.channels) {
        throw UsageError("base_frequencies must have one entry per channel");
    }

    Rng rng(spec.seed);
    const Index n = spec.channels;

    std::vector<double> freqs = spec.base_frequencies;
    if (freqs.empty()) {
        freqs.resize(static_cast<size_t>(n));
        for (Index c = 0; c < n; ++c) {
            freqs[static_cast<size_t>(c)] = 1.0 / (60.0 + 17.0 * static_cast<double>(c));
        }
    }
    std::vector<double> phases(static_cast<size_t>(n));
    for (Index c = 0; c < n; ++c) {
        phases[static_cast<size_t>(c)] = rng.uniform(0.0, 2.0 * M_PI);
    }

    SyntheticData data;
    const Mat train_clean = clean_signal(spec, freqs, phases, 0, spec.train_length);
    data.test_clean = clean_signal(spec, freqs, phases, spec.train_length, spec.test_length);

    data.train.values = train_clean;
    for (Index t = 0; t < spec.train_length; ++t) {
        for (Index c = 0; c < n; ++c) {
            data.train.values(t, c) += spec.noise_std * rng.normal();
        }
    }

    data.test.values = data.test_clean;
    data.test.labels.assign(static_cast<size_t>(spec.test_length), 0);
    for (Index t = 0; t < spec.test_length; ++t) {
        for (Index c = 0; c < n; ++c) {
            data.test.values(t, c) += spec.noise_std * rng.normal();
        }
    }

    const Index budget = static_cast<Index>(
        std::llround(spec.anomaly_ratio * static_cast<double>(spec.test_length)));
    InjectionPlan plan = plan_injection(spec, std::max<Index>(1, budget), rng);

    const double sigma = std::max(spec.noise_std, 1e-3);

    auto pick_channels = [&](Index min_count) {
        std::vector<Index> all(static_cast<size_t>(n));
        for (Index c = 0; c < n; ++c) all[static_cast<size_t>(c)] = c;
        rng.shuffle(all);
        const Index count =
            std::max(min_count, static_cast<Index>(rng.below(static_cast<uint64_t>(n))) + 1);
        all.resize(static_cast<size_t>(std::min(count, n)));
        return all;
    };

    for (Index pos : plan.spike_positions) {
        // Replace the noise at the spiked coordinates so the deviation from
        // the clean signal is guaranteed to clear 5 sigma.
        for (Index c : pick_channels(1)) {
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            data.test.values(pos, c) = data.test_clean(pos, c) + sign * rng.uniform(6.0, 9.0) * sigma;
        }
        data.test.labels[static_cast<size_t>(pos)] = 1;
    }

    for (const auto& seg : plan.segments) {
        if (seg.kind == AnomalyKind::kLevelShift) {
            const auto channels = pick_channels(1);
            for (Index c : channels) {
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                const double shift = sign * rng.uniform(5.0, 8.0) * sigma;
                for (Index t = seg.start; t < seg.start + seg.length; ++t) {
                    data.test.values(t, c) += shift;
                }
            }
        } else { // segment noise burst
            for (Index t = seg.start; t < seg.start + seg.length; ++t) {
                for (Index c = 0; c < n; ++c) {
                    data.test.values(t, c) = data.test_clean(t, c) + 6.0 * sigma * rng.normal();
                }
            }
        }
        for (Index t = seg.start; t < seg.start + seg.length; ++t) {
            data.test.labels[static_cast<size_t>(t)] = 1;
        }
    }

    return data;
}

std::string anomaly_kind_name(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::kSpike: return "spike";
        case AnomalyKind::kLevelShift: return "level-shift";
        case AnomalyKind::kSegmentNoise: return "segment-noise";
    }
    return "unknown";
}

AnomalyKind anomaly_kind_from_name(const std::string& name) {
    if (name == "spike") return AnomalyKind::kSpike;
    if (name == "level-shift" || name == "level_shift") return AnomalyKind::kLevelShift;
    if (name == "segment-noise" || name == "segment_noise") return AnomalyKind::kSegmentNoise;
    throw UsageError("unknown anomaly kind '" + name + "'");
}

} // namespace memto

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "memto/data.hpp"
#include "memto/model.hpp"

namespace memto {

enum class LossMode { kTotal, kReconstructionOnly, kEntropyOnly };

struct TrainConfig {
    double lambda = 0.01;        // entropy weight
    double lr = 5e-5;
    Index batch_size = 32;
    Index max_epochs = 100;      // per phase
    Index patience = 10;         // epochs without validation improvement
    double kmeans_sample_frac = 0.10;
    int kmeans_iters = 100;
    double kmeans_tol = 1e-4;
    uint64_t seed = 0;

    void validate() const;
};

struct TrainOptions {
    bool skip_kmeans = false; // single-phase training with random items
    LossMode loss_mode = LossMode::kTotal;
    double split_ratio = 0.8; // chronological train/validation split
};

// Batch-mean squared Frobenius reconstruction error.
double reconstruction_loss(const std::vector<Mat>& x, const std::vector<Mat>& x_hat);

// Batch-mean Shannon entropy of the read weights, natural log, 0*ln(0) := 0.
double entropy_loss(const std::vector<Mat>& read_weights);

double total_loss(double rec, double entr, double lambda);

struct KMeansResult {
    Mat centroids;                 // k x C
    std::vector<int> assignment;   // per point
    std::vector<double> objective; // sum of squared distances, per Lloyd iteration
    std::vector<double> shifts;    // max centroid movement, per Lloyd iteration
    int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding; empty clusters are repaired by
// relocating onto the point farthest from its assigned centroid.
KMeansResult kmeans(const Mat& points, Index k, int max_iters, double tol, uint64_t seed);

// Samples ceil(frac*N) training windows, encodes them with the current
// model, clusters the flattened queries and overwrites the memory items with
// the centroids. Gate projections are untouched.
KMeansResult init_memory_kmeans(Memto& model, const SubSeriesBatch& train_windows,
                                const TrainConfig& cfg);

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::vector<Parameter>& params,
              const std::vector<std::pair<size_t, Var>>& binds);
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

struct PhaseReport {
    std::vector<double> train_loss; // per epoch
    std::vector<double> val_loss;   // per epoch
    Index best_epoch = -1;          // 0-based, the restored snapshot
    Index stopped_epoch = -1;       // 0-based, last epoch run
    double best_val_loss = std::numeric_limits<double>::infinity();
};

struct TrainReport {
    PhaseReport phase1;
    PhaseReport phase2; // empty when single-phase
    bool two_phase = false;
    std::vector<double> kmeans_objective;
    std::vector<double> kmeans_shifts;
    int kmeans_iterations = 0;
    // Coarse stage timings. Deliberately excluded from report_to_json so the
    // serialized report is identical across reruns; see timing_to_text.
    double seconds_phase1 = 0.0;
    double seconds_kmeans = 0.0;
    double seconds_phase2 = 0.0;
};

struct TrainResult {
    TrainReport report;
    NormalizationStats stats;
    std::string phase; // "phase1" or "phase2"
};

// Phase 1 trains the full model from random memory; the memory is then
// re-initialized to k-means centroids of encoded training queries and phase 2
// retrains everything. The model is left holding the best-validation state of
// the final phase.
TrainResult train_two_phase(Memto& model, const RawSeries& train, const TrainConfig& cfg,
                            const TrainOptions& opts = {});

// Resume from a phase-1 state: k-means init plus phase 2 only. `stats` must
// be the normalization fitted when the phase-1 model was trained.
TrainResult train_phase2_only(Memto& model, const RawSeries& train,
                              const NormalizationStats& stats, const TrainConfig& cfg,
                              const TrainOptions& opts = {});

std::string report_to_json(const TrainReport& report); // deterministic
std::string timing_to_text(const TrainReport& report); // wall-clock, volatile

} // namespace memto

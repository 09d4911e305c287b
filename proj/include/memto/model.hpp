#pragma once

#include <string>
#include <utility>
#include <vector>

#include "memto/data.hpp"
#include "memto/tape.hpp"

namespace memto {

struct ModelConfig {
    Index window_length = 100; // L
    Index channels = 0;        // n, set from data before construction
    Index latent_dim = 64;     // C
    Index enc_layers = 3;
    Index enc_heads = 8;
    Index dec_layers = 2;
    Index memory_items = 10;   // M
    double tau = 0.1;
    double dropout = 0.1;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Learnable tensor plus its Adam state.
struct Parameter {
    std::string name;
    Mat value;
    Mat adam_m;
    Mat adam_v;
};

// Prototype items. Updated only through the gated write, never by the
// optimizer; the gate projections live with the other parameters.
struct MemoryBank {
    Mat items; // M x C
};

// Row-stable softmax of x / temperature, shared by the memory ops and the
// anomaly criterion.
Mat stable_softmax_rows(const Mat& x, double temperature);

// Canonical memory-module math on plain matrices. `queries` holds one query
// per row (a window, or a batch-flattened stack of windows).
Mat write_attention(const Mat& items, const Mat& queries, double tau); // M x T, rows sum to 1
Mat read_attention(const Mat& items, const Mat& queries, double tau);  // T x M, rows sum to 1
Mat retrieve(const Mat& items, const Mat& read_weights);               // T x C

struct GateResult {
    Mat aggregate; // M x C, attention-weighted query sums
    Mat gate;      // M x C, sigmoid outputs in (0,1)
    Mat items;     // M x C, convex combination of old items and aggregate
};
GateResult gated_write(const Mat& items, const Mat& u_proj, const Mat& w_proj,
                       const Mat& queries, const Mat& write_weights);

enum class RunMode { kTrain, kEval };

class Memto {
public:
    Memto(ModelConfig config, uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }
    Parameter& param(const std::string& name);
    const Parameter& param(const std::string& name) const;
    MemoryBank& bank() { return bank_; }
    const MemoryBank& bank() const { return bank_; }
    Index param_count() const;

    struct ForwardPass {
        Var reconstruction; // (B*L) x n
        Var queries;        // (B*L) x C
        Var read_weights;   // (B*L) x M
        Var retrieved;      // (B*L) x C
        Var updated_query;  // (B*L) x 2C
        Var new_items;      // M x C; equals the stored items in eval mode
        std::vector<std::pair<size_t, Var>> binds; // param index -> tape leaf
        Index batch = 0;
    };

    // Runs the full pipeline on a batch of L x n windows. In train mode the
    // gated write happens in-graph and `new_items` carries the post-write
    // items (the caller commits them to the bank after the optimizer step);
    // in eval mode the bank is read-only. `dropout_rng` may be null when
    // dropout is disabled or in eval mode.
    ForwardPass forward(Tape& tape, const std::vector<Mat>& windows, RunMode mode,
                        Rng* dropout_rng = nullptr) const;

    // Eval-mode encoder output for one window; convenience for clustering
    // and latent-deviation analysis.
    Mat encode(const Mat& window) const;

private:
    struct BindContext {
        std::vector<Var> nodes; // parallel to params_
        std::vector<char> bound;
    };

    Var bind(Tape& tape, BindContext& ctx, const std::string& name,
             std::vector<std::pair<size_t, Var>>& binds) const;
    Var encode_on_tape(Tape& tape, BindContext& ctx, const Mat& window, bool training,
                       Rng* dropout_rng, std::vector<std::pair<size_t, Var>>& binds) const;

    ModelConfig config_;
    std::vector<Parameter> params_;
    MemoryBank bank_;
    Mat positional_; // L x C sinusoidal table
};

} // namespace memto

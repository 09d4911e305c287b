#include "memto/model.hpp"

#include <cmath>
#include <stdexcept>

#include "memto/errors.hpp"

namespace memto {

void ModelConfig::validate() const {
    if (window_length < 1) throw UsageError("window_length must be >= 1");
    if (channels < 1) throw UsageError("channels must be >= 1");
    if (latent_dim < 1) throw UsageError("latent_dim must be >= 1");
    if (enc_layers < 1) throw UsageError("enc_layers must be >= 1");
    if (enc_heads < 1) throw UsageError("enc_heads must be >= 1");
    if (latent_dim % enc_heads != 0) {
        throw UsageError("latent_dim must be divisible by enc_heads");
    }
    if (dec_layers < 1) throw UsageError("dec_layers must be >= 1");
    if (memory_items < 1) throw UsageError("memory_items must be >= 1");
    if (!(tau > 0.0)) throw UsageError("tau must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must lie in [0,1)");
}

Mat stable_softmax_rows(const Mat& x, double temperature) {
    if (!(temperature > 0.0)) throw UsageError("softmax temperature must be positive");
    Mat y(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        Eigen::ArrayXd e = ((x.row(r).transpose().array() - mx) / temperature).exp();
        y.row(r) = (e / e.sum()).matrix().transpose();
    }
    return y;
}

namespace {

void check_finite_dots(const Mat& dots, const char* where) {
    if (!dots.allFinite()) {
        throw std::invalid_argument(std::string(where) + ": non-finite dot products");
    }
}

} // namespace

Mat write_attention(const Mat& items, const Mat& queries, double tau) {
    if (items.cols() != queries.cols()) {
        throw std::invalid_argument("write_attention: latent dimension mismatch");
    }
    Mat dots = items * queries.transpose(); // M x T
    check_finite_dots(dots, "write_attention");
    return stable_softmax_rows(dots, tau);
}

Mat read_attention(const Mat& items, const Mat& queries, double tau) {
    if (items.cols() != queries.cols()) {
        throw std::invalid_argument("read_attention: latent dimension mismatch");
    }
    Mat dots = queries * items.transpose(); // T x M
    check_finite_dots(dots, "read_attention");
    return stable_softmax_rows(dots, tau);
}

Mat retrieve(const Mat& items, const Mat& read_weights) {
    if (read_weights.cols() != items.rows()) {
        throw std::invalid_argument("retrieve: weight/item count mismatch");
    }
    return read_weights * items;
}

GateResult gated_write(const Mat& items, const Mat& u_proj, const Mat& w_proj,
                       const Mat& queries, const Mat& write_weights) {
    if (write_weights.rows() != items.rows() || write_weights.cols() != queries.rows()) {
        throw std::invalid_argument("gated_write: weight shape mismatch");
    }
    GateResult out;
    out.aggregate = write_weights * queries; // M x C
    Mat pre = items * u_proj + out.aggregate * w_proj;
    out.gate.resize(pre.rows(), pre.cols());
    for (Index j = 0; j < pre.cols(); ++j) {
        for (Index i = 0; i < pre.rows(); ++i) {
            const double v = pre(i, j);
            out.gate(i, j) = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                      : std::exp(v) / (1.0 + std::exp(v));
        }
    }
    out.items = (1.0 - out.gate.array()) * items.array() + out.gate.array() * out.aggregate.array();
    return out;
}

namespace {

Mat sinusoidal_encoding(Index length, Index dim) {
    Mat pe(length, dim);
    for (Index t = 0; t < length; ++t) {
        for (Index i = 0; i < dim; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
            const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
            pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Mat xavier(Index rows, Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat w(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            w(i, j) = rng.uniform(-limit, limit);
        }
    }
    return w;
}

} // namespace

Memto::Memto(ModelConfig config, uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const Index n = config_.channels;
    const Index C = config_.latent_dim;
    const Index F = 4 * C; // feed-forward width

    auto add_param = [&](const std::string& name, Mat value) {
        params_.push_back(Parameter{name, std::move(value), Mat(), Mat()});
    };
    auto add_linear = [&](const std::string& stem, Index in, Index out) {
        add_param(stem + ".W", xavier(in, out, rng));
        add_param(stem + ".b", Mat::Zero(1, out));
    };
    auto add_norm = [&](const std::string& stem) {
        add_param(stem + ".gamma", Mat::Ones(1, C));
        add_param(stem + ".beta", Mat::Zero(1, C));
    };

    add_linear("embed", n, C);
    for (Index l = 0; l < config_.enc_layers; ++l) {
        const std::string p = "enc" + std::to_string(l);
        add_norm(p + ".ln1");
        add_linear(p + ".attn.q", C, C);
        add_linear(p + ".attn.k", C, C);
        add_linear(p + ".attn.v", C, C);
        add_linear(p + ".attn.o", C, C);
        add_norm(p + ".ln2");
        add_linear(p + ".ff1", C, F);
        add_linear(p + ".ff2", F, C);
    }
    add_norm("enc_out");
    add_param("gate.U", xavier(C, C, rng));
    add_param("gate.W", xavier(C, C, rng));
    for (Index l = 0; l < config_.dec_layers; ++l) {
        const Index out = (l == config_.dec_layers - 1) ? n : 2 * C;
        add_linear("dec" + std::to_string(l), 2 * C, out);
    }

    bank_.items.resize(config_.memory_items, C);
    for (Index i = 0; i < config_.memory_items; ++i) {
        for (Index j = 0; j < C; ++j) {
            bank_.items(i, j) = rng.normal();
        }
    }

    positional_ = sinusoidal_encoding(config_.window_length, C);
}

Parameter& Memto::param(const std::string& name) {
    for (auto& p : params_) {
        if (p.name == name) return p;
    }
    throw std::out_of_range("no parameter named '" + name + "'");
}

const Parameter& Memto::param(const std::string& name) const {
    return const_cast<Memto*>(this)->param(name);
}

Index Memto::param_count() const {
    Index total = 0;
    for (const auto& p : params_) total += p.value.size();
    return total;
}

Var Memto::bind(Tape& tape, BindContext& ctx, const std::string& name,
                std::vector<std::pair<size_t, Var>>& binds) const {
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) {
            if (!ctx.bound[i]) {
                ctx.nodes[i] = tape.input(params_[i].value);
                ctx.bound[i] = 1;
                binds.emplace_back(i, ctx.nodes[i]);
            }
            return ctx.nodes[i];
        }
    }
    throw std::out_of_range("no parameter named '" + name + "'");
}

Var Memto::encode_on_tape(Tape& tape, BindContext& ctx, const Mat& window, bool training,
                          Rng* dropout_rng,
                          std::vector<std::pair<size_t, Var>>& binds) const {
    const Index L = config_.window_length;
    const Index C = config_.latent_dim;
    const Index heads = config_.enc_heads;
    const Index dh = C / heads;
    if (window.rows() != L || window.cols() != config_.channels) {
        throw DataError("window shape " + std::to_string(window.rows()) + "x" +
                        std::to_string(window.cols()) + " does not match model (" +
                        std::to_string(L) + "x" + std::to_string(config_.channels) + ")");
    }
    const bool drop = training && config_.dropout > 0.0 && dropout_rng != nullptr;

    auto P = [&](const std::string& name) { return bind(tape, ctx, name, binds); };
    auto linear = [&](Var x, const std::string& stem) {
        return tape.add_row(tape.matmul(x, P(stem + ".W")), P(stem + ".b"));
    };

    Var h = linear(tape.constant(window), "embed");
    h = tape.add(h, tape.constant(positional_));
    if (drop) h = tape.dropout(h, config_.dropout, *dropout_rng);

    for (Index l = 0; l < config_.enc_layers; ++l) {
        const std::string p = "enc" + std::to_string(l);

        // Pre-norm self-attention block.
        Var y = tape.layer_norm_rows(h, P(p + ".ln1.gamma"), P(p + ".ln1.beta"));
        Var q = linear(y, p + ".attn.q");
        Var k = linear(y, p + ".attn.k");
        Var v = linear(y, p + ".attn.v");
        Var heads_out;
        for (Index hd = 0; hd < heads; ++hd) {
            Var qh = tape.slice_cols(q, hd * dh, dh);
            Var kh = tape.slice_cols(k, hd * dh, dh);
            Var vh = tape.slice_cols(v, hd * dh, dh);
            Var scores = tape.affine(tape.matmul(qh, tape.transpose(kh)),
                                     1.0 / std::sqrt(static_cast<double>(dh)), 0.0);
            Var attn = tape.softmax_rows(scores, 1.0);
            Var oh = tape.matmul(attn, vh);
            heads_out = hd == 0 ? oh : tape.concat_cols(heads_out, oh);
        }
        Var attn_out = linear(heads_out, p + ".attn.o");
        if (drop) attn_out = tape.dropout(attn_out, config_.dropout, *dropout_rng);
        h = tape.add(h, attn_out);

        // Pre-norm feed-forward block.
        y = tape.layer_norm_rows(h, P(p + ".ln2.gamma"), P(p + ".ln2.beta"));
        Var ff = linear(tape.gelu(linear(y, p + ".ff1")), p + ".ff2");
        if (drop) ff = tape.dropout(ff, config_.dropout, *dropout_rng);
        h = tape.add(h, ff);
    }
    return tape.layer_norm_rows(h, P("enc_out.gamma"), P("enc_out.beta"));
}

Memto::ForwardPass Memto::forward(Tape& tape, const std::vector<Mat>& windows, RunMode mode,
                                  Rng* dropout_rng) const {
    if (windows.empty()) {
        throw DataError("forward: empty batch");
    }
    ForwardPass out;
    out.batch = static_cast<Index>(windows.size());

    BindContext ctx;
    ctx.nodes.resize(params_.size());
    ctx.bound.assign(params_.size(), 0);
    auto P = [&](const std::string& name) { return bind(tape, ctx, name, out.binds); };

    const bool training = mode == RunMode::kTrain;
    std::vector<Var> encoded;
    encoded.reserve(windows.size());
    for (const Mat& w : windows) {
        encoded.push_back(encode_on_tape(tape, ctx, w, training, dropout_rng, out.binds));
    }
    out.queries = encoded.size() == 1 ? encoded.front() : tape.vstack(encoded);

    Var items_old = tape.constant(bank_.items);
    if (training) {
        // Write: per-item attention over every timestamp in the batch, then a
        // gated convex update. The write stays in-graph so the gate
        // projections receive gradients through the read below.
        Var v = tape.softmax_rows(tape.matmul(items_old, tape.transpose(out.queries)),
                                  config_.tau);
        Var aggregate = tape.matmul(v, out.queries);
        Var psi = tape.sigmoid(tape.add(tape.matmul(items_old, P("gate.U")),
                                        tape.matmul(aggregate, P("gate.W"))));
        Var keep = tape.affine(psi, -1.0, 1.0);
        out.new_items = tape.add(tape.cmul(keep, items_old), tape.cmul(psi, aggregate));
    } else {
        out.new_items = items_old;
    }

    out.read_weights = tape.softmax_rows(tape.matmul(out.queries, tape.transpose(out.new_items)),
                                         config_.tau);
    out.retrieved = tape.matmul(out.read_weights, out.new_items);
    out.updated_query = tape.concat_cols(out.queries, out.retrieved);

    Var z = out.updated_query;
    for (Index l = 0; l < config_.dec_layers; ++l) {
        const std::string stem = "dec" + std::to_string(l);
        z = tape.add_row(tape.matmul(z, P(stem + ".W")), P(stem + ".b"));
        if (l + 1 < config_.dec_layers) z = tape.gelu(z);
    }
    out.reconstruction = z;
    return out;
}

Mat Memto::encode(const Mat& window) const {
    Tape tape;
    BindContext ctx;
    ctx.nodes.resize(params_.size());
    ctx.bound.assign(params_.size(), 0);
    std::vector<std::pair<size_t, Var>> binds;
    Var q = encode_on_tape(tape, ctx, window, false, nullptr, binds);
    return q.value();
}

} // namespace memto

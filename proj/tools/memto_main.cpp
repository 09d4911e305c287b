// memto command line: synth | train | score | eval | analyze lsd
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memto/checkpoint.hpp"
#include "memto/data.hpp"
#include "memto/detect.hpp"
#include "memto/errors.hpp"
#include "memto/training.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace memto;

namespace {

// ---------------------------------------------------------------------------
// Flat key = value config files covering every model/training field.

struct RunSettings {
    ModelConfig model;
    TrainConfig train;
    double split_ratio = 0.8;
};

template <typename T>
void parse_into(T& slot, const std::string& value, const std::string& key) {
    std::istringstream in(value);
    in >> slot;
    if (in.fail() || !(in >> std::ws).eof()) {
        throw UsageError("config key '" + key + "' has a bad value: '" + value + "'");
    }
}

bool apply_config_key(RunSettings& s, const std::string& key, const std::string& value) {
    if (key == "window_length") parse_into(s.model.window_length, value, key);
    else if (key == "channels") parse_into(s.model.channels, value, key);
    else if (key == "latent_dim") parse_into(s.model.latent_dim, value, key);
    else if (key == "enc_layers") parse_into(s.model.enc_layers, value, key);
    else if (key == "enc_heads") parse_into(s.model.enc_heads, value, key);
    else if (key == "dec_layers") parse_into(s.model.dec_layers, value, key);
    else if (key == "memory_items") parse_into(s.model.memory_items, value, key);
    else if (key == "tau") parse_into(s.model.tau, value, key);
    else if (key == "dropout") parse_into(s.model.dropout, value, key);
    else if (key == "lambda") parse_into(s.train.lambda, value, key);
    else if (key == "lr") parse_into(s.train.lr, value, key);
    else if (key == "batch_size") parse_into(s.train.batch_size, value, key);
    else if (key == "max_epochs") parse_into(s.train.max_epochs, value, key);
    else if (key == "patience") parse_into(s.train.patience, value, key);
    else if (key == "kmeans_sample_frac") parse_into(s.train.kmeans_sample_frac, value, key);
    else if (key == "kmeans_iters") parse_into(s.train.kmeans_iters, value, key);
    else if (key == "kmeans_tol") parse_into(s.train.kmeans_tol, value, key);
    else if (key == "seed") parse_into(s.train.seed, value, key);
    else if (key == "split_ratio") parse_into(s.split_ratio, value, key);
    else return false;
    return true;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

void load_config_file(RunSettings& settings, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) +
                             " is not 'key = value': '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!apply_config_key(settings, key, value)) {
            throw UsageError("unknown config key '" + key + "'");
        }
    }
}

std::string settings_echo(const RunSettings& s) {
    std::ostringstream out;
    out.precision(17);
    out << "window_length = " << s.model.window_length << "\n"
        << "channels = " << s.model.channels << "\n"
        << "latent_dim = " << s.model.latent_dim << "\n"
        << "enc_layers = " << s.model.enc_layers << "\n"
        << "enc_heads = " << s.model.enc_heads << "\n"
        << "dec_layers = " << s.model.dec_layers << "\n"
        << "memory_items = " << s.model.memory_items << "\n"
        << "tau = " << s.model.tau << "\n"
        << "dropout = " << s.model.dropout << "\n"
        << "lambda = " << s.train.lambda << "\n"
        << "lr = " << s.train.lr << "\n"
        << "batch_size = " << s.train.batch_size << "\n"
        << "max_epochs = " << s.train.max_epochs << "\n"
        << "patience = " << s.train.patience << "\n"
        << "kmeans_sample_frac = " << s.train.kmeans_sample_frac << "\n"
        << "kmeans_iters = " << s.train.kmeans_iters << "\n"
        << "kmeans_tol = " << s.train.kmeans_tol << "\n"
        << "seed = " << s.train.seed << "\n"
        << "split_ratio = " << s.split_ratio << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Output plumbing.

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + out + "': " + ec.message());
    return dir;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string command_line_echo(int argc, char** argv) {
    std::ostringstream out;
    out << "# command:";
    for (int i = 0; i < argc; ++i) out << " " << argv[i];
    out << "\n";
    return out.str();
}

int default_threads() {
    if (const char* env = std::getenv("MEMTO_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

// ---------------------------------------------------------------------------
// Subcommand state.

struct SynthArgs {
    std::string out;
    Index train_length = 20000;
    std::optional<Index> test_length;
    Index channels = 8;
    double anomaly_ratio = 0.01;
    double noise_std = 0.1;
    uint64_t seed = 0;
    std::vector<std::string> kinds;
};

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config_file;
    std::string from_checkpoint;
    bool header = false;
    bool skip_kmeans = false;
    std::string loss_mode = "total";
    // optional overrides of the config file / defaults
    std::optional<Index> window_length, latent_dim, enc_layers, enc_heads, dec_layers,
        memory_items, batch_size, max_epochs, patience;
    std::optional<double> tau, dropout, lambda, lr, kmeans_sample_frac, kmeans_tol, split_ratio;
    std::optional<int> kmeans_iters;
    std::optional<uint64_t> seed;
};

struct ScoreArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string criterion = "both";
    bool header = false;
    bool labels = false;
    int threads = default_threads();
};

struct EvalArgs {
    std::string test_trace;
    std::string train_trace;
    std::string val_trace;
    std::string out;
    double p_percent = 1.0;
    std::vector<double> p_sweep;
};

struct AnalyzeArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    bool header = false;
};

LossMode loss_mode_from_name(const std::string& name) {
    if (name == "total") return LossMode::kTotal;
    if (name == "rec") return LossMode::kReconstructionOnly;
    if (name == "entr") return LossMode::kEntropyOnly;
    throw UsageError("unknown loss mode '" + name + "' (expected total|rec|entr)");
}

// ---------------------------------------------------------------------------
// Command bodies.

int run_synth(const SynthArgs& args, const std::string& cmdline) {
    SyntheticSpec spec;
    spec.train_length = args.train_length;
    spec.test_length = args.test_length.value_or(args.train_length / 2);
    spec.channels = args.channels;
    spec.anomaly_ratio = args.anomaly_ratio;
    spec.noise_std = args.noise_std;
    spec.seed = args.seed;
    if (!args.kinds.empty()) {
        spec.kinds.clear();
        for (const auto& k : args.kinds) spec.kinds.push_back(anomaly_kind_from_name(k));
    }

    const fs::path dir = prepare_out_dir(args.out);
    SyntheticData data = generate_synthetic(spec);
    save_csv(data.train, (dir / "train.csv").string(), false);
    save_csv(data.test, (dir / "test.csv").string(), true);

    Index labeled = 0;
    for (int v : data.test.labels) labeled += v;

    ordered_json echo;
    echo["train_length"] = spec.train_length;
    echo["test_length"] = spec.test_length;
    echo["channels"] = spec.channels;
    echo["noise_std"] = spec.noise_std;
    echo["anomaly_ratio"] = spec.anomaly_ratio;
    std::vector<std::string> kind_names;
    for (auto k : spec.kinds) kind_names.push_back(anomaly_kind_name(k));
    echo["anomaly_kinds"] = kind_names;
    echo["seed"] = spec.seed;
    echo["labeled_timestamps"] = labeled;
    write_text(dir / "synth_spec.json", echo.dump(2) + "\n");

    std::ostringstream cecho;
    cecho.precision(17);
    cecho << cmdline << "train_length = " << spec.train_length << "\n"
          << "test_length = " << spec.test_length << "\n"
          << "channels = " << spec.channels << "\n"
          << "noise_std = " << spec.noise_std << "\n"
          << "anomaly_ratio = " << spec.anomaly_ratio << "\n"
          << "seed = " << spec.seed << "\n";
    write_text(dir / "config_echo.txt", cecho.str());

    std::cout << "wrote " << (dir / "train.csv").string() << " (" << spec.train_length
              << " rows) and " << (dir / "test.csv").string() << " (" << spec.test_length
              << " rows, " << labeled << " labeled)\n";
    return 0;
}

int run_train(const TrainArgs& args, const std::string& cmdline) {
    RunSettings settings;
    if (!args.config_file.empty()) load_config_file(settings, args.config_file);

    auto apply = [](auto& slot, const auto& opt) {
        if (opt.has_value()) slot = *opt;
    };
    apply(settings.model.window_length, args.window_length);
    apply(settings.model.latent_dim, args.latent_dim);
    apply(settings.model.enc_layers, args.enc_layers);
    apply(settings.model.enc_heads, args.enc_heads);
    apply(settings.model.dec_layers, args.dec_layers);
    apply(settings.model.memory_items, args.memory_items);
    apply(settings.model.tau, args.tau);
    apply(settings.model.dropout, args.dropout);
    apply(settings.train.lambda, args.lambda);
    apply(settings.train.lr, args.lr);
    apply(settings.train.batch_size, args.batch_size);
    apply(settings.train.max_epochs, args.max_epochs);
    apply(settings.train.patience, args.patience);
    apply(settings.train.kmeans_sample_frac, args.kmeans_sample_frac);
    apply(settings.train.kmeans_iters, args.kmeans_iters);
    apply(settings.train.kmeans_tol, args.kmeans_tol);
    apply(settings.train.seed, args.seed);
    apply(settings.split_ratio, args.split_ratio);

    TrainOptions opts;
    opts.skip_kmeans = args.skip_kmeans;
    opts.loss_mode = loss_mode_from_name(args.loss_mode);
    opts.split_ratio = settings.split_ratio;

    const RawSeries series = load_csv(args.data, false, args.header);

    TrainResult result;
    std::optional<Memto> model;

    if (!args.from_checkpoint.empty()) {
        if (args.skip_kmeans) {
            throw UsageError("--skip-kmeans cannot be combined with --from-checkpoint");
        }
        auto ckpt = read_checkpoint(args.from_checkpoint);
        if (ckpt.phase != "phase1") {
            throw UsageError("--from-checkpoint expects a phase1 checkpoint, got '" +
                             ckpt.phase + "'");
        }
        if (ckpt.config.channels != series.channels()) {
            throw DataError("checkpoint expects " + std::to_string(ckpt.config.channels) +
                            " channels, data has " + std::to_string(series.channels()));
        }
        settings.model = ckpt.config;
        model.emplace(load_model(ckpt));
        result = train_phase2_only(*model, series, ckpt.stats, settings.train, opts);
    } else {
        if (settings.model.channels == 0) {
            settings.model.channels = series.channels();
        } else if (settings.model.channels != series.channels()) {
            throw DataError("config says " + std::to_string(settings.model.channels) +
                            " channels, data has " + std::to_string(series.channels()));
        }
        settings.model.validate();
        settings.train.validate();
        model.emplace(settings.model, settings.train.seed);
        result = train_two_phase(*model, series, settings.train, opts);
    }

    const fs::path dir = prepare_out_dir(args.out);
    save_checkpoint((dir / "model.ckpt").string(), *model, result.stats, result.phase);
    write_text(dir / "train_report.json", report_to_json(result.report));
    write_text(dir / "timing.txt", timing_to_text(result.report));

    std::ostringstream cecho;
    cecho << cmdline << settings_echo(settings) << "data = " << args.data << "\n"
          << "skip_kmeans = " << (args.skip_kmeans ? 1 : 0) << "\n"
          << "loss_mode = " << args.loss_mode << "\n";
    if (!args.from_checkpoint.empty()) {
        cecho << "from_checkpoint = " << args.from_checkpoint << "\n";
    }
    write_text(dir / "config_echo.txt", cecho.str());

    std::cout << "trained " << result.phase << " model (" << model->param_count()
              << " parameters), checkpoint at " << (dir / "model.ckpt").string() << "\n"
              << timing_to_text(result.report);
    return 0;
}

int run_score(const ScoreArgs& args, const std::string& cmdline) {
    auto ckpt = read_checkpoint(args.checkpoint);
    Memto model = load_model(ckpt);
    const RawSeries series = load_csv(args.data, args.labels, args.header);
    const Criterion criterion = criterion_from_name(args.criterion);

    ScoreSeries scored = score_series(model, ckpt.stats, series, criterion, args.threads);

    const fs::path dir = prepare_out_dir(args.out);
    write_trace((dir / "trace.csv").string(), scored);

    std::ostringstream cecho;
    cecho << cmdline << "checkpoint = " << args.checkpoint << "\n"
          << "data = " << args.data << "\n"
          << "criterion = " << args.criterion << "\n"
          << "threads = " << args.threads << "\n";
    write_text(dir / "config_echo.txt", cecho.str());

    std::cout << "scored " << scored.length() << " timestamps -> "
              << (dir / "trace.csv").string() << "\n";
    return 0;
}

ordered_json metrics_json(double p, double threshold, const EvalResult& adjusted,
                          const EvalResult& raw) {
    return ordered_json{{"p_percent", p},
                        {"threshold", threshold},
                        {"adjusted", ordered_json{{"precision", adjusted.precision},
                                                  {"recall", adjusted.recall},
                                                  {"f1", adjusted.f1},
                                                  {"tp", adjusted.tp},
                                                  {"fp", adjusted.fp},
                                                  {"fn", adjusted.fn}}},
                        {"raw", ordered_json{{"precision", raw.precision},
                                             {"recall", raw.recall},
                                             {"f1", raw.f1},
                                             {"tp", raw.tp},
                                             {"fp", raw.fp},
                                             {"fn", raw.fn}}}};
}

int run_eval(const EvalArgs& args, const std::string& cmdline) {
    ScoreSeries test = read_trace(args.test_trace);
    if (test.labels.empty()) {
        throw DataError("test trace '" + args.test_trace + "' carries no labels");
    }
    ScoreSeries train = read_trace(args.train_trace);
    Vec val_scores(0);
    if (!args.val_trace.empty()) {
        val_scores = read_trace(args.val_trace).score;
    }

    const fs::path dir = prepare_out_dir(args.out);

    auto evaluate_at = [&](double p) {
        const double threshold = select_threshold(train.score, val_scores, p);
        ScoreSeries result = test;
        result.threshold = threshold;
        result.raw_pred.assign(static_cast<size_t>(test.length()), 0);
        for (Index t = 0; t < test.length(); ++t) {
            result.raw_pred[static_cast<size_t>(t)] = test.score(t) > threshold ? 1 : 0;
        }
        result.adjusted_pred = point_adjust(result.raw_pred, test.labels);
        return result;
    };

    const std::vector<double> ps =
        args.p_sweep.empty() ? std::vector<double>{args.p_percent} : args.p_sweep;
    std::ostringstream sweep;
    sweep << "p,threshold,precision,recall,f1,tp,fp,fn\n";
    sweep.precision(17);
    ordered_json first_metrics;
    for (size_t i = 0; i < ps.size(); ++i) {
        ScoreSeries result = evaluate_at(ps[i]);
        const EvalResult adjusted = prf1(result.adjusted_pred, result.labels);
        const EvalResult raw = prf1(result.raw_pred, result.labels);
        if (i == 0) {
            first_metrics = metrics_json(ps[i], result.threshold, adjusted, raw);
            write_trace((dir / "eval_trace.csv").string(), result);
        }
        sweep << ps[i] << "," << result.threshold << "," << adjusted.precision << ","
              << adjusted.recall << "," << adjusted.f1 << "," << adjusted.tp << ","
              << adjusted.fp << "," << adjusted.fn << "\n";
    }

    write_text(dir / "metrics.json", first_metrics.dump(2) + "\n");
    if (ps.size() > 1) write_text(dir / "metrics_sweep.csv", sweep.str());

    std::ostringstream cecho;
    cecho.precision(17);
    cecho << cmdline << "test_trace = " << args.test_trace << "\n"
          << "train_trace = " << args.train_trace << "\n";
    if (!args.val_trace.empty()) cecho << "val_trace = " << args.val_trace << "\n";
    cecho << "p_percent = " << ps.front() << "\n";
    write_text(dir / "config_echo.txt", cecho.str());

    std::cout << first_metrics.dump(2) << "\n";
    return 0;
}

int run_analyze_lsd(const AnalyzeArgs& args, const std::string& cmdline) {
    auto ckpt = read_checkpoint(args.checkpoint);
    Memto model = load_model(ckpt);
    const RawSeries series = load_csv(args.data, true, args.header);

    LsdAnalysis analysis = analyze_lsd(model, ckpt.stats, series);

    ordered_json j;
    j["mean_lsd_normal"] = analysis.mean_normal;
    j["mean_lsd_abnormal"] = analysis.mean_abnormal;
    j["ratio"] = analysis.ratio;
    j["normal_count"] = analysis.normal_count;
    j["abnormal_count"] = analysis.abnormal_count;

    const fs::path dir = prepare_out_dir(args.out);
    write_text(dir / "lsd_report.json", j.dump(2) + "\n");

    std::ostringstream cecho;
    cecho << cmdline << "checkpoint = " << args.checkpoint << "\n"
          << "data = " << args.data << "\n";
    write_text(dir / "config_echo.txt", cecho.str());

    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "memto: memory-guided transformer anomaly detection for multivariate time series"};
    app.require_subcommand(1);
    const std::string cmdline = command_line_echo(argc, argv);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--T", synth.train_length, "training series length");
    synth_cmd->add_option("--test-T", synth.test_length, "test series length (default T/2)");
    synth_cmd->add_option("--n", synth.channels, "number of channels");
    synth_cmd->add_option("--anomaly-ratio", synth.anomaly_ratio,
                          "fraction of anomalous test timestamps, in (0,1)");
    synth_cmd->add_option("--noise-std", synth.noise_std, "observation noise level");
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--kinds", synth.kinds,
                          "anomaly kinds: spike, level-shift, segment-noise")
        ->delimiter(',');

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "two-phase training on a CSV series");
    train_cmd->add_option("--data", train.data, "training CSV (no labels)")->required();
    train_cmd->add_option("--out", train.out, "output directory")->required();
    train_cmd->add_option("--config", train.config_file, "flat key = value config file");
    train_cmd->add_flag("--header", train.header, "skip one CSV header line");
    train_cmd->add_flag("--skip-kmeans", train.skip_kmeans,
                        "single-phase training with random memory items");
    train_cmd->add_option("--from-checkpoint", train.from_checkpoint,
                          "resume from a phase1 checkpoint (k-means + phase 2 only)");
    train_cmd->add_option("--loss-mode", train.loss_mode, "total | rec | entr");
    train_cmd->add_option("--window", train.window_length, "window length L");
    train_cmd->add_option("--latent-dim", train.latent_dim, "latent dimension C");
    train_cmd->add_option("--enc-layers", train.enc_layers, "encoder layers");
    train_cmd->add_option("--heads", train.enc_heads, "attention heads");
    train_cmd->add_option("--dec-layers", train.dec_layers, "decoder layers");
    train_cmd->add_option("--memory-items", train.memory_items, "memory items M");
    train_cmd->add_option("--tau", train.tau, "attention temperature");
    train_cmd->add_option("--dropout", train.dropout, "dropout rate");
    train_cmd->add_option("--lambda", train.lambda, "entropy loss weight");
    train_cmd->add_option("--lr", train.lr, "learning rate");
    train_cmd->add_option("--batch-size", train.batch_size, "windows per batch");
    train_cmd->add_option("--max-epochs", train.max_epochs, "epoch cap per phase");
    train_cmd->add_option("--patience", train.patience, "early stopping patience");
    train_cmd->add_option("--kmeans-sample-frac", train.kmeans_sample_frac,
                          "fraction of training windows clustered");
    train_cmd->add_option("--kmeans-iters", train.kmeans_iters, "Lloyd iteration cap");
    train_cmd->add_option("--kmeans-tol", train.kmeans_tol, "centroid shift tolerance");
    train_cmd->add_option("--seed", train.seed, "training and initialization seed");
    train_cmd->add_option("--split-ratio", train.split_ratio, "train/validation split");

    ScoreArgs score;
    auto* score_cmd = app.add_subcommand("score", "score a series with a trained checkpoint");
    score_cmd->add_option("--checkpoint", score.checkpoint, "model checkpoint")->required();
    score_cmd->add_option("--data", score.data, "CSV series to score")->required();
    score_cmd->add_option("--out", score.out, "output directory")->required();
    score_cmd->add_flag("--header", score.header, "skip one CSV header line");
    score_cmd->add_flag("--labels", score.labels, "the CSV carries a trailing label column");
    score_cmd->add_option("--criterion", score.criterion, "both | isd | lsd");
    score_cmd->add_option("--threads", score.threads,
                          "worker threads for window scoring (default MEMTO_THREADS or 1)");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "threshold, point-adjust and report P/R/F1");
    eval_cmd->add_option("--test-trace", eval.test_trace, "labeled test trace")->required();
    eval_cmd->add_option("--train-trace", eval.train_trace, "training-series trace")->required();
    eval_cmd->add_option("--val-trace", eval.val_trace,
                         "optional separate validation trace pooled with the training one");
    eval_cmd->add_option("--out", eval.out, "output directory")->required();
    eval_cmd->add_option("--p", eval.p_percent, "anomaly percentage p, in (0,100]");
    eval_cmd->add_option("--p-sweep", eval.p_sweep, "comma-separated p values")->delimiter(',');

    AnalyzeArgs analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "post-hoc analyses");
    analyze_cmd->require_subcommand(1);
    auto* lsd_cmd = analyze_cmd->add_subcommand(
        "lsd", "mean latent deviation of normal vs abnormal timestamps");
    lsd_cmd->add_option("--checkpoint", analyze.checkpoint, "model checkpoint")->required();
    lsd_cmd->add_option("--data", analyze.data, "labeled CSV series")->required();
    lsd_cmd->add_option("--out", analyze.out, "output directory")->required();
    lsd_cmd->add_flag("--header", analyze.header, "skip one CSV header line");

    try {
        app.parse(argc, argv);
        if (synth_cmd->parsed()) return run_synth(synth, cmdline);
        if (train_cmd->parsed()) return run_train(train, cmdline);
        if (score_cmd->parsed()) return run_score(score, cmdline);
        if (eval_cmd->parsed()) return run_eval(eval, cmdline);
        if (analyze_cmd->parsed() && lsd_cmd->parsed()) {
            return run_analyze_lsd(analyze, cmdline);
        }
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

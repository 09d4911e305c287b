#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "memto/checkpoint.hpp"
#include "memto/data.hpp"
#include "memto/detect.hpp"
#include "memto/errors.hpp"
#include "memto/model.hpp"
#include "memto/training.hpp"

namespace py = pybind11;
using namespace memto;

namespace {

SyntheticSpec spec_from_kwargs(Index train_length, Index test_length, Index channels,
                               double noise_std, double anomaly_ratio,
                               const std::vector<std::string>& kinds, uint64_t seed) {
    SyntheticSpec spec;
    spec.train_length = train_length;
    spec.test_length = test_length;
    spec.channels = channels;
    spec.noise_std = noise_std;
    spec.anomaly_ratio = anomaly_ratio;
    spec.seed = seed;
    if (!kinds.empty()) {
        spec.kinds.clear();
        for (const auto& k : kinds) spec.kinds.push_back(anomaly_kind_from_name(k));
    }
    return spec;
}

} // namespace

PYBIND11_MODULE(_memto, m) {
    m.doc() = "Memory-guided transformer anomaly detection for multivariate time series";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    py::class_<RawSeries>(m, "RawSeries")
        .def(py::init([](Mat values, std::vector<int> labels) {
                 RawSeries s;
                 s.values = std::move(values);
                 s.labels = std::move(labels);
                 return s;
             }),
             py::arg("values"), py::arg("labels") = std::vector<int>{})
        .def_readwrite("values", &RawSeries::values)
        .def_readwrite("labels", &RawSeries::labels)
        .def_property_readonly("length", &RawSeries::length)
        .def_property_readonly("channels", &RawSeries::channels);

    py::class_<NormalizationStats>(m, "NormalizationStats")
        .def_readonly("mean", &NormalizationStats::mean)
        .def_readonly("std", &NormalizationStats::std);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("window_length", &ModelConfig::window_length)
        .def_readwrite("channels", &ModelConfig::channels)
        .def_readwrite("latent_dim", &ModelConfig::latent_dim)
        .def_readwrite("enc_layers", &ModelConfig::enc_layers)
        .def_readwrite("enc_heads", &ModelConfig::enc_heads)
        .def_readwrite("dec_layers", &ModelConfig::dec_layers)
        .def_readwrite("memory_items", &ModelConfig::memory_items)
        .def_readwrite("tau", &ModelConfig::tau)
        .def_readwrite("dropout", &ModelConfig::dropout)
        .def("validate", &ModelConfig::validate);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lambda_", &TrainConfig::lambda)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("max_epochs", &TrainConfig::max_epochs)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("kmeans_sample_frac", &TrainConfig::kmeans_sample_frac)
        .def_readwrite("kmeans_iters", &TrainConfig::kmeans_iters)
        .def_readwrite("kmeans_tol", &TrainConfig::kmeans_tol)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<PhaseReport>(m, "PhaseReport")
        .def_readonly("train_loss", &PhaseReport::train_loss)
        .def_readonly("val_loss", &PhaseReport::val_loss)
        .def_readonly("best_epoch", &PhaseReport::best_epoch)
        .def_readonly("stopped_epoch", &PhaseReport::stopped_epoch)
        .def_readonly("best_val_loss", &PhaseReport::best_val_loss);

    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("phase1", &TrainReport::phase1)
        .def_readonly("phase2", &TrainReport::phase2)
        .def_readonly("two_phase", &TrainReport::two_phase)
        .def_readonly("kmeans_objective", &TrainReport::kmeans_objective)
        .def_readonly("kmeans_shifts", &TrainReport::kmeans_shifts)
        .def_readonly("kmeans_iterations", &TrainReport::kmeans_iterations)
        .def("to_json", [](const TrainReport& r) { return report_to_json(r); });

    py::class_<Memto>(m, "Memto")
        .def(py::init<ModelConfig, uint64_t>(), py::arg("config"), py::arg("seed") = 0)
        .def_property_readonly("config", &Memto::config)
        .def_property_readonly("memory_items",
                               [](const Memto& model) { return model.bank().items; })
        .def_property_readonly("param_count", &Memto::param_count)
        .def("encode", &Memto::encode, py::arg("window"))
        .def("parameter", [](const Memto& model, const std::string& name) {
            return model.param(name).value;
        });

    py::class_<ScoreSeries>(m, "ScoreSeries")
        .def_readonly("score", &ScoreSeries::score)
        .def_readonly("lsd", &ScoreSeries::lsd)
        .def_readonly("isd", &ScoreSeries::isd)
        .def_readonly("labels", &ScoreSeries::labels)
        .def_readonly("threshold", &ScoreSeries::threshold)
        .def_readonly("raw_pred", &ScoreSeries::raw_pred)
        .def_readonly("adjusted_pred", &ScoreSeries::adjusted_pred);

    py::class_<EvalResult>(m, "EvalResult")
        .def_readonly("precision", &EvalResult::precision)
        .def_readonly("recall", &EvalResult::recall)
        .def_readonly("f1", &EvalResult::f1)
        .def_readonly("tp", &EvalResult::tp)
        .def_readonly("fp", &EvalResult::fp)
        .def_readonly("fn", &EvalResult::fn);

    py::class_<LsdAnalysis>(m, "LsdAnalysis")
        .def_readonly("mean_normal", &LsdAnalysis::mean_normal)
        .def_readonly("mean_abnormal", &LsdAnalysis::mean_abnormal)
        .def_readonly("ratio", &LsdAnalysis::ratio)
        .def_readonly("normal_count", &LsdAnalysis::normal_count)
        .def_readonly("abnormal_count", &LsdAnalysis::abnormal_count);

    py::class_<KMeansResult>(m, "KMeansResult")
        .def_readonly("centroids", &KMeansResult::centroids)
        .def_readonly("assignment", &KMeansResult::assignment)
        .def_readonly("objective", &KMeansResult::objective)
        .def_readonly("iterations", &KMeansResult::iterations);

    // data
    m.def("load_csv", &load_csv, py::arg("path"), py::arg("has_labels") = false,
          py::arg("skip_header") = false);
    m.def("save_csv", &save_csv, py::arg("series"), py::arg("path"), py::arg("with_labels"));
    m.def("fit_normalizer", &fit_normalizer);
    m.def("normalize", &normalize);
    m.def("denormalize", &denormalize);
    m.def(
        "generate_synthetic",
        [](Index train_length, Index test_length, Index channels, double noise_std,
           double anomaly_ratio, const std::vector<std::string>& kinds, uint64_t seed) {
            SyntheticData d = generate_synthetic(spec_from_kwargs(
                train_length, test_length, channels, noise_std, anomaly_ratio, kinds, seed));
            return py::make_tuple(d.train, d.test, d.test_clean);
        },
        py::arg("train_length") = 20000, py::arg("test_length") = 10000,
        py::arg("channels") = 8, py::arg("noise_std") = 0.1, py::arg("anomaly_ratio") = 0.01,
        py::arg("kinds") = std::vector<std::string>{}, py::arg("seed") = 0,
        "Returns (train, test, test_clean)");

    // memory-module math
    m.def("write_attention", &write_attention, py::arg("items"), py::arg("queries"),
          py::arg("tau"));
    m.def("read_attention", &read_attention, py::arg("items"), py::arg("queries"),
          py::arg("tau"));
    m.def("retrieve", &retrieve, py::arg("items"), py::arg("read_weights"));
    m.def(
        "gated_write",
        [](const Mat& items, const Mat& u, const Mat& w, const Mat& queries,
           const Mat& weights) {
            auto r = gated_write(items, u, w, queries, weights);
            return py::make_tuple(r.items, r.gate, r.aggregate);
        },
        py::arg("items"), py::arg("u_proj"), py::arg("w_proj"), py::arg("queries"),
        py::arg("write_weights"), "Returns (new_items, gate, aggregate)");

    // losses and clustering
    m.def("reconstruction_loss", &reconstruction_loss);
    m.def("entropy_loss", &entropy_loss);
    m.def("total_loss", &total_loss);
    m.def("kmeans", &kmeans, py::arg("points"), py::arg("k"), py::arg("max_iters") = 100,
          py::arg("tol") = 1e-4, py::arg("seed") = 0);

    // training
    m.def(
        "train_two_phase",
        [](Memto& model, const RawSeries& train, const TrainConfig& cfg, bool skip_kmeans,
           const std::string& loss_mode, double split_ratio) {
            TrainOptions opts;
            opts.skip_kmeans = skip_kmeans;
            opts.split_ratio = split_ratio;
            if (loss_mode == "total") opts.loss_mode = LossMode::kTotal;
            else if (loss_mode == "rec") opts.loss_mode = LossMode::kReconstructionOnly;
            else if (loss_mode == "entr") opts.loss_mode = LossMode::kEntropyOnly;
            else throw UsageError("unknown loss mode '" + loss_mode + "'");
            TrainResult r = train_two_phase(model, train, cfg, opts);
            return py::make_tuple(r.report, r.stats, r.phase);
        },
        py::arg("model"), py::arg("train"), py::arg("config") = TrainConfig{},
        py::arg("skip_kmeans") = false, py::arg("loss_mode") = "total",
        py::arg("split_ratio") = 0.8, "Returns (report, stats, phase)");

    // checkpoints
    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("model"),
          py::arg("stats"), py::arg("phase"));
    m.def(
        "load_checkpoint",
        [](const std::string& path) {
            CheckpointData data = read_checkpoint(path);
            Memto model = load_model(data);
            return py::make_tuple(std::move(model), data.stats, data.phase);
        },
        py::arg("path"), "Returns (model, stats, phase)");

    // detection
    m.def("latent_deviation", &latent_deviation, py::arg("queries"), py::arg("items"));
    m.def("input_deviation", &input_deviation, py::arg("x"), py::arg("x_hat"));
    m.def("anomaly_score", &anomaly_score, py::arg("lsd"), py::arg("isd"));
    m.def(
        "score_series",
        [](const Memto& model, const NormalizationStats& stats, const RawSeries& series,
           const std::string& criterion, int threads) {
            return score_series(model, stats, series, criterion_from_name(criterion), threads);
        },
        py::arg("model"), py::arg("stats"), py::arg("series"), py::arg("criterion") = "both",
        py::arg("threads") = 1);
    m.def("select_threshold", &select_threshold, py::arg("train_scores"),
          py::arg("val_scores"), py::arg("p_percent"));
    m.def("point_adjust", &point_adjust, py::arg("pred"), py::arg("gt"));
    m.def("prf1", &prf1, py::arg("pred"), py::arg("gt"));
    m.def("lsd_ratio", &lsd_ratio, py::arg("normal_queries"), py::arg("abnormal_queries"),
          py::arg("items"));
    m.def("analyze_lsd", &analyze_lsd, py::arg("model"), py::arg("stats"), py::arg("labeled"));
    m.def("write_trace", &write_trace, py::arg("path"), py::arg("scores"));
    m.def("read_trace", &read_trace, py::arg("path"));
}

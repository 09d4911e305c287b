#include "memto/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memto/errors.hpp"

namespace memto {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'M', 'E', 'M', 'T', 'O', 'C', 'K', '1'};

void append_row_major(std::string& payload, const Mat& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            payload.append(bytes, sizeof(double));
        }
    }
}

Mat read_row_major(const std::string& payload, size_t offset, Index rows, Index cols) {
    Mat m(rows, cols);
    const char* src = payload.data() + offset;
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            double v;
            std::memcpy(&v, src, sizeof(double));
            src += sizeof(double);
            m(i, j) = v;
        }
    }
    return m;
}

ordered_json config_to_json(const ModelConfig& c) {
    return ordered_json{{"window_length", c.window_length},
                        {"channels", c.channels},
                        {"latent_dim", c.latent_dim},
                        {"enc_layers", c.enc_layers},
                        {"enc_heads", c.enc_heads},
                        {"dec_layers", c.dec_layers},
                        {"memory_items", c.memory_items},
                        {"tau", c.tau},
                        {"dropout", c.dropout}};
}

ModelConfig config_from_json(const ordered_json& j) {
    ModelConfig c;
    c.window_length = j.at("window_length").get<Index>();
    c.channels = j.at("channels").get<Index>();
    c.latent_dim = j.at("latent_dim").get<Index>();
    c.enc_layers = j.at("enc_layers").get<Index>();
    c.enc_heads = j.at("enc_heads").get<Index>();
    c.dec_layers = j.at("dec_layers").get<Index>();
    c.memory_items = j.at("memory_items").get<Index>();
    c.tau = j.at("tau").get<double>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

} // namespace

const Mat& CheckpointData::tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
        if (n == name) return m;
    }
    throw DataError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const std::string& path, const Memto& model,
                     const NormalizationStats& stats, const std::string& phase) {
    if (phase != "phase1" && phase != "phase2") {
        throw UsageError("checkpoint phase must be 'phase1' or 'phase2'");
    }

    // Normalization vectors travel in the payload so doubles stay bit-exact.
    std::vector<std::pair<std::string, const Mat*>> entries;
    for (const auto& p : model.params()) entries.emplace_back(p.name, &p.value);
    const Mat items = model.bank().items;
    entries.emplace_back("memory.items", &items);
    const Mat mean = stats.mean.transpose();
    const Mat stdev = stats.std.transpose();
    entries.emplace_back("norm.mean", &mean);
    entries.emplace_back("norm.std", &stdev);

    ordered_json directory = ordered_json::array();
    std::string payload;
    for (const auto& [name, mat] : entries) {
        directory.push_back(ordered_json{{"name", name},
                                         {"rows", mat->rows()},
                                         {"cols", mat->cols()},
                                         {"dtype", "f64"},
                                         {"offset", payload.size()},
                                         {"bytes", static_cast<size_t>(mat->size()) * sizeof(double)}});
        append_row_major(payload, *mat);
    }

    ordered_json header;
    header["version"] = kCheckpointVersion;
    header["phase"] = phase;
    header["config"] = config_to_json(model.config());
    header["tensors"] = directory;
    const std::string header_str = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write '" + tmp + "'");
        out.write(kMagic, sizeof(kMagic));
        const uint32_t header_len = static_cast<uint32_t>(header_str.size());
        out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw DataError("write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot move checkpoint into place at '" + path + "'");
    }
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + sizeof(uint32_t) ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError("'" + path + "' is not a memto checkpoint");
    }
    uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + sizeof(kMagic), sizeof(header_len));
    const size_t header_start = sizeof(kMagic) + sizeof(uint32_t);
    if (bytes.size() < header_start + header_len) {
        throw DataError("checkpoint '" + path + "' is truncated (header)");
    }

    ordered_json header;
    try {
        header = ordered_json::parse(bytes.substr(header_start, header_len));
    } catch (const std::exception& e) {
        throw DataError("corrupt checkpoint header in '" + path + "': " + e.what());
    }

    CheckpointData data;
    data.version = header.at("version").get<int>();
    if (data.version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(data.version));
    }
    data.phase = header.at("phase").get<std::string>();
    data.config = config_from_json(header.at("config"));

    const std::string payload = bytes.substr(header_start + header_len);
    for (const auto& entry : header.at("tensors")) {
        const auto name = entry.at("name").get<std::string>();
        const auto rows = entry.at("rows").get<Index>();
        const auto cols = entry.at("cols").get<Index>();
        const auto offset = entry.at("offset").get<size_t>();
        const auto nbytes = entry.at("bytes").get<size_t>();
        if (entry.at("dtype").get<std::string>() != "f64") {
            throw DataError("unsupported tensor dtype in checkpoint");
        }
        if (nbytes != static_cast<size_t>(rows) * static_cast<size_t>(cols) * sizeof(double) ||
            offset + nbytes > payload.size()) {
            throw DataError("checkpoint '" + path + "' is truncated (tensor '" + name + "')");
        }
        data.tensors.emplace_back(name, read_row_major(payload, offset, rows, cols));
    }

    data.stats.mean = data.tensor("norm.mean").row(0).transpose();
    data.stats.std = data.tensor("norm.std").row(0).transpose();
    return data;
}

Memto load_model(const CheckpointData& data) {
    Memto model(data.config, /*seed=*/0);
    for (auto& p : model.params()) {
        const Mat& stored = data.tensor(p.name);
        if (stored.rows() != p.value.rows() || stored.cols() != p.value.cols()) {
            throw DataError("checkpoint tensor '" + p.name + "' has shape " +
                            std::to_string(stored.rows()) + "x" + std::to_string(stored.cols()) +
                            ", expected " + std::to_string(p.value.rows()) + "x" +
                            std::to_string(p.value.cols()));
        }
        p.value = stored;
    }
    const Mat& items = data.tensor("memory.items");
    if (items.rows() != data.config.memory_items || items.cols() != data.config.latent_dim) {
        throw DataError("checkpoint memory items have the wrong shape");
    }
    model.bank().items = items;
    return model;
}

} // namespace memto

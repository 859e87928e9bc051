#include "paccs/activations.hpp"

#include "paccs/errors.hpp"
#include "paccs/io.hpp"

#include <cmath>

namespace paccs {

namespace fs = std::filesystem;
using nlohmann::json;

const char* variant_tag(Variant v) noexcept {
    switch (v) {
        case Variant::plus: return "plus";
        case Variant::minus: return "minus";
        case Variant::bar_plus: return "bar_plus";
        case Variant::bar_minus: return "bar_minus";
    }
    return "?";
}

const char* to_string(TokenPolicy p) noexcept {
    switch (p) {
        case TokenPolicy::first_token: return "first_token";
        case TokenPolicy::last_token: return "last_token";
        case TokenPolicy::both: return "both";
    }
    return "?";
}

TokenPolicy parse_token_policy(std::string_view text) {
    if (text == "first_token") return TokenPolicy::first_token;
    if (text == "last_token") return TokenPolicy::last_token;
    if (text == "both") return TokenPolicy::both;
    throw IntegrityError("unknown token_policy '" + std::string(text) + "'");
}

const char* to_string(Scaling s) noexcept {
    return s == Scaling::center_only ? "center_only" : "center_and_scale";
}

const char* to_string(NormGrouping g) noexcept { return g == NormGrouping::suffix ? "suffix" : "variant"; }

Scaling parse_scaling(std::string_view text) {
    if (text == "center_only") return Scaling::center_only;
    if (text == "center_and_scale") return Scaling::center_and_scale;
    throw ConfigError("unknown normalization policy '" + std::string(text) + "'");
}

NormGrouping parse_grouping(std::string_view text) {
    if (text == "suffix") return NormGrouping::suffix;
    if (text == "variant") return NormGrouping::variant;
    throw ConfigError("unknown normalization grouping '" + std::string(text) + "'");
}

void LayerActivations::validate() const {
    const auto rows = variants[0].rows();
    const auto cols = variants[0].cols();
    for (Variant v : all_variants) {
        const Matrix& m = (*this)[v];
        if (m.rows() != rows || m.cols() != cols) {
            throw IntegrityError("layer " + std::to_string(layer_index) + " variant " + variant_tag(v) +
                                 " has shape [" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) +
                                 "], expected [" + std::to_string(rows) + ", " + std::to_string(cols) + "]");
        }
        if (!m.allFinite()) {
            throw DataError("non-finite value in layer " + std::to_string(layer_index) + " variant " +
                            variant_tag(v));
        }
    }
}

std::string layer_file_key(int layer, Variant v) { return "layer" + std::to_string(layer) + "_" + variant_tag(v); }

std::string layer_file_name(int layer, Variant v) { return layer_file_key(layer, v) + ".f32"; }

namespace {

void check_info(const ArchiveInfo& info) {
    if (info.n_layers <= 0) throw IntegrityError("n_layers must be positive");
    if (info.hidden_dim <= 0) throw IntegrityError("hidden_dim must be positive");
    if (info.n_pairs <= 0) throw IntegrityError("n_pairs must be positive");
}

json info_to_json(const ArchiveInfo& info) {
    json m = info.extra.is_object() ? info.extra : json::object();
    m["model_id"] = info.model_id;
    m["n_layers"] = info.n_layers;
    m["hidden_dim"] = info.hidden_dim;
    m["n_pairs"] = info.n_pairs;
    m["token_policy"] = to_string(info.token_policy);
    m["dataset_fingerprint"] = info.dataset_fingerprint;
    m["dtype"] = "f32le";
    return m;
}

template <typename T>
T required(const json& m, const char* key, const fs::path& where) {
    if (!m.contains(key)) throw IntegrityError(where.string() + ": manifest lacks '" + key + "'");
    try {
        return m.at(key).get<T>();
    } catch (const json::exception&) {
        throw IntegrityError(where.string() + ": manifest field '" + key + "' has the wrong type");
    }
}

json read_manifest(const fs::path& dir) {
    const fs::path path = dir / manifest_file_name;
    if (!fs::exists(path)) throw StructuralError("archive manifest missing: " + path.string());
    try {
        return json::parse(io::read_text_file(path));
    } catch (const json::parse_error& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
}

ArchiveInfo info_from_json(const json& m, const fs::path& dir) {
    ArchiveInfo info;
    info.model_id = required<std::string>(m, "model_id", dir);
    info.n_layers = required<int>(m, "n_layers", dir);
    info.hidden_dim = required<int>(m, "hidden_dim", dir);
    info.n_pairs = required<int>(m, "n_pairs", dir);
    info.token_policy = parse_token_policy(required<std::string>(m, "token_policy", dir));
    info.dataset_fingerprint = required<std::string>(m, "dataset_fingerprint", dir);
    const auto dtype = required<std::string>(m, "dtype", dir);
    if (dtype != "f32le") throw IntegrityError(dir.string() + ": unsupported dtype '" + dtype + "'");
    check_info(info);
    info.extra = m;
    for (const char* key : {"model_id", "n_layers", "hidden_dim", "n_pairs", "token_policy",
                            "dataset_fingerprint", "dtype", "files"}) {
        info.extra.erase(key);
    }
    return info;
}

Matrix load_matrix(const fs::path& dir, const json& files, const ArchiveInfo& info, int layer, Variant v) {
    const std::string key = layer_file_key(layer, v);
    if (!files.contains(key)) {
        throw StructuralError(dir.string() + ": manifest lists no file for layer " + std::to_string(layer) +
                              " variant " + variant_tag(v));
    }
    const fs::path path = dir / files.at(key).get<std::string>();
    if (!fs::exists(path)) {
        throw StructuralError("missing file for layer " + std::to_string(layer) + " variant " + variant_tag(v) +
                              ": " + path.string());
    }
    std::vector<float> values = io::read_f32le(path);
    const std::size_t expected = static_cast<std::size_t>(info.n_pairs) * static_cast<std::size_t>(info.hidden_dim);
    if (values.size() != expected) {
        throw IntegrityError(path.string() + " holds " + std::to_string(values.size()) + " floats, manifest shape [" +
                             std::to_string(info.n_pairs) + ", " + std::to_string(info.hidden_dim) + "] needs " +
                             std::to_string(expected));
    }
    Matrix m = Eigen::Map<const Matrix>(values.data(), info.n_pairs, info.hidden_dim);
    if (!m.allFinite()) {
        throw DataError("non-finite value in layer " + std::to_string(layer) + " variant " + variant_tag(v) + " (" +
                        path.string() + ")");
    }
    return m;
}

void check_file_sizes(const fs::path& dir, const json& files, const ArchiveInfo& info) {
    const auto expected = static_cast<std::uintmax_t>(info.n_pairs) * static_cast<std::uintmax_t>(info.hidden_dim) * 4u;
    for (int l = 0; l < info.n_layers; ++l) {
        for (Variant v : all_variants) {
            const std::string key = layer_file_key(l, v);
            if (!files.contains(key)) {
                throw StructuralError(dir.string() + ": manifest lists no file for layer " + std::to_string(l) +
                                      " variant " + variant_tag(v));
            }
            const fs::path path = dir / files.at(key).get<std::string>();
            if (!fs::exists(path)) {
                throw StructuralError("missing file for layer " + std::to_string(l) + " variant " +
                                      variant_tag(v) + ": " + path.string());
            }
            if (fs::file_size(path) != expected) {
                throw IntegrityError(path.string() + " has " + std::to_string(fs::file_size(path)) +
                                     " bytes, manifest shape needs " + std::to_string(expected));
            }
        }
    }
}

}  // namespace

ActivationArchive::ActivationArchive(ArchiveInfo info, std::vector<LayerActivations> layers)
    : info_(std::move(info)), layers_(std::move(layers)) {
    check_info(info_);
    if (info_.token_policy == TokenPolicy::both) {
        throw IntegrityError("a single archive holds one token position; store encoder and decoder parts separately");
    }
    if (static_cast<int>(layers_.size()) != info_.n_layers) {
        throw IntegrityError("archive declares " + std::to_string(info_.n_layers) + " layers but holds " +
                             std::to_string(layers_.size()));
    }
    for (int l = 0; l < info_.n_layers; ++l) {
        const auto& layer = layers_[l];
        if (layer.layer_index != l) {
            throw IntegrityError("layer at position " + std::to_string(l) + " has index " +
                                 std::to_string(layer.layer_index));
        }
        layer.validate();
        if (layer.n_pairs() != info_.n_pairs || layer.dim() != info_.hidden_dim) {
            throw IntegrityError("layer " + std::to_string(l) + " shape [" + std::to_string(layer.n_pairs()) + ", " +
                                 std::to_string(layer.dim()) + "] disagrees with manifest [" +
                                 std::to_string(info_.n_pairs) + ", " + std::to_string(info_.hidden_dim) + "]");
        }
    }
}

ActivationArchive::ActivationArchive(ArchiveInfo info, fs::path root)
    : info_(std::move(info)), lazy_root_(std::move(root)) {}

LayerActivations ActivationArchive::layer(int index) const {
    if (index < 0 || index >= info_.n_layers) {
        throw ConfigError("layer " + std::to_string(index) + " out of range [0, " + std::to_string(info_.n_layers) +
                          ")");
    }
    if (!lazy_root_) return layers_[index];
    const json m = read_manifest(*lazy_root_);
    const json& files = m.at("files");
    LayerActivations acts;
    acts.layer_index = index;
    for (Variant v : all_variants) acts[v] = load_matrix(*lazy_root_, files, info_, index, v);
    return acts;
}

ActivationArchive read_activation_archive(const fs::path& dir, LoadMode mode) {
    const json m = read_manifest(dir);
    if (m.contains("token_policy") && m["token_policy"] == "both") {
        throw IntegrityError(dir.string() + " is an encoder-decoder bundle; open it with read_archive_parts");
    }
    ArchiveInfo info = info_from_json(m, dir);
    if (!m.contains("files") || !m["files"].is_object()) {
        throw StructuralError(dir.string() + ": manifest lacks a 'files' map");
    }
    const json& files = m["files"];
    if (mode == LoadMode::lazy) {
        check_file_sizes(dir, files, info);
        return ActivationArchive(std::move(info), fs::path(dir));
    }
    std::vector<LayerActivations> layers;
    layers.reserve(info.n_layers);
    for (int l = 0; l < info.n_layers; ++l) {
        LayerActivations acts;
        acts.layer_index = l;
        for (Variant v : all_variants) acts[v] = load_matrix(dir, files, info, l, v);
        layers.push_back(std::move(acts));
    }
    return ActivationArchive(std::move(info), std::move(layers));
}

void write_activation_archive(const ActivationArchive& archive, const fs::path& dir) {
    fs::create_directories(dir);
    json m = info_to_json(archive.info());
    json files = json::object();
    for (int l = 0; l < archive.n_layers(); ++l) {
        const LayerActivations acts = archive.layer(l);
        for (Variant v : all_variants) {
            const Matrix& mat = acts[v];
            io::write_f32le(dir / layer_file_name(l, v),
                            std::span<const float>(mat.data(), static_cast<std::size_t>(mat.size())));
            files[layer_file_key(l, v)] = layer_file_name(l, v);
        }
    }
    m["files"] = files;
    io::write_file_atomic(dir / manifest_file_name, m.dump(2) + "\n");
}

std::vector<ArchivePart> read_archive_parts(const fs::path& dir, LoadMode mode) {
    const json m = read_manifest(dir);
    if (!(m.contains("token_policy") && m["token_policy"] == "both")) {
        std::vector<ArchivePart> parts;
        parts.push_back(ArchivePart{"", read_activation_archive(dir, mode)});
        return parts;
    }
    if (!m.contains("parts") || !m["parts"].is_object()) {
        throw StructuralError(dir.string() + ": encoder-decoder manifest lacks a 'parts' map");
    }
    const std::string fingerprint = m.value("dataset_fingerprint", "");
    std::vector<ArchivePart> parts;
    for (const char* tag : {"enc", "dec"}) {
        if (!m["parts"].contains(tag)) {
            throw StructuralError(dir.string() + ": encoder-decoder manifest lacks part '" + tag + "'");
        }
        ActivationArchive sub = read_activation_archive(dir / m["parts"][tag].get<std::string>(), mode);
        if (!fingerprint.empty() && sub.info().dataset_fingerprint != fingerprint) {
            throw IntegrityError(dir.string() + ": part '" + tag + "' fingerprint differs from the bundle's");
        }
        parts.push_back(ArchivePart{tag, std::move(sub)});
    }
    return parts;
}

void write_encoder_decoder_archive(const ActivationArchive& encoder, const ActivationArchive& decoder,
                                   const fs::path& dir) {
    if (encoder.info().dataset_fingerprint != decoder.info().dataset_fingerprint) {
        throw IntegrityError("encoder and decoder parts were extracted from different datasets");
    }
    write_activation_archive(encoder, dir / "archive.enc");
    write_activation_archive(decoder, dir / "archive.dec");
    json m;
    m["model_id"] = encoder.info().model_id;
    m["token_policy"] = "both";
    m["dataset_fingerprint"] = encoder.info().dataset_fingerprint;
    m["dtype"] = "f32le";
    m["parts"] = {{"enc", "archive.enc"}, {"dec", "archive.dec"}};
    io::write_file_atomic(dir / manifest_file_name, m.dump(2) + "\n");
}

namespace {

using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Normalizes the rows of `group` (the stacked matrices sharing statistics) in place.
void normalize_group(MatrixD& group, Scaling scaling) {
    const Eigen::RowVectorXd mean = group.colwise().mean();
    group.rowwise() -= mean;
    if (scaling == Scaling::center_only) return;
    const double n = static_cast<double>(group.rows());
    Eigen::RowVectorXd sd = (group.array().square().colwise().sum() / n).sqrt().matrix();
    for (Eigen::Index j = 0; j < sd.size(); ++j) {
        if (!(sd[j] > 0.0)) sd[j] = 1.0;
    }
    group.array().rowwise() /= sd.array();
}

}  // namespace

LayerActivations normalize_layer(const LayerActivations& acts, NormPolicy policy) {
    acts.validate();
    if (policy.scaling == Scaling::center_and_scale && acts.n_pairs() < 2) {
        throw ConfigError("center_and_scale needs at least 2 pairs, layer " + std::to_string(acts.layer_index) +
                          " has " + std::to_string(acts.n_pairs()));
    }
    LayerActivations out;
    out.layer_index = acts.layer_index;
    const Eigen::Index n = acts.n_pairs();

    if (policy.grouping == NormGrouping::variant) {
        for (Variant v : all_variants) {
            MatrixD g = acts[v].cast<double>();
            normalize_group(g, policy.scaling);
            out[v] = g.cast<float>();
        }
        return out;
    }

    const std::array<std::array<Variant, 2>, 2> groups = {{{Variant::plus, Variant::bar_plus},
                                                            {Variant::minus, Variant::bar_minus}}};
    for (const auto& [first, second] : groups) {
        MatrixD g(2 * n, acts.dim());
        g.topRows(n) = acts[first].cast<double>();
        g.bottomRows(n) = acts[second].cast<double>();
        normalize_group(g, policy.scaling);
        out[first] = g.topRows(n).cast<float>();
        out[second] = g.bottomRows(n).cast<float>();
    }
    return out;
}

}  // namespace paccs

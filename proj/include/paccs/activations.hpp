#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace paccs {

/// Row-major [n_pairs, d] block of hidden states.
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The four contrastive completions of a pair.
enum class Variant : int {
    plus = 0,       // safe statement + Yes   (A+)
    minus = 1,      // safe statement + No    (A-)
    bar_plus = 2,   // harmful statement + Yes (Abar+)
    bar_minus = 3,  // harmful statement + No  (Abar-)
};

inline constexpr std::array<Variant, 4> all_variants = {Variant::plus, Variant::minus, Variant::bar_plus,
                                                        Variant::bar_minus};

/// File-name tag: plus, minus, bar_plus, bar_minus.
const char* variant_tag(Variant v) noexcept;

enum class TokenPolicy { first_token, last_token, both };

const char* to_string(TokenPolicy p) noexcept;
TokenPolicy parse_token_policy(std::string_view text);

struct LayerActivations {
    int layer_index = 0;
    std::array<Matrix, 4> variants;

    const Matrix& operator[](Variant v) const { return variants[static_cast<int>(v)]; }
    Matrix& operator[](Variant v) { return variants[static_cast<int>(v)]; }

    Eigen::Index n_pairs() const { return variants[0].rows(); }
    Eigen::Index dim() const { return variants[0].cols(); }

    /// Throws IntegrityError on shape mismatch and DataError on non-finite entries.
    void validate() const;
};

struct ArchiveInfo {
    std::string model_id;
    int n_layers = 0;
    int hidden_dim = 0;
    int n_pairs = 0;
    TokenPolicy token_policy = TokenPolicy::last_token;
    std::string dataset_fingerprint;
    /// Optional producer-recorded fields (hidden_state_point, suffixes, synth config...).
    nlohmann::json extra = nlohmann::json::object();
};

enum class LoadMode { eager, lazy };

/// Per-layer activations for one token position policy. Layer 0 is the
/// embedding output. Lazy archives read a layer's files on each access.
class ActivationArchive {
public:
    /// In-memory archive; validates shapes, finiteness and layer indexing.
    ActivationArchive(ArchiveInfo info, std::vector<LayerActivations> layers);

    const ArchiveInfo& info() const noexcept { return info_; }
    int n_layers() const noexcept { return info_.n_layers; }

    LayerActivations layer(int index) const;

    bool is_lazy() const noexcept { return lazy_root_.has_value(); }

private:
    friend ActivationArchive read_activation_archive(const std::filesystem::path&, LoadMode);
    ActivationArchive(ArchiveInfo info, std::filesystem::path root);

    ArchiveInfo info_;
    std::vector<LayerActivations> layers_;
    std::optional<std::filesystem::path> lazy_root_;
};

inline constexpr const char* manifest_file_name = "manifest.json";

std::string layer_file_key(int layer, Variant v);   // "layer3_bar_plus"
std::string layer_file_name(int layer, Variant v);  // "layer3_bar_plus.f32"

/// Reads a single-position archive directory. Validation covers manifest
/// fields, presence of every (layer, variant) file, byte sizes against the
/// manifest shape, and finiteness (deferred to access for lazy loads).
ActivationArchive read_activation_archive(const std::filesystem::path& dir, LoadMode mode = LoadMode::eager);

void write_activation_archive(const ActivationArchive& archive, const std::filesystem::path& dir);

/// One evaluable sub-archive; `tag` is empty for single-position archives and
/// "enc"/"dec" for encoder-decoder archives.
struct ArchivePart {
    std::string tag;
    ActivationArchive archive;
};

/// Opens an archive directory that may be an encoder-decoder bundle
/// (token_policy "both" with a "parts" map of sub-archive directories).
std::vector<ArchivePart> read_archive_parts(const std::filesystem::path& dir, LoadMode mode = LoadMode::eager);

void write_encoder_decoder_archive(const ActivationArchive& encoder, const ActivationArchive& decoder,
                                   const std::filesystem::path& dir);

enum class Scaling { center_only, center_and_scale };
/// suffix: Yes variants (A+, Abar+) share statistics, as do No variants.
/// variant: each of the four matrices gets its own statistics.
enum class NormGrouping { suffix, variant };

struct NormPolicy {
    Scaling scaling = Scaling::center_and_scale;
    NormGrouping grouping = NormGrouping::suffix;
};

const char* to_string(Scaling s) noexcept;
const char* to_string(NormGrouping g) noexcept;
Scaling parse_scaling(std::string_view text);
NormGrouping parse_grouping(std::string_view text);

/// Mean-centres along the pair axis (and divides by the per-dimension
/// population standard deviation under center_and_scale; zero-variance
/// dimensions are divided by 1).
LayerActivations normalize_layer(const LayerActivations& acts, NormPolicy policy = {});

}  // namespace paccs

#include "paccs/activations.hpp"
#include "paccs/dataset.hpp"
#include "paccs/errors.hpp"
#include "paccs/io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace paccs;
using paccs::testing::TempDir;
using paccs::testing::source_dir;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures = source_dir() / "tests/fixtures";

LayerActivations random_layer(int index, Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<float> z(0.0f, 1.0f);
    LayerActivations la;
    la.layer_index = index;
    for (auto v : all_variants) {
        la[v] = Matrix(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) la[v](i, j) = 3.0f * z(gen) + static_cast<float>(j);
    }
    return la;
}

ActivationArchive random_archive(int n_layers, Eigen::Index n, Eigen::Index d, std::uint64_t seed,
                                 const std::string& fp = "abc") {
    ArchiveInfo info;
    info.model_id = "test/model";
    info.n_layers = n_layers;
    info.hidden_dim = static_cast<int>(d);
    info.n_pairs = static_cast<int>(n);
    info.dataset_fingerprint = fp;
    std::vector<LayerActivations> layers;
    for (int l = 0; l < n_layers; ++l) layers.push_back(random_layer(l, n, d, seed + l));
    return ActivationArchive(info, layers);
}

// The value the fixture generator stored at (layer, variant, row, col).
float fixture_value(float base, int layer, int variant, int row, int col) {
    return static_cast<float>(base + layer * 100 + variant * 10 + row + col / 10.0);
}

}  // namespace

TEST(ExternalArchive, ReadsNumpyWrittenFiles) {
    const ActivationArchive a = read_activation_archive(fixtures / "numpy_archive");
    EXPECT_EQ(a.info().model_id, "fixture/decoder");
    EXPECT_EQ(a.n_layers(), 2);
    EXPECT_EQ(a.info().hidden_dim, 2);
    EXPECT_EQ(a.info().n_pairs, 3);
    EXPECT_EQ(a.info().token_policy, TokenPolicy::last_token);
    EXPECT_EQ(a.info().extra.at("hidden_state_point"), "residual_post");
    for (int l = 0; l < 2; ++l) {
        const LayerActivations la = a.layer(l);
        EXPECT_EQ(la.layer_index, l);
        for (int v = 0; v < 4; ++v)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 2; ++c)
                    EXPECT_EQ(la[static_cast<Variant>(v)](r, c), fixture_value(0, l, v, r, c));
    }
    const PairDataset ds = load_pair_dataset(fixtures / "fixture_pairs.jsonl");
    EXPECT_EQ(a.info().dataset_fingerprint, dataset_fingerprint(ds));
}

TEST(ExternalArchive, LazyMatchesEager) {
    const ActivationArchive eager = read_activation_archive(fixtures / "numpy_archive", LoadMode::eager);
    const ActivationArchive lazy = read_activation_archive(fixtures / "numpy_archive", LoadMode::lazy);
    EXPECT_TRUE(lazy.is_lazy());
    EXPECT_FALSE(eager.is_lazy());
    for (int l = 0; l < 2; ++l)
        for (auto v : all_variants) EXPECT_EQ(eager.layer(l)[v], lazy.layer(l)[v]);
    EXPECT_THROW(lazy.layer(2), ConfigError);
}

TEST(ExternalArchive, EncoderDecoderBundle) {
    const auto parts = read_archive_parts(fixtures / "numpy_bundle");
    ASSERT_EQ(parts.size(), 2u);
    EXPECT_EQ(parts[0].tag, "enc");
    EXPECT_EQ(parts[1].tag, "dec");
    EXPECT_EQ(parts[0].archive.n_layers(), 1);
    EXPECT_EQ(parts[1].archive.n_layers(), 2);
    EXPECT_EQ(parts[0].archive.info().token_policy, TokenPolicy::first_token);
    EXPECT_EQ(parts[1].archive.layer(1)[Variant::bar_minus](2, 1), fixture_value(2000, 1, 3, 2, 1));
    EXPECT_EQ(parts[0].archive.layer(0)[Variant::plus](0, 0), fixture_value(1000, 0, 0, 0, 0));
    EXPECT_THROW(read_activation_archive(fixtures / "numpy_bundle"), IntegrityError);
    // a single archive is one part with an empty tag
    const auto single = read_archive_parts(fixtures / "numpy_archive");
    ASSERT_EQ(single.size(), 1u);
    EXPECT_EQ(single[0].tag, "");
}

TEST(Archive, WriteReadRoundTripIsBitExact) {
    TempDir tmp;
    const ActivationArchive a = random_archive(3, 5, 4, 42);
    write_activation_archive(a, tmp / "arch");
    for (auto mode : {LoadMode::eager, LoadMode::lazy}) {
        const ActivationArchive b = read_activation_archive(tmp / "arch", mode);
        EXPECT_EQ(b.info().model_id, a.info().model_id);
        EXPECT_EQ(b.info().dataset_fingerprint, "abc");
        for (int l = 0; l < 3; ++l)
            for (auto v : all_variants) EXPECT_EQ(a.layer(l)[v], b.layer(l)[v]);
    }
    // file naming is part of the format
    EXPECT_TRUE(fs::exists(tmp / "arch" / "layer2_bar_plus.f32"));
    EXPECT_EQ(fs::file_size(tmp / "arch" / "layer0_minus.f32"), 5u * 4u * 4u);
}

TEST(Archive, EncoderDecoderRoundTrip) {
    TempDir tmp;
    write_encoder_decoder_archive(random_archive(2, 4, 3, 1), random_archive(3, 4, 3, 9), tmp / "bundle");
    const auto parts = read_archive_parts(tmp / "bundle", LoadMode::lazy);
    ASSERT_EQ(parts.size(), 2u);
    EXPECT_EQ(parts[0].archive.n_layers(), 2);
    EXPECT_EQ(parts[1].archive.n_layers(), 3);
    EXPECT_EQ(parts[1].archive.layer(2)[Variant::plus], random_archive(3, 4, 3, 9).layer(2)[Variant::plus]);
    EXPECT_THROW(write_encoder_decoder_archive(random_archive(1, 4, 3, 1, "x"), random_archive(1, 4, 3, 1, "y"),
                                               tmp / "bad"),
                 IntegrityError);
}

TEST(Archive, MissingPiecesAreStructuralErrors) {
    TempDir tmp;
    write_activation_archive(random_archive(2, 3, 2, 5), tmp / "a");
    fs::remove(tmp / "a" / "layer1_bar_minus.f32");
    EXPECT_THROW(read_activation_archive(tmp / "a"), StructuralError);
    EXPECT_THROW(read_activation_archive(tmp / "a", LoadMode::lazy), StructuralError);
    try {
        read_activation_archive(tmp / "a");
    } catch (const StructuralError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1 variant bar_minus"), std::string::npos) << e.what();
    }
    EXPECT_THROW(read_activation_archive(tmp / "nowhere"), StructuralError);
}

TEST(Archive, ShapeMismatchIsIntegrityError) {
    TempDir tmp;
    write_activation_archive(random_archive(1, 3, 2, 5), tmp / "a");
    io::write_f32le(tmp / "a" / "layer0_plus.f32", std::vector<float>(5, 1.0f));
    EXPECT_THROW(read_activation_archive(tmp / "a"), IntegrityError);
    EXPECT_THROW(read_activation_archive(tmp / "a", LoadMode::lazy), IntegrityError);

    auto m = nlohmann::json::parse(io::read_text_file(fixtures / "numpy_archive" / "manifest.json"));
    fs::copy(fixtures / "numpy_archive", tmp / "b");
    m["hidden_dim"] = 3;
    io::write_file_atomic(tmp / "b" / "manifest.json", m.dump());
    EXPECT_THROW(read_activation_archive(tmp / "b"), IntegrityError);
    m["hidden_dim"] = 2;
    m["dtype"] = "f16";
    io::write_file_atomic(tmp / "b" / "manifest.json", m.dump());
    EXPECT_THROW(read_activation_archive(tmp / "b"), IntegrityError);
    m["dtype"] = "f32le";
    m.erase("dataset_fingerprint");
    io::write_file_atomic(tmp / "b" / "manifest.json", m.dump());
    EXPECT_THROW(read_activation_archive(tmp / "b"), IntegrityError);
}

TEST(Archive, NonFiniteValuesAreDataErrors) {
    TempDir tmp;
    write_activation_archive(random_archive(2, 3, 2, 5), tmp / "a");
    std::vector<float> v = io::read_f32le(tmp / "a" / "layer1_minus.f32");
    v[3] = std::numeric_limits<float>::quiet_NaN();
    io::write_f32le(tmp / "a" / "layer1_minus.f32", v);
    try {
        read_activation_archive(tmp / "a");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1 variant minus"), std::string::npos) << e.what();
    }
    const ActivationArchive lazy = read_activation_archive(tmp / "a", LoadMode::lazy);
    EXPECT_NO_THROW(lazy.layer(0));
    EXPECT_THROW(lazy.layer(1), DataError);
}

TEST(Archive, ConstructorValidates) {
    ArchiveInfo info;
    info.n_layers = 2;
    info.hidden_dim = 2;
    info.n_pairs = 3;
    info.dataset_fingerprint = "f";
    EXPECT_THROW(ActivationArchive(info, {random_layer(0, 3, 2, 1)}), IntegrityError);
    EXPECT_THROW(ActivationArchive(info, {random_layer(0, 3, 2, 1), random_layer(0, 3, 2, 2)}), IntegrityError);
    EXPECT_THROW(ActivationArchive(info, {random_layer(0, 3, 2, 1), random_layer(1, 4, 2, 2)}), IntegrityError);
    info.token_policy = TokenPolicy::both;
    EXPECT_THROW(ActivationArchive(info, {random_layer(0, 3, 2, 1), random_layer(1, 3, 2, 2)}), IntegrityError);
    EXPECT_THROW(parse_token_policy("middle"), IntegrityError);
}

namespace {

void expect_group_stats(const std::vector<const Matrix*>& group, bool scaled) {
    Eigen::Index rows = 0;
    for (auto* m : group) rows += m->rows();
    const Eigen::Index d = group.front()->cols();
    for (Eigen::Index j = 0; j < d; ++j) {
        double sum = 0.0, sq = 0.0;
        for (auto* m : group)
            for (Eigen::Index i = 0; i < m->rows(); ++i) {
                sum += (*m)(i, j);
                sq += static_cast<double>((*m)(i, j)) * (*m)(i, j);
            }
        const double mean = sum / rows;
        EXPECT_NEAR(mean, 0.0, 1e-5);
        if (scaled) EXPECT_NEAR(sq / rows - mean * mean, 1.0, 1e-4);
    }
}

}  // namespace

TEST(Normalize, SuffixGroupingInvariants) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const LayerActivations raw = random_layer(0, 2 + static_cast<Eigen::Index>(seed % 7), 3, seed);
        for (auto scaling : {Scaling::center_only, Scaling::center_and_scale}) {
            const LayerActivations n = normalize_layer(raw, {scaling, NormGrouping::suffix});
            const bool scaled = scaling == Scaling::center_and_scale;
            expect_group_stats({&n[Variant::plus], &n[Variant::bar_plus]}, scaled);
            expect_group_stats({&n[Variant::minus], &n[Variant::bar_minus]}, scaled);
            if (!scaled) {
                // centring shifts the Yes group rigidly
                const Matrix d0 = raw[Variant::plus] - n[Variant::plus];
                const Matrix d1 = raw[Variant::bar_plus] - n[Variant::bar_plus];
                EXPECT_LT((d0.rowwise() - d0.row(0)).cwiseAbs().maxCoeff(), 1e-4f);
                EXPECT_LT((d1.rowwise() - d0.row(0)).cwiseAbs().maxCoeff(), 1e-4f);
            }
        }
    }
}

TEST(Normalize, VariantGroupingInvariants) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const LayerActivations raw = random_layer(0, 2 + static_cast<Eigen::Index>(seed % 7), 3, seed);
        const LayerActivations n = normalize_layer(raw, {Scaling::center_and_scale, NormGrouping::variant});
        for (auto v : all_variants) expect_group_stats({&n[v]}, true);
    }
}

TEST(Normalize, IdempotentAndShiftInvariant) {
    const LayerActivations raw = random_layer(4, 9, 5, 77);
    const LayerActivations once = normalize_layer(raw);
    const LayerActivations twice = normalize_layer(once);
    LayerActivations shifted = raw;
    for (auto v : all_variants) shifted[v].array() += 12.5f;
    const LayerActivations from_shifted = normalize_layer(shifted);
    EXPECT_EQ(once.layer_index, 4);
    for (auto v : all_variants) {
        EXPECT_LT((once[v] - twice[v]).cwiseAbs().maxCoeff(), 1e-5f);
        EXPECT_LT((once[v] - from_shifted[v]).cwiseAbs().maxCoeff(), 1e-4f);
    }
}

TEST(Normalize, ZeroVarianceDimensionIsOnlyCentred) {
    LayerActivations raw = random_layer(0, 4, 3, 1);
    for (auto v : all_variants) raw[v].col(1).setConstant(7.0f);
    const LayerActivations n = normalize_layer(raw);
    for (auto v : all_variants) {
        EXPECT_TRUE(n[v].allFinite());
        EXPECT_EQ(n[v].col(1).cwiseAbs().maxCoeff(), 0.0f);
    }
}

TEST(Normalize, ScalingNeedsTwoPairs) {
    const LayerActivations raw = random_layer(0, 1, 3, 1);
    EXPECT_THROW(normalize_layer(raw), ConfigError);
    EXPECT_NO_THROW(normalize_layer(raw, {Scaling::center_only, NormGrouping::suffix}));
}

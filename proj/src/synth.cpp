#include "paccs/synth.hpp"

#include "paccs/errors.hpp"

#include <cmath>
#include <random>

namespace paccs {

void SynthConfig::validate() const {
    if (d < 2) throw ConfigError("synthetic d must be >= 2");
    if (n_pairs < 4) throw ConfigError("synthetic n_pairs must be >= 4");
    if (!(signal_strength >= 0.0) || !std::isfinite(signal_strength)) {
        throw ConfigError("signal_strength must be a finite value >= 0");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
    if (!std::isfinite(polarity_offset)) throw ConfigError("polarity_offset must be finite");
    if (scenario == Scenario::unclassified) throw ConfigError("cannot plant the 'unclassified' scenario");
}

nlohmann::json SynthConfig::to_json() const {
    return {{"d", d},
            {"n_pairs", n_pairs},
            {"scenario", to_string(scenario)},
            {"signal_strength", signal_strength},
            {"noise_sigma", noise_sigma},
            {"rng_seed", rng_seed},
            {"polarity_offset", polarity_offset}};
}

SyntheticLayer generate_synthetic_layer(const SynthConfig& cfg, int layer_index) {
    cfg.validate();
    std::mt19937_64 gen(static_cast<std::uint64_t>(cfg.rng_seed));
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::VectorXd w(cfg.d);
    do {
        for (int j = 0; j < cfg.d; ++j) w[j] = normal(gen);
    } while (w.norm() == 0.0);
    w.normalize();

    // Per-pair cluster coefficients along w, in variant order A+, A-, Abar+, Abar-.
    std::vector<std::array<double, 4>> coef(static_cast<std::size_t>(cfg.n_pairs));
    std::bernoulli_distribution coin(0.5);
    for (auto& c : coef) {
        switch (cfg.scenario) {
            case Scenario::strong_safe: c = {1.0, -1.0, -1.0, 1.0}; break;
            case Scenario::strong_harm: c = {-1.0, 1.0, 1.0, -1.0}; break;
            case Scenario::inverted: {
                const double t = coin(gen) ? 1.0 : -1.0;
                c = {t, -t, t + cfg.polarity_offset, -t + cfg.polarity_offset};
                break;
            }
            default: c = {0.0, 0.0, 0.0, 0.0}; break;
        }
    }

    SyntheticLayer out;
    out.direction = w;
    out.acts.layer_index = layer_index;
    for (Variant v : all_variants) {
        const int k = static_cast<int>(v);
        Matrix m(cfg.n_pairs, cfg.d);
        for (int i = 0; i < cfg.n_pairs; ++i) {
            const double s = cfg.signal_strength * coef[static_cast<std::size_t>(i)][k];
            for (int j = 0; j < cfg.d; ++j) {
                m(i, j) = static_cast<float>(s * w[j] + cfg.noise_sigma * normal(gen));
            }
        }
        out.acts[v] = std::move(m);
    }
    return out;
}

PairDataset synthetic_dataset(int n_pairs) {
    if (n_pairs < 1) throw ConfigError("synthetic dataset needs at least one pair");
    std::vector<Statement> statements;
    statements.reserve(static_cast<std::size_t>(2 * n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        statements.push_back({i, "Synthetic harmful statement " + std::to_string(i) + ".", Label::harmful});
    }
    for (int i = 0; i < n_pairs; ++i) {
        statements.push_back({n_pairs + i, "Synthetic safe statement " + std::to_string(i) + ".", Label::safe});
    }
    return PairDataset(std::move(statements), PairType::antagonistic, "synthetic");
}

ActivationArchive generate_synthetic_archive(const SynthConfig& cfg) { return generate_synthetic_archive(cfg, 1); }

ActivationArchive generate_synthetic_archive(const SynthConfig& cfg, int n_layers) {
    cfg.validate();
    if (n_layers < 1) throw ConfigError("synthetic archive needs at least one layer");
    ArchiveInfo info;
    info.model_id = std::string("synthetic:") + to_string(cfg.scenario);
    info.n_layers = n_layers;
    info.hidden_dim = cfg.d;
    info.n_pairs = cfg.n_pairs;
    info.token_policy = TokenPolicy::last_token;
    info.dataset_fingerprint = dataset_fingerprint(synthetic_dataset(cfg.n_pairs));
    info.extra["synth_config"] = cfg.to_json();
    info.extra["hidden_state_point"] = "synthetic";

    std::vector<LayerActivations> layers;
    for (int l = 0; l < n_layers; ++l) {
        SynthConfig layer_cfg = cfg;
        layer_cfg.rng_seed = cfg.rng_seed + l;
        layers.push_back(generate_synthetic_layer(layer_cfg, l).acts);
    }
    return ActivationArchive(std::move(info), std::move(layers));
}

}  // namespace paccs

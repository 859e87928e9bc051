#pragma once

#include "paccs/activations.hpp"
#include "paccs/dataset.hpp"
#include "paccs/metrics.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <nlohmann/json.hpp>

namespace paccs {

/// Planted belief geometry along a seeded unit direction w (s = signal_strength):
///   strong_safe       A+, Abar- at +s w;  A-, Abar+ at -s w
///   strong_harm       the mirror image
///   inverted          per-pair truth sign t_i: A+ at s t_i w, A- at -s t_i w,
///                     Abar+ at s (t_i + offset) w, Abar- at s (-t_i + offset) w
///   without_polarity  every variant at the origin
/// Isotropic Gaussian noise (noise_sigma) is added to every row.
struct SynthConfig {
    int d = 16;
    int n_pairs = 64;
    Scenario scenario = Scenario::strong_safe;
    double signal_strength = 5.0;
    double noise_sigma = 0.1;
    std::int64_t rng_seed = 0;
    double polarity_offset = 0.5;  // inverted only

    void validate() const;
    nlohmann::json to_json() const;
};

struct SyntheticLayer {
    LayerActivations acts;
    Eigen::VectorXd direction;  // the planted unit vector w
};

SyntheticLayer generate_synthetic_layer(const SynthConfig& cfg, int layer_index = 0);

/// Placeholder statements the synthetic activations stand for; its
/// fingerprint is what synthetic archives record.
PairDataset synthetic_dataset(int n_pairs);

/// Single-layer archive whose manifest records the config.
ActivationArchive generate_synthetic_archive(const SynthConfig& cfg);

/// Independent layers with seeds rng_seed + layer, one scenario per call.
ActivationArchive generate_synthetic_archive(const SynthConfig& cfg, int n_layers);

}  // namespace paccs

#pragma once

#include "paccs/activations.hpp"
#include "paccs/scores.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace paccs {

struct Probe {
    Eigen::VectorXd theta;
    double bias = 0.0;
    std::int64_t seed = 0;
    double final_loss = 0.0;
};

/// theta -> -theta, b -> -b: maps every score p to 1 - p.
Probe negated(const Probe& probe);

void save_probe(const Probe& probe, const std::filesystem::path& json_path);
Probe load_probe(const std::filesystem::path& json_path);

enum class Aggregation { average_metrics, best_loss };

/// How runs are brought to a common probe sign before aggregation.
/// labels: flip any run whose raw separation accuracy is below 0.5.
/// first_run: flip any run whose belief scores anti-correlate with run 0's.
enum class SignAnchor { labels, first_run };

const char* to_string(Aggregation a) noexcept;
const char* to_string(SignAnchor a) noexcept;
Aggregation parse_aggregation(std::string_view text);
SignAnchor parse_sign_anchor(std::string_view text);

struct TrainConfig {
    int n_runs = 10;
    int n_epochs = 1500;
    double learning_rate = 1e-3;
    double init_scale = 1.0;
    std::int64_t rng_seed = 0;
    Aggregation aggregation = Aggregation::average_metrics;
    SignAnchor sign_anchor = SignAnchor::labels;
    /// Fraction of pairs held out from training and used for metrics; 0 disables.
    double holdout = 0.0;

    void validate() const;
};

/// Consistency (p+ - (1 - p-))^2 plus confidence min(p+, p-)^2.
double ccs_loss(double p_plus, double p_minus);

/// 1/2 (p+ + (1 - p-)).
double belief_score(double p_plus, double p_minus);

/// Training view of a layer: Yes rows [A+; Abar+] against No rows [A-; Abar-],
/// so both contrast pairs of every item contribute one loss term.
struct ContrastBatch {
    Eigen::MatrixXd yes;
    Eigen::MatrixXd no;
};

/// Rows restricted to `pairs` when non-empty.
ContrastBatch make_batch(const LayerActivations& acts, std::span<const Eigen::Index> pairs = {});

struct LossGradient {
    double loss = 0.0;
    Eigen::VectorXd d_theta;
    double d_bias = 0.0;
};

/// Mean ccs_loss over all rows of the batch, with its analytic gradient.
LossGradient ccs_objective(const ContrastBatch& batch, const Eigen::VectorXd& theta, double bias);

/// One seeded restart: theta ~ N(0, init_scale^2 / d), b = 0, then full-batch
/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) for n_epochs. Throws
/// DivergenceError on a non-finite loss.
Probe train_single_run(const ContrastBatch& batch, const TrainConfig& cfg, int run);

/// sigma(theta^T x + b) for all four variants of every pair, clamped to [0, 1].
std::vector<ScoreQuadruple> score_pairs(const LayerActivations& acts, const Probe& probe);

struct TrainResult {
    std::vector<Probe> probes;
    std::vector<std::vector<ScoreQuadruple>> per_run_scores;  // [run][pair]
};

/// Trains cfg.n_runs restarts (seed = rng_seed + run) on `train_pairs`
/// (all pairs when empty) and scores every pair with each probe.
TrainResult train_probe(const LayerActivations& acts, const TrainConfig& cfg,
                        std::span<const Eigen::Index> train_pairs = {});

struct RunMetrics {
    double esa_raw = 0.0;
    double esa_oriented = 0.0;
    double pc = 0.0;
    double ci = 0.0;
    double final_loss = 0.0;
};

struct RunAggregate {
    double esa_raw = 0.0;
    double esa_oriented = 0.0;
    double pc = 0.0;
    double ci = 0.0;
    double esa_std = 0.0;
    double pc_std = 0.0;
    double ci_std = 0.0;
    int n_runs = 0;
    int selected_run = -1;  // best_loss only
};

/// average_metrics: arithmetic means with population standard deviations
/// (esa_oriented recomputed as max(mean raw, 1 - mean raw)).
/// best_loss: the metrics of the run with the smallest final loss.
RunAggregate aggregate_runs(std::span<const RunMetrics> runs, Aggregation mode);

}  // namespace paccs

#pragma once

#include "paccs/activations.hpp"
#include "paccs/ccs.hpp"
#include "paccs/dataset.hpp"
#include "paccs/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace paccs {

/// One archive/dataset pairing evaluated under a condition tag
/// (e.g. "mixed", "not", "ttt").
struct ConditionSpec {
    std::string tag;
    std::filesystem::path archive;
    std::filesystem::path dataset;
    PairType pair_type = PairType::mixed;
};

struct RunManifest {
    std::vector<ConditionSpec> conditions;
    TrainConfig train;
    NormPolicy normalization;
    Thresholds thresholds;
    PcMode pc_mode = PcMode::signed_mean;
    std::filesystem::path output_dir = "paccs-out";
    bool save_probes = false;
    bool save_scores = false;

    /// Relative paths are resolved against the manifest's directory. Unknown
    /// keys are rejected.
    static RunManifest load(const std::filesystem::path& path);
    static RunManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    nlohmann::json to_json() const;

    /// Throws IoError if any referenced archive or dataset is missing.
    void check_paths() const;
};

struct RunRecord {
    int run = 0;
    std::int64_t seed = 0;
    double final_loss = 0.0;
    bool flipped = false;  // sign anchoring negated this run's probe
    RunMetrics metrics;
};

struct LayerReport {
    std::string condition;
    std::string dataset_name;
    int layer_index = 0;
    std::size_t n_eval_pairs = 0;
    MetricRecord metrics;
    RunAggregate aggregate;
    std::vector<RunRecord> runs;
    /// Per-pair scores behind `metrics` (run mean, or the selected run).
    std::vector<ScoreQuadruple> scores;

    nlohmann::json to_json() const;
    static LayerReport from_json(const nlohmann::json& j);
};

struct EvalSettings {
    TrainConfig train;
    NormPolicy normalization;
    Thresholds thresholds;
    PcMode pc_mode = PcMode::signed_mean;
};

struct PairSplit {
    std::vector<Eigen::Index> train;  // empty = all pairs
    std::vector<Eigen::Index> eval;   // empty = all pairs
};

/// Deterministic holdout split from cfg.rng_seed; both halves sorted.
PairSplit split_pairs(int n_pairs, const TrainConfig& cfg);

/// Normalize, train every restart, anchor run signs, compute and aggregate metrics.
/// `probes_out`, when given, receives the (sign-anchored) probe of every run.
LayerReport evaluate_layer(const LayerActivations& raw, const EvalSettings& settings, const std::string& condition,
                           const std::string& dataset_name, std::vector<Probe>* probes_out = nullptr);

/// Fails with IntegrityError unless the archive was extracted from `ds`.
void check_fingerprint(const ArchiveInfo& info, const PairDataset& ds);

/// Evaluates every layer of every condition; reports are ordered by
/// condition (manifest order, encoder part before decoder part) then layer.
/// Output is identical for any `jobs`.
std::vector<LayerReport> evaluate_archive(const RunManifest& manifest, int jobs = 1);

/// reports/{condition}/{layer}.json plus summary.csv under manifest.output_dir
/// (and score tables / probes when the manifest asks for them).
void write_reports(const RunManifest& manifest, const std::vector<LayerReport>& reports);

/// Runs evaluate_archive and write_reports.
std::vector<LayerReport> run_evaluation(const RunManifest& manifest, int jobs = 1);

inline constexpr const char* summary_columns =
    "condition,layer,esa_raw,esa_oriented,orientation,pc,ci,scenario,n_runs,pc_std,ci_std";

std::string summary_csv(const std::vector<LayerReport>& reports);

/// Reads reports/{condition}/*.json back, grouped by condition and ordered by layer.
std::map<std::string, std::vector<LayerReport>> load_reports(const std::filesystem::path& output_dir);

struct ComparisonTable {
    Metric metric = Metric::pc;
    SummaryTable summary;
};

/// Per-condition filtered statistics and pairwise MAD for `metric`.
/// Requires at least two conditions.
ComparisonTable compare_conditions(const std::map<std::string, std::vector<LayerReport>>& reports_by_condition,
                                   Metric metric, std::optional<double> min_esa,
                                   MadMode mad_mode = MadMode::mean_difference);

std::string comparison_csv(const ComparisonTable& table);

}  // namespace paccs

#pragma once

#include "paccs/scores.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace paccs {

enum class Orientation { safe_high, harm_high };
enum class Scenario { strong_safe, strong_harm, inverted, without_polarity, unclassified };

const char* to_string(Orientation o) noexcept;
const char* to_string(Scenario s) noexcept;
Scenario parse_scenario(std::string_view text);

struct EsaResult {
    double esa_raw = 0.0;
    double esa_oriented = 0.0;
    Orientation orientation = Orientation::safe_high;
};

/// Thresholds the belief score of both statements of every pair at 0.5
/// (ties predict harmful) and scores them against safe = 1, harmful = 0.
/// Orientation is safe_high when esa_raw >= 0.5.
EsaResult empirical_separation_accuracy(std::span<const ScoreQuadruple> quads);

/// 1/2 [(p+ - pbar-)^2 + (p- - pbar+)^2] * sign(p+ - pbar+) * sign(pbar- - p-), sign(0) = 0.
double polar_consistency(const ScoreQuadruple& q);

/// p+ * pbar+ + p- * pbar-.
double contradiction_index(const ScoreQuadruple& q);

/// Every threshold the scenario rules and layer filters use.
struct Thresholds {
    double strong_esa = 0.75;
    double min_esa = 0.625;
    double low_band_lo = 0.05;
    double low_band_hi = 0.25;
    double polarity_floor = 0.5;
};

/// Component-wise median over pairs.
ScoreQuadruple median_quadruple(std::span<const ScoreQuadruple> quads);

/// Rules in order: negative PC -> inverted; strong ESA by orientation ->
/// strong_safe / strong_harm; a median quadruple whose Yes/No scores for one
/// polarity both sit at or below the floor, or PC and CI both inside the low
/// band -> without_polarity; otherwise unclassified.
Scenario classify_scenario(double esa_oriented, Orientation orientation, double pc, double ci,
                           const ScoreQuadruple& median_quad, const Thresholds& t = {});
Scenario classify_scenario(double esa_oriented, Orientation orientation, double pc, double ci,
                           std::span<const ScoreQuadruple> quads, const Thresholds& t = {});

/// Layer-level PC is the mean of per-pair values; `magnitude` averages |PC|.
enum class PcMode { signed_mean, magnitude };
const char* to_string(PcMode m) noexcept;
PcMode parse_pc_mode(std::string_view text);

struct MetricRecord {
    double esa_raw = 0.0;
    double esa_oriented = 0.0;
    Orientation orientation = Orientation::safe_high;
    double pc = 0.0;
    double ci = 0.0;
    Scenario scenario = Scenario::unclassified;
    ScoreQuadruple median_quad;
};

/// ESA, mean PC and mean CI over the pairs, plus the scenario label.
MetricRecord compute_metrics(std::span<const ScoreQuadruple> quads, const Thresholds& t = {},
                             PcMode pc_mode = PcMode::signed_mean);

// ---------------------------------------------------------------------------
// Layer aggregation

enum class Metric { esa, pc, ci };
const char* to_string(Metric m) noexcept;
Metric parse_metric(std::string_view text);

/// One layer's headline values (esa is the oriented accuracy).
struct LayerPoint {
    int layer = 0;
    double esa = 0.0;
    double pc = 0.0;
    double ci = 0.0;

    double get(Metric m) const noexcept;
};

struct NamedGroup {
    std::string name;
    std::vector<LayerPoint> layers;
};

/// mean +/- 1.96 * stderr (sample sd), median; NaN when the group is empty.
struct MetricStats {
    double mean = 0.0;
    double ci95 = 0.0;
    double median = 0.0;
};

struct GroupStats {
    std::string name;
    std::size_t n_total = 0;
    std::size_t n_included = 0;
    MetricStats esa, pc, ci;

    const MetricStats& get(Metric m) const noexcept;
    double fraction_included() const noexcept;
};

/// mean_difference: |mean_a - mean_b|. paired: mean |a_l - b_l| over the
/// layers l included in both groups (NaN when there are none).
enum class MadMode { mean_difference, paired };
const char* to_string(MadMode m) noexcept;
MadMode parse_mad_mode(std::string_view text);

struct MadEntry {
    std::string group_a;
    std::string group_b;
    Metric metric = Metric::pc;
    double mad = 0.0;
};

struct SummaryTable {
    std::optional<double> min_esa;
    std::vector<GroupStats> groups;
    std::vector<MadEntry> mad;  // every unordered group pair, for each metric
};

/// Filters layers by oriented ESA (when min_esa is set) and summarizes each group.
SummaryTable aggregate_layers(std::span<const NamedGroup> groups, std::optional<double> min_esa = std::nullopt,
                              MadMode mad_mode = MadMode::mean_difference);

double mad_between(const SummaryTable& table, std::string_view a, std::string_view b, Metric m);

// ---------------------------------------------------------------------------
// Theoretical score grid

struct GridPoint {
    ScoreQuadruple quad;
    double pc = 0.0;
    double ci = 0.0;
    EsaResult esa;
    Scenario scenario = Scenario::unclassified;
};

/// PC, CI, single-pair ESA and scenario of one quadruple, as the grid reports it.
GridPoint score_grid_point(const ScoreQuadruple& quad, const Thresholds& t = {});

inline constexpr std::size_t max_grid_points = 10'000'000;

/// Every quadruple on {0, step, ..., 1}^4 (first component slowest). `step`
/// must divide 1 within 1e-12; grids above max_grid_points are refused.
std::vector<GridPoint> enumerate_score_grid(double step, const Thresholds& t = {});

std::string grid_to_csv(std::span<const GridPoint> grid);
std::string grid_to_json(std::span<const GridPoint> grid);

}  // namespace paccs

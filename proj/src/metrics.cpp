#include "paccs/metrics.hpp"

#include "paccs/ccs.hpp"
#include "paccs/errors.hpp"
#include "paccs/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace paccs {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

int sign(double x) { return (x > 0.0) - (x < 0.0); }

double median_of(std::vector<double> v) {
    if (v.empty()) return nan;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const char* to_string(Orientation o) noexcept { return o == Orientation::safe_high ? "safe_high" : "harm_high"; }

const char* to_string(Scenario s) noexcept {
    switch (s) {
        case Scenario::strong_safe: return "strong_safe";
        case Scenario::strong_harm: return "strong_harm";
        case Scenario::inverted: return "inverted";
        case Scenario::without_polarity: return "without_polarity";
        case Scenario::unclassified: return "unclassified";
    }
    return "unclassified";
}

Scenario parse_scenario(std::string_view text) {
    for (Scenario s : {Scenario::strong_safe, Scenario::strong_harm, Scenario::inverted, Scenario::without_polarity,
                       Scenario::unclassified}) {
        if (text == to_string(s)) return s;
    }
    throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

EsaResult empirical_separation_accuracy(std::span<const ScoreQuadruple> quads) {
    if (quads.empty()) throw DomainError("separation accuracy needs at least one score quadruple");
    std::size_t correct = 0;
    for (const auto& q : quads) {
        check_quadruple(q);
        if (belief_score(q.p_plus, q.p_minus) > 0.5) ++correct;
        if (!(belief_score(q.pbar_plus, q.pbar_minus) > 0.5)) ++correct;
    }
    EsaResult r;
    r.esa_raw = static_cast<double>(correct) / static_cast<double>(2 * quads.size());
    r.orientation = r.esa_raw >= 0.5 ? Orientation::safe_high : Orientation::harm_high;
    r.esa_oriented = std::max(r.esa_raw, 1.0 - r.esa_raw);
    return r;
}

double polar_consistency(const ScoreQuadruple& q) {
    check_quadruple(q);
    const double a = q.p_plus - q.pbar_minus;
    const double b = q.p_minus - q.pbar_plus;
    const int s = sign(q.p_plus - q.pbar_plus) * sign(q.pbar_minus - q.p_minus);
    return 0.5 * (a * a + b * b) * s;
}

double contradiction_index(const ScoreQuadruple& q) {
    check_quadruple(q);
    return q.p_plus * q.pbar_plus + q.p_minus * q.pbar_minus;
}

ScoreQuadruple median_quadruple(std::span<const ScoreQuadruple> quads) {
    if (quads.empty()) throw DomainError("median of an empty score set");
    auto column = [&](double ScoreQuadruple::*field) {
        std::vector<double> v;
        v.reserve(quads.size());
        for (const auto& q : quads) v.push_back(q.*field);
        return median_of(std::move(v));
    };
    return ScoreQuadruple{column(&ScoreQuadruple::p_plus), column(&ScoreQuadruple::p_minus),
                          column(&ScoreQuadruple::pbar_plus), column(&ScoreQuadruple::pbar_minus)};
}

Scenario classify_scenario(double esa_oriented, Orientation orientation, double pc, double ci,
                           const ScoreQuadruple& m, const Thresholds& t) {
    if (pc < 0.0) return Scenario::inverted;
    if (esa_oriented >= t.strong_esa) {
        return orientation == Orientation::safe_high ? Scenario::strong_safe : Scenario::strong_harm;
    }
    const bool safe_flat = std::max(m.p_plus, m.p_minus) <= t.polarity_floor;
    const bool harm_flat = std::max(m.pbar_plus, m.pbar_minus) <= t.polarity_floor;
    const auto in_band = [&](double x) { return x > t.low_band_lo && x < t.low_band_hi; };
    if (safe_flat || harm_flat || (in_band(pc) && in_band(ci))) return Scenario::without_polarity;
    return Scenario::unclassified;
}

Scenario classify_scenario(double esa_oriented, Orientation orientation, double pc, double ci,
                           std::span<const ScoreQuadruple> quads, const Thresholds& t) {
    return classify_scenario(esa_oriented, orientation, pc, ci, median_quadruple(quads), t);
}

const char* to_string(PcMode m) noexcept { return m == PcMode::signed_mean ? "signed" : "magnitude"; }

PcMode parse_pc_mode(std::string_view text) {
    if (text == "signed") return PcMode::signed_mean;
    if (text == "magnitude") return PcMode::magnitude;
    throw ConfigError("unknown pc mode '" + std::string(text) + "'");
}

MetricRecord compute_metrics(std::span<const ScoreQuadruple> quads, const Thresholds& t, PcMode pc_mode) {
    const EsaResult esa = empirical_separation_accuracy(quads);
    double pc = 0.0, ci = 0.0;
    for (const auto& q : quads) {
        const double v = polar_consistency(q);
        pc += pc_mode == PcMode::magnitude ? std::abs(v) : v;
        ci += contradiction_index(q);
    }
    const double n = static_cast<double>(quads.size());
    MetricRecord rec;
    rec.esa_raw = esa.esa_raw;
    rec.esa_oriented = esa.esa_oriented;
    rec.orientation = esa.orientation;
    rec.pc = pc / n;
    rec.ci = ci / n;
    rec.median_quad = median_quadruple(quads);
    rec.scenario = classify_scenario(rec.esa_oriented, rec.orientation, rec.pc, rec.ci, rec.median_quad, t);
    return rec;
}

// ---------------------------------------------------------------------------

const char* to_string(Metric m) noexcept {
    switch (m) {
        case Metric::esa: return "esa";
        case Metric::pc: return "pc";
        case Metric::ci: return "ci";
    }
    return "?";
}

Metric parse_metric(std::string_view text) {
    if (text == "esa") return Metric::esa;
    if (text == "pc") return Metric::pc;
    if (text == "ci") return Metric::ci;
    throw ConfigError("unknown metric '" + std::string(text) + "' (expected esa, pc or ci)");
}

double LayerPoint::get(Metric m) const noexcept {
    switch (m) {
        case Metric::esa: return esa;
        case Metric::pc: return pc;
        case Metric::ci: return ci;
    }
    return nan;
}

const MetricStats& GroupStats::get(Metric m) const noexcept {
    switch (m) {
        case Metric::esa: return esa;
        case Metric::pc: return pc;
        case Metric::ci: return ci;
    }
    return pc;
}

double GroupStats::fraction_included() const noexcept {
    return n_total == 0 ? 0.0 : static_cast<double>(n_included) / static_cast<double>(n_total);
}

const char* to_string(MadMode m) noexcept { return m == MadMode::mean_difference ? "mean_difference" : "paired"; }

MadMode parse_mad_mode(std::string_view text) {
    if (text == "mean_difference") return MadMode::mean_difference;
    if (text == "paired") return MadMode::paired;
    throw ConfigError("unknown MAD mode '" + std::string(text) + "'");
}

namespace {

MetricStats stats_of(const std::vector<double>& v) {
    MetricStats s;
    if (v.empty()) return MetricStats{nan, nan, nan};
    const double n = static_cast<double>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        s.ci95 = 1.96 * sd / std::sqrt(n);
    }
    s.median = median_of(v);
    return s;
}

constexpr Metric all_metrics[] = {Metric::esa, Metric::pc, Metric::ci};

}  // namespace

SummaryTable aggregate_layers(std::span<const NamedGroup> groups, std::optional<double> min_esa, MadMode mad_mode) {
    SummaryTable table;
    table.min_esa = min_esa;
    std::vector<std::vector<LayerPoint>> kept;
    for (const auto& g : groups) {
        std::vector<LayerPoint> included;
        for (const auto& l : g.layers) {
            if (!min_esa || l.esa >= *min_esa) included.push_back(l);
        }
        GroupStats gs;
        gs.name = g.name;
        gs.n_total = g.layers.size();
        gs.n_included = included.size();
        for (Metric m : all_metrics) {
            std::vector<double> v;
            for (const auto& l : included) v.push_back(l.get(m));
            const MetricStats st = stats_of(v);
            if (m == Metric::esa) gs.esa = st;
            else if (m == Metric::pc) gs.pc = st;
            else gs.ci = st;
        }
        table.groups.push_back(gs);
        kept.push_back(std::move(included));
    }
    for (std::size_t a = 0; a < groups.size(); ++a) {
        for (std::size_t b = a + 1; b < groups.size(); ++b) {
            for (Metric m : all_metrics) {
                MadEntry e{groups[a].name, groups[b].name, m, nan};
                if (mad_mode == MadMode::mean_difference) {
                    e.mad = std::abs(table.groups[a].get(m).mean - table.groups[b].get(m).mean);
                } else {
                    double s = 0.0;
                    std::size_t matched = 0;
                    for (const auto& la : kept[a]) {
                        for (const auto& lb : kept[b]) {
                            if (la.layer != lb.layer) continue;
                            s += std::abs(la.get(m) - lb.get(m));
                            ++matched;
                        }
                    }
                    if (matched > 0) e.mad = s / static_cast<double>(matched);
                }
                table.mad.push_back(e);
            }
        }
    }
    return table;
}

double mad_between(const SummaryTable& table, std::string_view a, std::string_view b, Metric m) {
    for (const auto& e : table.mad) {
        if (e.metric == m && ((e.group_a == a && e.group_b == b) || (e.group_a == b && e.group_b == a))) return e.mad;
    }
    throw ConfigError("no MAD entry for groups '" + std::string(a) + "' and '" + std::string(b) + "'");
}

// ---------------------------------------------------------------------------

GridPoint score_grid_point(const ScoreQuadruple& quad, const Thresholds& t) {
    GridPoint g;
    g.quad = quad;
    g.pc = polar_consistency(quad);
    g.ci = contradiction_index(quad);
    g.esa = empirical_separation_accuracy(std::span<const ScoreQuadruple>(&g.quad, 1));
    g.scenario = classify_scenario(g.esa.esa_oriented, g.esa.orientation, g.pc, g.ci, quad, t);
    return g;
}

std::vector<GridPoint> enumerate_score_grid(double step, const Thresholds& t) {
    if (!(step > 0.0 && step < 1.0)) throw ConfigError("grid step must lie in (0, 1)");
    const double inv = 1.0 / step;
    const auto n = static_cast<std::size_t>(std::llround(inv));
    if (n == 0 || std::abs(static_cast<double>(n) * step - 1.0) > 1e-12) {
        throw ConfigError("grid step " + io::format_double(step) + " does not divide 1");
    }
    const std::size_t side = n + 1;
    const double points = static_cast<double>(side) * side * side * side;
    if (points > static_cast<double>(max_grid_points)) {
        throw ConfigError("grid step " + io::format_double(step) + " yields " + io::format_double(points) +
                          " points (limit " + std::to_string(max_grid_points) + "); use a coarser step");
    }
    std::vector<double> values(side);
    for (std::size_t i = 0; i < side; ++i) values[i] = static_cast<double>(i) / static_cast<double>(n);

    std::vector<GridPoint> grid;
    grid.reserve(side * side * side * side);
    for (double a : values)
        for (double b : values)
            for (double c : values)
                for (double d : values) {
                    grid.push_back(score_grid_point(ScoreQuadruple{a, b, c, d}, t));
                }
    return grid;
}

std::string grid_to_csv(std::span<const GridPoint> grid) {
    std::string out = "p_plus,p_minus,pbar_plus,pbar_minus,pc,ci,esa_raw,esa_oriented,orientation,scenario\n";
    out.reserve(grid.size() * 80);
    for (const auto& g : grid) {
        for (double v : {g.quad.p_plus, g.quad.p_minus, g.quad.pbar_plus, g.quad.pbar_minus, g.pc, g.ci, g.esa.esa_raw,
                         g.esa.esa_oriented}) {
            out += io::format_double(v);
            out.push_back(',');
        }
        out += to_string(g.esa.orientation);
        out.push_back(',');
        out += to_string(g.scenario);
        out.push_back('\n');
    }
    return out;
}

std::string grid_to_json(std::span<const GridPoint> grid) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : grid) {
        arr.push_back({{"p_plus", g.quad.p_plus},
                       {"p_minus", g.quad.p_minus},
                       {"pbar_plus", g.quad.pbar_plus},
                       {"pbar_minus", g.quad.pbar_minus},
                       {"pc", g.pc},
                       {"ci", g.ci},
                       {"esa_raw", g.esa.esa_raw},
                       {"esa_oriented", g.esa.esa_oriented},
                       {"orientation", to_string(g.esa.orientation)},
                       {"scenario", to_string(g.scenario)}});
    }
    return arr.dump() + "\n";
}

}  // namespace paccs

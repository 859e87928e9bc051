#include "paccs/ccs.hpp"

#include "paccs/errors.hpp"
#include "paccs/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace paccs {

namespace fs = std::filesystem;

void check_quadruple(const ScoreQuadruple& q) {
    for (double p : {q.p_plus, q.p_minus, q.pbar_plus, q.pbar_minus}) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw DomainError("score " + io::format_double(p) + " is outside [0, 1]");
        }
    }
}

namespace {

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError(std::string(name) + " = " + io::format_double(p) + " is outside [0, 1]");
    }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double ccs_loss(double p_plus, double p_minus) {
    check_probability(p_plus, "p_plus");
    check_probability(p_minus, "p_minus");
    const double consistency = p_plus - (1.0 - p_minus);
    const double confidence = std::min(p_plus, p_minus);
    return consistency * consistency + confidence * confidence;
}

double belief_score(double p_plus, double p_minus) {
    check_probability(p_plus, "p_plus");
    check_probability(p_minus, "p_minus");
    return 0.5 * (p_plus + (1.0 - p_minus));
}

Probe negated(const Probe& probe) {
    Probe out = probe;
    out.theta = -probe.theta;
    out.bias = -probe.bias;
    return out;
}

void save_probe(const Probe& probe, const fs::path& json_path) {
    fs::path theta_path = json_path;
    theta_path.replace_extension(".f32");
    std::vector<float> theta(probe.theta.size());
    for (Eigen::Index i = 0; i < probe.theta.size(); ++i) theta[i] = static_cast<float>(probe.theta[i]);
    io::write_f32le(theta_path, theta);
    nlohmann::json m;
    m["seed"] = probe.seed;
    m["final_loss"] = probe.final_loss;
    m["bias"] = probe.bias;
    m["dim"] = probe.theta.size();
    m["theta_file"] = theta_path.filename().string();
    m["dtype"] = "f32le";
    io::write_file_atomic(json_path, m.dump(2) + "\n");
}

Probe load_probe(const fs::path& json_path) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(io::read_text_file(json_path));
        Probe p;
        p.seed = m.at("seed").get<std::int64_t>();
        p.final_loss = m.at("final_loss").get<double>();
        p.bias = m.at("bias").get<double>();
        const auto dim = m.at("dim").get<std::size_t>();
        const auto theta = io::read_f32le(json_path.parent_path() / m.at("theta_file").get<std::string>());
        if (theta.size() != dim) {
            throw IntegrityError(json_path.string() + ": theta holds " + std::to_string(theta.size()) +
                                 " values, manifest says " + std::to_string(dim));
        }
        p.theta.resize(static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < dim; ++i) p.theta[static_cast<Eigen::Index>(i)] = theta[i];
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(json_path.string() + ": " + e.what());
    }
}

const char* to_string(Aggregation a) noexcept {
    return a == Aggregation::average_metrics ? "average_metrics" : "best_loss";
}

const char* to_string(SignAnchor a) noexcept { return a == SignAnchor::labels ? "labels" : "first_run"; }

Aggregation parse_aggregation(std::string_view text) {
    if (text == "average_metrics") return Aggregation::average_metrics;
    if (text == "best_loss") return Aggregation::best_loss;
    throw ConfigError("unknown aggregation '" + std::string(text) + "'");
}

SignAnchor parse_sign_anchor(std::string_view text) {
    if (text == "labels") return SignAnchor::labels;
    if (text == "first_run") return SignAnchor::first_run;
    throw ConfigError("unknown sign anchor '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
    if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
    if (n_epochs < 1) throw ConfigError("n_epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (!(init_scale > 0.0) || !std::isfinite(init_scale)) throw ConfigError("init_scale must be positive");
    if (!(holdout >= 0.0 && holdout < 1.0)) throw ConfigError("holdout must lie in [0, 1)");
}

ContrastBatch make_batch(const LayerActivations& acts, std::span<const Eigen::Index> pairs) {
    const Eigen::Index d = acts.dim();
    std::vector<Eigen::Index> rows;
    if (pairs.empty()) {
        rows.resize(static_cast<std::size_t>(acts.n_pairs()));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    } else {
        rows.assign(pairs.begin(), pairs.end());
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    ContrastBatch batch{Eigen::MatrixXd(2 * n, d), Eigen::MatrixXd(2 * n, d)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index r = rows[static_cast<std::size_t>(i)];
        batch.yes.row(i) = acts[Variant::plus].row(r).cast<double>();
        batch.yes.row(n + i) = acts[Variant::bar_plus].row(r).cast<double>();
        batch.no.row(i) = acts[Variant::minus].row(r).cast<double>();
        batch.no.row(n + i) = acts[Variant::bar_minus].row(r).cast<double>();
    }
    return batch;
}

LossGradient ccs_objective(const ContrastBatch& batch, const Eigen::VectorXd& theta, double bias) {
    const Eigen::Index m = batch.yes.rows();
    const double inv_m = 1.0 / static_cast<double>(m);
    const Eigen::VectorXd zy = (batch.yes * theta).array() + bias;
    const Eigen::VectorXd zn = (batch.no * theta).array() + bias;

    Eigen::VectorXd gy(m), gn(m);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double py = sigmoid(zy[i]);
        const double pn = sigmoid(zn[i]);
        const double cons = py + pn - 1.0;
        const double conf = std::min(py, pn);
        loss += cons * cons + conf * conf;
        double dpy = 2.0 * cons;
        double dpn = 2.0 * cons;
        if (py <= pn) dpy += 2.0 * py;
        else dpn += 2.0 * pn;
        gy[i] = inv_m * dpy * py * (1.0 - py);
        gn[i] = inv_m * dpn * pn * (1.0 - pn);
    }
    LossGradient out;
    out.loss = loss * inv_m;
    out.d_theta = batch.yes.transpose() * gy + batch.no.transpose() * gn;
    out.d_bias = gy.sum() + gn.sum();
    return out;
}

Probe train_single_run(const ContrastBatch& batch, const TrainConfig& cfg, int run) {
    const Eigen::Index d = batch.yes.cols();
    if (d < 1) throw ConfigError("activations must have at least one dimension");
    if (batch.yes.rows() < 4) throw ConfigError("training needs at least 2 pairs");

    Probe probe;
    probe.seed = cfg.rng_seed + run;
    std::mt19937_64 gen(static_cast<std::uint64_t>(probe.seed));
    std::normal_distribution<double> init(0.0, cfg.init_scale / std::sqrt(static_cast<double>(d)));
    probe.theta.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) probe.theta[j] = init(gen);
    probe.bias = 0.0;

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    Eigen::VectorXd m_theta = Eigen::VectorXd::Zero(d), v_theta = Eigen::VectorXd::Zero(d);
    double m_bias = 0.0, v_bias = 0.0;
    double b1t = 1.0, b2t = 1.0;
    for (int epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
        const LossGradient lg = ccs_objective(batch, probe.theta, probe.bias);
        if (!std::isfinite(lg.loss) || !lg.d_theta.allFinite() || !std::isfinite(lg.d_bias)) {
            throw DivergenceError(run, epoch, "training diverged: non-finite loss in run " + std::to_string(run) +
                                                  " at epoch " + std::to_string(epoch));
        }
        b1t *= beta1;
        b2t *= beta2;
        m_theta = beta1 * m_theta + (1.0 - beta1) * lg.d_theta;
        v_theta = beta2 * v_theta + (1.0 - beta2) * lg.d_theta.cwiseAbs2();
        m_bias = beta1 * m_bias + (1.0 - beta1) * lg.d_bias;
        v_bias = beta2 * v_bias + (1.0 - beta2) * lg.d_bias * lg.d_bias;
        probe.theta.array() -= cfg.learning_rate * (m_theta.array() / (1.0 - b1t)) /
                               ((v_theta.array() / (1.0 - b2t)).sqrt() + eps);
        probe.bias -= cfg.learning_rate * (m_bias / (1.0 - b1t)) / (std::sqrt(v_bias / (1.0 - b2t)) + eps);
    }
    const double final_loss = ccs_objective(batch, probe.theta, probe.bias).loss;
    if (!std::isfinite(final_loss)) {
        throw DivergenceError(run, cfg.n_epochs, "training diverged: non-finite final loss in run " +
                                                     std::to_string(run));
    }
    probe.final_loss = final_loss;
    return probe;
}

std::vector<ScoreQuadruple> score_pairs(const LayerActivations& acts, const Probe& probe) {
    if (probe.theta.size() != acts.dim()) {
        throw ConfigError("probe dimension " + std::to_string(probe.theta.size()) + " does not match activations " +
                          std::to_string(acts.dim()));
    }
    std::array<Eigen::VectorXd, 4> z;
    for (Variant v : all_variants) {
        z[static_cast<int>(v)] = (acts[v].cast<double>() * probe.theta).array() + probe.bias;
    }
    auto p = [](double zi) { return std::clamp(sigmoid(zi), 0.0, 1.0); };
    std::vector<ScoreQuadruple> out(static_cast<std::size_t>(acts.n_pairs()));
    for (Eigen::Index i = 0; i < acts.n_pairs(); ++i) {
        out[static_cast<std::size_t>(i)] = ScoreQuadruple{p(z[0][i]), p(z[1][i]), p(z[2][i]), p(z[3][i])};
    }
    return out;
}

TrainResult train_probe(const LayerActivations& acts, const TrainConfig& cfg, std::span<const Eigen::Index> train_pairs) {
    cfg.validate();
    acts.validate();
    const auto n_train = train_pairs.empty() ? acts.n_pairs() : static_cast<Eigen::Index>(train_pairs.size());
    if (n_train < 2) throw ConfigError("training needs at least 2 pairs, got " + std::to_string(n_train));
    const ContrastBatch batch = make_batch(acts, train_pairs);
    TrainResult result;
    for (int r = 0; r < cfg.n_runs; ++r) {
        result.probes.push_back(train_single_run(batch, cfg, r));
        result.per_run_scores.push_back(score_pairs(acts, result.probes.back()));
    }
    return result;
}

RunAggregate aggregate_runs(std::span<const RunMetrics> runs, Aggregation mode) {
    if (runs.empty()) throw ConfigError("aggregate_runs needs at least one run");
    RunAggregate agg;
    agg.n_runs = static_cast<int>(runs.size());
    const double n = static_cast<double>(runs.size());
    auto mean_of = [&](auto field) {
        double s = 0.0;
        for (const auto& r : runs) s += r.*field;
        return s / n;
    };
    auto std_of = [&](auto field, double mean) {
        double s = 0.0;
        for (const auto& r : runs) s += (r.*field - mean) * (r.*field - mean);
        return std::sqrt(s / n);
    };
    const double esa_mean = mean_of(&RunMetrics::esa_raw);
    const double pc_mean = mean_of(&RunMetrics::pc);
    const double ci_mean = mean_of(&RunMetrics::ci);
    agg.esa_std = std_of(&RunMetrics::esa_raw, esa_mean);
    agg.pc_std = std_of(&RunMetrics::pc, pc_mean);
    agg.ci_std = std_of(&RunMetrics::ci, ci_mean);

    if (mode == Aggregation::average_metrics) {
        agg.esa_raw = esa_mean;
        agg.esa_oriented = std::max(esa_mean, 1.0 - esa_mean);
        agg.pc = pc_mean;
        agg.ci = ci_mean;
        return agg;
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].final_loss < runs[best].final_loss) best = r;
    }
    agg.selected_run = static_cast<int>(best);
    agg.esa_raw = runs[best].esa_raw;
    agg.esa_oriented = runs[best].esa_oriented;
    agg.pc = runs[best].pc;
    agg.ci = runs[best].ci;
    return agg;
}

}  // namespace paccs

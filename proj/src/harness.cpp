#include "paccs/harness.hpp"

#include "paccs/errors.hpp"
#include "paccs/io.hpp"
#include "paccs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>
#include <set>

namespace paccs {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Manifest

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void check_tag(const std::string& tag) {
    static const std::regex ok("[A-Za-z0-9._-]+");
    if (!std::regex_match(tag, ok)) {
        throw ConfigError("condition tag '" + tag + "' must be non-empty and use only [A-Za-z0-9._-]");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("manifest field '") + key + "' has the wrong type");
    }
}

}  // namespace

RunManifest RunManifest::from_json(const json& j, const fs::path& base_dir) {
    reject_unknown_keys(j, {"conditions", "train", "normalization", "thresholds", "pc_mode", "output_dir",
                            "save_probes", "save_scores"},
                        "manifest");
    RunManifest m;
    if (!j.contains("conditions") || !j["conditions"].is_array() || j["conditions"].empty()) {
        throw ConfigError("manifest needs a non-empty 'conditions' array");
    }
    std::set<std::string> tags;
    for (const auto& c : j["conditions"]) {
        reject_unknown_keys(c, {"tag", "archive", "dataset", "pair_type"}, "condition");
        ConditionSpec spec;
        spec.tag = get_or<std::string>(c, "tag", "");
        check_tag(spec.tag);
        if (!tags.insert(spec.tag).second) throw ConfigError("duplicate condition tag '" + spec.tag + "'");
        if (!c.contains("archive") || !c.contains("dataset")) {
            throw ConfigError("condition '" + spec.tag + "' needs 'archive' and 'dataset'");
        }
        spec.archive = resolve(base_dir, c["archive"].get<std::string>());
        spec.dataset = resolve(base_dir, c["dataset"].get<std::string>());
        spec.pair_type = parse_pair_type(get_or<std::string>(c, "pair_type", "mixed"));
        m.conditions.push_back(std::move(spec));
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown_keys(t, {"n_runs", "n_epochs", "learning_rate", "init_scale", "rng_seed", "aggregation",
                                "sign_anchor", "holdout"},
                            "train");
        m.train.n_runs = get_or(t, "n_runs", m.train.n_runs);
        m.train.n_epochs = get_or(t, "n_epochs", m.train.n_epochs);
        m.train.learning_rate = get_or(t, "learning_rate", m.train.learning_rate);
        m.train.init_scale = get_or(t, "init_scale", m.train.init_scale);
        m.train.rng_seed = get_or(t, "rng_seed", m.train.rng_seed);
        m.train.aggregation = parse_aggregation(get_or<std::string>(t, "aggregation", to_string(m.train.aggregation)));
        m.train.sign_anchor = parse_sign_anchor(get_or<std::string>(t, "sign_anchor", to_string(m.train.sign_anchor)));
        m.train.holdout = get_or(t, "holdout", m.train.holdout);
    }
    m.train.validate();
    if (j.contains("normalization")) {
        const json& n = j["normalization"];
        reject_unknown_keys(n, {"policy", "grouping"}, "normalization");
        m.normalization.scaling = parse_scaling(get_or<std::string>(n, "policy", to_string(m.normalization.scaling)));
        m.normalization.grouping =
            parse_grouping(get_or<std::string>(n, "grouping", to_string(m.normalization.grouping)));
    }
    if (j.contains("thresholds")) {
        const json& t = j["thresholds"];
        reject_unknown_keys(t, {"strong_esa", "min_esa", "low_band_lo", "low_band_hi", "polarity_floor"}, "thresholds");
        m.thresholds.strong_esa = get_or(t, "strong_esa", m.thresholds.strong_esa);
        m.thresholds.min_esa = get_or(t, "min_esa", m.thresholds.min_esa);
        m.thresholds.low_band_lo = get_or(t, "low_band_lo", m.thresholds.low_band_lo);
        m.thresholds.low_band_hi = get_or(t, "low_band_hi", m.thresholds.low_band_hi);
        m.thresholds.polarity_floor = get_or(t, "polarity_floor", m.thresholds.polarity_floor);
    }
    m.pc_mode = parse_pc_mode(get_or<std::string>(j, "pc_mode", to_string(m.pc_mode)));
    m.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "paccs-out"));
    m.save_probes = get_or(j, "save_probes", false);
    m.save_scores = get_or(j, "save_scores", false);
    return m;
}

RunManifest RunManifest::load(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
    json j;
    try {
        j = json::parse(io::read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

json RunManifest::to_json() const {
    json conds = json::array();
    for (const auto& c : conditions) {
        conds.push_back({{"tag", c.tag},
                         {"archive", c.archive.string()},
                         {"dataset", c.dataset.string()},
                         {"pair_type", to_string(c.pair_type)}});
    }
    return {{"conditions", conds},
            {"train",
             {{"n_runs", train.n_runs},
              {"n_epochs", train.n_epochs},
              {"learning_rate", train.learning_rate},
              {"init_scale", train.init_scale},
              {"rng_seed", train.rng_seed},
              {"aggregation", to_string(train.aggregation)},
              {"sign_anchor", to_string(train.sign_anchor)},
              {"holdout", train.holdout}}},
            {"normalization", {{"policy", to_string(normalization.scaling)}, {"grouping", to_string(normalization.grouping)}}},
            {"thresholds",
             {{"strong_esa", thresholds.strong_esa},
              {"min_esa", thresholds.min_esa},
              {"low_band_lo", thresholds.low_band_lo},
              {"low_band_hi", thresholds.low_band_hi},
              {"polarity_floor", thresholds.polarity_floor}}},
            {"pc_mode", to_string(pc_mode)},
            {"output_dir", output_dir.string()},
            {"save_probes", save_probes},
            {"save_scores", save_scores}};
}

void RunManifest::check_paths() const {
    for (const auto& c : conditions) {
        if (!fs::exists(c.archive)) throw IoError("condition '" + c.tag + "': archive not found: " + c.archive.string());
        if (!fs::exists(c.dataset)) throw IoError("condition '" + c.tag + "': dataset not found: " + c.dataset.string());
    }
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json quad_json(const ScoreQuadruple& q) {
    return {{"p_plus", q.p_plus}, {"p_minus", q.p_minus}, {"pbar_plus", q.pbar_plus}, {"pbar_minus", q.pbar_minus}};
}

ScoreQuadruple quad_from(const json& j) {
    return ScoreQuadruple{j.at("p_plus").get<double>(), j.at("p_minus").get<double>(), j.at("pbar_plus").get<double>(),
                          j.at("pbar_minus").get<double>()};
}

Orientation parse_orientation(const std::string& s) {
    if (s == "safe_high") return Orientation::safe_high;
    if (s == "harm_high") return Orientation::harm_high;
    throw IntegrityError("unknown orientation '" + s + "'");
}

}  // namespace

json LayerReport::to_json() const {
    json runs_json = json::array();
    for (const auto& r : runs) {
        runs_json.push_back({{"run", r.run},
                             {"seed", r.seed},
                             {"final_loss", r.final_loss},
                             {"flipped", r.flipped},
                             {"esa_raw", r.metrics.esa_raw},
                             {"esa_oriented", r.metrics.esa_oriented},
                             {"pc", r.metrics.pc},
                             {"ci", r.metrics.ci}});
    }
    return {{"condition", condition},
            {"dataset", dataset_name},
            {"layer", layer_index},
            {"n_eval_pairs", n_eval_pairs},
            {"esa_raw", metrics.esa_raw},
            {"esa_oriented", metrics.esa_oriented},
            {"orientation", to_string(metrics.orientation)},
            {"pc", metrics.pc},
            {"ci", metrics.ci},
            {"scenario", to_string(metrics.scenario)},
            {"median_quad", quad_json(metrics.median_quad)},
            {"n_runs", aggregate.n_runs},
            {"selected_run", aggregate.selected_run},
            {"esa_std", aggregate.esa_std},
            {"pc_std", aggregate.pc_std},
            {"ci_std", aggregate.ci_std},
            {"runs", runs_json}};
}

LayerReport LayerReport::from_json(const json& j) {
    try {
        LayerReport r;
        r.condition = j.at("condition").get<std::string>();
        r.dataset_name = j.at("dataset").get<std::string>();
        r.layer_index = j.at("layer").get<int>();
        r.n_eval_pairs = j.at("n_eval_pairs").get<std::size_t>();
        r.metrics.esa_raw = j.at("esa_raw").get<double>();
        r.metrics.esa_oriented = j.at("esa_oriented").get<double>();
        r.metrics.orientation = parse_orientation(j.at("orientation").get<std::string>());
        r.metrics.pc = j.at("pc").get<double>();
        r.metrics.ci = j.at("ci").get<double>();
        r.metrics.scenario = parse_scenario(j.at("scenario").get<std::string>());
        r.metrics.median_quad = quad_from(j.at("median_quad"));
        r.aggregate.n_runs = j.at("n_runs").get<int>();
        r.aggregate.selected_run = j.at("selected_run").get<int>();
        r.aggregate.esa_raw = r.metrics.esa_raw;
        r.aggregate.esa_oriented = r.metrics.esa_oriented;
        r.aggregate.pc = r.metrics.pc;
        r.aggregate.ci = r.metrics.ci;
        r.aggregate.esa_std = j.at("esa_std").get<double>();
        r.aggregate.pc_std = j.at("pc_std").get<double>();
        r.aggregate.ci_std = j.at("ci_std").get<double>();
        for (const auto& rj : j.at("runs")) {
            RunRecord rr;
            rr.run = rj.at("run").get<int>();
            rr.seed = rj.at("seed").get<std::int64_t>();
            rr.final_loss = rj.at("final_loss").get<double>();
            rr.flipped = rj.at("flipped").get<bool>();
            rr.metrics.esa_raw = rj.at("esa_raw").get<double>();
            rr.metrics.esa_oriented = rj.at("esa_oriented").get<double>();
            rr.metrics.pc = rj.at("pc").get<double>();
            rr.metrics.ci = rj.at("ci").get<double>();
            rr.metrics.final_loss = rr.final_loss;
            r.runs.push_back(rr);
        }
        if (static_cast<int>(r.runs.size()) != r.aggregate.n_runs) {
            throw IntegrityError("layer report lists " + std::to_string(r.runs.size()) + " runs but n_runs = " +
                                 std::to_string(r.aggregate.n_runs));
        }
        return r;
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("malformed layer report: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Evaluation

PairSplit split_pairs(int n_pairs, const TrainConfig& cfg) {
    PairSplit split;
    if (cfg.holdout <= 0.0) return split;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_pairs));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 gen(static_cast<std::uint64_t>(cfg.rng_seed));
    // Fisher-Yates, explicit draws
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(gen() % i);
        std::swap(order[i - 1], order[j]);
    }
    auto n_eval = static_cast<std::size_t>(std::llround(cfg.holdout * n_pairs));
    n_eval = std::max<std::size_t>(1, n_eval);
    if (static_cast<std::size_t>(n_pairs) < n_eval + 2) {
        throw ConfigError("holdout " + io::format_double(cfg.holdout) + " leaves fewer than 2 training pairs out of " +
                          std::to_string(n_pairs));
    }
    split.eval.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
    split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
    std::sort(split.eval.begin(), split.eval.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

namespace {

std::vector<ScoreQuadruple> select(const std::vector<ScoreQuadruple>& all, const std::vector<Eigen::Index>& rows) {
    if (rows.empty()) return all;
    std::vector<ScoreQuadruple> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(all[static_cast<std::size_t>(r)]);
    return out;
}

std::vector<double> beliefs(const std::vector<ScoreQuadruple>& quads) {
    std::vector<double> b;
    b.reserve(2 * quads.size());
    for (const auto& q : quads) {
        b.push_back(belief_score(q.p_plus, q.p_minus));
        b.push_back(belief_score(q.pbar_plus, q.pbar_minus));
    }
    return b;
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

LayerReport evaluate_layer(const LayerActivations& raw, const EvalSettings& s, const std::string& condition,
                           const std::string& dataset_name, std::vector<Probe>* probes_out) {
    s.train.validate();
    const LayerActivations acts = normalize_layer(raw, s.normalization);
    const PairSplit split = split_pairs(static_cast<int>(acts.n_pairs()), s.train);
    const ContrastBatch batch = make_batch(acts, split.train);
    if (batch.yes.rows() < 4) throw ConfigError("training needs at least 2 pairs");

    LayerReport report;
    report.condition = condition;
    report.dataset_name = dataset_name;
    report.layer_index = acts.layer_index;
    report.n_eval_pairs = split.eval.empty() ? static_cast<std::size_t>(acts.n_pairs()) : split.eval.size();

    std::vector<std::vector<ScoreQuadruple>> eval_scores;
    std::vector<RunMetrics> run_metrics;
    std::vector<double> reference_beliefs;
    for (int r = 0; r < s.train.n_runs; ++r) {
        Probe probe = train_single_run(batch, s.train, r);
        std::vector<ScoreQuadruple> scores = select(score_pairs(acts, probe), split.eval);

        bool flip = false;
        if (s.train.sign_anchor == SignAnchor::labels) {
            flip = empirical_separation_accuracy(scores).esa_raw < 0.5;
        } else if (r > 0) {
            flip = correlation(beliefs(scores), reference_beliefs) < 0.0;
        }
        if (flip) {
            const double loss = probe.final_loss;
            probe = negated(probe);
            probe.final_loss = loss;
            scores = select(score_pairs(acts, probe), split.eval);
        }
        if (r == 0) reference_beliefs = beliefs(scores);

        const MetricRecord m = compute_metrics(scores, s.thresholds, s.pc_mode);
        RunMetrics rm{m.esa_raw, m.esa_oriented, m.pc, m.ci, probe.final_loss};
        run_metrics.push_back(rm);
        report.runs.push_back(RunRecord{r, probe.seed, probe.final_loss, flip, rm});
        eval_scores.push_back(std::move(scores));
        if (probes_out) probes_out->push_back(std::move(probe));
    }

    report.aggregate = aggregate_runs(run_metrics, s.train.aggregation);
    if (s.train.aggregation == Aggregation::best_loss) {
        report.scores = eval_scores[static_cast<std::size_t>(report.aggregate.selected_run)];
    } else {
        report.scores.assign(eval_scores.front().size(), ScoreQuadruple{});
        const double inv = 1.0 / static_cast<double>(eval_scores.size());
        for (const auto& run : eval_scores) {
            for (std::size_t i = 0; i < run.size(); ++i) {
                report.scores[i].p_plus += run[i].p_plus * inv;
                report.scores[i].p_minus += run[i].p_minus * inv;
                report.scores[i].pbar_plus += run[i].pbar_plus * inv;
                report.scores[i].pbar_minus += run[i].pbar_minus * inv;
            }
        }
        for (auto& q : report.scores) {
            for (double* p : {&q.p_plus, &q.p_minus, &q.pbar_plus, &q.pbar_minus}) *p = std::clamp(*p, 0.0, 1.0);
        }
    }

    MetricRecord& m = report.metrics;
    m.esa_raw = report.aggregate.esa_raw;
    m.esa_oriented = report.aggregate.esa_oriented;
    m.orientation = m.esa_raw >= 0.5 ? Orientation::safe_high : Orientation::harm_high;
    m.pc = report.aggregate.pc;
    m.ci = report.aggregate.ci;
    m.median_quad = median_quadruple(report.scores);
    m.scenario = classify_scenario(m.esa_oriented, m.orientation, m.pc, m.ci, m.median_quad, s.thresholds);
    return report;
}

void check_fingerprint(const ArchiveInfo& info, const PairDataset& ds) {
    const std::string fp = dataset_fingerprint(ds);
    if (info.dataset_fingerprint != fp) {
        throw IntegrityError("dataset fingerprint mismatch: archive '" + info.model_id + "' was extracted from " +
                             info.dataset_fingerprint + ", dataset '" + ds.name() + "' hashes to " + fp);
    }
    if (static_cast<std::size_t>(info.n_pairs) != ds.n_pairs()) {
        throw IntegrityError("archive holds " + std::to_string(info.n_pairs) + " pairs, dataset has " +
                             std::to_string(ds.n_pairs()));
    }
}

std::vector<LayerReport> evaluate_archive(const RunManifest& manifest, int jobs) {
    manifest.check_paths();
    const EvalSettings settings{manifest.train, manifest.normalization, manifest.thresholds, manifest.pc_mode};

    struct Task {
        std::string condition;
        std::string dataset_name;
        const ActivationArchive* archive;
        int layer;
    };
    std::vector<std::vector<ArchivePart>> opened;
    std::vector<std::string> dataset_names;
    for (const auto& c : manifest.conditions) {
        const PairDataset ds = load_pair_dataset(c.dataset, format_from_path(c.dataset), c.pair_type);
        auto parts = read_archive_parts(c.archive, LoadMode::lazy);
        for (const auto& p : parts) check_fingerprint(p.archive.info(), ds);
        opened.push_back(std::move(parts));
        dataset_names.push_back(ds.name());
    }
    std::vector<Task> tasks;
    for (std::size_t ci = 0; ci < manifest.conditions.size(); ++ci) {
        for (const auto& part : opened[ci]) {
            const std::string tag = part.tag.empty() ? manifest.conditions[ci].tag
                                                     : manifest.conditions[ci].tag + "." + part.tag;
            for (int l = 0; l < part.archive.n_layers(); ++l) {
                tasks.push_back(Task{tag, dataset_names[ci], &part.archive, l});
            }
        }
    }

    std::vector<LayerReport> reports(tasks.size());
    std::vector<std::vector<Probe>> probes(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t i) {
        const Task& t = tasks[i];
        reports[i] = evaluate_layer(t.archive->layer(t.layer), settings, t.condition, t.dataset_name,
                                    manifest.save_probes ? &probes[i] : nullptr);
    });
    if (manifest.save_probes) {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            for (std::size_t r = 0; r < probes[i].size(); ++r) {
                save_probe(probes[i][r], manifest.output_dir / "reports" / tasks[i].condition / "probes" /
                                             ("layer" + std::to_string(tasks[i].layer) + "_run" + std::to_string(r) +
                                              ".json"));
            }
        }
    }
    return reports;
}

std::string summary_csv(const std::vector<LayerReport>& reports) {
    std::string out = std::string(summary_columns) + "\n";
    for (const auto& r : reports) {
        out += io::csv_escape(r.condition) + "," + std::to_string(r.layer_index) + "," +
               io::format_double(r.metrics.esa_raw) + "," + io::format_double(r.metrics.esa_oriented) + "," +
               to_string(r.metrics.orientation) + "," + io::format_double(r.metrics.pc) + "," +
               io::format_double(r.metrics.ci) + "," + to_string(r.metrics.scenario) + "," +
               std::to_string(r.aggregate.n_runs) + "," + io::format_double(r.aggregate.pc_std) + "," +
               io::format_double(r.aggregate.ci_std) + "\n";
    }
    return out;
}

void write_reports(const RunManifest& manifest, const std::vector<LayerReport>& reports) {
    const fs::path root = manifest.output_dir;
    for (const auto& r : reports) {
        const fs::path dir = root / "reports" / r.condition;
        io::write_file_atomic(dir / (std::to_string(r.layer_index) + ".json"), r.to_json().dump(2) + "\n");
        if (manifest.save_scores) {
            std::string csv = "pair,p_plus,p_minus,pbar_plus,pbar_minus,safe_belief,harm_belief,pc,ci\n";
            for (std::size_t i = 0; i < r.scores.size(); ++i) {
                const auto& q = r.scores[i];
                csv += std::to_string(i);
                for (double v : {q.p_plus, q.p_minus, q.pbar_plus, q.pbar_minus, belief_score(q.p_plus, q.p_minus),
                                 belief_score(q.pbar_plus, q.pbar_minus), polar_consistency(q),
                                 contradiction_index(q)}) {
                    csv += "," + io::format_double(v);
                }
                csv += "\n";
            }
            io::write_file_atomic(dir / (std::to_string(r.layer_index) + "_scores.csv"), csv);
        }
    }
    io::write_file_atomic(root / "summary.csv", summary_csv(reports));
}

std::vector<LayerReport> run_evaluation(const RunManifest& manifest, int jobs) {
    auto reports = evaluate_archive(manifest, jobs);
    write_reports(manifest, reports);
    return reports;
}

std::map<std::string, std::vector<LayerReport>> load_reports(const fs::path& output_dir) {
    const fs::path root = output_dir / "reports";
    if (!fs::is_directory(root)) throw IoError("no reports under " + root.string() + " (run evaluate first)");
    std::map<std::string, std::vector<LayerReport>> out;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    static const std::regex layer_file("[0-9]+\\.json");
    for (const auto& dir : dirs) {
        std::vector<LayerReport> layers;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || !std::regex_match(entry.path().filename().string(), layer_file)) continue;
            json j;
            try {
                j = json::parse(io::read_text_file(entry.path()));
            } catch (const json::parse_error& e) {
                throw IntegrityError(entry.path().string() + ": " + e.what());
            }
            layers.push_back(LayerReport::from_json(j));
        }
        std::sort(layers.begin(), layers.end(),
                  [](const LayerReport& a, const LayerReport& b) { return a.layer_index < b.layer_index; });
        out[dir.filename().string()] = std::move(layers);
    }
    return out;
}

ComparisonTable compare_conditions(const std::map<std::string, std::vector<LayerReport>>& reports_by_condition,
                                   Metric metric, std::optional<double> min_esa, MadMode mad_mode) {
    if (reports_by_condition.size() < 2) throw ConfigError("compare needs at least two conditions");
    std::vector<NamedGroup> groups;
    for (const auto& [name, reports] : reports_by_condition) {
        NamedGroup g;
        g.name = name;
        for (const auto& r : reports) {
            g.layers.push_back(LayerPoint{r.layer_index, r.metrics.esa_oriented, r.metrics.pc, r.metrics.ci});
        }
        groups.push_back(std::move(g));
    }
    ComparisonTable table;
    table.metric = metric;
    table.summary = aggregate_layers(groups, min_esa, mad_mode);
    return table;
}

std::string comparison_csv(const ComparisonTable& table) {
    auto num = [](double v) { return std::isnan(v) ? std::string() : io::format_double(v); };
    std::string out =
        "row,metric,condition_a,condition_b,n_layers,n_included,frac_included,mean,ci95,median,mad\n";
    const std::string metric = to_string(table.metric);
    for (const auto& g : table.summary.groups) {
        const MetricStats& st = g.get(table.metric);
        out += "condition," + metric + "," + io::csv_escape(g.name) + ",," + std::to_string(g.n_total) + "," +
               std::to_string(g.n_included) + "," + io::format_double(g.fraction_included()) + "," + num(st.mean) +
               "," + num(st.ci95) + "," + num(st.median) + ",\n";
    }
    for (const auto& e : table.summary.mad) {
        if (e.metric != table.metric) continue;
        out += "mad," + metric + "," + io::csv_escape(e.group_a) + "," + io::csv_escape(e.group_b) + ",,,,,,," +
               num(e.mad) + "\n";
    }
    return out;
}

}  // namespace paccs

// paccs: dataset tooling, synthetic archives, evaluation and the score grid.

#include "paccs/dataset.hpp"
#include "paccs/errors.hpp"
#include "paccs/harness.hpp"
#include "paccs/io.hpp"
#include "paccs/metrics.hpp"
#include "paccs/synth.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace paccs;

namespace {

constexpr std::int64_t default_seed = 0;

// Relative dataset paths that do not exist locally are looked up under
// $PACCS_DATA_DIR.
fs::path find_dataset(const fs::path& p) {
    if (p.is_absolute() || fs::exists(p)) return p;
    if (const char* dir = std::getenv("PACCS_DATA_DIR"); dir && *dir) {
        fs::path candidate = fs::path(dir) / p;
        if (fs::exists(candidate)) return candidate;
    }
    return p;
}

std::optional<RunManifest> maybe_manifest(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return RunManifest::load(path);
}

fs::path under(const std::optional<RunManifest>& m, const fs::path& manifest_path, const fs::path& p) {
    if (!m || p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

std::string one_line(std::string msg) {
    for (char& c : msg) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return msg;
}

std::string sanitize(const std::string& token) {
    std::string out;
    for (unsigned char c : token) out += std::isalnum(c) ? static_cast<char>(c) : '_';
    return out;
}

void print_stats(const PairDataset& ds, const std::string& token) {
    const DatasetStats st = dataset_stats(ds, token);
    std::cout << "dataset      " << ds.name() << "\n"
              << "pair_type    " << to_string(ds.pair_type()) << "\n"
              << "statements   " << st.n_total << "\n"
              << "pairs        " << st.n_pairs << "\n"
              << "token        " << token << "\n"
              << "frac_harm    " << io::format_double(st.frac_token_harm) << "\n"
              << "frac_safe    " << io::format_double(st.frac_token_safe) << "\n"
              << "fingerprint  " << dataset_fingerprint(ds) << "\n";
}

struct DataOpts {
    std::string in, format, token = "not", pair_type = "mixed", manifest;
};

int cmd_validate(const DataOpts& o) {
    if (o.in.empty()) {
        const auto m = maybe_manifest(o.manifest);
        if (!m) throw ConfigError("validate-data needs --in or --manifest");
        for (const auto& c : m->conditions) {
            const PairDataset ds = load_pair_dataset(c.dataset, format_from_path(c.dataset), c.pair_type);
            std::cout << "[" << c.tag << "]\n";
            print_stats(ds, o.token);
            for (const auto& part : read_archive_parts(c.archive, LoadMode::lazy)) check_fingerprint(part.archive.info(), ds);
            std::cout << "archive      " << c.archive.string() << " (fingerprint ok)\n";
        }
        return 0;
    }
    const fs::path in = find_dataset(o.in);
    const DatasetFormat fmt = o.format.empty() ? format_from_path(in)
                                               : (o.format == "csv" ? DatasetFormat::csv : DatasetFormat::jsonl);
    print_stats(load_pair_dataset(in, fmt, parse_pair_type(o.pair_type)), o.token);
    return 0;
}

struct PerturbOpts {
    std::string in, out, token = "not", manifest;
    std::vector<std::string> replace;
};

int cmd_perturb(const PerturbOpts& o) {
    const auto m = maybe_manifest(o.manifest);
    const fs::path in = find_dataset(under(m, o.manifest, o.in));
    const PairDataset ds = load_pair_dataset(in, format_from_path(in));
    const std::vector<std::string> tokens = o.replace.empty() ? default_control_tokens() : o.replace;
    if (tokens.size() > 1 && o.out.find("{replace}") == std::string::npos) {
        throw ConfigError("--out must contain '{replace}' when more than one replacement token is given");
    }
    for (const auto& tok : tokens) {
        std::string out = o.out;
        if (auto pos = out.find("{replace}"); pos != std::string::npos) out.replace(pos, 9, sanitize(tok));
        const fs::path out_path = under(m, o.manifest, out);
        const SubstitutionResult r = substitute_polarity_token(ds, o.token, tok);
        save_pair_dataset(r.dataset, out_path, format_from_path(out_path));
        std::cout << out_path.string() << ": replaced " << r.substitutions << " x '" << o.token << "' with '" << tok
                  << "'\n";
    }
    return 0;
}

struct SynthOpts {
    std::string scenario = "strong_safe", out, manifest;
    int d = 16, pairs = 64, layers = 1;
    double signal = 5.0, noise = 0.1, offset = 0.5;
    std::optional<std::int64_t> seed;
};

int cmd_synth(const SynthOpts& o) {
    const auto m = maybe_manifest(o.manifest);
    SynthConfig cfg;
    cfg.d = o.d;
    cfg.n_pairs = o.pairs;
    cfg.scenario = parse_scenario(o.scenario);
    cfg.signal_strength = o.signal;
    cfg.noise_sigma = o.noise;
    cfg.polarity_offset = o.offset;
    cfg.rng_seed = o.seed ? *o.seed : (m ? m->train.rng_seed : default_seed);
    if (o.layers < 1) throw ConfigError("--layers must be at least 1");
    const fs::path out = under(m, o.manifest, o.out);
    write_activation_archive(generate_synthetic_archive(cfg, o.layers), out);
    save_pair_dataset(synthetic_dataset(cfg.n_pairs), out / "dataset.jsonl", DatasetFormat::jsonl);
    std::cout << out.string() << ": " << o.layers << " layer(s), " << cfg.n_pairs << " pairs, d=" << cfg.d
              << ", scenario " << to_string(cfg.scenario) << ", seed " << cfg.rng_seed << "\n";
    return 0;
}

struct EvalOpts {
    std::string manifest, out, aggregation, sign_anchor;
    int jobs = 1;
    std::optional<std::int64_t> seed;
    std::optional<int> runs, epochs;
    std::optional<double> holdout;
};

int cmd_evaluate(const EvalOpts& o) {
    RunManifest m = RunManifest::load(o.manifest);
    if (o.seed) m.train.rng_seed = *o.seed;
    if (o.runs) m.train.n_runs = *o.runs;
    if (o.epochs) m.train.n_epochs = *o.epochs;
    if (o.holdout) m.train.holdout = *o.holdout;
    if (!o.aggregation.empty()) m.train.aggregation = parse_aggregation(o.aggregation);
    if (!o.sign_anchor.empty()) m.train.sign_anchor = parse_sign_anchor(o.sign_anchor);
    if (!o.out.empty()) m.output_dir = o.out;
    m.train.validate();
    if (o.jobs < 1) throw ConfigError("--jobs must be at least 1");
    const auto reports = run_evaluation(m, o.jobs);
    std::cout << summary_csv(reports);
    std::cerr << "wrote " << reports.size() << " layer report(s) to " << m.output_dir.string() << "\n";
    return 0;
}

struct CompareOpts {
    std::string manifest, metric = "pc", mad = "mean_difference", out;
    std::optional<double> min_esa;
    bool no_filter = false;
};

int cmd_compare(const CompareOpts& o) {
    const RunManifest m = RunManifest::load(o.manifest);
    std::optional<double> min_esa = o.min_esa ? o.min_esa : std::optional<double>(m.thresholds.min_esa);
    if (o.no_filter) min_esa.reset();
    const Metric metric = parse_metric(o.metric);
    const auto table = compare_conditions(load_reports(m.output_dir), metric, min_esa, parse_mad_mode(o.mad));
    const std::string csv = comparison_csv(table);
    const fs::path out = o.out.empty() ? m.output_dir / ("compare_" + o.metric + ".csv") : fs::path(o.out);
    io::write_file_atomic(out, csv);
    std::cout << csv;
    return 0;
}

struct GridOpts {
    double step = 0.1;
    std::string out, format, manifest;
};

int cmd_grid(const GridOpts& o) {
    const auto m = maybe_manifest(o.manifest);
    const Thresholds t = m ? m->thresholds : Thresholds{};
    const auto grid = enumerate_score_grid(o.step, t);
    std::string fmt = o.format;
    if (fmt.empty()) fmt = fs::path(o.out).extension() == ".json" ? "json" : "csv";
    if (fmt != "csv" && fmt != "json") throw ConfigError("--format must be csv or json");
    io::write_file_atomic(under(m, o.manifest, o.out), fmt == "csv" ? grid_to_csv(grid) : grid_to_json(grid));
    std::cout << o.out << ": " << grid.size() << " quadruples\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paccs: polarity-aware probing of contrast-consistent belief directions"};
    app.require_subcommand(1);

    DataOpts vopt;
    auto* validate = app.add_subcommand("validate-data", "Check a pair dataset and print its token statistics");
    validate->add_option("--in", vopt.in, "dataset file (.jsonl or .csv)");
    validate->add_option("--format", vopt.format, "jsonl|csv (default: from extension)")
        ->check(CLI::IsMember({"jsonl", "csv"}));
    validate->add_option("--token", vopt.token, "token counted per polarity")->capture_default_str();
    validate->add_option("--pair-type", vopt.pair_type, "antagonistic|concurrent|mixed")->capture_default_str();
    validate->add_option("--manifest", vopt.manifest, "validate every condition of a run manifest");

    PerturbOpts popt;
    auto* perturb = app.add_subcommand("perturb", "Replace a polarity token with control tokens");
    perturb->add_option("--in", popt.in, "source dataset")->required();
    perturb->add_option("--token", popt.token, "whole word to replace")->capture_default_str();
    perturb->add_option("--replace", popt.replace, "replacement token (repeatable; default ttt eps moo urm 432 /////)");
    perturb->add_option("--out", popt.out, "output file; '{replace}' expands to the token")->required();
    perturb->add_option("--manifest", popt.manifest, "resolve relative paths against this manifest");

    SynthOpts sopt;
    auto* synth = app.add_subcommand("synth", "Write a synthetic activation archive");
    synth->add_option("--scenario", sopt.scenario, "strong_safe|strong_harm|inverted|without_polarity")
        ->capture_default_str();
    synth->add_option("--d", sopt.d, "hidden dimension")->capture_default_str();
    synth->add_option("--pairs", sopt.pairs, "number of pairs")->capture_default_str();
    synth->add_option("--signal", sopt.signal, "planted signal strength")->capture_default_str();
    synth->add_option("--noise", sopt.noise, "Gaussian noise sigma")->capture_default_str();
    synth->add_option("--offset", sopt.offset, "polarity offset (inverted)")->capture_default_str();
    synth->add_option("--layers", sopt.layers, "number of layers")->capture_default_str();
    synth->add_option("--seed", sopt.seed, "RNG seed (default 0)");
    synth->add_option("--out", sopt.out, "archive directory")->required();
    synth->add_option("--manifest", sopt.manifest, "take the default seed from a run manifest");

    EvalOpts eopt;
    auto* evaluate = app.add_subcommand("evaluate", "Train probes on every layer and write reports");
    evaluate->add_option("--manifest", eopt.manifest, "run manifest")->required();
    evaluate->add_option("--jobs", eopt.jobs, "worker threads")->capture_default_str();
    evaluate->add_option("--seed", eopt.seed, "override train.rng_seed");
    evaluate->add_option("--runs", eopt.runs, "override train.n_runs");
    evaluate->add_option("--epochs", eopt.epochs, "override train.n_epochs");
    evaluate->add_option("--holdout", eopt.holdout, "override train.holdout");
    evaluate->add_option("--aggregation", eopt.aggregation, "average_metrics|best_loss");
    evaluate->add_option("--sign-anchor", eopt.sign_anchor, "labels|first_run");
    evaluate->add_option("--out", eopt.out, "override output_dir");

    CompareOpts copt;
    auto* compare = app.add_subcommand("compare", "Compare conditions from existing reports");
    compare->add_option("--manifest", copt.manifest, "run manifest")->required();
    compare->add_option("--metric", copt.metric, "esa|pc|ci")->capture_default_str();
    compare->add_option("--min-esa", copt.min_esa, "layer filter (default thresholds.min_esa)");
    compare->add_flag("--no-filter", copt.no_filter, "keep every layer");
    compare->add_option("--mad", copt.mad, "mean_difference|paired")->capture_default_str();
    compare->add_option("--out", copt.out, "CSV path (default <output_dir>/compare_<metric>.csv)");

    GridOpts gopt;
    auto* grid = app.add_subcommand("grid", "Enumerate the metric landscape over a score grid");
    grid->add_option("--step", gopt.step, "grid step; must divide 1")->capture_default_str();
    grid->add_option("--out", gopt.out, "output file")->required();
    grid->add_option("--format", gopt.format, "csv|json (default: from extension)");
    grid->add_option("--manifest", gopt.manifest, "take thresholds from a run manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Error& e) {
        std::cerr << "paccs: error[usage]: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*validate) return cmd_validate(vopt);
        if (*perturb) return cmd_perturb(popt);
        if (*synth) return cmd_synth(sopt);
        if (*evaluate) return cmd_evaluate(eopt);
        if (*compare) return cmd_compare(copt);
        if (*grid) return cmd_grid(gopt);
    } catch (const Error& e) {
        std::cerr << "paccs: error[" << to_string(e.kind()) << "]: " << one_line(e.what()) << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "paccs: error[internal]: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 2;
}

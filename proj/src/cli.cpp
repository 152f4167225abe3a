#include "efc/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <functional>
#include <ostream>

#include "efc/analysis.hpp"
#include "efc/complexity.hpp"
#include "efc/csv.hpp"
#include "efc/error.hpp"
#include "efc/imputation.hpp"
#include "efc/panel.hpp"
#include "efc/progression.hpp"
#include "efc/synthetic.hpp"
#include "efc/taxonomy.hpp"

#ifndef EFC_DATA_DIR
#define EFC_DATA_DIR "data"
#endif

namespace efc {

std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& config_path) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open config file " + config_path);
    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    std::vector<std::string> out = args;
    std::string line;
    for (std::size_t number = 1; std::getline(in, line); ++number) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string text = csv::trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::Config, config_path + ":" + std::to_string(number) + ": expected 'key = value'");
        std::string key = csv::trim(text.substr(0, eq));
        const std::string value = csv::trim(text.substr(eq + 1));
        if (key.empty() || key == "config")
            throw Error(ErrorKind::Config, config_path + ":" + std::to_string(number) + ": invalid key");
        std::replace(key.begin(), key.end(), '_', '-');
        const std::string flag = "--" + key;
        if (!given(flag)) out.push_back(flag + "=" + value);
    }
    return out;
}

namespace {

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + path);
    body(f);
    f.close();
    if (!f) throw Error(ErrorKind::Io, "failed writing " + path);
}

std::string data_file(const std::string& name) { return std::string(EFC_DATA_DIR) + "/" + name; }

std::optional<SmoothingConfig> smoothing_from(double half_life) {
    if (half_life == 0.0) return std::nullopt;
    SmoothingConfig s{half_life};
    s.validate();
    return s;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t pos; (pos = text.find(',', start)) != std::string::npos; start = pos + 1)
        out.push_back(csv::trim(text.substr(start, pos - start)));
    out.push_back(csv::trim(text.substr(start)));
    out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
    return out;
}

struct Common {
    unsigned jobs = 1;
    std::string config;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--jobs", c.jobs, "Worker threads; results do not depend on it")->check(CLI::Range(1u, 256u));
    cmd->add_option("--config", c.config, "File of 'key = value' lines; command-line flags win");
}

struct TaxonomyArgs {
    std::string taxonomy, panel, format = "long", report;
    double tol = kDefaultConsistencyTol;
};

int cmd_validate_taxonomy(const TaxonomyArgs& a, std::ostream& out) {
    const TaxonomyTree tree = parse_taxonomy(a.taxonomy);
    out << "taxonomy: " << tree.size() << " nodes, " << tree.complete_set().size() << " complete-set codes, depth "
        << tree.depth() << "\n";
    if (a.panel.empty()) return kExitOk;
    const ExportPanel panel = load_panel(a.panel, parse_panel_format(a.format));
    const ConsistencyReport report = check_sum_consistency(tree, panel, a.tol);
    if (a.report.empty())
        write_consistency_report(out, report);
    else
        write_file(a.report, [&](std::ostream& f) { write_consistency_report(f, report); });
    out << "consistency: " << report.count(Verdict::Pass) << " pass, " << report.count(Verdict::Fail) << " fail, "
        << report.count(Verdict::Skipped) << " skipped\n";
    return report.ok() ? kExitOk : kExitFailure;
}

struct ImputeArgs {
    std::string services, goods, taxonomy = data_file("bop_alternative_taxonomy.csv"), format = "long", out, residuals;
    std::string method = "knn", weighting = "inverse", features;
    std::size_t k = 5, trees = 100, min_leaf = 5;
    bool log_features = true;
    std::optional<std::uint64_t> seed;
};

ImputerConfig imputer_config(const ImputeArgs& a, unsigned jobs) {
    ImputerConfig cfg;
    cfg.method = parse_impute_method(a.method);
    cfg.k = a.k;
    cfg.weighting = parse_knn_weighting(a.weighting);
    cfg.log_features = a.log_features;
    cfg.feature_codes = split_list(a.features);
    cfg.trees = a.trees;
    cfg.min_leaf = a.min_leaf;
    cfg.seed = a.seed.value_or(0);
    cfg.jobs = jobs;
    cfg.validate();
    return cfg;
}

int cmd_impute(const ImputeArgs& a, const Common& common, std::ostream& out) {
    ImputerConfig cfg = imputer_config(a, common.jobs);
    if (cfg.method == ImputeMethod::Forest && !a.seed)
        throw Error(ErrorKind::Config, "--seed is required for the forest method");
    const TaxonomyTree tree = parse_taxonomy(a.taxonomy);
    const PanelFormat format = parse_panel_format(a.format);
    const ExportPanel services = load_panel(a.services, format);
    const ImputationResult result = impute(services, tree, cfg);

    ExportPanel output = result.panel;
    if (!a.goods.empty())
        output = merge_universal(load_panel(a.goods, format), select_activities(result.panel, tree.complete_set()));
    save_panel(a.out, output, format);
    if (!a.residuals.empty()) write_file(a.residuals, [&](std::ostream& f) { write_residuals(f, result.residuals); });

    out << "method: " << cfg.label() << "\n";
    out << "missing before: " << services.count_missing() << "\n";
    out << "imputed: " << result.imputed << "\n";
    out << "left missing: " << result.residuals.size() << "\n";
    out << "output: " << output.n_countries() << " countries x " << output.n_activities() << " activities x "
        << output.n_years() << " years, " << output.count_missing() << " missing\n";
    for (const auto& f : result.flags) out << "note: " << f << "\n";
    return kExitOk;
}

struct MetricsArgs {
    std::string panel, format = "long", variant = "intensive", fitness_out, complexity_out;
    double half_life = 3.0, threshold = 1.0, tol = 1e-10;
    std::size_t max_iter = 1000;
};

int cmd_metrics(const MetricsArgs& a, const Common& common, std::ostream& out) {
    MetricsConfig cfg;
    cfg.variant = parse_fitness_variant(a.variant);
    cfg.smoothing = smoothing_from(a.half_life);
    cfg.threshold = a.threshold;
    cfg.fit.tol = a.tol;
    cfg.fit.max_iter = a.max_iter;
    cfg.jobs = common.jobs;
    const ExportPanel panel = load_panel(a.panel, parse_panel_format(a.format));
    const auto results = fitness_series(panel, cfg);

    if (!a.fitness_out.empty())
        write_file(a.fitness_out, [&](std::ostream& f) { write_fitness_table(f, results, RankedEntity::Country); });
    if (!a.complexity_out.empty())
        write_file(a.complexity_out, [&](std::ostream& f) { write_fitness_table(f, results, RankedEntity::Activity); });
    if (a.fitness_out.empty() && a.complexity_out.empty()) write_fitness_table(out, results, RankedEntity::Country);

    std::size_t unconverged = 0;
    for (const auto& r : results) {
        if (!r.converged) {
            ++unconverged;
            out << "note: year " << r.year << " stopped after " << r.iterations << " iterations (residual "
                << csv::format_number(r.residual) << ")\n";
        }
        if (!r.dropped_countries.empty() || !r.dropped_activities.empty())
            out << "note: year " << r.year << " dropped " << r.dropped_countries.size() << " countries and "
                << r.dropped_activities.size() << " activities with no competitive export\n";
    }
    out << "years: " << results.size() << ", converged: " << results.size() - unconverged << "\n";
    return kExitOk;
}

struct NetworkArgs {
    std::string panel, format = "long", edges, nodes, taxonomy;
    int delta_max = 10;
    std::size_t ensemble = 1000;
    double percentile = 95.0, half_life = 3.0, threshold = 1.0;
    bool global_threshold = false;
    std::optional<std::uint64_t> seed;
};

int cmd_network(const NetworkArgs& a, const Common& common, std::ostream& out) {
    if (!a.seed) throw Error(ErrorKind::Config, "--seed is required");
    ValidationOptions opts;
    opts.ensemble = a.ensemble;
    opts.percentile = a.percentile;
    opts.global_threshold = a.global_threshold;
    opts.seed = *a.seed;
    opts.jobs = common.jobs;
    opts.validate();
    if (a.delta_max < 0) throw Error(ErrorKind::Config, "--delta-max must be non-negative");
    std::optional<TaxonomyTree> tree;
    if (!a.taxonomy.empty()) tree = parse_taxonomy(a.taxonomy);

    const ExportPanel panel = load_panel(a.panel, parse_panel_format(a.format));
    const auto yearly = binary_matrices(panel, smoothing_from(a.half_life), a.threshold);
    const ProgressionNetwork net = progression_network(yearly, a.delta_max, opts);

    if (a.edges.empty())
        write_edges(out, net);
    else
        write_file(a.edges, [&](std::ostream& f) { write_edges(f, net); });
    if (!a.nodes.empty())
        write_file(a.nodes, [&](std::ostream& f) { write_nodes(f, net.activities, tree ? &*tree : nullptr); });
    out << "edges: " << net.edges.size() << " over " << net.activities.size() << " activities, years " << net.first_year
        << "-" << net.last_year << ", lags 0-" << net.delta_max << "\n";
    return kExitOk;
}

struct CorrelateArgs {
    std::string fitness, fitness_variant, gdp, gdp_indicator, lags = "0:20", mode = "pooled", out;
    std::size_t bootstrap = 0;
    std::optional<std::uint64_t> seed;
};

int cmd_correlate(const CorrelateArgs& a, const Common& common, std::ostream& out) {
    const auto lags = parse_lags(a.lags);
    const CorrelationMode mode = parse_correlation_mode(a.mode);
    if (a.bootstrap > 0 && !a.seed) throw Error(ErrorKind::Config, "--seed is required with --bootstrap");
    const IndicatorSeries x = load_indicator(a.fitness, a.fitness_variant);
    const IndicatorSeries y = load_indicator(a.gdp, a.gdp_indicator);

    std::vector<BandRow> rows;
    if (a.bootstrap > 0) {
        BandOptions opts;
        opts.replicas = a.bootstrap;
        opts.seed = *a.seed;
        opts.jobs = common.jobs;
        opts.mode = mode;
        rows = bootstrap_band(x, y, lags, opts);
    } else {
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        for (auto& p : lagged_correlation(x, y, lags, mode)) rows.push_back({std::move(p), nan, nan});
    }
    if (a.out.empty())
        write_correlations(out, rows, mode);
    else
        write_file(a.out, [&](std::ostream& f) { write_correlations(f, rows, mode); });
    for (const auto& r : rows) {
        if (r.point.skipped) out << "note: lag " << r.point.lag << " skipped (fewer than 3 usable pairs)\n";
        if (!r.point.excluded.empty())
            out << "note: lag " << r.point.lag << " excluded " << r.point.excluded.size()
                << " countries with constant segments\n";
    }
    return kExitOk;
}

struct MaeArgs {
    std::string panel, format = "long", taxonomy = data_file("bop_alternative_taxonomy.csv"), methods = "interpolate,knn";
    std::string out, summary;
    std::size_t replicas = 100, k = 5, trees = 100, min_leaf = 5;
    double fraction = kDefaultMaskFraction;
    std::optional<std::uint64_t> seed;
};

int cmd_mae(const MaeArgs& a, const Common& common, std::ostream& out) {
    if (!a.seed) throw Error(ErrorKind::Config, "--seed is required");
    std::vector<ImputerConfig> methods;
    for (const auto& name : split_list(a.methods)) {
        ImputerConfig cfg;
        cfg.method = parse_impute_method(name);
        cfg.k = a.k;
        cfg.trees = a.trees;
        cfg.min_leaf = a.min_leaf;
        cfg.seed = *a.seed;
        cfg.validate();
        methods.push_back(cfg);
    }
    const TaxonomyTree tree = parse_taxonomy(a.taxonomy);
    const ExportPanel panel = load_panel(a.panel, parse_panel_format(a.format));
    const MaeReport report = evaluate_mae(panel, tree, methods, a.replicas, a.fraction, *a.seed, common.jobs);
    if (!a.out.empty()) write_file(a.out, [&](std::ostream& f) { write_mae_rows(f, report); });
    if (a.summary.empty())
        write_mae_aggregates(out, report);
    else
        write_file(a.summary, [&](std::ostream& f) { write_mae_aggregates(f, report); });
    return kExitOk;
}

struct SynthArgs {
    std::string out_dir, taxonomy = data_file("bop_alternative_taxonomy.csv"), goods_codes = data_file("hs2_goods.csv");
    std::size_t countries = 160;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    if (!a.seed) throw Error(ErrorKind::Config, "--seed is required");
    SyntheticConfig cfg;
    cfg.countries = a.countries;
    cfg.seed = *a.seed;
    const TaxonomyTree tree = parse_taxonomy(a.taxonomy);
    const SyntheticWorld world = make_synthetic_world(tree, load_goods_codes(a.goods_codes), cfg);
    write_synthetic_world(world, a.out_dir);
    out << "services: " << world.services.n_countries() << " x " << world.services.n_activities() << " x "
        << world.services.n_years() << ", " << world.services.count_missing() << " missing\n";
    out << "goods: " << world.goods.n_countries() << " x " << world.goods.n_activities() << " x " << world.goods.n_years()
        << "\n";
    return kExitOk;
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return std::nullopt;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args = raw;
    try {
        if (auto path = config_path(args)) args = merge_config(args, *path);
    } catch (const Error& e) {
        err << "efc: " << e.what() << "\n";
        return exit_code_for(e.kind());
    }

    CLI::App app{"Export panel reconstruction and economic fitness toolkit", "efc"};
    app.require_subcommand(1);
    app.fallthrough(false);
    Common common;

    TaxonomyArgs tx;
    auto* validate = app.add_subcommand("validate-taxonomy", "Check a taxonomy and the sum consistency of a panel");
    validate->add_option("--taxonomy", tx.taxonomy, "Taxonomy CSV")->required();
    validate->add_option("--panel", tx.panel, "Panel to check against the taxonomy");
    validate->add_option("--format", tx.format, "Panel format: long or matrix");
    validate->add_option("--tol", tx.tol, "Relative tolerance of parent = sum of children");
    validate->add_option("--report", tx.report, "Consistency report CSV (default: standard output)");
    add_common(validate, common);

    ImputeArgs im;
    auto* impute_cmd = app.add_subcommand("impute", "Reconstruct missing service cells and build the universal panel");
    impute_cmd->add_option("--services", im.services, "Services panel")->required();
    impute_cmd->add_option("--goods", im.goods, "Goods panel to merge with the reconstructed services");
    impute_cmd->add_option("--taxonomy", im.taxonomy, "Services taxonomy CSV");
    impute_cmd->add_option("--format", im.format, "Panel format: long or matrix");
    impute_cmd->add_option("--out", im.out, "Output panel")->required();
    impute_cmd->add_option("--residuals", im.residuals, "CSV of cells left MISSING");
    impute_cmd->add_option("--method", im.method, "knn, forest or interpolate");
    impute_cmd->add_option("--k", im.k, "Neighbours for knn");
    impute_cmd->add_option("--weighting", im.weighting, "knn weights: inverse or uniform");
    impute_cmd->add_option("--features", im.features, "Comma-separated feature codes for knn");
    impute_cmd->add_flag("--log-features,!--no-log-features", im.log_features, "log1p-transform knn features");
    impute_cmd->add_option("--trees", im.trees, "Trees per forest");
    impute_cmd->add_option("--min-leaf", im.min_leaf, "Minimum rows per forest leaf");
    impute_cmd->add_option("--seed", im.seed, "Master seed (required for forest)");
    add_common(impute_cmd, common);

    MetricsArgs mx;
    auto* metrics = app.add_subcommand("metrics", "Yearly fitness and complexity");
    metrics->add_option("--panel", mx.panel, "Export panel")->required();
    metrics->add_option("--format", mx.format, "Panel format: long or matrix");
    metrics->add_option("--variant", mx.variant, "intensive (binary RCA) or extensive (market share)");
    metrics->add_option("--half-life", mx.half_life, "Smoothing half-life in years, 0 disables");
    metrics->add_option("--threshold", mx.threshold, "RCA threshold of the binary matrix");
    metrics->add_option("--tol", mx.tol, "Stop when the max relative change falls below this");
    metrics->add_option("--max-iter", mx.max_iter, "Iteration cap");
    metrics->add_option("--fitness-out", mx.fitness_out, "Fitness CSV");
    metrics->add_option("--complexity-out", mx.complexity_out, "Complexity CSV");
    add_common(metrics, common);

    NetworkArgs nx;
    auto* network = app.add_subcommand("network", "Validated activity progression network");
    network->add_option("--panel", nx.panel, "Export panel")->required();
    network->add_option("--format", nx.format, "Panel format: long or matrix");
    network->add_option("--delta-max", nx.delta_max, "Largest lag in years");
    network->add_option("--ensemble", nx.ensemble, "Null matrices per year pair");
    network->add_option("--percentile", nx.percentile, "Null percentile a link must exceed");
    network->add_flag("--global-threshold", nx.global_threshold, "One threshold pooled over all links");
    network->add_option("--half-life", nx.half_life, "Smoothing half-life in years, 0 disables");
    network->add_option("--threshold", nx.threshold, "RCA threshold of the binary matrix");
    network->add_option("--seed", nx.seed, "Master seed");
    network->add_option("--edges", nx.edges, "Edge list CSV (default: standard output)");
    network->add_option("--nodes", nx.nodes, "Node attribute CSV");
    network->add_option("--taxonomy", nx.taxonomy, "Services taxonomy used to label nodes");
    add_common(network, common);

    CorrelateArgs cx;
    auto* correlate = app.add_subcommand("correlate", "Lagged correlation of fitness with GDP");
    correlate->add_option("--fitness", cx.fitness, "Fitness table or long panel")->required();
    correlate->add_option("--fitness-variant", cx.fitness_variant, "Variant (or activity) to read from --fitness");
    correlate->add_option("--gdp", cx.gdp, "GDP in long format")->required();
    correlate->add_option("--gdp-indicator", cx.gdp_indicator, "Activity name of the GDP rows");
    correlate->add_option("--lags", cx.lags, "Lags: 'a:b', 'a:b:step' or 'a,b,c'");
    correlate->add_option("--bootstrap", cx.bootstrap, "Bootstrap replicas for the band, 0 for none");
    correlate->add_option("--mode", cx.mode, "pooled or per-country");
    correlate->add_option("--seed", cx.seed, "Master seed (required with --bootstrap)");
    correlate->add_option("--out", cx.out, "Output CSV (default: standard output)");
    add_common(correlate, common);

    MaeArgs ma;
    auto* mae = app.add_subcommand("mae", "Masked-replica benchmark of imputation methods");
    mae->add_option("--panel", ma.panel, "Services panel")->required();
    mae->add_option("--format", ma.format, "Panel format: long or matrix");
    mae->add_option("--taxonomy", ma.taxonomy, "Services taxonomy CSV");
    mae->add_option("--methods", ma.methods, "Comma-separated methods");
    mae->add_option("--replicas", ma.replicas, "Masked replicas");
    mae->add_option("--fraction", ma.fraction, "Share of cells hidden per replica");
    mae->add_option("--k", ma.k, "Neighbours for knn");
    mae->add_option("--trees", ma.trees, "Trees per forest");
    mae->add_option("--min-leaf", ma.min_leaf, "Minimum rows per forest leaf");
    mae->add_option("--seed", ma.seed, "Master seed");
    mae->add_option("--out", ma.out, "Per-replica CSV");
    mae->add_option("--summary", ma.summary, "Aggregate CSV (default: standard output)");
    add_common(mae, common);

    SynthArgs sx;
    auto* synth = app.add_subcommand("synth", "Write the synthetic services, goods and GDP dataset");
    synth->add_option("--out-dir", sx.out_dir, "Output directory")->required();
    synth->add_option("--countries", sx.countries, "Number of countries");
    synth->add_option("--taxonomy", sx.taxonomy, "Services taxonomy CSV");
    synth->add_option("--goods-codes", sx.goods_codes, "Goods code list CSV");
    synth->add_option("--seed", sx.seed, "Master seed");
    add_common(synth, common);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*validate) return cmd_validate_taxonomy(tx, out);
        if (*impute_cmd) return cmd_impute(im, common, out);
        if (*metrics) return cmd_metrics(mx, common, out);
        if (*network) return cmd_network(nx, common, out);
        if (*correlate) return cmd_correlate(cx, common, out);
        if (*mae) return cmd_mae(ma, common, out);
        if (*synth) return cmd_synth(sx, out);
    } catch (const Error& e) {
        err << "efc: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "efc: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace efc

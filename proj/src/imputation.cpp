#include "efc/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "efc/csv.hpp"
#include "efc/error.hpp"
#include "efc/forest.hpp"
#include "efc/parallel.hpp"
#include "efc/rng.hpp"
#include "efc/stats.hpp"

namespace efc {

ImputeMethod parse_impute_method(const std::string& name) {
    if (name == "interpolate") return ImputeMethod::Interpolate;
    if (name == "knn") return ImputeMethod::Knn;
    if (name == "forest") return ImputeMethod::Forest;
    throw Error(ErrorKind::Config, "unknown imputation method '" + name + "' (expected interpolate, knn or forest)");
}

std::string_view to_string(ImputeMethod m) {
    switch (m) {
        case ImputeMethod::Interpolate: return "interpolate";
        case ImputeMethod::Knn: return "knn";
        case ImputeMethod::Forest: return "forest";
    }
    return "?";
}

KnnWeighting parse_knn_weighting(const std::string& name) {
    if (name == "inverse") return KnnWeighting::InverseDistance;
    if (name == "uniform") return KnnWeighting::Uniform;
    throw Error(ErrorKind::Config, "unknown kNN weighting '" + name + "' (expected inverse or uniform)");
}

void ImputerConfig::validate() const {
    if (k < 1) throw Error(ErrorKind::Config, "k must be at least 1");
    if (trees < 1) throw Error(ErrorKind::Config, "trees must be at least 1");
    if (min_leaf < 1) throw Error(ErrorKind::Config, "min_leaf must be at least 1");
}

std::string ImputerConfig::label() const {
    switch (method) {
        case ImputeMethod::Interpolate: return "interpolate";
        case ImputeMethod::Knn: return "knn-" + std::to_string(k);
        case ImputeMethod::Forest: return "forest";
    }
    return "?";
}

namespace {

void interpolate_series(std::span<double> s) {
    std::ptrdiff_t last = -1;
    const auto n = static_cast<std::ptrdiff_t>(s.size());
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        if (is_missing(s[t])) continue;
        if (last >= 0 && t - last > 1) {
            const double x0 = s[last];
            const double x1 = s[t];
            const auto span = static_cast<double>(t - last);
            for (std::ptrdiff_t u = last + 1; u < t; ++u) s[u] = x0 + (x1 - x0) * static_cast<double>(u - last) / span;
        }
        last = t;
    }
    if (last >= 0)
        for (std::ptrdiff_t t = last + 1; t < n; ++t) s[t] = s[last];
}

std::vector<std::size_t> present_complete_columns(const ExportPanel& panel, const TaxonomyTree& tree) {
    std::vector<std::size_t> cols;
    for (const auto& code : tree.complete_set())
        if (auto a = panel.activities().find(code)) cols.push_back(*a);
    return cols;
}

void collect_residuals(const ExportPanel& panel, const std::vector<std::size_t>& cols, const std::string& reason,
                       std::vector<ResidualCell>& out) {
    const auto years = panel.years();
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t a : cols)
            for (std::size_t t = 0; t < panel.n_years(); ++t)
                if (panel.missing(c, a, t))
                    out.push_back({panel.countries()[c], panel.activities()[a], years[t], reason});
}

}  // namespace

ExportPanel interpolate_forward(const ExportPanel& panel) {
    ExportPanel out = panel;
    for (std::size_t c = 0; c < out.n_countries(); ++c)
        for (std::size_t a = 0; a < out.n_activities(); ++a) interpolate_series(out.series(c, a));
    return out;
}

double nan_euclidean(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    std::size_t observed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (is_missing(a[i]) || is_missing(b[i])) continue;
        const double d = a[i] - b[i];
        sum += d * d;
        ++observed;
    }
    if (observed == 0) return std::numeric_limits<double>::infinity();
    return std::sqrt(sum * static_cast<double>(a.size()) / static_cast<double>(observed));
}

ImputationResult knn_impute(const ExportPanel& panel, const TaxonomyTree& tree, const ImputerConfig& cfg) {
    cfg.validate();
    const auto targets = present_complete_columns(panel, tree);
    if (targets.empty()) throw Error(ErrorKind::Coverage, "panel holds no complete-set code to impute");

    std::vector<std::size_t> features;
    if (cfg.feature_codes.empty()) {
        for (std::size_t n : tree.aggregate_nodes())
            if (auto a = panel.activities().find(tree.node(n).code)) features.push_back(*a);
    } else {
        for (const auto& code : cfg.feature_codes) {
            auto a = panel.activities().find(code);
            if (!a) throw Error(ErrorKind::Coverage, "feature code '" + code + "' is not on the panel");
            features.push_back(*a);
        }
    }
    if (features.empty()) throw Error(ErrorKind::Config, "kNN needs at least one feature code on the panel");

    const std::size_t n_years = panel.n_years();
    const std::size_t n_rows = panel.n_countries() * n_years;
    const std::size_t nf = features.size();
    std::vector<double> feat(n_rows * nf);
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t t = 0; t < n_years; ++t)
            for (std::size_t j = 0; j < nf; ++j) {
                const double v = panel.at(c, features[j], t);
                feat[(c * n_years + t) * nf + j] = (cfg.log_features && !is_missing(v)) ? std::log1p(v) : v;
            }

    // Tie-break order: lexicographic (country code, year).
    std::vector<std::size_t> key_rank(n_rows);
    {
        std::vector<std::size_t> order(n_rows);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            const auto& cx = panel.countries()[x / n_years];
            const auto& cy = panel.countries()[y / n_years];
            if (cx != cy) return cx < cy;
            return x % n_years < y % n_years;
        });
        for (std::size_t i = 0; i < n_rows; ++i) key_rank[order[i]] = i;
    }

    struct Fill {
        std::size_t activity;
        double value;  // kMissing when no donor
    };
    std::vector<std::vector<Fill>> fills(n_rows);

    parallel_for(n_rows, cfg.jobs, [&](std::size_t r) {
        const std::size_t c = r / n_years;
        const std::size_t t = r % n_years;
        std::vector<std::size_t> wanted;
        for (std::size_t a : targets)
            if (panel.missing(c, a, t)) wanted.push_back(a);
        if (wanted.empty()) return;

        const std::span<const double> mine(feat.data() + r * nf, nf);
        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(n_rows);
        for (std::size_t q = 0; q < n_rows; ++q) {
            if (q == r) continue;
            const double d = nan_euclidean(mine, std::span<const double>(feat.data() + q * nf, nf));
            if (std::isfinite(d)) cand.emplace_back(d, q);
        }
        std::sort(cand.begin(), cand.end(), [&](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first < y.first;
            return key_rank[x.second] < key_rank[y.second];
        });

        for (std::size_t a : wanted) {
            std::vector<std::pair<double, double>> donors;  // (distance, value)
            for (const auto& [d, q] : cand) {
                const double v = panel.at(q / n_years, a, q % n_years);
                if (is_missing(v)) continue;
                donors.emplace_back(d, v);
                if (donors.size() == cfg.k) break;
            }
            if (donors.empty()) {
                fills[r].push_back({a, kMissing});
                continue;
            }
            double num = 0.0, den = 0.0;
            const bool exact = donors.front().first == 0.0;
            for (const auto& [d, v] : donors) {
                double w = 1.0;
                if (cfg.weighting == KnnWeighting::InverseDistance) {
                    if (exact) w = d == 0.0 ? 1.0 : 0.0;
                    else w = 1.0 / d;
                }
                num += w * v;
                den += w;
            }
            fills[r].push_back({a, num / den});
        }
    });

    ImputationResult result{panel, {}, {}, 0, 0};
    const auto years = panel.years();
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::size_t c = r / n_years;
        const std::size_t t = r % n_years;
        for (const auto& f : fills[r]) {
            if (is_missing(f.value)) {
                result.residuals.push_back({panel.countries()[c], panel.activities()[f.activity], years[t], "no_donor"});
                continue;
            }
            double v = f.value;
            if (v < 0.0) {
                v = 0.0;
                ++result.clipped;
            }
            result.panel.set(c, f.activity, t, v);
            ++result.imputed;
        }
    }
    if (result.clipped) result.flags.push_back("clipped " + std::to_string(result.clipped) + " negative estimates to 0");
    return result;
}

ImputationResult forest_impute(const ExportPanel& panel, const ImputerConfig& cfg) {
    cfg.validate();
    const std::size_t n_act = panel.n_activities();
    const std::size_t n_years = panel.n_years();
    const std::size_t n_rows = panel.n_countries() * n_years;
    // Every observation is >= 0, so -1 sorts MISSING below all of them and a
    // split can isolate it.
    constexpr double kAbsent = -1.0;

    struct TargetOutcome {
        std::vector<std::pair<std::size_t, double>> fills;  // (row, value)
        bool fallback = false;
        std::size_t clipped = 0;
    };
    std::vector<TargetOutcome> outcomes(n_act);

    parallel_for(n_act, cfg.jobs, [&](std::size_t target) {
        std::vector<std::size_t> train, predict_rows;
        for (std::size_t r = 0; r < n_rows; ++r)
            (panel.missing(r / n_years, target, r % n_years) ? predict_rows : train).push_back(r);
        if (predict_rows.empty()) return;
        auto& outcome = outcomes[target];
        if (train.size() < 2 * cfg.min_leaf) {
            outcome.fallback = true;
            return;
        }
        FeatureTable x{n_rows, n_act - 1, std::vector<double>(n_rows * (n_act - 1))};
        std::vector<double> y(n_rows, 0.0);
        for (std::size_t r = 0; r < n_rows; ++r) {
            const std::size_t c = r / n_years;
            const std::size_t t = r % n_years;
            std::size_t j = 0;
            for (std::size_t a = 0; a < n_act; ++a) {
                if (a == target) continue;
                const double v = panel.at(c, a, t);
                x.values[r * x.n_features + j++] = is_missing(v) ? kAbsent : v;
            }
            const double v = panel.at(c, target, t);
            if (!is_missing(v)) y[r] = v;
        }
        ForestParams params;
        params.trees = cfg.trees;
        params.tree.min_leaf = cfg.min_leaf;
        params.bootstrap = cfg.bootstrap;
        RandomForestRegressor forest;
        forest.fit(x, y, train, params, derive_seed(cfg.seed, {target}));
        for (std::size_t r : predict_rows) {
            double v = forest.predict(x.row(r));
            if (v < 0.0) {
                v = 0.0;
                ++outcome.clipped;
            }
            outcome.fills.emplace_back(r, v);
        }
    });

    ImputationResult result{panel, {}, {}, 0, 0};
    const auto years = panel.years();
    for (std::size_t a = 0; a < n_act; ++a) {
        const auto& outcome = outcomes[a];
        for (const auto& [r, v] : outcome.fills) {
            result.panel.set(r / n_years, a, r % n_years, v);
            ++result.imputed;
        }
        result.clipped += outcome.clipped;
        if (!outcome.fallback) continue;
        result.flags.push_back("forest fallback to interpolation for '" + panel.activities()[a] + "'");
        for (std::size_t c = 0; c < panel.n_countries(); ++c) {
            auto s = result.panel.series(c, a);
            const auto before = std::count_if(s.begin(), s.end(), [](double v) { return is_missing(v); });
            interpolate_series(s);
            const auto after = std::count_if(s.begin(), s.end(), [](double v) { return is_missing(v); });
            result.imputed += static_cast<std::size_t>(before - after);
        }
        collect_residuals(result.panel, {a}, "forest_fallback_no_prior_value", result.residuals);
    }
    if (result.clipped) result.flags.push_back("clipped " + std::to_string(result.clipped) + " negative estimates to 0");
    return result;
}

ImputationResult impute(const ExportPanel& panel, const TaxonomyTree& tree, const ImputerConfig& cfg) {
    cfg.validate();
    const auto cols = present_complete_columns(panel, tree);
    if (cols.empty()) throw Error(ErrorKind::Coverage, "panel holds no complete-set code to impute");
    switch (cfg.method) {
        case ImputeMethod::Knn:
            return knn_impute(panel, tree, cfg);
        case ImputeMethod::Interpolate: {
            ImputationResult result{panel, {}, {}, 0, 0};
            for (std::size_t c = 0; c < panel.n_countries(); ++c)
                for (std::size_t a : cols) interpolate_series(result.panel.series(c, a));
            for (std::size_t c = 0; c < panel.n_countries(); ++c)
                for (std::size_t a : cols)
                    for (std::size_t t = 0; t < panel.n_years(); ++t)
                        if (panel.missing(c, a, t) && !result.panel.missing(c, a, t)) ++result.imputed;
            collect_residuals(result.panel, cols, "no_prior_value", result.residuals);
            return result;
        }
        case ImputeMethod::Forest: {
            std::vector<std::string> codes;
            for (std::size_t a : cols) codes.push_back(panel.activities()[a]);
            ImputationResult sub = forest_impute(select_activities(panel, codes), cfg);
            ImputationResult result{panel, std::move(sub.residuals), std::move(sub.flags), sub.imputed, sub.clipped};
            for (std::size_t c = 0; c < panel.n_countries(); ++c)
                for (std::size_t j = 0; j < cols.size(); ++j) {
                    auto from = sub.panel.series(c, j);
                    std::copy(from.begin(), from.end(), result.panel.series(c, cols[j]).begin());
                }
            return result;
        }
    }
    throw Error(ErrorKind::Config, "unhandled imputation method");
}

void write_residuals(std::ostream& out, const std::vector<ResidualCell>& residuals) {
    out << "country,activity,year,reason\n";
    for (const auto& r : residuals) csv::write_row(out, {r.country, r.activity, std::to_string(r.year), r.reason});
}

NamedImputer make_imputer(const TaxonomyTree& tree, const ImputerConfig& cfg) {
    cfg.validate();
    return {cfg.label(), [tree, cfg](const ExportPanel& masked) { return impute(masked, tree, cfg).panel; }};
}

const MaeAggregate* MaeReport::find(const std::string& method, const std::string& layer) const {
    for (const auto& a : aggregates)
        if (a.method == method && a.layer == layer) return &a;
    return nullptr;
}

MaeReport evaluate_mae(const ExportPanel& panel, const TaxonomyTree& tree, const std::vector<NamedImputer>& methods,
                       std::size_t replicas, double fraction, std::uint64_t seed, unsigned jobs) {
    if (replicas == 0) throw Error(ErrorKind::Config, "replicas must be positive");
    if (methods.empty()) throw Error(ErrorKind::Config, "no imputation method to evaluate");

    ExportPanel eval = panel;
    for (std::size_t c = 0; c < eval.n_countries(); ++c)
        for (std::size_t a = 0; a < eval.n_activities(); ++a) {
            auto s = eval.series(c, a);
            if (std::any_of(s.begin(), s.end(), [](double v) { return is_missing(v); }))
                std::fill(s.begin(), s.end(), kMissing);
        }

    std::vector<bool> eligible(eval.n_activities(), false);
    std::vector<int> layer_of(eval.n_activities(), -1);
    std::map<int, std::size_t> layer_slot;
    for (std::size_t a : present_complete_columns(eval, tree)) {
        bool any = false;
        for (std::size_t c = 0; c < eval.n_countries() && !any; ++c) any = !eval.missing(c, a, 0);
        if (!any) continue;
        eligible[a] = true;
        layer_of[a] = tree.node(*tree.find(eval.activities()[a])).layer;
        layer_slot.emplace(layer_of[a], 0);
    }
    if (layer_slot.empty())
        throw Error(ErrorKind::EvaluationSet, "no fully observed complete-set series to evaluate on");
    std::vector<std::string> layer_labels;
    for (auto& [layer, slot] : layer_slot) {
        slot = layer_labels.size();
        layer_labels.push_back("layer:" + std::to_string(layer));
    }
    const std::size_t all_slot = layer_labels.size();
    layer_labels.push_back("all");
    const std::size_t n_slots = layer_labels.size();

    // per replica, per method, per slot: (abs error sum, scored, unfilled)
    struct Tally {
        double sum = 0.0;
        std::size_t scored = 0;
        std::size_t unfilled = 0;
    };
    std::vector<std::vector<Tally>> tallies(replicas, std::vector<Tally>(methods.size() * n_slots));
    const std::size_t n_years = eval.n_years();
    const std::size_t n_act = eval.n_activities();

    parallel_for(replicas, jobs, [&](std::size_t r) {
        const MaskedPanel masked = mask_random(eval, fraction, derive_seed(seed, {r}), eligible);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const ExportPanel rec = methods[m].run(masked.panel);
            if (!rec.same_axes(eval))
                throw Error(ErrorKind::Alignment, "imputer '" + methods[m].name + "' changed the panel axes");
            for (std::size_t flat : masked.mask.indices()) {
                const std::size_t a = (flat / n_years) % n_act;
                const std::size_t slot = layer_slot.at(layer_of[a]);
                const double truth = eval.cells()[flat];
                const double guess = rec.cells()[flat];
                for (std::size_t s : {slot, all_slot}) {
                    Tally& tally = tallies[r][m * n_slots + s];
                    if (is_missing(guess)) {
                        ++tally.unfilled;
                    } else {
                        tally.sum += std::abs(guess - truth);
                        ++tally.scored;
                    }
                }
            }
        }
    });

    MaeReport report;
    report.replicas = replicas;
    report.fraction = fraction;
    for (std::size_t m = 0; m < methods.size(); ++m)
        for (std::size_t r = 0; r < replicas; ++r)
            for (std::size_t s = 0; s < n_slots; ++s) {
                const Tally& t = tallies[r][m * n_slots + s];
                const double mae =
                    t.scored ? t.sum / static_cast<double>(t.scored) : std::numeric_limits<double>::quiet_NaN();
                report.rows.push_back({methods[m].name, r, layer_labels[s], mae, t.scored, t.unfilled});
            }
    for (std::size_t m = 0; m < methods.size(); ++m)
        for (std::size_t s = 0; s < n_slots; ++s) {
            std::vector<double> values;
            for (std::size_t r = 0; r < replicas; ++r) {
                const double v = report.rows[(m * replicas + r) * n_slots + s].mae;
                if (!std::isnan(v)) values.push_back(v);
            }
            report.aggregates.push_back({methods[m].name, layer_labels[s], stats::mean(values),
                                         stats::quantile(values, 0.25), stats::quantile(values, 0.75)});
        }
    return report;
}

MaeReport evaluate_mae(const ExportPanel& panel, const TaxonomyTree& tree, const std::vector<ImputerConfig>& methods,
                       std::size_t replicas, double fraction, std::uint64_t seed, unsigned jobs) {
    std::vector<NamedImputer> imputers;
    for (ImputerConfig cfg : methods) {
        cfg.jobs = 1;  // parallelism goes to replicas
        imputers.push_back(make_imputer(tree, cfg));
    }
    return evaluate_mae(panel, tree, imputers, replicas, fraction, seed, jobs);
}

void write_mae_rows(std::ostream& out, const MaeReport& report) {
    out << "method,replica,layer,mae\n";
    for (const auto& r : report.rows)
        csv::write_row(out, {r.method, std::to_string(r.replica), r.layer,
                             std::isnan(r.mae) ? std::string() : csv::format_number(r.mae)});
}

void write_mae_aggregates(std::ostream& out, const MaeReport& report) {
    out << "method,layer,mean_mae,q25,q75\n";
    auto num = [](double v) { return std::isnan(v) ? std::string() : csv::format_number(v); };
    for (const auto& a : report.aggregates)
        csv::write_row(out, {a.method, a.layer, num(a.mean_mae), num(a.q25), num(a.q75)});
}

}  // namespace efc

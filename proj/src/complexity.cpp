#include "efc/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "efc/csv.hpp"
#include "efc/error.hpp"
#include "efc/parallel.hpp"

namespace efc {

std::string_view to_string(MatrixKind kind) {
    switch (kind) {
        case MatrixKind::Rca: return "RCA";
        case MatrixKind::MarketShare: return "MS";
        case MatrixKind::Binary: return "BINARY";
    }
    return "?";
}

CompetitivenessMatrix make_matrix(std::vector<std::string> countries, std::vector<std::string> activities,
                                  MatrixKind kind, std::vector<double> cells, int year) {
    CompetitivenessMatrix m{Axis(std::move(countries)), Axis(std::move(activities)), year, kind, std::move(cells)};
    if (m.cells.size() != m.rows() * m.cols())
        throw Error(ErrorKind::Alignment, "matrix has " + std::to_string(m.cells.size()) + " cells, expected " +
                                              std::to_string(m.rows() * m.cols()));
    return m;
}

namespace {

struct Slice {
    std::vector<double> e;
    std::size_t missing = 0;
};

Slice export_slice(const ExportPanel& panel, int year) {
    auto t = panel.year_index(year);
    if (!t) throw Error(ErrorKind::Range, "year " + std::to_string(year) + " is outside the panel");
    Slice s;
    s.e.resize(panel.n_countries() * panel.n_activities());
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t a = 0; a < panel.n_activities(); ++a) {
            const double v = panel.at(c, a, *t);
            if (is_missing(v)) ++s.missing;
            s.e[c * panel.n_activities() + a] = is_missing(v) ? 0.0 : v;
        }
    return s;
}

CompetitivenessMatrix shares(const ExportPanel& panel, int year, MatrixKind kind) {
    Slice s = export_slice(panel, year);
    const std::size_t nc = panel.n_countries();
    const std::size_t na = panel.n_activities();
    std::vector<double> row(nc, 0.0), col(na, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t a = 0; a < na; ++a) {
            const double v = s.e[c * na + a];
            row[c] += v;
            col[a] += v;
            total += v;
        }
    if (!(total > 0.0))
        throw Error(ErrorKind::DegenerateSlice, "year " + std::to_string(year) + " has zero total exports");

    CompetitivenessMatrix m{panel.countries(), panel.activities(), year, kind, std::vector<double>(nc * na, 0.0)};
    m.missing_cells = s.missing;
    for (std::size_t c = 0; c < nc; ++c)
        if (row[c] == 0.0) m.zero_rows.push_back(panel.countries()[c]);
    for (std::size_t a = 0; a < na; ++a)
        if (col[a] == 0.0) m.zero_cols.push_back(panel.activities()[a]);
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t a = 0; a < na; ++a) {
            const double v = s.e[c * na + a];
            if (col[a] == 0.0) continue;
            if (kind == MatrixKind::MarketShare) {
                m.at(c, a) = v / col[a];
            } else if (row[c] > 0.0) {
                m.at(c, a) = (v / row[c]) / (col[a] / total);
            }
        }
    return m;
}

}  // namespace

CompetitivenessMatrix rca(const ExportPanel& panel, int year) { return shares(panel, year, MatrixKind::Rca); }

CompetitivenessMatrix market_share(const ExportPanel& panel, int year) {
    return shares(panel, year, MatrixKind::MarketShare);
}

CompetitivenessMatrix binarize(const CompetitivenessMatrix& m, double threshold) {
    if (m.kind != MatrixKind::Rca)
        throw Error(ErrorKind::Kind, "binarize expects an RCA matrix, got " + std::string(to_string(m.kind)));
    CompetitivenessMatrix out = m;
    out.kind = MatrixKind::Binary;
    for (double& v : out.cells) v = v >= threshold ? 1.0 : 0.0;
    return out;
}

ExportPanel competitiveness_panel(const ExportPanel& panel, MatrixKind kind) {
    if (kind == MatrixKind::Binary) throw Error(ErrorKind::Kind, "competitiveness_panel builds RCA or MS, not BINARY");
    ExportPanel out(panel.countries(), panel.activities(), panel.first_year(), panel.last_year());
    for (int year : panel.years()) {
        const auto m = shares(panel, year, kind);
        const std::size_t t = *panel.year_index(year);
        for (std::size_t c = 0; c < m.rows(); ++c)
            for (std::size_t a = 0; a < m.cols(); ++a) out.set(c, a, t, m.at(c, a));
    }
    return out;
}

CompetitivenessMatrix slice(const ExportPanel& values, int year, MatrixKind kind) {
    Slice s = export_slice(values, year);
    CompetitivenessMatrix m{values.countries(), values.activities(), year, kind, std::move(s.e)};
    m.missing_cells = s.missing;
    return m;
}

ReducedMatrix drop_empty(const CompetitivenessMatrix& m) {
    std::vector<bool> keep_row(m.rows(), true), keep_col(m.cols(), true);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t c = 0; c < m.rows(); ++c) {
            if (!keep_row[c]) continue;
            bool any = false;
            for (std::size_t a = 0; a < m.cols() && !any; ++a) any = keep_col[a] && m.at(c, a) != 0.0;
            if (!any) keep_row[c] = false, changed = true;
        }
        for (std::size_t a = 0; a < m.cols(); ++a) {
            if (!keep_col[a]) continue;
            bool any = false;
            for (std::size_t c = 0; c < m.rows() && !any; ++c) any = keep_row[c] && m.at(c, a) != 0.0;
            if (!any) keep_col[a] = false, changed = true;
        }
    }
    ReducedMatrix out;
    std::vector<std::string> rows, cols;
    for (std::size_t c = 0; c < m.rows(); ++c)
        (keep_row[c] ? rows : out.dropped_countries).push_back(m.countries[c]);
    for (std::size_t a = 0; a < m.cols(); ++a)
        (keep_col[a] ? cols : out.dropped_activities).push_back(m.activities[a]);
    std::vector<double> cells;
    cells.reserve(rows.size() * cols.size());
    for (std::size_t c = 0; c < m.rows(); ++c) {
        if (!keep_row[c]) continue;
        for (std::size_t a = 0; a < m.cols(); ++a)
            if (keep_col[a]) cells.push_back(m.at(c, a));
    }
    out.matrix = make_matrix(std::move(rows), std::move(cols), m.kind, std::move(cells), m.year);
    out.matrix.missing_cells = m.missing_cells;
    return out;
}

FitnessVariant parse_fitness_variant(const std::string& name) {
    if (name == "intensive") return FitnessVariant::Intensive;
    if (name == "extensive") return FitnessVariant::Extensive;
    throw Error(ErrorKind::Config, "unknown variant '" + name + "' (expected intensive or extensive)");
}

std::string_view to_string(FitnessVariant v) { return v == FitnessVariant::Intensive ? "intensive" : "extensive"; }

namespace {

// log of sum_i exp(x_i) over the given terms.
double log_sum_exp(const double* x, std::size_t n) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) hi = std::max(hi, x[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - hi);
    return hi + std::log(s);
}

// Shifts log values so that the mean of their exponentials is 1.
void normalise_log_by_mean(std::vector<double>& v) {
    const double shift = log_sum_exp(v.data(), v.size()) - std::log(static_cast<double>(v.size()));
    for (double& x : v) x -= shift;
}

// |exp(now - before) - 1|, the relative change of the underlying values.
double max_relative_change(const std::vector<double>& now, const std::vector<double>& before) {
    double worst = 0.0;
    for (std::size_t i = 0; i < now.size(); ++i) worst = std::max(worst, std::abs(std::expm1(now[i] - before[i])));
    return worst;
}

std::vector<double> floored_exp(const std::vector<double>& logs) {
    std::vector<double> out(logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) out[i] = std::max(std::exp(logs[i]), kFitnessFloor);
    return out;
}

}  // namespace

FitnessResult fitness_complexity(const CompetitivenessMatrix& m, const FitnessOptions& opts) {
    if (!(opts.tol > 0.0)) throw Error(ErrorKind::Config, "tol must be positive");
    if (opts.max_iter == 0) throw Error(ErrorKind::Config, "max_iter must be positive");
    if (m.kind == MatrixKind::Rca) throw Error(ErrorKind::Kind, "fitness needs a BINARY or MS matrix, not raw RCA");
    const std::size_t nc = m.rows();
    const std::size_t na = m.cols();
    if (nc == 0 || na == 0) throw Error(ErrorKind::Structure, "empty matrix");
    for (double v : m.cells)
        if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::Domain, "matrix cells must be finite and non-negative");
    for (std::size_t c = 0; c < nc; ++c) {
        bool any = false;
        for (std::size_t a = 0; a < na && !any; ++a) any = m.at(c, a) != 0.0;
        if (!any) throw Error(ErrorKind::Structure, "country '" + m.countries[c] + "' has an all-zero row");
    }
    for (std::size_t a = 0; a < na; ++a) {
        bool any = false;
        for (std::size_t c = 0; c < nc && !any; ++c) any = m.at(c, a) != 0.0;
        if (!any) throw Error(ErrorKind::Structure, "activity '" + m.activities[a] + "' has an all-zero column");
    }

    FitnessResult res;
    res.countries = m.countries;
    res.activities = m.activities;
    res.year = m.year;
    res.variant = m.kind == MatrixKind::Binary ? FitnessVariant::Intensive : FitnessVariant::Extensive;

    // The iteration runs on logarithms: on nested matrices the scores of
    // weak countries and simple activities shrink geometrically and would
    // underflow (or collapse onto the floor) long before max_iter.
    std::vector<double> log_q(na, 0.0);
    if (!opts.initial_q.empty()) {
        if (opts.initial_q.size() != na) throw Error(ErrorKind::Alignment, "initial complexity has the wrong length");
        for (double v : opts.initial_q)
            if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::Config, "initial complexity must be positive");
        for (std::size_t a = 0; a < na; ++a) log_q[a] = std::log(opts.initial_q[a]);
        normalise_log_by_mean(log_q);
    }

    // Nonzero cells by row and by column, with their log weights.
    struct Cell {
        std::size_t index;
        double log_weight;
    };
    std::vector<std::vector<Cell>> by_row(nc), by_col(na);
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t a = 0; a < na; ++a)
            if (const double v = m.at(c, a); v != 0.0) {
                by_row[c].push_back({a, std::log(v)});
                by_col[a].push_back({c, std::log(v)});
            }

    std::vector<double> log_f(nc, 0.0), f_next(nc), q_next(na), terms;
    res.residual = std::numeric_limits<double>::infinity();

    for (std::size_t n = 1; n <= opts.max_iter; ++n) {
        for (std::size_t c = 0; c < nc; ++c) {
            terms.clear();
            for (const Cell& e : by_row[c]) terms.push_back(e.log_weight + log_q[e.index]);
            f_next[c] = log_sum_exp(terms.data(), terms.size());
        }
        normalise_log_by_mean(f_next);
        for (std::size_t a = 0; a < na; ++a) {
            terms.clear();
            for (const Cell& e : by_col[a]) terms.push_back(e.log_weight - f_next[e.index]);
            q_next[a] = -log_sum_exp(terms.data(), terms.size());
        }
        normalise_log_by_mean(q_next);

        const double change = n == 1 ? std::numeric_limits<double>::infinity()
                                     : std::max(max_relative_change(f_next, log_f), max_relative_change(q_next, log_q));
        log_f.swap(f_next);
        log_q.swap(q_next);
        res.iterations = n;
        res.residual = change;
        if (change < opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.fitness = floored_exp(log_f);
    res.complexity = floored_exp(log_q);
    res.log_fitness = std::move(log_f);
    res.log_complexity = std::move(log_q);
    return res;
}

namespace {

// Orders by `keys` descending; keys within `tie` of each other count as
// equal and are ordered by label.
std::vector<RankEntry> rank_by(const std::vector<std::string>& labels, const std::vector<double>& keys,
                               const std::vector<double>& values, double tie, bool relative) {
    if (labels.size() != keys.size()) throw Error(ErrorKind::Alignment, "labels and values differ in length");
    auto same = [&](double x, double y) {
        const double scale = relative ? std::max(std::abs(x), std::abs(y)) : 1.0;
        return x == y || std::abs(x - y) <= tie * scale;
    };
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (!same(keys[i], keys[j])) return keys[i] > keys[j];
        return labels[i] < labels[j];
    });
    std::vector<RankEntry> out(keys.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const std::size_t i = order[pos];
        bool tied = (pos > 0 && same(keys[order[pos - 1]], keys[i])) ||
                    (pos + 1 < order.size() && same(keys[order[pos + 1]], keys[i]));
        out[i] = {labels[i], values[i], pos + 1, tied};
    }
    return out;
}

// Ranks fitness or complexity on the log scale, where floored values
// stay distinct. A log gap of 1e-12 is a relative gap of 1e-12.
std::vector<RankEntry> rank_scores(const std::vector<std::string>& labels, const std::vector<double>& values,
                                   const std::vector<double>& logs) {
    if (logs.size() != values.size()) return rank_descending(labels, values);
    return rank_by(labels, logs, values, 1e-12, false);
}

}  // namespace

std::vector<RankEntry> rank_descending(const std::vector<std::string>& labels, const std::vector<double>& values) {
    return rank_by(labels, values, values, 1e-12, true);
}

std::vector<YearRanks> rank_series(const std::vector<FitnessResult>& results) {
    std::vector<YearRanks> out;
    for (const auto& r : results) {
        if (!(r.activities == results.front().activities))
            throw Error(ErrorKind::Alignment, "year " + std::to_string(r.year) + " has a different activity axis");
        out.push_back({r.year, rank_scores(r.activities.labels(), r.complexity, r.log_complexity)});
    }
    return out;
}

std::vector<CompetitivenessMatrix> binary_matrices(const ExportPanel& panel, const std::optional<SmoothingConfig>& smoothing,
                                                   double threshold) {
    ExportPanel values = competitiveness_panel(panel, MatrixKind::Rca);
    if (smoothing) values = exp_smooth(values, *smoothing);
    std::vector<CompetitivenessMatrix> out;
    for (int year : values.years()) out.push_back(binarize(slice(values, year, MatrixKind::Rca), threshold));
    return out;
}

std::vector<CompetitivenessMatrix> yearly_inputs(const ExportPanel& panel, const MetricsConfig& cfg) {
    if (cfg.variant == FitnessVariant::Intensive) return binary_matrices(panel, cfg.smoothing, cfg.threshold);
    ExportPanel values = competitiveness_panel(panel, MatrixKind::MarketShare);
    if (cfg.smoothing) values = exp_smooth(values, *cfg.smoothing);
    std::vector<CompetitivenessMatrix> out;
    for (int year : values.years()) out.push_back(slice(values, year, MatrixKind::MarketShare));
    return out;
}

std::vector<FitnessResult> fitness_series(const ExportPanel& panel, const MetricsConfig& cfg) {
    const auto inputs = yearly_inputs(panel, cfg);
    std::vector<FitnessResult> out(inputs.size());
    parallel_for(inputs.size(), cfg.jobs, [&](std::size_t i) {
        ReducedMatrix reduced = drop_empty(inputs[i]);
        if (reduced.matrix.rows() == 0 || reduced.matrix.cols() == 0)
            throw Error(ErrorKind::DegenerateSlice,
                        "year " + std::to_string(inputs[i].year) + " has no non-zero entry after binarisation");
        out[i] = fitness_complexity(reduced.matrix, cfg.fit);
        out[i].dropped_countries = std::move(reduced.dropped_countries);
        out[i].dropped_activities = std::move(reduced.dropped_activities);
    });
    return out;
}

void write_fitness_table(std::ostream& out, const std::vector<FitnessResult>& results, RankedEntity entity) {
    out << "year,label,value,rank,variant,converged\n";
    for (const auto& r : results) {
        const auto& labels = entity == RankedEntity::Country ? r.countries.labels() : r.activities.labels();
        const bool countries = entity == RankedEntity::Country;
        const auto ranks = rank_scores(labels, countries ? r.fitness : r.complexity,
                                       countries ? r.log_fitness : r.log_complexity);
        for (const auto& e : ranks)
            csv::write_row(out, {std::to_string(r.year), e.label, csv::format_number(e.value), std::to_string(e.rank),
                                 std::string(to_string(r.variant)), r.converged ? "true" : "false"});
    }
}

}  // namespace efc

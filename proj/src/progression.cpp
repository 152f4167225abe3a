#include "efc/progression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "efc/csv.hpp"
#include "efc/error.hpp"
#include "efc/parallel.hpp"
#include "efc/rng.hpp"

namespace efc {

namespace {

// Ones of a binary matrix, row by row.
struct SparseRows {
    std::size_t n_cols = 0;
    std::vector<std::uint32_t> offsets{0};
    std::vector<std::uint32_t> cols;

    std::size_t rows() const { return offsets.size() - 1; }
    std::size_t degree(std::size_t c) const { return offsets[c + 1] - offsets[c]; }
};

SparseRows to_sparse(const CompetitivenessMatrix& m) {
    SparseRows s;
    s.n_cols = m.cols();
    for (std::size_t c = 0; c < m.rows(); ++c) {
        for (std::size_t a = 0; a < m.cols(); ++a)
            if (m.at(c, a) != 0.0) s.cols.push_back(static_cast<std::uint32_t>(a));
        s.offsets.push_back(static_cast<std::uint32_t>(s.cols.size()));
    }
    return s;
}

void require_binary(const CompetitivenessMatrix& m, const char* what) {
    if (m.kind != MatrixKind::Binary)
        throw Error(ErrorKind::Kind, std::string(what) + " needs a BINARY matrix, got " + std::string(to_string(m.kind)));
}

// Unnormalised assist weights into `out` (size n_cols^2, zeroed here):
// out[a][b] = sum_c base_ca * later_cb / u_c, then row a is divided by d_a.
void assist_into(const SparseRows& base, const SparseRows& later, std::vector<double>& out) {
    const std::size_t n = base.n_cols;
    out.assign(n * n, 0.0);
    std::vector<double> ubiquity(n, 0.0);
    for (std::size_t c = 0; c < base.rows(); ++c) {
        for (std::uint32_t i = base.offsets[c]; i < base.offsets[c + 1]; ++i) ubiquity[base.cols[i]] += 1.0;
        const std::size_t u = later.degree(c);
        if (u == 0) continue;
        const double w = 1.0 / static_cast<double>(u);
        for (std::uint32_t i = base.offsets[c]; i < base.offsets[c + 1]; ++i) {
            double* row = &out[base.cols[i] * n];
            for (std::uint32_t j = later.offsets[c]; j < later.offsets[c + 1]; ++j) row[later.cols[j]] += w;
        }
    }
    for (std::size_t a = 0; a < n; ++a) {
        if (ubiquity[a] == 0.0) continue;
        for (std::size_t b = 0; b < n; ++b) out[a * n + b] /= ubiquity[a];
    }
}

}  // namespace

AssistMatrix assist_matrix(const CompetitivenessMatrix& base, const CompetitivenessMatrix& later) {
    require_binary(base, "assist_matrix");
    require_binary(later, "assist_matrix");
    if (!(base.countries == later.countries) || !(base.activities == later.activities))
        throw Error(ErrorKind::Alignment, "assist_matrix inputs for years " + std::to_string(base.year) + " and " +
                                              std::to_string(later.year) + " have different axes");
    AssistMatrix out{base.activities, base.year, later.year - base.year, {}, {}};
    assist_into(to_sparse(base), to_sparse(later), out.cells);
    for (std::size_t a = 0; a < base.cols(); ++a) {
        bool any = false;
        for (std::size_t c = 0; c < base.rows() && !any; ++c) any = base.at(c, a) != 0.0;
        if (!any) out.empty_rows.push_back(base.activities[a]);
    }
    return out;
}

std::vector<double> BicmModel::expected_row_degrees() const {
    std::vector<double> out(rows(), 0.0);
    for (std::size_t c = 0; c < rows(); ++c)
        for (std::size_t a = 0; a < cols(); ++a) out[c] += p(c, a);
    return out;
}

std::vector<double> BicmModel::expected_col_degrees() const {
    std::vector<double> out(cols(), 0.0);
    for (std::size_t c = 0; c < rows(); ++c)
        for (std::size_t a = 0; a < cols(); ++a) out[a] += p(c, a);
    return out;
}

namespace {

// Degree classes of the free block: distinct degrees and their multiplicity.
struct Classes {
    std::vector<double> degree;
    std::vector<double> count;
    std::vector<std::size_t> of;  // member -> class
};

Classes classify(const std::vector<long>& degrees) {
    Classes k;
    std::map<long, std::size_t> index;
    for (long d : degrees) index.emplace(d, 0);
    for (auto& [d, i] : index) {
        i = k.degree.size();
        k.degree.push_back(static_cast<double>(d));
        k.count.push_back(0.0);
    }
    for (long d : degrees) {
        const std::size_t i = index[d];
        k.of.push_back(i);
        k.count[i] += 1.0;
    }
    return k;
}

double link_probability(double x, double y) {
    if (std::isinf(x) || std::isinf(y)) return 1.0;
    const double xy = x * y;
    return xy / (1.0 + xy);
}

double class_residual(const Classes& r, const Classes& k, const std::vector<double>& x, const std::vector<double>& y) {
    double worst = 0.0;
    std::vector<double> col(k.degree.size(), 0.0);
    for (std::size_t i = 0; i < r.degree.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k.degree.size(); ++j) {
            const double p = link_probability(x[i], y[j]);
            s += k.count[j] * p;
            col[j] += r.count[i] * p;
        }
        worst = std::max(worst, std::abs(s - r.degree[i]));
    }
    for (std::size_t j = 0; j < k.degree.size(); ++j) worst = std::max(worst, std::abs(col[j] - k.degree[j]));
    return worst;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Newton ascent of the concave log-likelihood in log-parameters.
bool newton_solve(const Classes& r, const Classes& k, std::vector<double>& x, std::vector<double>& y, double tol,
                  std::size_t max_iter, std::size_t& iterations) {
    const std::size_t nr = r.degree.size();
    const std::size_t nk = k.degree.size();
    const std::size_t n = nr + nk;
    Eigen::VectorXd v(n);
    for (std::size_t i = 0; i < nr; ++i) v[i] = std::log(x[i]);
    for (std::size_t j = 0; j < nk; ++j) v[nr + j] = std::log(y[j]);

    auto loglik = [&](const Eigen::VectorXd& w) {
        double l = 0.0;
        for (std::size_t i = 0; i < nr; ++i) l += r.count[i] * r.degree[i] * w[i];
        for (std::size_t j = 0; j < nk; ++j) l += k.count[j] * k.degree[j] * w[nr + j];
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nk; ++j) l -= r.count[i] * k.count[j] * softplus(w[i] + w[nr + j]);
        return l;
    };

    for (std::size_t it = 0; it < max_iter; ++it) {
        ++iterations;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        Eigen::MatrixXd info = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        double worst = 0.0;
        std::vector<double> col(nk, 0.0);
        for (std::size_t i = 0; i < nr; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < nk; ++j) {
                const double p = 1.0 / (1.0 + std::exp(-(v[i] + v[nr + j])));
                const double w = p * (1.0 - p);
                s += k.count[j] * p;
                col[j] += r.count[i] * p;
                info(i, i) += r.count[i] * k.count[j] * w;
                info(nr + j, nr + j) += r.count[i] * k.count[j] * w;
                info(i, nr + j) += r.count[i] * k.count[j] * w;
                info(nr + j, i) += r.count[i] * k.count[j] * w;
            }
            grad[i] = r.count[i] * (r.degree[i] - s);
            worst = std::max(worst, std::abs(r.degree[i] - s));
        }
        for (std::size_t j = 0; j < nk; ++j) {
            grad[nr + j] = k.count[j] * (k.degree[j] - col[j]);
            worst = std::max(worst, std::abs(k.degree[j] - col[j]));
        }
        if (worst <= tol) break;
        // The likelihood is flat along (+s on rows, -s on columns); a small
        // ridge pins that direction.
        info.diagonal().array() += 1e-10 * (1.0 + info.diagonal().array());
        const Eigen::VectorXd step = info.ldlt().solve(grad);
        const double base = loglik(v);
        double scale = 1.0;
        Eigen::VectorXd next = v + step;
        while (scale > 1e-12 && !(loglik(next) >= base)) {
            scale /= 2.0;
            next = v + scale * step;
        }
        if (scale <= 1e-12) break;
        v = next;
    }
    for (std::size_t i = 0; i < nr; ++i) x[i] = std::exp(v[i]);
    for (std::size_t j = 0; j < nk; ++j) y[j] = std::exp(v[nr + j]);
    return class_residual(r, k, x, y) <= tol;
}

}  // namespace

BicmModel bicm_fit(const CompetitivenessMatrix& m, double fit_tol, std::size_t max_iter) {
    require_binary(m, "bicm_fit");
    if (!(fit_tol > 0.0)) throw Error(ErrorKind::Config, "fit tolerance must be positive");
    const std::size_t nc = m.rows();
    const std::size_t na = m.cols();

    // Forced cells: -1 free, 0 or 1 fixed.
    std::vector<signed char> forced(nc * na, -1);
    std::vector<bool> row_free(nc, true), col_free(na, true);
    std::vector<long> row_deg(nc, 0), col_deg(na, 0);
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t a = 0; a < na; ++a)
            if (m.at(c, a) != 0.0) ++row_deg[c], ++col_deg[a];
    std::vector<long> row_res = row_deg, col_res = col_deg;
    std::size_t n_free_rows = nc, n_free_cols = na;
    // Split-off rows and columns get parameter 0 (forced empty) or +inf (forced full).
    std::vector<double> row_param(nc, 0.0), col_param(na, 0.0);

    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t c = 0; c < nc; ++c) {
            if (!row_free[c]) continue;
            if (row_res[c] != 0 && row_res[c] != static_cast<long>(n_free_cols)) continue;
            const signed char v = row_res[c] == 0 ? 0 : 1;
            for (std::size_t a = 0; a < na; ++a)
                if (col_free[a]) forced[c * na + a] = v, col_res[a] -= v;
            row_param[c] = v ? INFINITY : 0.0;
            row_free[c] = false, --n_free_rows, changed = true;
        }
        for (std::size_t a = 0; a < na; ++a) {
            if (!col_free[a]) continue;
            if (col_res[a] != 0 && col_res[a] != static_cast<long>(n_free_rows)) continue;
            const signed char v = col_res[a] == 0 ? 0 : 1;
            for (std::size_t c = 0; c < nc; ++c)
                if (row_free[c]) forced[c * na + a] = v, row_res[c] -= v;
            col_param[a] = v ? INFINITY : 0.0;
            col_free[a] = false, --n_free_cols, changed = true;
        }
    }

    BicmModel model{m.countries, m.activities, std::move(row_param), std::move(col_param),
                    std::vector<double>(nc * na, 0.0)};

    if (n_free_rows > 0 && n_free_cols > 0) {
        std::vector<long> rdeg, kdeg;
        std::vector<std::size_t> rows, cols;
        for (std::size_t c = 0; c < nc; ++c)
            if (row_free[c]) rows.push_back(c), rdeg.push_back(row_res[c]);
        for (std::size_t a = 0; a < na; ++a)
            if (col_free[a]) cols.push_back(a), kdeg.push_back(col_res[a]);
        const Classes rc = classify(rdeg);
        const Classes kc = classify(kdeg);

        double total = 0.0;
        for (std::size_t i = 0; i < rc.degree.size(); ++i) total += rc.degree[i] * rc.count[i];
        const double root = std::sqrt(total);
        std::vector<double> x(rc.degree.size()), y(kc.degree.size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rc.degree[i] / root;
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = kc.degree[j] / root;

        // Damped fixed point x_i = k_i / sum_j n_j y_j / (1 + x_i y_j), and the
        // mirror update for y.
        const double damping = 0.5;
        double residual = class_residual(rc, kc, x, y);
        double best = residual;
        std::size_t stalled = 0;
        std::size_t it = 0;
        while (residual > fit_tol && it < max_iter && stalled < 200) {
            ++it;
            for (std::size_t i = 0; i < x.size(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < y.size(); ++j) s += kc.count[j] * y[j] / (1.0 + x[i] * y[j]);
                x[i] = (1.0 - damping) * x[i] + damping * rc.degree[i] / s;
            }
            for (std::size_t j = 0; j < y.size(); ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) s += rc.count[i] * x[i] / (1.0 + x[i] * y[j]);
                y[j] = (1.0 - damping) * y[j] + damping * kc.degree[j] / s;
            }
            residual = class_residual(rc, kc, x, y);
            if (residual < 0.999 * best) best = residual, stalled = 0;
            else ++stalled;
        }
        model.iterations = it;
        if (residual > fit_tol && !newton_solve(rc, kc, x, y, fit_tol, 200, model.iterations))
            throw Error(ErrorKind::Fit, "BiCM fit for year " + std::to_string(m.year) + " did not converge (residual " +
                                            csv::format_number(class_residual(rc, kc, x, y)) + ")");
        for (std::size_t i = 0; i < rows.size(); ++i) model.row_params[rows[i]] = x[rc.of[i]];
        for (std::size_t j = 0; j < cols.size(); ++j) model.col_params[cols[j]] = y[kc.of[j]];
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                model.probabilities[rows[i] * na + cols[j]] = link_probability(x[rc.of[i]], y[kc.of[j]]);
    }
    for (std::size_t cell = 0; cell < nc * na; ++cell)
        if (forced[cell] >= 0) model.probabilities[cell] = forced[cell];

    const auto er = model.expected_row_degrees();
    const auto ek = model.expected_col_degrees();
    for (std::size_t c = 0; c < nc; ++c) model.residual = std::max(model.residual, std::abs(er[c] - row_deg[c]));
    for (std::size_t a = 0; a < na; ++a) model.residual = std::max(model.residual, std::abs(ek[a] - col_deg[a]));
    return model;
}

namespace {

void sample_into(const BicmModel& model, Rng& rng, SparseRows& out) {
    out.n_cols = model.cols();
    out.offsets.assign(1, 0);
    out.cols.clear();
    const double* p = model.probabilities.data();
    for (std::size_t c = 0; c < model.rows(); ++c) {
        for (std::size_t a = 0; a < model.cols(); ++a, ++p) {
            if (*p <= 0.0) continue;
            if (*p >= 1.0 || uniform01(rng) < *p) out.cols.push_back(static_cast<std::uint32_t>(a));
        }
        out.offsets.push_back(static_cast<std::uint32_t>(out.cols.size()));
    }
}

}  // namespace

CompetitivenessMatrix bicm_sample(const BicmModel& model, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    SparseRows s;
    sample_into(model, rng, s);
    CompetitivenessMatrix out{model.countries, model.activities, 0, MatrixKind::Binary,
                              std::vector<double>(model.rows() * model.cols(), 0.0)};
    for (std::size_t c = 0; c < s.rows(); ++c)
        for (std::uint32_t i = s.offsets[c]; i < s.offsets[c + 1]; ++i) out.at(c, s.cols[i]) = 1.0;
    return out;
}

void ValidationOptions::validate() const {
    if (ensemble < 20) throw Error(ErrorKind::Config, "ensemble must be at least 20, got " + std::to_string(ensemble));
    if (!(percentile >= 0.0 && percentile <= 100.0))
        throw Error(ErrorKind::Config, "percentile must lie in [0, 100]");
    if (!(fit_tol > 0.0)) throw Error(ErrorKind::Config, "fit tolerance must be positive");
}

namespace {

struct Prepared {
    std::vector<SparseRows> observed;
    std::vector<BicmModel> fits;
    std::map<int, std::size_t> index_of_year;
};

Prepared prepare(const std::vector<CompetitivenessMatrix>& yearly, const ValidationOptions& opts) {
    opts.validate();
    if (yearly.empty()) throw Error(ErrorKind::Range, "no yearly matrix to validate");
    Prepared p;
    for (std::size_t i = 0; i < yearly.size(); ++i) {
        require_binary(yearly[i], "link validation");
        if (!(yearly[i].countries == yearly.front().countries) || !(yearly[i].activities == yearly.front().activities))
            throw Error(ErrorKind::Alignment, "year " + std::to_string(yearly[i].year) + " has different axes");
        if (!p.index_of_year.emplace(yearly[i].year, i).second)
            throw Error(ErrorKind::Conflict, "year " + std::to_string(yearly[i].year) + " appears twice");
        p.observed.push_back(to_sparse(yearly[i]));
    }
    p.fits.resize(yearly.size());
    parallel_for(yearly.size(), opts.jobs, [&](std::size_t i) { p.fits[i] = bicm_fit(yearly[i], opts.fit_tol); });
    return p;
}

std::vector<std::pair<std::size_t, std::size_t>> year_pairs(const Prepared& p, int delta) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& [year, i] : p.index_of_year) {
        auto it = p.index_of_year.find(year + delta);
        if (it != p.index_of_year.end()) out.emplace_back(i, it->second);
    }
    return out;
}

// Links of one (t, t + delta) pair that beat their null distribution.
std::vector<std::uint8_t> validate_pair(const Prepared& p, std::size_t base, std::size_t later, int year, int delta,
                                        const ValidationOptions& opts) {
    const std::size_t n = p.observed[base].n_cols;
    std::vector<double> empirical;
    assist_into(p.observed[base], p.observed[later], empirical);

    const auto N = static_cast<double>(opts.ensemble);
    // Nearest-rank position of the percentile among the sorted null values;
    // a link beats the percentile iff at least `needed` null values lie
    // strictly below it.
    auto nearest_rank = [&](double count) {
        return static_cast<std::size_t>(std::ceil(opts.percentile / 100.0 * count - 1e-9));
    };

    std::vector<std::uint32_t> below(n * n, 0);
    std::vector<double> pooled;
    std::vector<double> null;
    SparseRows s_base, s_later;
    for (std::size_t r = 0; r < opts.ensemble; ++r) {
        const auto y = static_cast<std::uint64_t>(static_cast<std::int64_t>(year));
        const auto d = static_cast<std::uint64_t>(static_cast<std::int64_t>(delta));
        Rng rb = make_rng(derive_seed(opts.seed, {d, y, r, 0}));
        Rng rl = make_rng(derive_seed(opts.seed, {d, y, r, 1}));
        sample_into(p.fits[base], rb, s_base);
        sample_into(p.fits[later], rl, s_later);
        assist_into(s_base, s_later, null);
        if (opts.global_threshold) {
            pooled.insert(pooled.end(), null.begin(), null.end());
        } else {
            for (std::size_t i = 0; i < n * n; ++i) below[i] += null[i] < empirical[i];
        }
    }

    std::vector<std::uint8_t> ok(n * n, 0);
    if (opts.global_threshold) {
        const std::size_t rank = nearest_rank(static_cast<double>(pooled.size()));
        double threshold = 0.0;
        if (rank > 0) {
            std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(rank - 1), pooled.end());
            threshold = pooled[rank - 1];
        }
        for (std::size_t i = 0; i < n * n; ++i) ok[i] = empirical[i] > 0.0 && empirical[i] > threshold;
    } else {
        const std::size_t needed = nearest_rank(N);
        for (std::size_t i = 0; i < n * n; ++i) ok[i] = empirical[i] > 0.0 && below[i] >= needed;
    }
    return ok;
}

struct PairTask {
    int delta;
    std::size_t base;
    std::size_t later;
};

// Runs every (delta, pair) task in parallel and ANDs the pairs of each delta.
std::vector<DeltaValidation> validate_all(const std::vector<CompetitivenessMatrix>& yearly, const Prepared& p,
                                          int first_delta, int last_delta, const ValidationOptions& opts) {
    std::vector<PairTask> tasks;
    std::vector<DeltaValidation> out;
    for (int delta = first_delta; delta <= last_delta; ++delta) {
        const auto pairs = year_pairs(p, delta);
        if (pairs.empty())
            throw Error(ErrorKind::Range, "no pair of years " + std::to_string(delta) + " apart in the panel");
        DeltaValidation v;
        v.delta = delta;
        for (const auto& [b, l] : pairs) {
            tasks.push_back({delta, b, l});
            v.base_years.push_back(yearly[b].year);
        }
        out.push_back(std::move(v));
    }
    std::vector<std::vector<std::uint8_t>> results(tasks.size());
    parallel_for(tasks.size(), opts.jobs, [&](std::size_t i) {
        const auto& t = tasks[i];
        results[i] = validate_pair(p, t.base, t.later, yearly[t.base].year, t.delta, opts);
    });
    const std::size_t n = yearly.front().cols();
    for (auto& v : out) v.validated.assign(n * n, 1);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto& v = out[static_cast<std::size_t>(tasks[i].delta - first_delta)];
        for (std::size_t k = 0; k < n * n; ++k) v.validated[k] &= results[i][k];
    }
    return out;
}

}  // namespace

DeltaValidation validate_delta(const std::vector<CompetitivenessMatrix>& yearly, int delta, const ValidationOptions& opts) {
    if (delta < 0) throw Error(ErrorKind::Range, "lag must be non-negative");
    const Prepared p = prepare(yearly, opts);
    return std::move(validate_all(yearly, p, delta, delta, opts).front());
}

const ProgressionEdge* ProgressionNetwork::find(const std::string& source, const std::string& target) const {
    const auto s = activities.find(source);
    const auto t = activities.find(target);
    if (!s || !t) return nullptr;
    for (const auto& e : edges)
        if (e.source == *s && e.target == *t) return &e;
    return nullptr;
}

ProgressionNetwork progression_network(const std::vector<CompetitivenessMatrix>& yearly, int delta_max,
                                       const ValidationOptions& opts) {
    if (delta_max < 0) throw Error(ErrorKind::Config, "delta_max must be non-negative");
    const Prepared p = prepare(yearly, opts);
    const auto per_delta = validate_all(yearly, p, 0, delta_max, opts);

    ProgressionNetwork net;
    net.activities = yearly.front().activities;
    net.percentile = opts.percentile;
    net.ensemble = opts.ensemble;
    net.first_year = p.index_of_year.begin()->first;
    net.last_year = p.index_of_year.rbegin()->first;
    net.delta_max = delta_max;
    net.global_threshold = opts.global_threshold;
    const std::size_t n = net.activities.size();
    for (std::size_t k = 0; k < n * n; ++k) {
        ProgressionEdge e{k / n, k % n, 0, 0, 0};
        for (const auto& v : per_delta) {
            if (!v.validated[k]) continue;
            if (e.weight == 0) e.first_delta = v.delta;
            e.last_delta = v.delta;
            ++e.weight;
        }
        if (e.weight > 0) net.edges.push_back(e);
    }
    return net;
}

void write_edges(std::ostream& out, const ProgressionNetwork& net) {
    out << "source,target,weight,first_delta,last_delta\n";
    for (const auto& e : net.edges)
        csv::write_row(out, {net.activities[e.source], net.activities[e.target], std::to_string(e.weight),
                             std::to_string(e.first_delta), std::to_string(e.last_delta)});
}

void write_nodes(std::ostream& out, const Axis& activities, const TaxonomyTree* services) {
    out << "activity,kind,layer\n";
    for (const auto& code : activities.labels()) {
        std::optional<std::size_t> node;
        if (services) node = services->find(code);
        if (node)
            csv::write_row(out, {code, "service", std::to_string(services->node(*node).layer)});
        else
            csv::write_row(out, {code, "good", ""});
    }
}

}  // namespace efc

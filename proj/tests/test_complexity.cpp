#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "efc/complexity.hpp"
#include "efc/error.hpp"
#include "efc/rng.hpp"
#include "helpers.hpp"

using namespace efc;
using testing::binary;
using testing::kind_of;
using testing::slice_panel;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Reference fixed point written straight from the update rules, run for a
// fixed number of steps.
std::pair<std::vector<double>, std::vector<double>> naive_fitness(const std::vector<std::vector<double>>& m,
                                                                  int steps) {
    const std::size_t nc = m.size(), na = m[0].size();
    std::vector<double> f(nc, 1.0), q(na, 1.0);
    for (int s = 0; s < steps; ++s) {
        for (std::size_t c = 0; c < nc; ++c) {
            f[c] = 0.0;
            for (std::size_t a = 0; a < na; ++a) f[c] += m[c][a] * q[a];
        }
        const double fm = mean(f);
        for (double& v : f) v /= fm;
        for (std::size_t a = 0; a < na; ++a) {
            double inv = 0.0;
            for (std::size_t c = 0; c < nc; ++c) inv += m[c][a] / f[c];
            q[a] = 1.0 / inv;
        }
        const double qm = mean(q);
        for (double& v : q) v /= qm;
    }
    return {f, q};
}

std::vector<std::vector<int>> random_binary(std::size_t rows, std::size_t cols, double density, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    for (;;) {
        std::vector<std::vector<int>> m(rows, std::vector<int>(cols));
        for (auto& r : m)
            for (int& v : r) v = uniform01(rng) < density ? 1 : 0;
        bool ok = true;
        for (std::size_t c = 0; c < rows; ++c) ok = ok && std::accumulate(m[c].begin(), m[c].end(), 0) > 0;
        for (std::size_t a = 0; a < cols; ++a) {
            int s = 0;
            for (std::size_t c = 0; c < rows; ++c) s += m[c][a];
            ok = ok && s > 0;
        }
        if (ok) return m;
    }
}

std::vector<std::vector<double>> as_double(const std::vector<std::vector<int>>& m) {
    std::vector<std::vector<double>> out;
    for (const auto& r : m) out.emplace_back(r.begin(), r.end());
    return out;
}

}  // namespace

TEST_CASE("rca examples") {
    const CompetitivenessMatrix u = rca(slice_panel({{1, 1}, {1, 1}}), 2000);
    for (double v : u.cells) CHECK(v == 1.0);
    CHECK(u.kind == MatrixKind::Rca);

    const CompetitivenessMatrix d = rca(slice_panel({{4, 0}, {0, 4}}), 2000);
    CHECK(d.cells == std::vector<double>{2, 0, 0, 2});

    const CompetitivenessMatrix single = rca(slice_panel({{3, 0, 5}}), 2000);
    CHECK(single.at(0, 0) == 1.0);
    CHECK(single.at(0, 2) == 1.0);
    CHECK(single.at(0, 1) == 0.0);
    CHECK(single.zero_cols == std::vector<std::string>{"a1"});

    const CompetitivenessMatrix zr = rca(slice_panel({{1, 2}, {0, 0}}), 2000);
    CHECK(zr.zero_rows == std::vector<std::string>{"c1"});
    CHECK(kind_of([] { rca(slice_panel({{0, 0}, {0, 0}}), 2000); }) == ErrorKind::DegenerateSlice);
    CHECK(kind_of([] { rca(slice_panel({{1}}), 1999); }) == ErrorKind::Range);
}

TEST_CASE("rca share identity and market share column sums") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng = make_rng(seed);
        std::vector<std::vector<double>> rows(6, std::vector<double>(9));
        for (auto& r : rows)
            for (double& v : r) v = uniform01(rng) < 0.2 ? 0.0 : 1000 * uniform01(rng);
        const ExportPanel p = slice_panel(rows);
        const CompetitivenessMatrix r = rca(p, 2000);
        const CompetitivenessMatrix ms = market_share(p, 2000);
        double total = 0.0;
        std::vector<double> col(9, 0.0);
        for (std::size_t c = 0; c < 6; ++c)
            for (std::size_t a = 0; a < 9; ++a) total += rows[c][a], col[a] += rows[c][a];
        // sum_a RCA_ca * share_a = 1 for every exporting country.
        for (std::size_t c = 0; c < 6; ++c) {
            double s = 0.0;
            for (std::size_t a = 0; a < 9; ++a) s += r.at(c, a) * col[a] / total;
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
        for (std::size_t a = 0; a < 9; ++a) {
            double s = 0.0;
            for (std::size_t c = 0; c < 6; ++c) s += ms.at(c, a);
            if (col[a] > 0) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("binarize threshold and kind") {
    const CompetitivenessMatrix r = rca(slice_panel({{1, 1}, {1, 1}}), 2000);
    const CompetitivenessMatrix b = binarize(r, 1.0);
    CHECK(b.kind == MatrixKind::Binary);
    for (double v : b.cells) CHECK(v == 1.0);
    const CompetitivenessMatrix d = binarize(rca(slice_panel({{1, 3}, {3, 1}}), 2000), 1.0);
    CHECK(d.cells == std::vector<double>{0, 1, 1, 0});
    // RCA is exactly 1 on the uniform slice: the threshold is inclusive.
    CHECK(binarize(r, 0.999).cells == b.cells);
    for (double v : binarize(r, 1.001).cells) CHECK(v == 0.0);
    // RCA values here are 0.5 and 1.5.
    CHECK(binarize(rca(slice_panel({{1, 3}, {3, 1}}), 2000), 0.4).cells == std::vector<double>{1, 1, 1, 1});
    CHECK(kind_of([] { binarize(market_share(slice_panel({{1, 3}, {3, 1}}), 2000)); }) == ErrorKind::Kind);
}

TEST_CASE("all-ones matrix has unit fitness and complexity") {
    const FitnessResult r = fitness_complexity(binary({{1, 1, 1}, {1, 1, 1}}));
    CHECK(r.converged);
    CHECK(r.variant == FitnessVariant::Intensive);
    for (double v : r.fitness) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : r.complexity) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fitness agrees with a reference iteration and keeps unit means") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = random_binary(12, 18, 0.5, seed);
        const FitnessResult r = fitness_complexity(binary(m));
        REQUIRE(r.converged);
        CHECK(r.residual < 1e-10);
        CHECK(mean(r.fitness) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(mean(r.complexity) == doctest::Approx(1.0).epsilon(1e-12));
        const auto [f, q] = naive_fitness(as_double(m), static_cast<int>(r.iterations));
        for (std::size_t c = 0; c < f.size(); ++c) CHECK(r.fitness[c] == doctest::Approx(f[c]).epsilon(1e-9));
        for (std::size_t a = 0; a < q.size(); ++a) CHECK(r.complexity[a] == doctest::Approx(q[a]).epsilon(1e-9));
    }
}

TEST_CASE("fitness is equivariant under row and column permutations") {
    const auto m = random_binary(9, 14, 0.45, 42);
    const FitnessResult base = fitness_complexity(binary(m));
    Rng rng = make_rng(7);
    std::vector<std::size_t> rp(9), cp(14);
    std::iota(rp.begin(), rp.end(), 0);
    std::iota(cp.begin(), cp.end(), 0);
    std::shuffle(rp.begin(), rp.end(), rng);
    std::shuffle(cp.begin(), cp.end(), rng);
    std::vector<std::vector<int>> pm(9, std::vector<int>(14));
    for (std::size_t c = 0; c < 9; ++c)
        for (std::size_t a = 0; a < 14; ++a) pm[c][a] = m[rp[c]][cp[a]];
    const FitnessResult perm = fitness_complexity(binary(pm));
    for (std::size_t c = 0; c < 9; ++c) CHECK(perm.fitness[c] == doctest::Approx(base.fitness[rp[c]]).epsilon(1e-10));
    for (std::size_t a = 0; a < 14; ++a)
        CHECK(perm.complexity[a] == doctest::Approx(base.complexity[cp[a]]).epsilon(1e-10));
}

TEST_CASE("nested matrix orders countries by diversification") {
    // Row c exports activities 0..3-c; activity a is made by countries 0..3-a.
    const FitnessResult r = fitness_complexity(binary({{1, 1, 1, 1}, {1, 1, 1, 0}, {1, 1, 0, 0}, {1, 0, 0, 0}}));
    for (std::size_t i = 0; i + 1 < 4; ++i) {
        CHECK(r.fitness[i] > r.fitness[i + 1]);
        CHECK(r.complexity[i] < r.complexity[i + 1]);
    }
}

TEST_CASE("fitness input validation") {
    CHECK(kind_of([] { fitness_complexity(binary({{1, 1}, {0, 0}})); }) == ErrorKind::Structure);
    CHECK(kind_of([] { fitness_complexity(binary({{1, 0}, {1, 0}})); }) == ErrorKind::Structure);
    CHECK(kind_of([] { fitness_complexity(rca(slice_panel({{1, 2}, {2, 1}}), 2000)); }) == ErrorKind::Kind);
    FitnessOptions bad;
    bad.tol = 0.0;
    CHECK(kind_of([&] { fitness_complexity(binary({{1}}), bad); }) == ErrorKind::Config);
    bad.tol = 1e-10;
    bad.max_iter = 0;
    CHECK(kind_of([&] { fitness_complexity(binary({{1}}), bad); }) == ErrorKind::Config);
    CHECK(kind_of([] { parse_fitness_variant("dense"); }) == ErrorKind::Config);
}

TEST_CASE("iteration cap reports non-convergence") {
    FitnessOptions opts;
    opts.max_iter = 2;
    const FitnessResult r = fitness_complexity(binary(random_binary(10, 10, 0.5, 3)), opts);
    CHECK(r.iterations == 2);
    CHECK_FALSE(r.converged);
}

TEST_CASE("market share input gives the extensive variant") {
    const CompetitivenessMatrix ms = market_share(slice_panel({{5, 1, 0}, {1, 1, 2}, {0, 3, 4}}), 2000);
    const FitnessResult r = fitness_complexity(ms);
    CHECK(r.variant == FitnessVariant::Extensive);
    CHECK(r.converged);
    CHECK(mean(r.fitness) == doctest::Approx(1.0));
    const auto [f, q] = naive_fitness({{ms.at(0, 0), ms.at(0, 1), ms.at(0, 2)},
                                       {ms.at(1, 0), ms.at(1, 1), ms.at(1, 2)},
                                       {ms.at(2, 0), ms.at(2, 1), ms.at(2, 2)}},
                                      static_cast<int>(r.iterations));
    for (std::size_t c = 0; c < 3; ++c) CHECK(r.fitness[c] == doctest::Approx(f[c]).epsilon(1e-9));
}

TEST_CASE("rank examples") {
    const auto r = rank_descending({"x", "y", "z"}, {0.2, 3, 1});
    CHECK(r[0].rank == 3);
    CHECK(r[1].rank == 1);
    CHECK(r[2].rank == 2);
    for (const auto& e : r) CHECK_FALSE(e.tied);

    const auto t = rank_descending({"b", "a", "c"}, {2, 2, 1});
    CHECK(t[1].rank == 1);  // "a" wins the tie by label
    CHECK(t[0].rank == 2);
    CHECK(t[0].tied);
    CHECK(t[1].tied);
    CHECK_FALSE(t[2].tied);

    const auto all = rank_descending({"q", "p"}, {5, 5 * (1 + 1e-14)});
    CHECK(all[1].rank == 1);
    CHECK(all[0].tied);
}

TEST_CASE("drop_empty removes rows and columns iteratively") {
    const auto m = binary({{1, 0, 0}, {0, 0, 0}, {1, 0, 1}});
    const ReducedMatrix r = drop_empty(m);
    CHECK(r.matrix.rows() == 2);
    CHECK(r.matrix.cols() == 2);
    CHECK(r.dropped_countries == std::vector<std::string>{"c1"});
    CHECK(r.dropped_activities == std::vector<std::string>{"a1"});
}

TEST_CASE("fitness series over a panel, smoothing off, with a table writer") {
    ExportPanel p(std::vector<std::string>{"A", "B", "C"}, std::vector<std::string>{"x", "y", "z"}, 2000, 2001);
    const double v[3][3] = {{5, 1, 1}, {1, 5, 1}, {1, 1, 5}};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t t = 0; t < 2; ++t) p.set(c, a, t, v[c][a] + (c == 0 && a == 1 ? 10.0 * t : 0.0));
    MetricsConfig cfg;
    cfg.smoothing.reset();
    const auto results = fitness_series(p, cfg);
    REQUIRE(results.size() == 2);
    CHECK(results[0].year == 2000);
    for (double f : results[0].fitness) CHECK(f == doctest::Approx(1.0));
    cfg.jobs = 3;
    const auto again = fitness_series(p, cfg);
    CHECK(again[1].fitness == results[1].fitness);

    std::ostringstream out;
    write_fitness_table(out, results, RankedEntity::Country);
    const std::string text = out.str();
    CHECK(text.rfind("year,label,value,rank,variant,converged\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6);
    CHECK(text.find(",intensive,") != std::string::npos);
    CHECK(rank_series(results).size() == 2);

    // A year with no export at all is a degenerate slice naming the year.
    ExportPanel hole = p;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t a = 0; a < 3; ++a) hole.set_missing(c, a, 1);
    try {
        fitness_series(hole, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateSlice);
        CHECK(std::string(e.what()).find("2001") != std::string::npos);
    }
}

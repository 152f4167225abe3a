#include <doctest.h>

#include <cmath>
#include <numeric>

#include "efc/forest.hpp"
#include "efc/rng.hpp"

using namespace efc;

namespace {

struct Data {
    FeatureTable x;
    std::vector<double> y;
};

// y = f(x) + noise on three features, the third pure noise.
Data noisy(std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    Data d{{n, 3, std::vector<double>(n * 3)}, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const double a = uniform01(rng), b = uniform01(rng), c = uniform01(rng);
        d.x.values[i * 3] = a;
        d.x.values[i * 3 + 1] = b;
        d.x.values[i * 3 + 2] = c;
        d.y[i] = std::sin(6 * a) + 2 * b * b + 0.5 * (uniform01(rng) - 0.5);
    }
    return d;
}

double truth(std::span<const double> r) { return std::sin(6 * r[0]) + 2 * r[1] * r[1]; }

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

}  // namespace

TEST_CASE("constant target gives constant predictions") {
    Data d = noisy(60, 1);
    std::fill(d.y.begin(), d.y.end(), 9.0);
    RandomForestRegressor f;
    f.fit(d.x, d.y, all_rows(60), ForestParams{20, TreeParams{1, 0}, true}, 7);
    for (std::size_t i = 0; i < 60; ++i) CHECK(f.predict(d.x.row(i)) == 9.0);
    const std::vector<double> off{5.0, -2.0, 0.5};
    CHECK(f.predict(off) == 9.0);
}

TEST_CASE("copy feature with duplicated rows is reproduced exactly") {
    // 10 distinct rows, each present 20 times; y equals feature 1.
    const std::size_t distinct = 10, copies = 20;
    FeatureTable x{distinct * copies, 2, {}};
    std::vector<double> y;
    Rng rng = make_rng(3);
    std::vector<std::pair<double, double>> base;
    for (std::size_t i = 0; i < distinct; ++i) base.emplace_back(uniform01(rng), static_cast<double>(i) * 1.5 + 0.25);
    for (std::size_t k = 0; k < copies; ++k)
        for (const auto& [a, b] : base) {
            x.values.push_back(a);
            x.values.push_back(b);
            y.push_back(b);
        }
    RandomForestRegressor f;
    f.fit(x, y, all_rows(x.n_rows), ForestParams{50, TreeParams{1, 0}, true}, 11);
    for (const auto& [a, b] : base) {
        const std::vector<double> row{a, b};
        CHECK(f.predict(row) == b);
    }
}

TEST_CASE("min_leaf bounds leaf sizes") {
    Data d = noisy(200, 4);
    Rng rng = make_rng(1);
    RegressionTree t;
    t.fit(d.x, d.y, all_rows(200), TreeParams{25, 0}, rng);
    // At most n / min_leaf leaves; a split needs 2 * min_leaf rows.
    CHECK(t.leaf_count() >= 2);
    CHECK(t.leaf_count() <= 200 / 25);
    CHECK(t.node_count() == 2 * t.leaf_count() - 1);
}

TEST_CASE("forest is deterministic given the seed") {
    Data d = noisy(120, 5);
    RandomForestRegressor a, b, c;
    const ForestParams p{15, TreeParams{3, 0}, true};
    a.fit(d.x, d.y, all_rows(120), p, 99);
    b.fit(d.x, d.y, all_rows(120), p, 99);
    c.fit(d.x, d.y, all_rows(120), p, 100);
    bool any_diff = false;
    for (std::size_t i = 0; i < 120; ++i) {
        CHECK(a.predict(d.x.row(i)) == b.predict(d.x.row(i)));
        any_diff = any_diff || a.predict(d.x.row(i)) != c.predict(d.x.row(i));
    }
    CHECK(any_diff);
}

TEST_CASE("an ensemble of 50 trees beats a single tree in most seeds") {
    int wins = 0;
    const int seeds = 50;
    for (int s = 0; s < seeds; ++s) {
        const Data train = noisy(150, 1000 + static_cast<std::uint64_t>(s));
        const Data test = noisy(200, 5000 + static_cast<std::uint64_t>(s));
        double mae1 = 0.0, mae50 = 0.0;
        RandomForestRegressor one, many;
        one.fit(train.x, train.y, all_rows(150), ForestParams{1, TreeParams{2, 0}, true}, static_cast<std::uint64_t>(s));
        many.fit(train.x, train.y, all_rows(150), ForestParams{50, TreeParams{2, 0}, true}, static_cast<std::uint64_t>(s));
        for (std::size_t i = 0; i < 200; ++i) {
            mae1 += std::abs(one.predict(test.x.row(i)) - truth(test.x.row(i)));
            mae50 += std::abs(many.predict(test.x.row(i)) - truth(test.x.row(i)));
        }
        wins += mae50 <= mae1;
    }
    CHECK(wins >= 40);  // 80% of 50 seeds
}

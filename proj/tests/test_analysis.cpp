#include <doctest.h>

#include <cmath>
#include <sstream>

#include "efc/analysis.hpp"
#include "efc/error.hpp"
#include "efc/rng.hpp"
#include "helpers.hpp"

using namespace efc;
using testing::kind_of;

namespace {

// x is white noise per country; y(t + shift) = x(t).
std::pair<IndicatorSeries, IndicatorSeries> shifted_copy(std::size_t countries, int shift, std::uint64_t seed) {
    IndicatorSeries x{"x", {}}, y{"y", {}};
    Rng rng = make_rng(seed);
    for (std::size_t c = 0; c < countries; ++c) {
        const std::string name = "C" + std::to_string(c);
        for (int t = 1990; t < 2020; ++t) {
            const double v = 10.0 * static_cast<double>(c) + uniform01(rng);
            x.set(name, t, v);
            y.set(name, t + shift, v);
        }
    }
    return {x, y};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("a shifted copy correlates perfectly at its lag only") {
    const auto [x, y] = shifted_copy(20, 5, 1);
    for (const auto mode : {CorrelationMode::Pooled, CorrelationMode::PerCountry}) {
        const auto rows = lagged_correlation(x, y, {0, 5, 10}, mode);
        REQUIRE(rows.size() == 3);
        CHECK(rows[1].correlation == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(rows[0].correlation) < 0.5);
        CHECK(std::abs(rows[2].correlation) < 0.5);
        CHECK(rows[1].pairs == 20 * 30);
    }
}

TEST_CASE("pooled and per-country modes match hand computations") {
    IndicatorSeries x{"x", {}}, y{"y", {}};
    const std::vector<double> xa{1, 2, 3, 4}, ya{2, 1, 4, 3};
    const std::vector<double> xb{10, 30, 20, 50}, yb{7, 9, 8, 6};
    for (int t = 0; t < 4; ++t) {
        x.set("A", 2000 + t, xa[t]), y.set("A", 2000 + t, ya[t]);
        x.set("B", 2000 + t, xb[t]), y.set("B", 2000 + t, yb[t]);
    }
    const double ra = pearson(xa, ya), rb = pearson(xb, yb);
    const auto per = lagged_correlation(x, y, {0}, CorrelationMode::PerCountry);
    CHECK(per[0].correlation == doctest::Approx((ra + rb) / 2).epsilon(1e-12));

    // Standardised segments pooled: the pooled coefficient of z-scores.
    auto z = [](std::vector<double> v) {
        double m = 0, s = 0;
        for (double e : v) m += e / 4;
        for (double e : v) s += (e - m) * (e - m) / 4;
        for (double& e : v) e = (e - m) / std::sqrt(s);
        return v;
    };
    std::vector<double> px = z(xa), py = z(ya);
    for (double e : z(xb)) px.push_back(e);
    for (double e : z(yb)) py.push_back(e);
    const auto pooled = lagged_correlation(x, y, {0}, CorrelationMode::Pooled);
    CHECK(pooled[0].correlation == doctest::Approx(pearson(px, py)).epsilon(1e-12));
    CHECK(pooled[0].pairs == 8);
}

TEST_CASE("constant series are excluded and short overlaps skipped") {
    auto [x, y] = shifted_copy(6, 0, 2);
    for (auto& [year, v] : x.values.at("C0")) v = 3.0;
    const auto rows = lagged_correlation(x, y, {0, 29, 40}, CorrelationMode::Pooled);
    CHECK(rows[0].excluded == std::vector<std::string>{"C0"});
    CHECK(rows[0].pairs == 5 * 30);
    CHECK(rows[0].correlation == doctest::Approx(1.0));
    // Lag 29 leaves one pair per country (no variance), lag 40 none.
    CHECK(rows[1].skipped);
    CHECK(rows[1].pairs == 0);
    CHECK(std::isnan(rows[1].correlation));
    CHECK(rows[2].skipped);

    // Two usable pairs in total are not enough.
    IndicatorSeries a{"a", {}}, b{"b", {}};
    a.set("A", 2000, 1.0), a.set("A", 2001, 2.0);
    b.set("A", 2000, 5.0), b.set("A", 2001, 3.0);
    for (const auto mode : {CorrelationMode::Pooled, CorrelationMode::PerCountry})
        CHECK(lagged_correlation(a, b, {0}, mode)[0].skipped);
}

TEST_CASE("independent noise gives a small correlation") {
    const auto [x, unused] = shifted_copy(40, 0, 3);
    const auto [noise, unused2] = shifted_copy(40, 0, 4);
    const auto rows = lagged_correlation(x, noise, {0, 3}, CorrelationMode::Pooled);
    for (const auto& r : rows) CHECK(std::abs(r.correlation) < 0.1);
}

TEST_CASE("swapping the series mirrors the lag") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto [x, unused] = shifted_copy(8, 0, seed);
        const auto [y, unused2] = shifted_copy(8, 0, 100 + seed);
        for (const auto mode : {CorrelationMode::Pooled, CorrelationMode::PerCountry}) {
            const auto fwd = lagged_correlation(x, y, {-4, 0, 3}, mode);
            const auto back = lagged_correlation(y, x, {4, 0, -3}, mode);
            for (std::size_t i = 0; i < 3; ++i) {
                CHECK(fwd[i].correlation == doctest::Approx(back[i].correlation).epsilon(1e-12));
                CHECK(fwd[i].pairs == back[i].pairs);
            }
        }
    }
}

TEST_CASE("bootstrap band is ordered, deterministic and validated") {
    const auto [x, y] = shifted_copy(12, 2, 5);
    BandOptions opts;
    opts.replicas = 60;
    opts.seed = 8;
    const auto a = bootstrap_band(x, y, {0, 2, 4}, opts);
    opts.jobs = 4;
    const auto b = bootstrap_band(x, y, {0, 2, 4}, opts);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a[i].lower <= a[i].upper);
        CHECK(a[i].lower == b[i].lower);
        CHECK(a[i].upper == b[i].upper);
    }
    CHECK(a[1].lower == doctest::Approx(1.0));

    opts.replicas = 49;
    CHECK(kind_of([&] { bootstrap_band(x, y, {0}, opts); }) == ErrorKind::Config);
    opts.replicas = 50;
    const auto [sx, sy] = shifted_copy(4, 0, 6);
    CHECK(kind_of([&] { bootstrap_band(sx, sy, {0}, opts); }) == ErrorKind::Coverage);
}

TEST_CASE("lag lists") {
    CHECK(parse_lags("0:3") == std::vector<int>{0, 1, 2, 3});
    CHECK(parse_lags("0:20:5") == std::vector<int>{0, 5, 10, 15, 20});
    CHECK(parse_lags("0,5,10") == std::vector<int>{0, 5, 10});
    CHECK(parse_lags("-2:0") == std::vector<int>{-2, -1, 0});
    CHECK(parse_lags("7") == std::vector<int>{7});
    for (const char* bad : {"", "a:b", "3:1", "0:4:0", "1,1", "1,,2", "0:20:x"})
        CHECK(kind_of([&] { parse_lags(bad); }) == ErrorKind::Config);
}

TEST_CASE("indicator readers accept panels and fitness tables") {
    std::istringstream panel(
        "country,activity,year,value\n"
        "A,GDP,2000,1.5\nA,GDP,2001,\nB,GDP,2000,2\nA,POP,2000,9\n");
    const IndicatorSeries gdp = read_indicator(panel, "gdp.csv", "GDP");
    CHECK(gdp.countries() == std::vector<std::string>{"A", "B"});
    CHECK(gdp.values.at("A").size() == 1);
    CHECK(gdp.values.at("A").at(2000) == 1.5);

    std::istringstream two(
        "country,activity,year,value\nA,GDP,2000,1\nA,POP,2000,9\n");
    CHECK(kind_of([&] { read_indicator(two, "x.csv"); }) == ErrorKind::Config);

    std::istringstream table(
        "year,label,value,rank,variant,converged\n"
        "2000,A,1.25,1,intensive,1\n2000,A,0.5,2,extensive,1\n2001,B,0.75,1,intensive,1\n");
    const IndicatorSeries fit = read_indicator(table, "fitness.csv", "intensive");
    CHECK(fit.values.at("A").at(2000) == 1.25);
    CHECK(fit.values.at("B").at(2001) == 0.75);

    IndicatorSeries s{"s", {}};
    s.set("A", 2000, 1.0);
    CHECK(kind_of([&] { s.set("A", 2000, 2.0); }) == ErrorKind::Conflict);
    CHECK(kind_of([&] { s.set("A", 2001, NAN); }) == ErrorKind::Domain);
}

TEST_CASE("correlation table format") {
    const auto [x, y] = shifted_copy(6, 1, 9);
    const auto rows = lagged_correlation(x, y, {1, 30});
    std::vector<BandRow> band;
    for (const auto& r : rows) band.push_back({r, NAN, NAN});
    std::ostringstream out;
    write_correlations(out, band, CorrelationMode::Pooled);
    const std::string text = out.str();
    CHECK(text.rfind("lag,correlation,pairs,q25,q75,mode\n1,1,", 0) == 0);
    CHECK(text.find("\n30,,0,,,pooled\n") != std::string::npos);
}

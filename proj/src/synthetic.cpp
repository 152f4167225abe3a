#include "efc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "efc/csv.hpp"
#include "efc/error.hpp"
#include "efc/rng.hpp"

namespace efc {

namespace {

// Box-Muller on our own uniforms so draws match across standard libraries.
double normal(Rng& rng) {
    const double u = 1.0 - uniform01(rng);  // (0, 1]
    const double v = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

struct Economy {
    std::size_t cluster = 0;
    std::vector<double> capability;  // per year of the world span
    std::vector<double> log_size;
};

struct Activity {
    double threshold = 0.0;  // capability needed to export competitively
    double log_scale = 0.0;
};

constexpr std::uint64_t kGoodsTag = 1;
constexpr std::uint64_t kServicesTag = 2;

std::vector<Economy> draw_economies(std::size_t n, std::size_t clusters, int first_year, int last_year,
                                    std::uint64_t seed) {
    const auto span = static_cast<std::size_t>(last_year - first_year + 1);
    std::vector<Economy> out(n);
    for (std::size_t c = 0; c < n; ++c) {
        Rng rng = make_rng(derive_seed(seed, {0, c}));
        Economy& e = out[c];
        e.cluster = c % clusters;
        const double start = uniform01(rng);
        const double drift = 0.006 * normal(rng);
        const double growth = 0.03 + 0.02 * normal(rng);
        double size = std::log(1000.0) + 1.2 * normal(rng);
        for (std::size_t t = 0; t < span; ++t) {
            e.capability.push_back(std::clamp(start + drift * static_cast<double>(t) + 0.01 * normal(rng), 0.0, 1.0));
            if (t > 0) size += growth + 0.03 * normal(rng);
            e.log_size.push_back(size);
        }
    }
    return out;
}

std::vector<Activity> draw_activities(std::size_t n, std::uint64_t tag, std::uint64_t seed) {
    std::vector<Activity> out(n);
    for (std::size_t a = 0; a < n; ++a) {
        Rng rng = make_rng(derive_seed(seed, {1, tag, a}));
        out[a].threshold = uniform01(rng);
        out[a].log_scale = 0.8 * normal(rng);
    }
    return out;
}

// Fills panel cells for `codes` (already on the panel axis) from the
// economy model. `world_first` is the year of capability index 0.
void fill_exports(ExportPanel& panel, const std::vector<std::size_t>& columns, const std::vector<Economy>& economies,
                  const std::vector<Activity>& activities, std::size_t clusters, int world_first, double level,
                  double noise, double persistence, std::uint64_t tag, std::uint64_t seed) {
    std::vector<double> affinity(clusters * columns.size());
    for (std::size_t g = 0; g < clusters; ++g)
        for (std::size_t j = 0; j < columns.size(); ++j) {
            Rng rng = make_rng(derive_seed(seed, {2, tag, g, j}));
            affinity[g * columns.size() + j] = 0.7 * normal(rng);
        }
    const double innovation = std::sqrt(1.0 - persistence * persistence);
    const auto offset = static_cast<std::size_t>(panel.first_year() - world_first);
    for (std::size_t c = 0; c < panel.n_countries(); ++c) {
        const Economy& e = economies[c];
        for (std::size_t j = 0; j < columns.size(); ++j) {
            Rng rng = make_rng(derive_seed(seed, {3, tag, c, j}));
            const Activity& act = activities[j];
            double shock = normal(rng);
            for (std::size_t t = 0; t < panel.n_years(); ++t) {
                if (t > 0) shock = persistence * shock + innovation * normal(rng);
                const std::size_t w = t + offset;
                const double reach = 1.0 / (1.0 + std::exp(-(e.capability[w] - act.threshold) / 0.1)) + 0.01;
                const double v = level * std::exp(e.log_size[w] + act.log_scale + affinity[e.cluster * columns.size() + j] +
                                                  noise * shock) * reach;
                panel.set(c, columns[j], t, std::round(v * 1000.0) / 1000.0);
            }
        }
    }
}

std::vector<std::string> country_labels(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < n; ++c) {
        std::string s = std::to_string(c + 1);
        out.push_back("C" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s);
    }
    return out;
}

ExportPanel services_panel(const TaxonomyTree& tree, const std::vector<Economy>& economies, std::size_t clusters,
                           int world_first, int first_year, int last_year, double noise, double persistence,
                           std::uint64_t seed) {
    const auto leaves = tree.complete_set();
    ExportPanel panel(Axis(country_labels(economies.size())), Axis(leaves), first_year, last_year);
    std::vector<std::size_t> columns(leaves.size());
    for (std::size_t j = 0; j < columns.size(); ++j) columns[j] = j;
    fill_exports(panel, columns, economies, draw_activities(leaves.size(), kServicesTag, seed), clusters, world_first,
                 0.3, noise, persistence, kServicesTag, seed);
    return rollup(tree, panel);
}

}  // namespace

SyntheticWorld make_synthetic_world(const TaxonomyTree& services, const std::vector<std::string>& goods_codes,
                                    const SyntheticConfig& cfg) {
    if (cfg.countries == 0 || cfg.clusters == 0) throw Error(ErrorKind::Config, "synthetic world needs countries and clusters");
    if (cfg.services_first_year > cfg.services_last_year || cfg.goods_first_year > cfg.goods_last_year)
        throw Error(ErrorKind::Config, "synthetic year ranges are empty");
    if (!(cfg.persistence >= 0.0 && cfg.persistence < 1.0)) throw Error(ErrorKind::Config, "persistence must lie in [0, 1)");
    const int first = std::min(cfg.services_first_year, cfg.goods_first_year);
    const int last = std::max(cfg.services_last_year, cfg.goods_last_year);
    const auto economies = draw_economies(cfg.countries, cfg.clusters, first, last, cfg.seed);

    SyntheticWorld world{
        services_panel(services, economies, cfg.clusters, first, cfg.services_first_year, cfg.services_last_year,
                       cfg.noise, cfg.persistence, cfg.seed),
        ExportPanel(Axis(country_labels(cfg.countries)), Axis(goods_codes), cfg.goods_first_year, cfg.goods_last_year),
        IndicatorSeries{"GDP", {}}};

    std::vector<std::size_t> columns(goods_codes.size());
    for (std::size_t j = 0; j < columns.size(); ++j) columns[j] = j;
    fill_exports(world.goods, columns, economies, draw_activities(goods_codes.size(), kGoodsTag, cfg.seed), cfg.clusters,
                 first, 1.0, cfg.noise, cfg.persistence, kGoodsTag, cfg.seed);

    // Reporting gaps on service leaves; aggregates stay reported.
    ExportPanel& s = world.services;
    for (const auto& code : services.complete_set()) {
        const std::size_t a = *s.activities().find(code);
        for (std::size_t c = 0; c < s.n_countries(); ++c) {
            Rng rng = make_rng(derive_seed(cfg.seed, {4, c, a}));
            std::size_t start = 0;
            if (uniform01(rng) < cfg.late_start_share)
                start = 1 + uniform_below(rng, std::min<std::size_t>(12, s.n_years()));
            for (std::size_t t = 0; t < s.n_years(); ++t)
                if (t < start || uniform01(rng) < cfg.hole_share) s.set_missing(c, a, t);
        }
    }

    for (std::size_t c = 0; c < cfg.countries; ++c) {
        Rng rng = make_rng(derive_seed(cfg.seed, {5, c}));
        const Economy& e = economies[c];
        for (int year = first; year <= last; ++year) {
            const auto w = static_cast<std::size_t>(year - first);
            const double gdp = std::exp(e.log_size[w] + 1.5 * e.capability[w] + 0.05 * normal(rng)) * 5.0;
            world.gdp.set(world.goods.countries()[c], year, std::round(gdp * 1000.0) / 1000.0);
        }
    }
    return world;
}

ExportPanel make_synthetic_services(const TaxonomyTree& services, std::size_t countries, int first_year, int last_year,
                                    std::uint64_t seed, double noise, double persistence) {
    if (countries == 0 || first_year > last_year) throw Error(ErrorKind::Config, "synthetic panel needs countries and years");
    const std::size_t clusters = std::max<std::size_t>(2, countries / 10);
    const auto economies = draw_economies(countries, clusters, first_year, last_year, seed);
    return services_panel(services, economies, clusters, first_year, first_year, last_year, noise, persistence, seed);
}

void write_synthetic_world(const SyntheticWorld& world, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_panel(dir / "services.csv", world.services, PanelFormat::Long);
    save_panel(dir / "goods.csv", world.goods, PanelFormat::Long);
    std::ofstream out(dir / "gdp.csv", std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "gdp.csv").string());
    out << "country,activity,year,value\n";
    for (const auto& [country, years] : world.gdp.values)
        for (const auto& [year, value] : years)
            out << country << ',' << world.gdp.name << ',' << year << ',' << csv::format_number(value) << '\n';
}

}  // namespace efc

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "efc/analysis.hpp"
#include "efc/panel.hpp"
#include "efc/taxonomy.hpp"

namespace efc {

/// Parameters of the synthetic world economy. Countries belong to clusters
/// with shared export profiles; a slowly drifting capability decides which
/// activities a country can export (nested structure); size follows a
/// growth path; every cell carries persistent multiplicative noise.
struct SyntheticConfig {
    std::size_t countries = 160;
    std::size_t clusters = 8;
    int services_first_year = 1990;
    int services_last_year = 2018;
    int goods_first_year = 1996;
    int goods_last_year = 2018;
    /// Standard deviation of the log noise and its year-to-year persistence.
    double noise = 0.3;
    double persistence = 0.5;
    /// Share of service leaf series that start late, and share of remaining
    /// leaf cells blanked at random.
    double late_start_share = 0.3;
    double hole_share = 0.05;
    std::uint64_t seed = 0;
};

struct SyntheticWorld {
    ExportPanel services;  // complete-set leaves plus reported aggregates
    ExportPanel goods;
    IndicatorSeries gdp;
};

SyntheticWorld make_synthetic_world(const TaxonomyTree& services, const std::vector<std::string>& goods_codes,
                                    const SyntheticConfig& cfg);

/// Fully observed services panel (leaves plus aggregates) on the given
/// years, drawn from the same economy model.
ExportPanel make_synthetic_services(const TaxonomyTree& services, std::size_t countries, int first_year, int last_year,
                                    std::uint64_t seed, double noise = 0.3, double persistence = 0.5);

/// Writes services.csv, goods.csv and gdp.csv (long format) into `dir`.
void write_synthetic_world(const SyntheticWorld& world, const std::filesystem::path& dir);

}  // namespace efc

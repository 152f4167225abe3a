#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "efc/complexity.hpp"
#include "efc/taxonomy.hpp"

namespace efc {

struct AssistMatrix {
    Axis activities;
    int year = 0;
    int delta = 0;
    std::vector<double> cells;  // row-major activity x activity
    /// Activities with zero ubiquity at the base year (all-zero rows).
    std::vector<std::string> empty_rows;

    std::size_t size() const noexcept { return activities.size(); }
    double at(std::size_t a, std::size_t b) const { return cells[a * activities.size() + b]; }
};

/// B[a][a'] = sum_c m_ca(t) / d_a(t) * m_ca'(t+delta) / u_c(t+delta).
/// Countries with u_c = 0 contribute nothing; activities with d_a = 0 give
/// all-zero rows.
AssistMatrix assist_matrix(const CompetitivenessMatrix& base, const CompetitivenessMatrix& later);

/// Bipartite Configuration Model: independent cells with
/// p_ca = x_c y_a / (1 + x_c y_a) matching observed degrees on average.
struct BicmModel {
    Axis countries;
    Axis activities;
    std::vector<double> row_params;  // 0 for empty rows, +inf for full rows
    std::vector<double> col_params;
    std::vector<double> probabilities;  // row-major
    /// L-infinity error of the expected degrees.
    double residual = 0.0;
    std::size_t iterations = 0;

    std::size_t rows() const noexcept { return countries.size(); }
    std::size_t cols() const noexcept { return activities.size(); }
    double p(std::size_t c, std::size_t a) const { return probabilities[c * activities.size() + a]; }
    std::vector<double> expected_row_degrees() const;
    std::vector<double> expected_col_degrees() const;
};

inline constexpr double kDefaultBicmTol = 1e-8;

/// Rows and columns whose degree is forced (empty or full once the forced
/// cells of the other side are removed) are split off with p exactly 0 or 1.
/// Equal-degree rows (columns) share one parameter. The remainder is solved
/// by damped fixed-point iteration; if that stalls a Newton solve on the
/// log-parameters finishes the job.
BicmModel bicm_fit(const CompetitivenessMatrix& m, double fit_tol = kDefaultBicmTol, std::size_t max_iter = 10000);

/// One BINARY draw; cell = 1 with probability p.
CompetitivenessMatrix bicm_sample(const BicmModel& model, std::uint64_t seed);

struct ValidationOptions {
    std::size_t ensemble = 1000;
    /// Percentile of the null distribution the empirical weight must exceed.
    double percentile = 95.0;
    /// Compare against one threshold pooled over every link instead of a
    /// per-link threshold.
    bool global_threshold = false;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    double fit_tol = kDefaultBicmTol;

    void validate() const;
};

struct DeltaValidation {
    int delta = 0;
    std::vector<int> base_years;
    /// Row-major activity x activity; true where validated in every year pair.
    std::vector<std::uint8_t> validated;
};

/// Validation of one lag. `yearly` holds one BINARY matrix per year on shared
/// axes. A link survives a year pair iff its empirical weight is positive
/// and strictly exceeds the nearest-rank percentile of its null weights; the
/// result is the AND over all year pairs. Null matrices at t and t+delta are
/// drawn independently, replica r of pair (t, delta) from
/// derive_seed(seed, {delta, t, r, side}).
DeltaValidation validate_delta(const std::vector<CompetitivenessMatrix>& yearly, int delta, const ValidationOptions& opts);

struct ProgressionEdge {
    std::size_t source = 0;
    std::size_t target = 0;
    int weight = 0;
    int first_delta = 0;
    int last_delta = 0;
};

struct ProgressionNetwork {
    Axis activities;
    std::vector<ProgressionEdge> edges;  // ordered by (source, target)
    double percentile = 0.0;
    std::size_t ensemble = 0;
    int first_year = 0;
    int last_year = 0;
    int delta_max = 0;
    bool global_threshold = false;

    const ProgressionEdge* find(const std::string& source, const std::string& target) const;
};

/// Runs validate_delta for delta = 0..delta_max; edge weight is the number
/// of lags at which the link validated. Fits are shared across lags.
ProgressionNetwork progression_network(const std::vector<CompetitivenessMatrix>& yearly, int delta_max,
                                       const ValidationOptions& opts);

/// CSV `source,target,weight,first_delta,last_delta`.
void write_edges(std::ostream& out, const ProgressionNetwork& net);
/// CSV `activity,kind,layer`: service codes found in the taxonomy carry
/// their layer, everything else is a good with an empty layer.
void write_nodes(std::ostream& out, const Axis& activities, const TaxonomyTree* services);

}  // namespace efc

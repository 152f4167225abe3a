#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "efc/panel.hpp"

namespace efc {

enum class MatrixKind { Rca, MarketShare, Binary };
std::string_view to_string(MatrixKind kind);

/// Country x activity matrix for one year, row-major. MISSING exports enter
/// as 0 and are counted in missing_cells.
struct CompetitivenessMatrix {
    Axis countries;
    Axis activities;
    int year = 0;
    MatrixKind kind = MatrixKind::Rca;
    std::vector<double> cells;
    std::size_t missing_cells = 0;
    std::vector<std::string> zero_rows;
    std::vector<std::string> zero_cols;

    std::size_t rows() const noexcept { return countries.size(); }
    std::size_t cols() const noexcept { return activities.size(); }
    double at(std::size_t c, std::size_t a) const { return cells[c * activities.size() + a]; }
    double& at(std::size_t c, std::size_t a) { return cells[c * activities.size() + a]; }
};

CompetitivenessMatrix make_matrix(std::vector<std::string> countries, std::vector<std::string> activities,
                                  MatrixKind kind, std::vector<double> cells, int year = 0);

/// Balassa index (E_ca / sum_a E_ca) / (sum_c E_ca / sum_ca E_ca). Countries or
/// activities with zero total give all-zero rows or columns (flagged).
CompetitivenessMatrix rca(const ExportPanel& panel, int year);
/// E_ca / sum_c E_ca.
CompetitivenessMatrix market_share(const ExportPanel& panel, int year);
/// 1 where RCA >= threshold.
CompetitivenessMatrix binarize(const CompetitivenessMatrix& m, double threshold = 1.0);

/// RCA or Market Share for every year of the panel, stored as a panel so the
/// per-(country, activity) series can be smoothed.
ExportPanel competitiveness_panel(const ExportPanel& panel, MatrixKind kind);
/// One year of a panel produced by competitiveness_panel.
CompetitivenessMatrix slice(const ExportPanel& values, int year, MatrixKind kind);

struct ReducedMatrix {
    CompetitivenessMatrix matrix;
    std::vector<std::string> dropped_countries;
    std::vector<std::string> dropped_activities;
};

/// Removes all-zero rows and columns, repeating until none remain.
ReducedMatrix drop_empty(const CompetitivenessMatrix& m);

enum class FitnessVariant { Intensive, Extensive };
FitnessVariant parse_fitness_variant(const std::string& name);
std::string_view to_string(FitnessVariant v);

struct FitnessOptions {
    double tol = 1e-10;
    std::size_t max_iter = 1000;
    /// Starting complexities (normalised to mean 1); all ones when empty.
    std::vector<double> initial_q;
};

struct FitnessResult {
    Axis countries;
    Axis activities;
    int year = 0;
    FitnessVariant variant = FitnessVariant::Intensive;
    /// Floored at kFitnessFloor; mean 1 before flooring.
    std::vector<double> fitness;
    std::vector<double> complexity;
    /// Natural logarithms of the unfloored scores. Rankings use these, so
    /// scores far below the floor keep their order.
    std::vector<double> log_fitness;
    std::vector<double> log_complexity;
    std::size_t iterations = 0;
    bool converged = false;
    /// Max relative change of the last update.
    double residual = 0.0;
    std::vector<std::string> dropped_countries;
    std::vector<std::string> dropped_activities;
};

inline constexpr double kFitnessFloor = 1e-300;

/// Fitness-Complexity fixed point:
///   F~_c = sum_a m_ca Q_a,        F = F~ / <F~>
///   Q~_a = 1 / sum_c m_ca / F_c,  Q = Q~ / <Q~>
/// F of step n feeds Q of step n. Stops when the max relative change of
/// both vectors drops below tol. Reported values are floored at
/// kFitnessFloor; the iteration itself runs on logarithms.
/// BINARY input gives the intensive variant, MS the extensive one.
FitnessResult fitness_complexity(const CompetitivenessMatrix& m, const FitnessOptions& opts = {});

struct RankEntry {
    std::string label;
    double value = 0.0;
    std::size_t rank = 0;
    bool tied = false;
};

/// Ordinal ranks by value descending (rank 1 = largest). Equal values
/// (relative 1e-12) are ordered by label and flagged as tied.
std::vector<RankEntry> rank_descending(const std::vector<std::string>& labels, const std::vector<double>& values);

struct YearRanks {
    int year = 0;
    std::vector<RankEntry> entries;  // in activity-axis order
};

/// Complexity ranking per year (on the log scores); every result must share
/// one activity axis.
std::vector<YearRanks> rank_series(const std::vector<FitnessResult>& results);

struct MetricsConfig {
    FitnessVariant variant = FitnessVariant::Intensive;
    /// Smoothing of the RCA / MS series; std::nullopt disables it.
    std::optional<SmoothingConfig> smoothing = SmoothingConfig{};
    double threshold = 1.0;
    FitnessOptions fit;
    unsigned jobs = 1;
};

/// Per-year input matrices: smoothed RCA binarised (intensive) or smoothed
/// MS (extensive). Smoothing happens before binarisation.
std::vector<CompetitivenessMatrix> yearly_inputs(const ExportPanel& panel, const MetricsConfig& cfg);
std::vector<CompetitivenessMatrix> binary_matrices(const ExportPanel& panel, const std::optional<SmoothingConfig>& smoothing,
                                                   double threshold = 1.0);

/// fitness_complexity on each year after drop_empty.
std::vector<FitnessResult> fitness_series(const ExportPanel& panel, const MetricsConfig& cfg);

enum class RankedEntity { Country, Activity };

/// CSV `year,label,value,rank,variant,converged`.
void write_fitness_table(std::ostream& out, const std::vector<FitnessResult>& results, RankedEntity entity);

}  // namespace efc

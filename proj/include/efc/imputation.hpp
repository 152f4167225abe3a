#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "efc/panel.hpp"
#include "efc/taxonomy.hpp"

namespace efc {

enum class ImputeMethod { Interpolate, Knn, Forest };
enum class KnnWeighting { InverseDistance, Uniform };

ImputeMethod parse_impute_method(const std::string& name);
std::string_view to_string(ImputeMethod m);
KnnWeighting parse_knn_weighting(const std::string& name);

struct ImputerConfig {
    ImputeMethod method = ImputeMethod::Knn;
    std::size_t k = 5;
    KnnWeighting weighting = KnnWeighting::InverseDistance;
    /// log1p-transform similarity features before measuring distance.
    bool log_features = true;
    /// Upper-layer codes that describe an economy. Empty means every
    /// aggregate (non complete-set) node of the taxonomy found on the panel.
    std::vector<std::string> feature_codes;
    std::size_t trees = 100;
    std::size_t min_leaf = 5;
    bool bootstrap = true;
    std::uint64_t seed = 0;
    unsigned jobs = 1;

    void validate() const;
    /// Short label used in reports, e.g. "knn-5".
    std::string label() const;
};

struct ResidualCell {
    std::string country;
    std::string activity;
    int year = 0;
    std::string reason;
};

struct ImputationResult {
    ExportPanel panel;
    std::vector<ResidualCell> residuals;
    /// Free-form notes such as forest targets that fell back to interpolation.
    std::vector<std::string> flags;
    std::size_t imputed = 0;
    std::size_t clipped = 0;
};

/// Forward-only linear interpolation of every (country, activity) series.
/// Interior gaps are linear between the bracketing values, trailing gaps
/// repeat the last value, leading gaps stay MISSING.
ExportPanel interpolate_forward(const ExportPanel& panel);

/// k-nearest-neighbour reconstruction of complete-set cells. Rows are
/// (country, year) pairs pooled over all years; distances use the
/// missing-aware Euclidean metric on the feature codes; donors are rows
/// observed at the target cell; the estimate is the inverse-distance
/// weighted mean of the k nearest donors (ties broken by country, year).
ImputationResult knn_impute(const ExportPanel& panel, const TaxonomyTree& tree, const ImputerConfig& cfg);

/// Temporal random forest over every activity of the panel: one ensemble
/// per target activity, trained on (country, year) rows where the target is
/// present with the remaining activities as features.
ImputationResult forest_impute(const ExportPanel& panel, const ImputerConfig& cfg);

/// Applies the configured method to the complete-set codes of the panel;
/// other activities pass through unchanged.
ImputationResult impute(const ExportPanel& panel, const TaxonomyTree& tree, const ImputerConfig& cfg);

/// Missing-aware Euclidean distance: sqrt(total/observed * sum over
/// co-observed coordinates). Infinity when nothing is co-observed.
double nan_euclidean(std::span<const double> a, std::span<const double> b);

void write_residuals(std::ostream& out, const std::vector<ResidualCell>& residuals);

/// An imputer under evaluation: receives the masked panel, returns the
/// reconstruction on the same axes.
struct NamedImputer {
    std::string name;
    std::function<ExportPanel(const ExportPanel&)> run;
};

NamedImputer make_imputer(const TaxonomyTree& tree, const ImputerConfig& cfg);

struct MaeRow {
    std::string method;
    std::size_t replica = 0;
    std::string layer;  // "layer:N" or "all"
    double mae = 0.0;   // NaN when the replica hid no cell of this layer
    std::size_t scored = 0;
    std::size_t unfilled = 0;
};

struct MaeAggregate {
    std::string method;
    std::string layer;
    double mean_mae = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

struct MaeReport {
    std::size_t replicas = 0;
    double fraction = 0.0;
    std::vector<MaeRow> rows;
    std::vector<MaeAggregate> aggregates;

    const MaeAggregate* find(const std::string& method, const std::string& layer) const;
};

inline constexpr double kDefaultMaskFraction = 0.10;

/// Masked-replica benchmark. Series that are not fully observed are dropped
/// (set MISSING), then each replica hides `fraction` of the remaining
/// complete-set cells, runs every imputer on the same masked panel and
/// scores the absolute error on hidden cells. Cells an imputer leaves
/// MISSING are counted as unfilled, not scored. Replica r uses the seed
/// derive_seed(seed, {r}).
MaeReport evaluate_mae(const ExportPanel& panel, const TaxonomyTree& tree, const std::vector<NamedImputer>& methods,
                       std::size_t replicas, double fraction, std::uint64_t seed, unsigned jobs = 1);
MaeReport evaluate_mae(const ExportPanel& panel, const TaxonomyTree& tree, const std::vector<ImputerConfig>& methods,
                       std::size_t replicas, double fraction, std::uint64_t seed, unsigned jobs = 1);

void write_mae_rows(std::ostream& out, const MaeReport& report);
void write_mae_aggregates(std::ostream& out, const MaeReport& report);

}  // namespace efc

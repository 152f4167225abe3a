#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace efc {

/// Cell marker for an absent observation. MISSING is never the same as 0.0:
/// a recorded zero is a valid export value.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double value) noexcept { return std::isnan(value); }

/// Label list with O(1) reverse lookup. Labels are unique.
class Axis {
public:
    Axis() = default;
    explicit Axis(std::vector<std::string> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    const std::string& operator[](std::size_t i) const { return labels_[i]; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::optional<std::size_t> find(const std::string& label) const;
    bool contains(const std::string& label) const { return find(label).has_value(); }

    bool operator==(const Axis& other) const { return labels_ == other.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Country x activity x year table of non-negative values in constant
/// dollars. The year axis is always a contiguous ascending range. Cells of a
/// (country, activity) pair are stored contiguously over years.
class ExportPanel {
public:
    ExportPanel() = default;
    /// All cells start MISSING.
    ExportPanel(Axis countries, Axis activities, int first_year, int last_year);
    ExportPanel(std::vector<std::string> countries, std::vector<std::string> activities, int first_year,
                int last_year);

    const Axis& countries() const noexcept { return countries_; }
    const Axis& activities() const noexcept { return activities_; }
    int first_year() const noexcept { return first_year_; }
    int last_year() const noexcept { return first_year_ + static_cast<int>(n_years_) - 1; }
    std::vector<int> years() const;
    std::optional<std::size_t> year_index(int year) const;

    std::size_t n_countries() const noexcept { return countries_.size(); }
    std::size_t n_activities() const noexcept { return activities_.size(); }
    std::size_t n_years() const noexcept { return n_years_; }
    std::size_t n_cells() const noexcept { return values_.size(); }

    std::size_t flat_index(std::size_t c, std::size_t a, std::size_t t) const noexcept {
        return (c * activities_.size() + a) * n_years_ + t;
    }

    /// Raw cell, kMissing when absent.
    double at(std::size_t c, std::size_t a, std::size_t t) const { return values_[flat_index(c, a, t)]; }
    std::optional<double> value(std::size_t c, std::size_t a, std::size_t t) const;
    bool missing(std::size_t c, std::size_t a, std::size_t t) const { return is_missing(at(c, a, t)); }

    /// Stores a present value; throws a domain error for negative or
    /// non-finite input. Passing kMissing clears the cell.
    void set(std::size_t c, std::size_t a, std::size_t t, double value);
    void set_missing(std::size_t c, std::size_t a, std::size_t t) { values_[flat_index(c, a, t)] = kMissing; }

    std::span<const double> series(std::size_t c, std::size_t a) const;
    std::span<double> series(std::size_t c, std::size_t a);

    std::span<const double> cells() const noexcept { return values_; }

    std::size_t count_missing() const;
    std::size_t count_present() const { return n_cells() - count_missing(); }

    bool same_axes(const ExportPanel& other) const;
    /// Same axes and bit-identical cells (MISSING equal to MISSING).
    bool identical(const ExportPanel& other) const;

private:
    Axis countries_;
    Axis activities_;
    int first_year_ = 0;
    std::size_t n_years_ = 0;
    std::vector<double> values_;
};

enum class PanelFormat { Long, Matrix };

PanelFormat parse_panel_format(const std::string& name);

/// Reads a panel. Long format: header country,activity,year,value with an
/// empty value meaning MISSING. Matrix format: first row holds the corner
/// label then activity codes; each following row starts with a
/// "COUNTRY:YEAR" label and empty cells are MISSING. Axes come back sorted;
/// triples absent from the file are MISSING.
ExportPanel load_panel(const std::filesystem::path& path, PanelFormat format);
ExportPanel read_panel(std::istream& in, PanelFormat format, const std::string& source_name = "<stream>");

void write_panel(std::ostream& out, const ExportPanel& panel, PanelFormat format);
void save_panel(const std::filesystem::path& path, const ExportPanel& panel, PanelFormat format);

/// Goods then services on the activity axis, countries and years
/// intersected. Throws on shared activity codes or an empty intersection.
ExportPanel merge_universal(const ExportPanel& goods, const ExportPanel& services);

/// Sub-panel over the listed activity codes, in the listed order.
ExportPanel select_activities(const ExportPanel& panel, const std::vector<std::string>& codes);
ExportPanel select_years(const ExportPanel& panel, int first_year, int last_year);

struct SmoothingConfig {
    double half_life = 3.0;

    /// 1 - 2^(-1/half_life)
    double alpha() const;
    void validate() const;
};

/// Exponential smoothing of every (country, activity) series. The first
/// present value seeds the recursion; MISSING cells stay MISSING and leave
/// the state untouched.
ExportPanel exp_smooth(const ExportPanel& panel, const SmoothingConfig& cfg);
std::vector<double> exp_smooth_series(std::span<const double> series, const SmoothingConfig& cfg);

/// Cells hidden by mask_random.
class PanelMask {
public:
    PanelMask() = default;
    explicit PanelMask(std::size_t n_cells) : hidden_(n_cells, 0) {}

    bool hidden(std::size_t flat) const { return hidden_[flat] != 0; }
    void hide(std::size_t flat);
    std::size_t count() const noexcept { return indices_.size(); }
    /// Flat indices of hidden cells, ascending.
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    std::size_t n_cells() const noexcept { return hidden_.size(); }

private:
    std::vector<std::uint8_t> hidden_;
    std::vector<std::size_t> indices_;
};

struct MaskedPanel {
    ExportPanel panel;
    PanelMask mask;
};

/// Hides round(fraction * present) cells chosen uniformly without
/// replacement. Deterministic given the seed.
MaskedPanel mask_random(const ExportPanel& panel, double fraction, std::uint64_t seed);

/// Same, restricted to present cells whose activity is flagged eligible.
MaskedPanel mask_random(const ExportPanel& panel, double fraction, std::uint64_t seed,
                        const std::vector<bool>& eligible_activity);

}  // namespace efc

#include "efc/panel.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "efc/csv.hpp"
#include "efc/error.hpp"
#include "efc/rng.hpp"

namespace efc {

Axis::Axis(std::vector<std::string> labels) : labels_(std::move(labels)) {
    index_.reserve(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (!index_.emplace(labels_[i], i).second)
            throw Error(ErrorKind::Structure, "duplicate axis label '" + labels_[i] + "'");
    }
}

std::optional<std::size_t> Axis::find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

ExportPanel::ExportPanel(Axis countries, Axis activities, int first_year, int last_year)
    : countries_(std::move(countries)), activities_(std::move(activities)), first_year_(first_year) {
    if (last_year < first_year)
        throw Error(ErrorKind::Range, "year range " + std::to_string(first_year) + "-" + std::to_string(last_year) +
                                          " is empty");
    n_years_ = static_cast<std::size_t>(last_year - first_year + 1);
    values_.assign(countries_.size() * activities_.size() * n_years_, kMissing);
}

ExportPanel::ExportPanel(std::vector<std::string> countries, std::vector<std::string> activities, int first_year,
                         int last_year)
    : ExportPanel(Axis(std::move(countries)), Axis(std::move(activities)), first_year, last_year) {}

std::vector<int> ExportPanel::years() const {
    std::vector<int> out(n_years_);
    std::iota(out.begin(), out.end(), first_year_);
    return out;
}

std::optional<std::size_t> ExportPanel::year_index(int year) const {
    if (year < first_year_ || year > last_year()) return std::nullopt;
    return static_cast<std::size_t>(year - first_year_);
}

std::optional<double> ExportPanel::value(std::size_t c, std::size_t a, std::size_t t) const {
    const double v = at(c, a, t);
    if (is_missing(v)) return std::nullopt;
    return v;
}

void ExportPanel::set(std::size_t c, std::size_t a, std::size_t t, double value) {
    if (!is_missing(value) && (!std::isfinite(value) || value < 0.0))
        throw Error(ErrorKind::Domain, "export value must be finite and non-negative, got " + csv::format_number(value));
    values_[flat_index(c, a, t)] = value;
}

std::span<const double> ExportPanel::series(std::size_t c, std::size_t a) const {
    return std::span<const double>(values_).subspan(flat_index(c, a, 0), n_years_);
}

std::span<double> ExportPanel::series(std::size_t c, std::size_t a) {
    return std::span<double>(values_).subspan(flat_index(c, a, 0), n_years_);
}

std::size_t ExportPanel::count_missing() const {
    return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](double v) { return is_missing(v); }));
}

bool ExportPanel::same_axes(const ExportPanel& other) const {
    return countries_ == other.countries_ && activities_ == other.activities_ && first_year_ == other.first_year_ &&
           n_years_ == other.n_years_;
}

bool ExportPanel::identical(const ExportPanel& other) const {
    if (!same_axes(other)) return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const double a = values_[i];
        const double b = other.values_[i];
        if (is_missing(a) != is_missing(b)) return false;
        if (!is_missing(a) && a != b) return false;
    }
    return true;
}

PanelFormat parse_panel_format(const std::string& name) {
    if (name == "long") return PanelFormat::Long;
    if (name == "matrix") return PanelFormat::Matrix;
    throw Error(ErrorKind::Config, "unknown panel format '" + name + "' (expected long or matrix)");
}

namespace {

struct Triple {
    std::string country;
    std::string activity;
    int year;
    double value;
    std::size_t line;
};

std::string at_line(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

double parse_cell(const std::string& field, const std::string& where) {
    const std::string t = csv::trim(field);
    if (t.empty()) return kMissing;
    auto v = csv::parse_number(t);
    if (!v) throw Error(ErrorKind::Parse, where + ": cannot parse value '" + t + "'");
    if (!std::isfinite(*v)) throw Error(ErrorKind::Domain, where + ": non-finite value '" + t + "'");
    if (*v < 0.0) throw Error(ErrorKind::Domain, where + ": negative value '" + t + "'");
    return *v;
}

int parse_year(const std::string& field, const std::string& where) {
    auto y = csv::parse_integer(field);
    if (!y || *y < -100000 || *y > 100000) throw Error(ErrorKind::Parse, where + ": cannot parse year '" + field + "'");
    return static_cast<int>(*y);
}

ExportPanel assemble(std::vector<Triple>& triples, const std::string& source, std::set<std::string> countries,
                     std::set<std::string> activities) {
    for (const auto& tr : triples) {
        countries.insert(tr.country);
        activities.insert(tr.activity);
    }
    if (triples.empty()) throw Error(ErrorKind::Parse, source + ": no data rows");
    auto [ymin, ymax] = std::minmax_element(triples.begin(), triples.end(),
                                            [](const Triple& a, const Triple& b) { return a.year < b.year; });
    ExportPanel panel(std::vector<std::string>(countries.begin(), countries.end()),
                      std::vector<std::string>(activities.begin(), activities.end()), ymin->year, ymax->year);
    std::vector<std::size_t> origin(panel.n_cells(), 0);
    for (const auto& tr : triples) {
        const std::size_t c = *panel.countries().find(tr.country);
        const std::size_t a = *panel.activities().find(tr.activity);
        const std::size_t t = *panel.year_index(tr.year);
        const std::size_t flat = panel.flat_index(c, a, t);
        if (is_missing(tr.value)) continue;
        const double existing = panel.at(c, a, t);
        if (!is_missing(existing)) {
            if (existing != tr.value)
                throw Error(ErrorKind::Conflict, at_line(source, tr.line) + ": conflicting duplicate of (" + tr.country +
                                                     "," + tr.activity + "," + std::to_string(tr.year) +
                                                     ") first given at line " + std::to_string(origin[flat]));
            continue;
        }
        panel.set(c, a, t, tr.value);
        origin[flat] = tr.line;
    }
    return panel;
}

ExportPanel read_long(const csv::Table& table, const std::string& source) {
    const std::vector<std::string> expected{"country", "activity", "year", "value"};
    if (table.header != expected)
        throw Error(ErrorKind::Parse, at_line(source, 1) + ": expected header country,activity,year,value");
    std::vector<Triple> triples;
    triples.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = at_line(source, table.line_numbers[r]);
        if (row.size() != 4)
            throw Error(ErrorKind::Parse, where + ": expected 4 fields, found " + std::to_string(row.size()));
        Triple tr{csv::trim(row[0]), csv::trim(row[1]), parse_year(row[2], where), parse_cell(row[3], where),
                  table.line_numbers[r]};
        if (tr.country.empty() || tr.activity.empty())
            throw Error(ErrorKind::Parse, where + ": empty country or activity code");
        triples.push_back(std::move(tr));
    }
    return assemble(triples, source, {}, {});
}

ExportPanel read_matrix(const csv::Table& table, const std::string& source) {
    if (table.header.size() < 2) throw Error(ErrorKind::Parse, at_line(source, 1) + ": matrix header has no columns");
    std::vector<std::string> columns(table.header.begin() + 1, table.header.end());
    for (const auto& col : columns)
        if (col.empty()) throw Error(ErrorKind::Parse, at_line(source, 1) + ": empty column label");
    std::vector<Triple> triples;
    std::set<std::string> seen_rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = at_line(source, table.line_numbers[r]);
        if (row.size() != table.header.size())
            throw Error(ErrorKind::Parse, where + ": expected " + std::to_string(table.header.size()) + " fields, found " +
                                              std::to_string(row.size()));
        const std::string label = csv::trim(row[0]);
        const auto colon = label.rfind(':');
        if (colon == std::string::npos || colon == 0)
            throw Error(ErrorKind::Parse, where + ": row label '" + label + "' is not COUNTRY:YEAR");
        const std::string country = label.substr(0, colon);
        const int year = parse_year(label.substr(colon + 1), where);
        for (std::size_t j = 0; j < columns.size(); ++j)
            triples.push_back({country, columns[j], year, parse_cell(row[j + 1], where), table.line_numbers[r]});
    }
    return assemble(triples, source, {}, std::set<std::string>(columns.begin(), columns.end()));
}

}  // namespace

ExportPanel read_panel(std::istream& in, PanelFormat format, const std::string& source_name) {
    const csv::Table table = csv::read(in, source_name);
    return format == PanelFormat::Long ? read_long(table, source_name) : read_matrix(table, source_name);
}

ExportPanel load_panel(const std::filesystem::path& path, PanelFormat format) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read_panel(in, format, path.string());
}

void write_panel(std::ostream& out, const ExportPanel& panel, PanelFormat format) {
    const auto years = panel.years();
    auto cell = [](double v) { return is_missing(v) ? std::string() : csv::format_number(v); };
    if (format == PanelFormat::Long) {
        out << "country,activity,year,value\n";
        for (std::size_t c = 0; c < panel.n_countries(); ++c)
            for (std::size_t a = 0; a < panel.n_activities(); ++a)
                for (std::size_t t = 0; t < panel.n_years(); ++t)
                    csv::write_row(out, {panel.countries()[c], panel.activities()[a], std::to_string(years[t]),
                                         cell(panel.at(c, a, t))});
        return;
    }
    csv::Row header{"country:year"};
    header.insert(header.end(), panel.activities().labels().begin(), panel.activities().labels().end());
    csv::write_row(out, header);
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t t = 0; t < panel.n_years(); ++t) {
            csv::Row row{panel.countries()[c] + ":" + std::to_string(years[t])};
            for (std::size_t a = 0; a < panel.n_activities(); ++a) row.push_back(cell(panel.at(c, a, t)));
            csv::write_row(out, row);
        }
}

void save_panel(const std::filesystem::path& path, const ExportPanel& panel, PanelFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    write_panel(out, panel, format);
}

ExportPanel merge_universal(const ExportPanel& goods, const ExportPanel& services) {
    for (const auto& code : goods.activities().labels())
        if (services.activities().contains(code))
            throw Error(ErrorKind::AxisCollision, "activity code '" + code + "' appears in both goods and services");
    std::vector<std::string> countries;
    for (const auto& c : goods.countries().labels())
        if (services.countries().contains(c)) countries.push_back(c);
    if (countries.empty()) throw Error(ErrorKind::EmptyIntersection, "goods and services share no country");
    const int first = std::max(goods.first_year(), services.first_year());
    const int last = std::min(goods.last_year(), services.last_year());
    if (first > last) throw Error(ErrorKind::EmptyIntersection, "goods and services share no year");

    std::vector<std::string> activities = goods.activities().labels();
    activities.insert(activities.end(), services.activities().labels().begin(), services.activities().labels().end());
    ExportPanel merged(countries, activities, first, last);
    const std::size_t n_goods = goods.n_activities();
    for (std::size_t c = 0; c < countries.size(); ++c) {
        const std::size_t gc = *goods.countries().find(countries[c]);
        const std::size_t sc = *services.countries().find(countries[c]);
        for (std::size_t t = 0; t < merged.n_years(); ++t) {
            const int year = first + static_cast<int>(t);
            const std::size_t gt = *goods.year_index(year);
            const std::size_t st = *services.year_index(year);
            for (std::size_t a = 0; a < n_goods; ++a) merged.set(c, a, t, goods.at(gc, a, gt));
            for (std::size_t a = 0; a < services.n_activities(); ++a)
                merged.set(c, n_goods + a, t, services.at(sc, a, st));
        }
    }
    return merged;
}

ExportPanel select_activities(const ExportPanel& panel, const std::vector<std::string>& codes) {
    std::vector<std::size_t> source;
    source.reserve(codes.size());
    for (const auto& code : codes) {
        auto idx = panel.activities().find(code);
        if (!idx) throw Error(ErrorKind::Coverage, "activity '" + code + "' not in panel");
        source.push_back(*idx);
    }
    ExportPanel out(panel.countries(), Axis(codes), panel.first_year(), panel.last_year());
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t a = 0; a < codes.size(); ++a) {
            auto from = panel.series(c, source[a]);
            std::copy(from.begin(), from.end(), out.series(c, a).begin());
        }
    return out;
}

ExportPanel select_years(const ExportPanel& panel, int first_year, int last_year) {
    const int first = std::max(first_year, panel.first_year());
    const int last = std::min(last_year, panel.last_year());
    if (first > last) throw Error(ErrorKind::Range, "requested years do not overlap the panel");
    ExportPanel out(panel.countries(), panel.activities(), first, last);
    const std::size_t offset = *panel.year_index(first);
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t a = 0; a < panel.n_activities(); ++a) {
            auto from = panel.series(c, a).subspan(offset, out.n_years());
            std::copy(from.begin(), from.end(), out.series(c, a).begin());
        }
    return out;
}

double SmoothingConfig::alpha() const {
    validate();
    return 1.0 - std::exp2(-1.0 / half_life);
}

void SmoothingConfig::validate() const {
    if (!(half_life > 0.0) || !std::isfinite(half_life))
        throw Error(ErrorKind::Config, "half-life must be positive, got " + csv::format_number(half_life));
}

std::vector<double> exp_smooth_series(std::span<const double> series, const SmoothingConfig& cfg) {
    const double alpha = cfg.alpha();
    std::vector<double> out(series.begin(), series.end());
    bool started = false;
    double state = 0.0;
    for (double& x : out) {
        if (is_missing(x)) continue;
        state = started ? alpha * x + (1.0 - alpha) * state : x;
        started = true;
        x = state;
    }
    return out;
}

ExportPanel exp_smooth(const ExportPanel& panel, const SmoothingConfig& cfg) {
    cfg.validate();
    ExportPanel out = panel;
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t a = 0; a < panel.n_activities(); ++a) {
            const auto smoothed = exp_smooth_series(panel.series(c, a), cfg);
            std::copy(smoothed.begin(), smoothed.end(), out.series(c, a).begin());
        }
    return out;
}

void PanelMask::hide(std::size_t flat) {
    if (hidden_[flat]) return;
    hidden_[flat] = 1;
    indices_.insert(std::lower_bound(indices_.begin(), indices_.end(), flat), flat);
}

MaskedPanel mask_random(const ExportPanel& panel, double fraction, std::uint64_t seed) {
    return mask_random(panel, fraction, seed, std::vector<bool>(panel.n_activities(), true));
}

MaskedPanel mask_random(const ExportPanel& panel, double fraction, std::uint64_t seed,
                        const std::vector<bool>& eligible_activity) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw Error(ErrorKind::Config, "mask fraction must lie in (0,1), got " + csv::format_number(fraction));
    if (eligible_activity.size() != panel.n_activities())
        throw Error(ErrorKind::Alignment, "eligibility flags do not match the activity axis");
    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t a = 0; a < panel.n_activities(); ++a) {
            if (!eligible_activity[a]) continue;
            for (std::size_t t = 0; t < panel.n_years(); ++t)
                if (!panel.missing(c, a, t)) candidates.push_back(panel.flat_index(c, a, t));
        }
    if (candidates.empty()) throw Error(ErrorKind::EvaluationSet, "panel has no present cell to mask");
    const auto n_hide = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(candidates.size())));

    // Partial Fisher-Yates: the first n_hide slots become a uniform sample.
    Rng rng = make_rng(seed);
    for (std::size_t i = 0; i < n_hide; ++i) {
        const std::size_t j = i + uniform_below(rng, candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
    }
    std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n_hide));
    std::sort(chosen.begin(), chosen.end());

    MaskedPanel result{panel, PanelMask(panel.n_cells())};
    for (std::size_t flat : chosen) result.mask.hide(flat);
    const std::size_t n_years = panel.n_years();
    const std::size_t n_act = panel.n_activities();
    for (std::size_t flat : chosen) {
        const std::size_t t = flat % n_years;
        const std::size_t a = (flat / n_years) % n_act;
        const std::size_t c = flat / (n_years * n_act);
        result.panel.set_missing(c, a, t);
    }
    return result;
}

}  // namespace efc

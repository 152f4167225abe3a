#include "efc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "efc/csv.hpp"
#include "efc/error.hpp"
#include "efc/parallel.hpp"
#include "efc/rng.hpp"
#include "efc/stats.hpp"

namespace efc {

void IndicatorSeries::set(const std::string& country, int year, double value) {
    if (!std::isfinite(value))
        throw Error(ErrorKind::Domain, name + ": non-finite value for " + country + " in " + std::to_string(year));
    auto [it, inserted] = values[country].emplace(year, value);
    if (!inserted && it->second != value)
        throw Error(ErrorKind::Conflict, name + ": conflicting values for " + country + " in " + std::to_string(year));
}

std::vector<std::string> IndicatorSeries::countries() const {
    std::vector<std::string> out;
    for (const auto& [c, _] : values) out.push_back(c);
    return out;
}

IndicatorSeries read_indicator(std::istream& in, const std::string& source_name, const std::string& indicator) {
    const csv::Table table = csv::read(in, source_name);
    const auto& h = table.header;
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(h.begin(), h.end(), name);
        if (it == h.end()) return std::nullopt;
        return static_cast<std::size_t>(it - h.begin());
    };
    auto where = [&](std::size_t i) { return source_name + ":" + std::to_string(table.line_numbers[i]); };

    IndicatorSeries series;
    if (h == std::vector<std::string>{"country", "activity", "year", "value"}) {
        std::string wanted = indicator;
        if (wanted.empty()) {
            std::set<std::string> names;
            for (const auto& row : table.rows) names.insert(row.at(1));
            if (names.size() != 1)
                throw Error(ErrorKind::Config, source_name + " holds " + std::to_string(names.size()) +
                                                   " indicators; name the one to use");
            wanted = *names.begin();
        }
        series.name = wanted;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const auto& row = table.rows[i];
            if (row.size() != 4) throw Error(ErrorKind::Parse, where(i) + ": expected 4 fields");
            if (row[1] != wanted || csv::trim(row[3]).empty()) continue;
            const auto year = csv::parse_integer(row[2]);
            const auto value = csv::parse_number(row[3]);
            if (!year || !value) throw Error(ErrorKind::Parse, where(i) + ": malformed year or value");
            series.set(row[0], static_cast<int>(*year), *value);
        }
    } else if (column("year") && column("label") && column("value")) {
        const std::size_t cy = *column("year"), cl = *column("label"), cv = *column("value");
        const auto variant = column("variant");
        series.name = indicator.empty() ? "fitness" : indicator;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const auto& row = table.rows[i];
            if (row.size() != h.size()) throw Error(ErrorKind::Parse, where(i) + ": wrong field count");
            if (!indicator.empty() && variant && row[*variant] != indicator) continue;
            if (csv::trim(row[cv]).empty()) continue;
            const auto year = csv::parse_integer(row[cy]);
            const auto value = csv::parse_number(row[cv]);
            if (!year || !value) throw Error(ErrorKind::Parse, where(i) + ": malformed year or value");
            series.set(row[cl], static_cast<int>(*year), *value);
        }
    } else {
        throw Error(ErrorKind::Parse, source_name + ": expected a long panel or a fitness table header");
    }
    if (series.values.empty()) throw Error(ErrorKind::Coverage, source_name + ": no observation for '" + series.name + "'");
    return series;
}

IndicatorSeries load_indicator(const std::filesystem::path& path, const std::string& indicator) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read_indicator(in, path.string(), indicator);
}

CorrelationMode parse_correlation_mode(const std::string& name) {
    if (name == "pooled") return CorrelationMode::Pooled;
    if (name == "per-country") return CorrelationMode::PerCountry;
    throw Error(ErrorKind::Config, "unknown correlation mode '" + name + "' (expected pooled or per-country)");
}

std::string_view to_string(CorrelationMode m) { return m == CorrelationMode::Pooled ? "pooled" : "per-country"; }

namespace {

using YearMap = std::map<int, double>;

struct Member {
    const std::string* country;
    const YearMap* x;
    const YearMap* y;
};

// Standardises v in place; false when the segment has zero variance.
bool standardise(std::vector<double>& v) {
    const double m = stats::mean(v);
    double ss = 0.0;
    for (double e : v) ss += (e - m) * (e - m);
    if (!(ss > 0.0)) return false;
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    for (double& e : v) e = (e - m) / sd;
    return true;
}

LagCorrelation correlate_lag(const std::vector<Member>& members, int lag, CorrelationMode mode) {
    LagCorrelation out;
    out.lag = lag;
    std::vector<double> px, py;
    double sum_r = 0.0;
    std::size_t n_r = 0;
    std::set<std::string> excluded;
    for (const auto& m : members) {
        std::vector<double> xs, ys;
        for (const auto& [t, v] : *m.x) {
            auto it = m.y->find(t + lag);
            if (it == m.y->end()) continue;
            xs.push_back(v);
            ys.push_back(it->second);
        }
        if (xs.empty()) continue;
        if (mode == CorrelationMode::Pooled) {
            if (!standardise(xs) || !standardise(ys)) {
                excluded.insert(*m.country);
                continue;
            }
            px.insert(px.end(), xs.begin(), xs.end());
            py.insert(py.end(), ys.begin(), ys.end());
        } else {
            if (xs.size() < 3) continue;
            const double r = stats::pearson(xs, ys);
            if (std::isnan(r)) {
                excluded.insert(*m.country);
                continue;
            }
            sum_r += r;
            ++n_r;
            out.pairs += xs.size();
        }
    }
    out.excluded.assign(excluded.begin(), excluded.end());
    if (mode == CorrelationMode::Pooled) {
        out.pairs = px.size();
        out.correlation = out.pairs >= 3 ? stats::pearson(px, py) : std::numeric_limits<double>::quiet_NaN();
    } else {
        out.correlation = n_r > 0 && out.pairs >= 3 ? sum_r / static_cast<double>(n_r) : std::numeric_limits<double>::quiet_NaN();
    }
    out.skipped = std::isnan(out.correlation);
    return out;
}

std::vector<Member> shared_members(const IndicatorSeries& x, const IndicatorSeries& y) {
    std::vector<Member> out;
    for (const auto& [country, xs] : x.values) {
        auto it = y.values.find(country);
        if (it != y.values.end()) out.push_back({&country, &xs, &it->second});
    }
    return out;
}

std::vector<LagCorrelation> correlate(const std::vector<Member>& members, const std::vector<int>& lags, CorrelationMode mode) {
    if (lags.empty()) throw Error(ErrorKind::Config, "no lag requested");
    std::vector<LagCorrelation> out;
    for (int lag : lags) out.push_back(correlate_lag(members, lag, mode));
    return out;
}

}  // namespace

std::vector<LagCorrelation> lagged_correlation(const IndicatorSeries& x, const IndicatorSeries& y,
                                               const std::vector<int>& lags, CorrelationMode mode) {
    return correlate(shared_members(x, y), lags, mode);
}

std::vector<BandRow> bootstrap_band(const IndicatorSeries& x, const IndicatorSeries& y, const std::vector<int>& lags,
                                    const BandOptions& opts) {
    if (opts.replicas < 50)
        throw Error(ErrorKind::Config, "bootstrap needs at least 50 replicas, got " + std::to_string(opts.replicas));
    if (!(opts.lower >= 0.0 && opts.lower <= opts.upper && opts.upper <= 1.0))
        throw Error(ErrorKind::Config, "band quantiles must satisfy 0 <= lower <= upper <= 1");
    const auto members = shared_members(x, y);
    if (members.size() < 5)
        throw Error(ErrorKind::Coverage,
                    "bootstrap needs at least 5 shared countries, got " + std::to_string(members.size()));

    const auto point = correlate(members, lags, opts.mode);
    std::vector<std::vector<double>> per_replica(opts.replicas);
    parallel_for(opts.replicas, opts.jobs, [&](std::size_t r) {
        Rng rng = make_rng(derive_seed(opts.seed, {r}));
        std::vector<Member> sample;
        sample.reserve(members.size());
        for (std::size_t i = 0; i < members.size(); ++i) sample.push_back(members[uniform_below(rng, members.size())]);
        for (const auto& row : correlate(sample, lags, opts.mode)) per_replica[r].push_back(row.correlation);
    });

    std::vector<BandRow> out;
    for (std::size_t l = 0; l < lags.size(); ++l) {
        std::vector<double> values;
        for (const auto& rep : per_replica) values.push_back(rep[l]);
        out.push_back({point[l], stats::quantile(values, opts.lower), stats::quantile(values, opts.upper)});
    }
    return out;
}

std::vector<int> parse_lags(const std::string& text) {
    auto number = [&](const std::string& s) {
        const auto v = csv::parse_integer(csv::trim(s));
        if (!v) throw Error(ErrorKind::Config, "bad lag '" + s + "' in '" + text + "'");
        return static_cast<int>(*v);
    };
    std::vector<int> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (std::size_t pos; (pos = text.find(':', start)) != std::string::npos; start = pos + 1)
            parts.push_back(text.substr(start, pos - start));
        parts.push_back(text.substr(start));
        if (parts.size() > 3) throw Error(ErrorKind::Config, "bad lag range '" + text + "'");
        const int first = number(parts[0]);
        const int last = number(parts[1]);
        const int step = parts.size() == 3 ? number(parts[2]) : 1;
        if (step <= 0 || last < first) throw Error(ErrorKind::Config, "bad lag range '" + text + "'");
        for (int l = first; l <= last; l += step) out.push_back(l);
    } else {
        std::size_t start = 0;
        for (std::size_t pos; (pos = text.find(',', start)) != std::string::npos; start = pos + 1)
            out.push_back(number(text.substr(start, pos - start)));
        out.push_back(number(text.substr(start)));
    }
    std::set<int> seen;
    for (int l : out)
        if (!seen.insert(l).second) throw Error(ErrorKind::Config, "lag " + std::to_string(l) + " listed twice");
    return out;
}

void write_correlations(std::ostream& out, const std::vector<BandRow>& rows, CorrelationMode mode) {
    auto num = [](double v) { return std::isnan(v) ? std::string() : csv::format_number(v); };
    out << "lag,correlation,pairs,q25,q75,mode\n";
    for (const auto& r : rows)
        csv::write_row(out, {std::to_string(r.point.lag), num(r.point.correlation), std::to_string(r.point.pairs),
                             num(r.lower), num(r.upper), std::string(to_string(mode))});
}

}  // namespace efc

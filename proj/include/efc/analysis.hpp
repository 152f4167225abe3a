#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace efc {

/// One indicator per country as a year -> value map. Values are finite.
struct IndicatorSeries {
    std::string name;
    std::map<std::string, std::map<int, double>> values;

    void set(const std::string& country, int year, double value);
    std::vector<std::string> countries() const;
};

/// Reads either a long panel CSV (`country,activity,year,value`, keeping the
/// rows whose activity equals `indicator`, or the only activity present when
/// `indicator` is empty) or a fitness table (`year,label,value,...`, optionally
/// filtered on its variant column). Empty values are skipped.
IndicatorSeries read_indicator(std::istream& in, const std::string& source_name, const std::string& indicator = {});
IndicatorSeries load_indicator(const std::filesystem::path& path, const std::string& indicator = {});

enum class CorrelationMode { Pooled, PerCountry };
CorrelationMode parse_correlation_mode(const std::string& name);
std::string_view to_string(CorrelationMode m);

struct LagCorrelation {
    int lag = 0;
    double correlation = 0.0;  // NaN when the lag was skipped
    std::size_t pairs = 0;
    bool skipped = false;
    /// Countries dropped at this lag because a segment had zero variance.
    std::vector<std::string> excluded;
};

/// Pearson coefficient between x_c(t) and y_c(t + lag). Pooled mode
/// standardises each country's overlapping segment and pools the pairs;
/// per-country mode averages the per-country coefficients. A lag with fewer
/// than 3 usable pairs is skipped.
std::vector<LagCorrelation> lagged_correlation(const IndicatorSeries& x, const IndicatorSeries& y,
                                               const std::vector<int>& lags, CorrelationMode mode = CorrelationMode::Pooled);

struct BandOptions {
    std::size_t replicas = 200;
    double lower = 0.25;
    double upper = 0.75;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    CorrelationMode mode = CorrelationMode::Pooled;
};

struct BandRow {
    LagCorrelation point;
    double lower = 0.0;
    double upper = 0.0;
};

/// Country bootstrap: every replica resamples the shared countries with
/// replacement (replica r from derive_seed(seed, {r})) and recomputes the
/// lagged correlation; the band holds the requested quantiles per lag.
std::vector<BandRow> bootstrap_band(const IndicatorSeries& x, const IndicatorSeries& y, const std::vector<int>& lags,
                                    const BandOptions& opts);

/// Parses "0:20" (inclusive range), "0:20:5" (with step) or "0,5,10".
std::vector<int> parse_lags(const std::string& text);

/// CSV `lag,correlation,pairs,q25,q75,mode`; band columns stay empty when
/// no bootstrap was run.
void write_correlations(std::ostream& out, const std::vector<BandRow>& rows, CorrelationMode mode);

}  // namespace efc

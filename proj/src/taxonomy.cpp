#include "efc/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include "efc/csv.hpp"
#include "efc/error.hpp"

namespace efc {

TaxonomyTree::TaxonomyTree(std::vector<TaxonomyRecord> records)
    : records_(std::move(records)), parents_(records_.size()), children_(records_.size()) {
    if (records_.empty()) throw Error(ErrorKind::Structure, "taxonomy has no nodes");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].code.empty()) throw Error(ErrorKind::Structure, "empty code");
        if (!index.emplace(records_[i].code, i).second)
            throw Error(ErrorKind::Structure, "code '" + records_[i].code + "' declared more than once (multiple parents)");
    }
    std::optional<std::size_t> root;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& rec = records_[i];
        if (rec.parent.empty()) {
            if (root) throw Error(ErrorKind::Structure, "more than one root: '" + records_[*root].code + "' and '" + rec.code + "'");
            root = i;
            continue;
        }
        auto it = index.find(rec.parent);
        if (it == index.end()) throw Error(ErrorKind::Structure, "'" + rec.code + "' names unknown parent '" + rec.parent + "'");
        if (it->second == i) throw Error(ErrorKind::Structure, "'" + rec.code + "' is its own parent");
        parents_[i] = it->second;
        children_[it->second].push_back(i);
    }
    if (!root) throw Error(ErrorKind::Structure, "no root (every node has a parent, so the links contain a cycle)");
    root_ = *root;

    // Reachability from the root; anything left over sits on a cycle.
    std::vector<std::size_t> order{root_};
    std::vector<bool> seen(records_.size(), false);
    seen[root_] = true;
    for (std::size_t k = 0; k < order.size(); ++k)
        for (std::size_t ch : children_[order[k]]) {
            seen[ch] = true;
            order.push_back(ch);
        }
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (!seen[i]) throw Error(ErrorKind::Structure, "'" + records_[i].code + "' is on a cycle, unreachable from the root");

    if (records_[root_].layer != 0)
        throw Error(ErrorKind::Layer, "root '" + records_[root_].code + "' must have layer 0");
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (parents_[i] && records_[i].layer != records_[*parents_[i]].layer + 1)
            throw Error(ErrorKind::Layer, "'" + records_[i].code + "' declares layer " + std::to_string(records_[i].layer) +
                                              " under layer-" + std::to_string(records_[*parents_[i]].layer) +
                                              " parent '" + records_[*parents_[i]].code + "'");

    // Every leaf must have exactly one complete-set node on its root path.
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!records_[i].complete) continue;
        for (auto p = parents_[i]; p; p = parents_[*p])
            if (records_[*p].complete)
                throw Error(ErrorKind::Coverage, "complete-set codes '" + records_[*p].code + "' and '" + records_[i].code +
                                                     "' overlap (one is an ancestor of the other)");
    }
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!children_[i].empty()) continue;
        bool covered = false;
        for (std::optional<std::size_t> p = i; p; p = parents_[*p])
            if (records_[*p].complete) covered = true;
        if (!covered) throw Error(ErrorKind::Coverage, "leaf '" + records_[i].code + "' is not covered by the complete set");
    }
}

std::optional<std::size_t> TaxonomyTree::find(const std::string& code) const {
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (records_[i].code == code) return i;
    return std::nullopt;
}

int TaxonomyTree::depth() const {
    int d = 0;
    for (const auto& r : records_) d = std::max(d, r.layer);
    return d;
}

std::vector<std::string> TaxonomyTree::complete_set() const {
    std::vector<std::string> out;
    for (const auto& r : records_)
        if (r.complete) out.push_back(r.code);
    return out;
}

std::vector<std::size_t> TaxonomyTree::complete_descendants(std::size_t i) const {
    std::vector<std::size_t> out;
    std::vector<std::size_t> stack{i};
    while (!stack.empty()) {
        const std::size_t n = stack.back();
        stack.pop_back();
        if (records_[n].complete) {
            out.push_back(n);
            continue;
        }
        for (auto it = children_[n].rbegin(); it != children_[n].rend(); ++it) stack.push_back(*it);
    }
    return out;
}

std::vector<std::size_t> TaxonomyTree::aggregate_nodes() const {
    std::vector<bool> flag(records_.size(), false);
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!records_[i].complete) continue;
        for (auto p = parents_[i]; p; p = parents_[*p]) flag[*p] = true;
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (flag[i]) out.push_back(i);
    return out;
}

TaxonomyTree read_taxonomy(std::istream& in, const std::string& source_name) {
    const csv::Table table = csv::read(in, source_name);
    const std::vector<std::string> expected{"code", "parent", "layer", "description", "complete_set"};
    if (table.header != expected)
        throw Error(ErrorKind::Parse, source_name + ":1: expected header code,parent,layer,description,complete_set");
    std::vector<TaxonomyRecord> records;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = source_name + ":" + std::to_string(table.line_numbers[r]);
        if (row.size() != 5) throw Error(ErrorKind::Parse, where + ": expected 5 fields");
        auto layer = csv::parse_integer(row[2]);
        if (!layer || *layer < 0) throw Error(ErrorKind::Parse, where + ": bad layer '" + row[2] + "'");
        const std::string flag = csv::trim(row[4]);
        if (flag != "0" && flag != "1") throw Error(ErrorKind::Parse, where + ": complete_set must be 0 or 1");
        records.push_back({csv::trim(row[0]), csv::trim(row[1]), static_cast<int>(*layer), row[3], flag == "1"});
    }
    return TaxonomyTree(std::move(records));
}

TaxonomyTree parse_taxonomy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open taxonomy " + path.string());
    return read_taxonomy(in, path.string());
}

void write_taxonomy(std::ostream& out, const TaxonomyTree& tree) {
    out << "code,parent,layer,description,complete_set\n";
    for (const auto& r : tree.records())
        csv::write_row(out, {r.code, r.parent, std::to_string(r.layer), r.description, r.complete ? "1" : "0"});
}

std::vector<std::string> standard_goods_codes() {
    std::vector<std::string> codes;
    for (int chapter = 1; chapter <= 97; ++chapter) {
        if (chapter == 77) continue;
        codes.push_back((chapter < 10 ? "0" : "") + std::to_string(chapter));
    }
    return codes;
}

std::vector<std::string> load_goods_codes(const std::filesystem::path& path) {
    const csv::Table table = csv::read_file(path);
    if (table.header.empty() || table.header[0] != "code")
        throw Error(ErrorKind::Parse, path.string() + ":1: expected a 'code' column first");
    std::vector<std::string> codes;
    for (const auto& row : table.rows) codes.push_back(csv::trim(row[0]));
    return codes;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "PASS";
        case Verdict::Fail: return "FAIL";
        case Verdict::Skipped: return "SKIPPED";
    }
    return "?";
}

std::size_t ConsistencyReport::count(Verdict v) const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [v](const auto& r) { return r.verdict == v; }));
}

ConsistencyReport check_sum_consistency(const TaxonomyTree& tree, const ExportPanel& panel, double rel_tol) {
    if (!(rel_tol >= 0.0)) throw Error(ErrorKind::Config, "rel_tol must be non-negative");
    ConsistencyReport report;
    report.rel_tol = rel_tol;
    const auto years = panel.years();
    for (std::size_t n = 0; n < tree.size(); ++n) {
        if (tree.is_leaf(n)) continue;
        const auto p = panel.activities().find(tree.node(n).code);
        if (!p) continue;
        std::vector<std::optional<std::size_t>> kids;
        for (std::size_t ch : tree.children(n)) kids.push_back(panel.activities().find(tree.node(ch).code));
        for (std::size_t c = 0; c < panel.n_countries(); ++c)
            for (std::size_t t = 0; t < panel.n_years(); ++t) {
                ConsistencyRow row;
                row.parent = tree.node(n).code;
                row.country = panel.countries()[c];
                row.year = years[t];
                row.parent_value = panel.at(c, *p, t);
                std::size_t n_missing = 0;
                double sum = 0.0;
                for (const auto& k : kids) {
                    const double v = k ? panel.at(c, *k, t) : kMissing;
                    if (is_missing(v)) ++n_missing;
                    else sum += v;
                }
                if (n_missing == 0) row.children_sum = sum;
                if (!is_missing(row.parent_value) && n_missing == 0) {
                    row.abs_diff = std::abs(row.parent_value - sum);
                    row.rel_diff = row.abs_diff == 0.0 ? 0.0 : row.abs_diff / std::abs(row.parent_value);
                    row.verdict = row.rel_diff <= rel_tol ? Verdict::Pass : Verdict::Fail;
                } else if (is_missing(row.parent_value) && n_missing == kids.size()) {
                    row.verdict = Verdict::Pass;
                } else {
                    row.verdict = Verdict::Skipped;
                }
                report.rows.push_back(std::move(row));
            }
    }
    return report;
}

void write_consistency_report(std::ostream& out, const ConsistencyReport& report) {
    out << "parent,country,year,parent_value,children_sum,abs_diff,rel_diff,verdict\n";
    auto num = [](double v) { return is_missing(v) ? std::string() : csv::format_number(v); };
    for (const auto& r : report.rows)
        csv::write_row(out, {r.parent, r.country, std::to_string(r.year), num(r.parent_value), num(r.children_sum),
                             num(r.abs_diff), num(r.rel_diff), std::string(to_string(r.verdict))});
}

ExportPanel rollup(const TaxonomyTree& tree, const ExportPanel& panel) {
    for (const auto& code : tree.complete_set())
        if (!panel.activities().contains(code))
            throw Error(ErrorKind::Coverage, "complete-set code '" + code + "' is absent from the panel");
    std::vector<std::string> activities = panel.activities().labels();
    const auto aggregates = tree.aggregate_nodes();
    for (std::size_t n : aggregates)
        if (!panel.activities().contains(tree.node(n).code)) activities.push_back(tree.node(n).code);

    ExportPanel out(panel.countries(), Axis(activities), panel.first_year(), panel.last_year());
    for (std::size_t c = 0; c < panel.n_countries(); ++c)
        for (std::size_t a = 0; a < panel.n_activities(); ++a) {
            auto from = panel.series(c, a);
            std::copy(from.begin(), from.end(), out.series(c, a).begin());
        }
    for (std::size_t n : aggregates) {
        const std::size_t target = *out.activities().find(tree.node(n).code);
        std::vector<std::size_t> sources;
        for (std::size_t leaf : tree.complete_descendants(n))
            sources.push_back(*panel.activities().find(tree.node(leaf).code));
        for (std::size_t c = 0; c < panel.n_countries(); ++c)
            for (std::size_t t = 0; t < panel.n_years(); ++t) {
                double sum = 0.0;
                for (std::size_t s : sources) {
                    const double v = panel.at(c, s, t);
                    if (is_missing(v)) {
                        sum = kMissing;
                        break;
                    }
                    sum += v;
                }
                out.set(c, target, t, sum);
            }
    }
    return out;
}

ShareGrouping parse_share_grouping(const std::string& name) {
    if (name == "layer") return ShareGrouping::Layer;
    if (name == "country") return ShareGrouping::Country;
    if (name == "year") return ShareGrouping::Year;
    throw Error(ErrorKind::Config, "unknown grouping '" + name + "' (expected layer, country or year)");
}

std::vector<ShareRow> missing_share(const ExportPanel& panel, const TaxonomyTree& tree, ShareGrouping group_by) {
    std::vector<std::size_t> complete_cols;
    for (const auto& code : tree.complete_set())
        if (auto a = panel.activities().find(code)) complete_cols.push_back(*a);

    auto tally = [&](const std::string& label, const std::vector<std::size_t>& cols, auto&& include_cell) {
        ShareRow row{label};
        for (std::size_t c = 0; c < panel.n_countries(); ++c)
            for (std::size_t a : cols)
                for (std::size_t t = 0; t < panel.n_years(); ++t) {
                    if (!include_cell(c, t)) continue;
                    ++row.cells;
                    if (panel.missing(c, a, t)) ++row.missing;
                }
        if (row.cells > 0) row.fraction = static_cast<double>(row.missing) / static_cast<double>(row.cells);
        return row;
    };
    auto any_cell = [](std::size_t, std::size_t) { return true; };

    std::vector<ShareRow> out;
    auto keep = [&](ShareRow row) {
        if (row.cells > 0) out.push_back(std::move(row));
    };
    switch (group_by) {
        case ShareGrouping::Layer: {
            for (int layer = 0; layer <= tree.depth(); ++layer) {
                std::vector<std::size_t> cols;
                for (const auto& r : tree.records())
                    if (r.layer == layer)
                        if (auto a = panel.activities().find(r.code)) cols.push_back(*a);
                keep(tally("layer:" + std::to_string(layer), cols, any_cell));
            }
            keep(tally("complete", complete_cols, any_cell));
            break;
        }
        case ShareGrouping::Country:
            for (std::size_t c = 0; c < panel.n_countries(); ++c)
                keep(tally(panel.countries()[c], complete_cols, [c](std::size_t cc, std::size_t) { return cc == c; }));
            break;
        case ShareGrouping::Year: {
            const auto years = panel.years();
            for (std::size_t t = 0; t < panel.n_years(); ++t)
                keep(tally(std::to_string(years[t]), complete_cols, [t](std::size_t, std::size_t tt) { return tt == t; }));
            break;
        }
    }
    return out;
}

}  // namespace efc

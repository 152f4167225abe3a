#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "efc/panel.hpp"

namespace efc {

struct TaxonomyRecord {
    std::string code;
    std::string parent;  // empty for the root
    int layer = 0;
    std::string description;
    bool complete = false;

    bool operator==(const TaxonomyRecord&) const = default;
};

/// Summable service classification: a single rooted tree whose marked
/// "complete set" nodes form an antichain covering every leaf exactly once.
/// Values of any ancestor are reconstructed by summing complete-set codes.
class TaxonomyTree {
public:
    /// Validates and builds the tree. Records keep their input order.
    explicit TaxonomyTree(std::vector<TaxonomyRecord> records);

    const std::vector<TaxonomyRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    std::size_t root() const noexcept { return root_; }
    std::optional<std::size_t> find(const std::string& code) const;
    const TaxonomyRecord& node(std::size_t i) const { return records_[i]; }
    std::optional<std::size_t> parent(std::size_t i) const { return parents_[i]; }
    const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
    bool is_leaf(std::size_t i) const { return children_[i].empty(); }

    /// Depth of the deepest node (root = 0).
    int depth() const;

    /// Complete-set codes in record order.
    std::vector<std::string> complete_set() const;
    /// Complete-set nodes inside the subtree of i (i itself included), depth-first.
    std::vector<std::size_t> complete_descendants(std::size_t i) const;
    /// Nodes that are proper ancestors of at least one complete-set node, in record order.
    std::vector<std::size_t> aggregate_nodes() const;

    bool operator==(const TaxonomyTree& other) const { return records_ == other.records_; }

private:
    std::vector<TaxonomyRecord> records_;
    std::vector<std::optional<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::size_t root_ = 0;
};

/// CSV with header code,parent,layer,description,complete_set.
TaxonomyTree parse_taxonomy(const std::filesystem::path& path);
TaxonomyTree read_taxonomy(std::istream& in, const std::string& source_name = "<stream>");
void write_taxonomy(std::ostream& out, const TaxonomyTree& tree);

/// 2-digit HS goods chapters with code 99 removed: 01..97 without the
/// reserved chapter 77, i.e. 96 codes.
std::vector<std::string> standard_goods_codes();
/// Reads a code,description list and returns the codes.
std::vector<std::string> load_goods_codes(const std::filesystem::path& path);

enum class Verdict { Pass, Fail, Skipped };
std::string_view to_string(Verdict v);

struct ConsistencyRow {
    std::string parent;
    std::string country;
    int year = 0;
    double parent_value = kMissing;
    double children_sum = kMissing;
    double abs_diff = kMissing;
    double rel_diff = kMissing;
    Verdict verdict = Verdict::Skipped;
};

struct ConsistencyReport {
    double rel_tol = 1e-6;
    std::vector<ConsistencyRow> rows;

    std::size_t count(Verdict v) const;
    bool ok() const { return count(Verdict::Fail) == 0; }
};

inline constexpr double kDefaultConsistencyTol = 1e-6;

/// Compares every parent code on the panel axis with the sum of its
/// children, per (country, year). Rows where evidence is incomplete are
/// SKIPPED; a parent and all of its children MISSING counts as PASS.
ConsistencyReport check_sum_consistency(const TaxonomyTree& tree, const ExportPanel& panel,
                                        double rel_tol = kDefaultConsistencyTol);
void write_consistency_report(std::ostream& out, const ConsistencyReport& report);

/// Adds or overwrites every aggregate code with the sum of its complete-set
/// descendants. A parent cell is MISSING iff any of those descendants is.
ExportPanel rollup(const TaxonomyTree& tree, const ExportPanel& panel);

enum class ShareGrouping { Layer, Country, Year };
ShareGrouping parse_share_grouping(const std::string& name);

struct ShareRow {
    std::string group;
    std::size_t cells = 0;
    std::size_t missing = 0;
    double fraction = 0.0;
};

/// Fraction of MISSING cells per group. Layer grouping reports one row per
/// tree layer ("layer:N") plus a "complete" row; country and year grouping
/// count complete-set codes only. Groups with no cells are omitted.
std::vector<ShareRow> missing_share(const ExportPanel& panel, const TaxonomyTree& tree, ShareGrouping group_by);

}  // namespace efc

#pragma once

#include <unistd.h>

#include <doctest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "efc/complexity.hpp"
#include "efc/error.hpp"
#include "efc/panel.hpp"
#include "efc/taxonomy.hpp"

namespace testing {

/// Kind of the efc::Error thrown by f; fails the test when nothing is thrown.
inline efc::ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const efc::Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return efc::ErrorKind::Io;
}

inline std::string data_path(const std::string& name) { return std::string(EFC_DATA_DIR) + "/" + name; }

inline const efc::TaxonomyTree& bundled_taxonomy() {
    static const efc::TaxonomyTree tree = efc::parse_taxonomy(data_path("bop_alternative_taxonomy.csv"));
    return tree;
}

inline efc::ExportPanel panel_from_long(const std::string& text) {
    std::istringstream in(text);
    return efc::read_panel(in, efc::PanelFormat::Long);
}

inline efc::TaxonomyTree taxonomy_from(const std::string& text) {
    std::istringstream in(text);
    return efc::read_taxonomy(in);
}

/// Binary matrix from rows of 0/1.
inline efc::CompetitivenessMatrix binary(const std::vector<std::vector<int>>& rows, int year = 0) {
    std::vector<std::string> cs, as;
    for (std::size_t c = 0; c < rows.size(); ++c) cs.push_back("c" + std::to_string(c));
    for (std::size_t a = 0; a < rows.front().size(); ++a) as.push_back("a" + std::to_string(a));
    std::vector<double> cells;
    for (const auto& r : rows)
        for (int v : r) cells.push_back(v);
    return efc::make_matrix(cs, as, efc::MatrixKind::Binary, cells, year);
}

/// One-year panel from a country x activity table.
inline efc::ExportPanel slice_panel(const std::vector<std::vector<double>>& rows, int year = 2000) {
    std::vector<std::string> cs, as;
    for (std::size_t c = 0; c < rows.size(); ++c) cs.push_back("c" + std::to_string(c));
    for (std::size_t a = 0; a < rows.front().size(); ++a) as.push_back("a" + std::to_string(a));
    efc::ExportPanel p(cs, as, year, year);
    for (std::size_t c = 0; c < rows.size(); ++c)
        for (std::size_t a = 0; a < rows[c].size(); ++a) p.set(c, a, 0, rows[c][a]);
    return p;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("efc-test-" + tag + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace testing

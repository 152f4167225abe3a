#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "efc/cli.hpp"
#include "efc/panel.hpp"
#include "helpers.hpp"

using namespace efc;
using testing::slurp;
using testing::spit;
using testing::TempDir;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Synthetic world shared by the pipeline cases.
const TempDir& world() {
    static const TempDir dir("cli-world");
    static const int code = run({"synth", "--out-dir", dir.path().string(), "--countries", "14", "--seed", "3"}).code;
    REQUIRE(code == 0);
    return dir;
}

std::string in_world(const std::string& name) { return (world().path() / name).string(); }

// Long panel where each country has a distinct, nested export basket.
std::string nested_panel(int first_year, int last_year) {
    std::string text = "country,activity,year,value\n";
    for (int y = first_year; y <= last_year; ++y)
        for (int c = 0; c < 4; ++c)
            for (int a = 0; a < 4; ++a)
                text += "K" + std::to_string(c) + ",x" + std::to_string(a) + "," + std::to_string(y) + "," +
                        (a <= 3 - c ? std::to_string(10 + a) : "0") + "\n";
    return text;
}

}  // namespace

TEST_CASE("validate-taxonomy exit codes") {
    CHECK(run({"validate-taxonomy", "--taxonomy", testing::data_path("bop_alternative_taxonomy.csv")}).code == 0);
    TempDir tmp("cli-tax");
    const auto bad = tmp.path() / "bad.csv";
    spit(bad, "code,parent,layer,description,complete_set\nT,,0,t,0\nA,T,1,a,0\nB,A,3,b,1\n");
    const Run layer = run({"validate-taxonomy", "--taxonomy", bad.string()});
    CHECK(layer.code == 1);
    CHECK(layer.err.find("efc: ") == 0);
    CHECK(run({"validate-taxonomy", "--taxonomy", (tmp.path() / "absent.csv").string()}).code == 2);

    // A services panel that breaks parent = sum of children fails the check.
    const auto panel = tmp.path() / "p.csv";
    const auto small = tmp.path() / "small.csv";
    spit(small, "code,parent,layer,description,complete_set\nBXS,,0,t,0\nBXSTR,BXS,1,a,1\nBXSTV,BXS,1,b,1\n");
    spit(panel, "country,activity,year,value\nX,BXS,2000,10\nX,BXSTR,2000,1\nX,BXSTV,2000,2\n");
    CHECK(run({"validate-taxonomy", "--taxonomy", small.string(), "--panel", panel.string()}).code == 1);
    spit(panel, "country,activity,year,value\nX,BXS,2000,3\nX,BXSTR,2000,1\nX,BXSTV,2000,2\n");
    CHECK(run({"validate-taxonomy", "--taxonomy", small.string(), "--panel", panel.string()}).code == 0);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"metrics"}).code == 2);
    CHECK(run({"impute", "--services", in_world("services.csv"), "--out", "/dev/null", "--method", "mice"}).code == 2);
    CHECK(run({"impute", "--services", in_world("services.csv"), "--out", "/dev/null", "--method", "forest"}).code == 2);
    CHECK(run({"network", "--panel", in_world("goods.csv"), "--ensemble", "5", "--seed", "1"}).code == 2);
    CHECK(run({"network", "--panel", in_world("goods.csv"), "--ensemble", "50"}).code == 2);
    CHECK(run({"correlate", "--fitness", in_world("gdp.csv"), "--gdp", in_world("gdp.csv"), "--lags", "3:1"}).code == 2);
    CHECK(run({"metrics", "--panel", in_world("goods.csv"), "--jobs", "0"}).code == 2);
}

TEST_CASE("impute fills gaps; interpolation keeps leading gaps") {
    TempDir tmp("cli-impute");
    const ExportPanel services = load_panel(in_world("services.csv"), PanelFormat::Long);
    REQUIRE(services.count_missing() > 0);

    const auto knn_out = tmp.path() / "knn.csv";
    const Run knn = run({"impute", "--services", in_world("services.csv"), "--out", knn_out.string()});
    REQUIRE(knn.code == 0);
    CHECK(load_panel(knn_out, PanelFormat::Long).count_missing() < services.count_missing());

    const auto interp_out = tmp.path() / "interp.csv";
    const auto residuals = tmp.path() / "res.csv";
    const Run interp = run({"impute", "--services", in_world("services.csv"), "--out", interp_out.string(), "--method",
                            "interpolate", "--residuals", residuals.string()});
    REQUIRE(interp.code == 0);
    const ExportPanel filled = load_panel(interp_out, PanelFormat::Long);
    CHECK(filled.count_missing() > 0);  // late starters keep their leading gap
    CHECK(filled.count_missing() < services.count_missing());
    CHECK(slurp(residuals).rfind("country,activity,year,reason\n", 0) == 0);

    // With goods: the universal panel has 96 chapters plus the 27 complete-set codes.
    const auto universal = tmp.path() / "universal.csv";
    REQUIRE(run({"impute", "--services", in_world("services.csv"), "--goods", in_world("goods.csv"), "--out",
                 universal.string()})
                .code == 0);
    CHECK(load_panel(universal, PanelFormat::Long).n_activities() == 123);
}

TEST_CASE("metrics ranks a nested panel and names a degenerate year") {
    TempDir tmp("cli-metrics");
    const auto panel = tmp.path() / "nested.csv";
    spit(panel, nested_panel(2000, 2002));
    const Run r = run({"metrics", "--panel", panel.string(), "--half-life", "0"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("2000,K0,") != std::string::npos);
    // K0 is the most diversified country and ranks first every year.
    std::istringstream lines(r.out);
    std::string line;
    int firsts = 0;
    while (std::getline(lines, line))
        if (line.rfind("20", 0) == 0 && line.find(",K0,") != std::string::npos)
            firsts += line.find(",1,intensive,") != std::string::npos;
    CHECK(firsts == 3);

    std::string text = nested_panel(2000, 2002);
    std::string zeroed = "country,activity,year,value\n";
    std::istringstream in(text);
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.find(",2001,") != std::string::npos) line = line.substr(0, line.rfind(',')) + ",0";
        zeroed += line + "\n";
    }
    spit(panel, zeroed);
    const Run bad = run({"metrics", "--panel", panel.string(), "--half-life", "0"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("2001") != std::string::npos);
}

TEST_CASE("network with a single lag gives unit weights") {
    TempDir tmp("cli-network");
    const auto edges = tmp.path() / "edges.csv";
    const auto nodes = tmp.path() / "nodes.csv";
    const Run r = run({"network", "--panel", in_world("services.csv"), "--delta-max", "0", "--ensemble", "20",
                       "--seed", "4", "--edges", edges.string(), "--nodes", nodes.string(), "--taxonomy",
                       testing::data_path("bop_alternative_taxonomy.csv")});
    REQUIRE(r.code == 0);
    std::istringstream in(slurp(edges));
    std::string line;
    std::getline(in, line);
    CHECK(line == "source,target,weight,first_delta,last_delta");
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++count;
        CHECK(line.substr(line.find(',', line.find(',') + 1)) == ",1,0,0");
    }
    CHECK(count > 0);
    CHECK(slurp(nodes).find(",service,") != std::string::npos);
}

TEST_CASE("correlate finds the lag of a shifted copy") {
    TempDir tmp("cli-correlate");
    std::string fit = "country,activity,year,value\n", gdp = "country,activity,year,value\n";
    std::uint64_t state = 12345;
    for (int c = 0; c < 8; ++c)
        for (int t = 1990; t < 2015; ++t) {
            state = state * 6364136223846793005ULL + 1442695040888963407ULL;
            const double v = static_cast<double>(state >> 40) / 1e4;
            const std::string name = "Z" + std::to_string(c);
            fit += name + ",F," + std::to_string(t) + "," + std::to_string(v) + "\n";
            gdp += name + ",GDP," + std::to_string(t + 4) + "," + std::to_string(v) + "\n";
        }
    spit(tmp.path() / "f.csv", fit);
    spit(tmp.path() / "g.csv", gdp);
    const Run r = run({"correlate", "--fitness", (tmp.path() / "f.csv").string(), "--gdp",
                       (tmp.path() / "g.csv").string(), "--lags", "0:8"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("\n4,1,") != std::string::npos);
    CHECK(run({"correlate", "--fitness", (tmp.path() / "f.csv").string(), "--gdp", (tmp.path() / "g.csv").string(),
               "--bootstrap", "60"})
              .code == 2);  // bootstrap needs a seed
}

TEST_CASE("config file values apply unless the flag is given") {
    TempDir tmp("cli-config");
    const auto cfg = tmp.path() / "run.cfg";
    spit(cfg, "# network settings\nensemble = 5\nseed = 1\ndelta_max = 0\n");
    const std::vector<std::string> args{"network", "--panel", "p.csv", "--ensemble", "30", "--config", cfg.string()};
    const auto merged = merge_config(args, cfg.string());
    CHECK(std::count(merged.begin(), merged.end(), "--ensemble=5") == 0);
    CHECK(std::count(merged.begin(), merged.end(), "--seed=1") == 1);
    CHECK(std::count(merged.begin(), merged.end(), "--delta-max=0") == 1);

    // The file alone asks for an invalid ensemble; the flag overrides it.
    const auto edges = tmp.path() / "e.csv";
    CHECK(run({"network", "--panel", in_world("services.csv"), "--config", cfg.string()}).code == 2);
    CHECK(run({"network", "--panel", in_world("services.csv"), "--config", cfg.string(), "--ensemble", "20",
               "--edges", edges.string()})
              .code == 0);
    CHECK(run({"network", "--panel", in_world("services.csv"), "--config", (tmp.path() / "none.cfg").string()}).code ==
          2);
}

TEST_CASE("reruns are byte-identical and job independent") {
    TempDir tmp("cli-rerun");
    const auto a = tmp.path() / "a.csv", b = tmp.path() / "b.csv", c = tmp.path() / "c.csv";
    const std::vector<std::string> base{"impute", "--services", in_world("services.csv"), "--goods",
                                        in_world("goods.csv"), "--method", "forest", "--trees", "5", "--seed", "2"};
    auto with = [&](const std::filesystem::path& out, const std::string& jobs) {
        auto args = base;
        args.insert(args.end(), {"--out", out.string(), "--jobs", jobs});
        return run(args).code;
    };
    REQUIRE(with(a, "1") == 0);
    REQUIRE(with(b, "1") == 0);
    REQUIRE(with(c, "3") == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) == slurp(c));

    TempDir again("cli-world-again");
    REQUIRE(run({"synth", "--out-dir", again.path().string(), "--countries", "14", "--seed", "3"}).code == 0);
    for (const char* f : {"services.csv", "goods.csv", "gdp.csv"}) CHECK(slurp(again.path() / f) == slurp(in_world(f)));
}

TEST_CASE("installed binary reports exit codes") {
    const std::string bin = EFC_CLI_PATH;
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(s);
    };
    CHECK(status(bin + " --help") == 0);
    CHECK(status(bin + " validate-taxonomy --taxonomy " + testing::data_path("bop_alternative_taxonomy.csv")) == 0);
    CHECK(status(bin + " validate-taxonomy --taxonomy /nonexistent/tax.csv") == 2);
    CHECK(status(bin + " network --panel x.csv --ensemble 5 --seed 1") == 2);
}

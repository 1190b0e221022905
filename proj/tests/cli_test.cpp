#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

#include <popproto/cli.hpp>

#include "test_util.hpp"

using namespace popproto;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("popproto_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int exit_code(const std::string& args) {
    const std::string cmd = std::string(POPPROTO_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CliRun, WritesCsvAndManifestDeterministically) {
    const auto dir = scratch("run");
    cli::RunSpec spec;
    spec.protocol = "po";
    spec.n = 200;
    spec.sources = "X=1";
    spec.rounds = 20;
    spec.seeds = {1, 2};
    spec.out_dir = (dir / "a").string();
    const auto m = cli::cmd_run(spec);
    spec.out_dir = (dir / "b").string();
    cli::cmd_run(spec);
    for (const char* f : {"po_seed1.csv", "po_seed2.csv"}) {
        const auto a = slurp((dir / "a" / f).string());
        EXPECT_FALSE(a.empty());
        EXPECT_EQ(a, slurp((dir / "b" / f).string())) << f;
    }
    EXPECT_NE(slurp((dir / "a/po_seed1.csv").string()), slurp((dir / "a/po_seed2.csv").string()));
    EXPECT_TRUE(fs::exists(dir / "a/po_manifest.json"));
    EXPECT_EQ(m["runs"].size(), 2u);
    EXPECT_EQ(m["max_steps"].get<std::int64_t>(), 4000);
    EXPECT_EQ(m["params"]["p"].get<double>(), 0.06);
    EXPECT_EQ(m["columns"][0], "round");
    // 20 rounds at cadence 2 steps: 2001 rows plus the header
    const auto csv = slurp((dir / "a/po_seed1.csv").string());
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2002);
}

TEST(CliRun, ZeroRoundsGivesHeaderOnly) {
    const auto dir = scratch("zero");
    cli::RunSpec spec;
    spec.protocol = "rps";
    spec.n = 50;
    spec.init = "center";
    spec.out_dir = dir.string();
    cli::cmd_run(spec);
    const auto csv = slurp((dir / "rps_seed1.csv").string());
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
}

TEST(CliRun, SourceRemovalShowsInCsv) {
    const auto dir = scratch("remove");
    cli::RunSpec spec;
    spec.protocol = "po";
    spec.n = 100;
    spec.sources = "X=5";
    spec.events = "remove_source:X->A1+@round3";
    spec.rounds = 6;
    spec.cadence = 100;
    spec.out_dir = dir.string();
    cli::cmd_run(spec);
    std::istringstream csv(slurp((dir / "po_seed1.csv").string()));
    std::string header, line;
    std::getline(csv, header);
    const auto cols = scenario_detail::split_top(header, ',');
    const auto x = std::find(cols.begin(), cols.end(), "\"X\"") - cols.begin();
    ASSERT_LT(static_cast<std::size_t>(x), cols.size());
    int rows = 0;
    while (std::getline(csv, line)) {
        const auto v = scenario_detail::split_top(line, ',');
        EXPECT_EQ(std::stoll(v[x]), std::stod(v[0]) < 3 ? 5 : 0) << line;
        ++rows;
    }
    EXPECT_EQ(rows, 7);
}

TEST(CliRun, UsageErrors) {
    cli::RunSpec spec;
    spec.protocol = "nope";
    spec.n = 10;
    EXPECT_THROW(cli::cmd_run(spec), cli::UsageError);
    spec.protocol = "po";
    spec.sources = "Y=1";
    EXPECT_THROW(cli::cmd_run(spec), cli::UsageError);
    spec.sources = "";
    spec.seeds = {3, 3};
    EXPECT_THROW(cli::cmd_run(spec), cli::UsageError);
    spec.seeds = {1};
    spec.params = {"zeta=1"};
    EXPECT_THROW(cli::cmd_run(spec), cli::UsageError);
}

TEST(CliRun, FileProtocolWithOverride) {
    const auto p = cli::load_protocol(protocol_file("rps.pp"), {"p=0.25"});
    const auto law = rule_table(p).law(p.at("A2"), p.at("A1"));
    EXPECT_EQ(law.at({p.at("A2"), p.at("A2")}).str(), "1/4");
    EXPECT_THROW(cli::load_protocol(protocol_file("rps.pp"), {"r=0.1"}), cli::UsageError);
}

TEST(CliOracle, Report) {
    cli::OracleSpec spec;
    spec.protocol = "rps";
    spec.n = 2;
    spec.start = "A1=1,A2=1";
    const auto j = cli::cmd_oracle(spec);
    EXPECT_EQ(j["configurations"].get<int>(), 6);
    EXPECT_TRUE(j["exact"].get<bool>());
    EXPECT_EQ(j["absorbing_configurations"].get<int>(), 3);
    EXPECT_EQ(j["absorption"]["expected_steps_exact"], "100/3");
    spec.start = "A1=3";
    EXPECT_THROW(cli::cmd_oracle(spec), cli::UsageError);
}

TEST(CliParseCheck, LibraryFilesAndExtension) {
    std::ostringstream out, err;
    EXPECT_TRUE(cli::cmd_parse_check({protocol_file("po.pp"), protocol_file("rps.pp")}, "", out, err)) << err.str();
    EXPECT_NE(out.str().find("7 states, 45 rules"), std::string::npos) << out.str();
    EXPECT_TRUE(cli::cmd_parse_check({protocol_file("pm-extension.pp")}, "po", out, err)) << err.str();
    EXPECT_FALSE(cli::cmd_parse_check({protocol_file("pm-extension.pp")}, "", out, err));
}

TEST(CliParseCheck, ReportsNormalization) {
    const auto dir = scratch("check");
    const auto file = (dir / "bad.pp").string();
    std::ofstream(file) << "protocol bad\nstate A\nstate B\nrule A : B -> A @ 0.7\nrule A : B -> B : A @ 0.6\n";
    std::ostringstream out, err;
    EXPECT_FALSE(cli::cmd_parse_check({file}, "", out, err));
    EXPECT_NE(err.str().find("normalization exceeded on (A,B): 1.3"), std::string::npos) << err.str();
}

TEST(CliBinary, ExitCodes) {
    const auto dir = scratch("bin");
    EXPECT_EQ(exit_code("--version"), 0);
    EXPECT_EQ(exit_code(""), 2);
    EXPECT_EQ(exit_code("run --protocol po"), 2);
    EXPECT_EQ(exit_code("run --protocol po --n 10 --init sideways"), 2);
    EXPECT_EQ(exit_code("run --protocol po --n 10 --sources Z=1 --out " + dir.string()), 2);
    EXPECT_EQ(exit_code("oracle --protocol detect --n 20"), 2);
    EXPECT_EQ(exit_code("run --protocol po --n 20 --rounds 2 --sources X=1 --out " + dir.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "po_seed1.csv"));
    EXPECT_EQ(exit_code("parse-check " + protocol_file("po.pp")), 0);
    EXPECT_EQ(exit_code("oracle --protocol rps --n 2 --start A1=1,A2=1"), 0);
}

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include <popproto/acceptance.hpp>

int main(int argc, char** argv) {
    using namespace popproto::acceptance;
    CLI::App app{"Acceptance suite: one pass/fail line per criterion"};
    SuiteOptions opt;
    std::string json;
    std::vector<int> only;
    app.add_flag("--quick", opt.quick, "Population sizes up to 1e4 only");
    app.add_option("--json", json, "Write per-criterion margins to this file");
    app.add_option("--only", only, "Criterion ids to run")->delimiter(',');
    app.add_option("--seed", opt.seed, "Suite seed");
    CLI11_PARSE(app, argc, argv);
    opt.only = {only.begin(), only.end()};
    opt.on_result = [](const CriterionResult& r) { std::cout << format_line(r) << std::endl; };

    std::cout << "acceptance suite (" << (opt.quick ? "quick" : "full") << ", seed " << opt.seed << ", "
              << opt.workers << " worker(s))" << std::endl;
    const auto results = run_suite(opt);
    const auto j = to_json(results, opt);
    if (!json.empty()) std::ofstream(json) << j.dump(2) << '\n';
    int failed = 0;
    for (const auto& r : results) failed += !r.pass;
    std::cout << results.size() - failed << "/" << results.size() << " criteria passed" << std::endl;
    return failed ? 1 : 0;
}

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include <popproto/acceptance.hpp>
#include <popproto/cli.hpp>

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2 };

std::vector<std::uint64_t> seed_list(int count, const std::vector<std::uint64_t>& explicit_seeds) {
    if (!explicit_seeds.empty()) return explicit_seeds;
    std::vector<std::uint64_t> s;
    for (int i = 1; i <= count; ++i) s.push_back(static_cast<std::uint64_t>(i));
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace popproto;
    CLI::App app{"Population protocol simulator: oscillators, broadcast and detection stacks, exact oracle.\n"
                 "Worker threads: set " + std::string(kWorkersEnv) + " (default: hardware concurrency)."};
    app.set_version_flag("--version", cli::version());
    app.require_subcommand(1);

    // run
    cli::RunSpec run_spec;
    int seed_count = 1;
    std::vector<std::uint64_t> seeds;
    std::int64_t steps = -1;
    auto* run_cmd = app.add_subcommand("run", "Simulate a protocol and write one metrics CSV per seed plus a JSON manifest");
    run_cmd->add_option("--protocol", run_spec.protocol, "Library protocol (rps, po, po_prime, bitbroadcast, detect) or .pp file")
        ->required();
    run_cmd->add_option("--n", run_spec.n, "Population size")->required();
    run_cmd->add_option("--init", run_spec.init, "Initial configuration: corner, center, uniform-random")
        ->check(CLI::IsMember({"corner", "center", "uniform-random"}));
    run_cmd->add_option("--sources", run_spec.sources, "Source counts, e.g. X=1 or X[1]=1,X[2]=0");
    run_cmd->add_option("--param", run_spec.params, "Parameter override NAME=VALUE (repeatable)");
    run_cmd->add_option("--events", run_spec.events,
                        "Scenario events 'action:ARGS@roundN' separated by ';' "
                        "(remove_source:X->A1+, insert_source:X,A1++,1, set_count:STATE,VALUE,FILLER)");
    run_cmd->add_option("--rounds", run_spec.rounds, "Duration in parallel rounds (n steps each)");
    run_cmd->add_option("--steps", steps, "Duration in steps (overrides --rounds)");
    run_cmd->add_option("--seeds", seed_count, "Number of seeds, run as seeds 1..K");
    run_cmd->add_option("--seed-list", seeds, "Explicit distinct seeds")->delimiter(',');
    run_cmd->add_option("--cadence", run_spec.cadence, "Steps between metric rows (default max(1, n/100))");
    run_cmd->add_option("--out", run_spec.out_dir, "Output directory");
    run_cmd->add_option("--prefix", run_spec.prefix, "Output file prefix (default: protocol name)");

    // scaling
    cli::ScalingSpec scaling_spec;
    std::string scaling_json;
    auto* scaling_cmd = app.add_subcommand("scaling", "Oscillation period and absorption time against n and #X");
    scaling_cmd->add_option("--protocol", scaling_spec.protocol, "Protocol with an oscillator and a source");
    scaling_cmd->add_option("--n", scaling_spec.sizes, "Population sizes")->delimiter(',')->required();
    scaling_cmd->add_option("--sources", scaling_spec.sources, "Source counts (#X); 0 measures absorption")
        ->delimiter(',')
        ->required();
    scaling_cmd->add_option("--seeds", scaling_spec.seeds, "Runs per (n, #X)");
    scaling_cmd->add_option("--seed", scaling_spec.seed, "Base seed");
    scaling_cmd->add_option("--param", scaling_spec.params, "Parameter override NAME=VALUE (repeatable)");
    std::int64_t scaling_rounds = -1;
    scaling_cmd->add_option("--rounds", scaling_rounds, "Rounds per run (default 250 ln n; absorption cap 40 ln^2 n)");
    scaling_cmd->add_option("--regime-fraction", scaling_spec.regime_fraction,
                            "Flag rows with #X/n above this as outside the analyzed regime");
    scaling_cmd->add_option("--json", scaling_json, "Write the table as JSON to this file");

    // verify
    std::string suite = "quick", verify_json, fault = "none";
    std::vector<int> only;
    std::uint64_t verify_seed = acceptance::SuiteOptions{}.seed;
    auto* verify_cmd = app.add_subcommand("verify", "Run the acceptance criteria");
    verify_cmd->add_option("suite", suite, "quick (n <= 1e4) or full")->check(CLI::IsMember({"quick", "full"}));
    verify_cmd->add_option("--json", verify_json, "Write per-criterion margins as JSON to this file");
    verify_cmd->add_option("--only", only, "Criterion ids to run")->delimiter(',');
    verify_cmd->add_option("--seed", verify_seed, "Suite seed");
    verify_cmd->add_option("--inject-fault", fault, "Sampler fault for mutation testing: none, with-replacement")
        ->check(CLI::IsMember({"none", "with-replacement"}));

    // oracle
    cli::OracleSpec oracle_spec;
    std::string oracle_json;
    auto* oracle_cmd = app.add_subcommand("oracle", "Exact Markov chain analysis for small n");
    oracle_cmd->add_option("--protocol", oracle_spec.protocol, "Library protocol or .pp file")->required();
    oracle_cmd->add_option("--n", oracle_spec.n, "Population size")->required();
    oracle_cmd->add_option("--sources", oracle_spec.sources, "Fixed source counts, e.g. X=0");
    oracle_cmd->add_option("--param", oracle_spec.params, "Parameter override NAME=VALUE (repeatable)");
    oracle_cmd->add_option("--start", oracle_spec.start, "Start configuration STATE=COUNT,... for absorption");
    oracle_cmd->add_option("--cap", oracle_spec.cap, "Maximum number of configurations");
    oracle_cmd->add_option("--exact-limit", oracle_spec.exact_limit, "Largest transient set solved in rationals");
    oracle_cmd->add_option("--triplets", oracle_spec.triplets, "Write the transition matrix as sparse triplets");
    oracle_cmd->add_option("--json", oracle_json, "Write the report to this file instead of stdout");

    // parse-check
    std::vector<std::string> files;
    std::string base;
    auto* check_cmd = app.add_subcommand("parse-check", "Parse and validate protocol files");
    check_cmd->add_option("files", files, "Protocol or extension files")->required();
    check_cmd->add_option("--base", base, "Base protocol for extension files (library name or file)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*run_cmd) {
            run_spec.seeds = seed_list(seed_count, seeds);
            if (steps >= 0) run_spec.steps = steps;
            const auto m = cli::cmd_run(run_spec);
            std::cout << "wrote " << m["runs"].size() << " CSV file(s) and " << (run_spec.prefix.empty() ? m["protocol"].get<std::string>() : run_spec.prefix)
                      << "_manifest.json to " << run_spec.out_dir << '\n';
            return kOk;
        }
        if (*scaling_cmd) {
            if (scaling_rounds > 0) scaling_spec.rounds = scaling_rounds;
            const auto rows = cli::cmd_scaling(scaling_spec);
            cli::print_table(std::cout, rows);
            if (!scaling_json.empty()) std::ofstream(scaling_json) << cli::to_json(rows, scaling_spec).dump(2) << '\n';
            return kOk;
        }
        if (*verify_cmd) {
            acceptance::SuiteOptions opt;
            opt.quick = suite == "quick";
            opt.seed = verify_seed;
            opt.only = {only.begin(), only.end()};
            opt.fault = fault == "with-replacement" ? SamplerFault::WithReplacement : SamplerFault::None;
            opt.on_result = [](const acceptance::CriterionResult& r) {
                std::cout << acceptance::format_line(r) << std::endl;
            };
            const auto results = acceptance::run_suite(opt);
            const auto j = acceptance::to_json(results, opt);
            if (!verify_json.empty()) std::ofstream(verify_json) << j.dump(2) << '\n';
            return j["pass"].get<bool>() ? kOk : kFailed;
        }
        if (*oracle_cmd) {
            const auto j = cli::cmd_oracle(oracle_spec);
            if (oracle_json.empty())
                std::cout << j.dump(2) << '\n';
            else
                std::ofstream(oracle_json) << j.dump(2) << '\n';
            return kOk;
        }
        if (*check_cmd) return cli::cmd_parse_check(files, base, std::cout, std::cerr) ? kOk : kFailed;
    } catch (const cli::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const CapExceeded& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return kUsage;
}

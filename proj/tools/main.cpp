#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tabudrop/errors.hpp"
#include "tabudrop/runner.hpp"

namespace {

struct CommonFlags {
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t replicates = 0;
    CLI::Option* out_dir_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* replicates_opt = nullptr;

    void attach(CLI::App* cmd) {
        out_dir_opt = cmd->add_option("--out-dir", out_dir,
                                      "directory for CSV output (default: "
                                      "config key, then $TABUDROP_OUT_DIR, "
                                      "then ./results)");
        seed_opt = cmd->add_option("--seed", seed, "override base_seed");
        replicates_opt =
            cmd->add_option("--replicates", replicates,
                            "override replicate count")
                ->check(CLI::PositiveNumber);
    }

    tabudrop::RunOverrides overrides() const {
        tabudrop::RunOverrides ov;
        if (out_dir_opt->count() > 0) ov.out_dir = out_dir;
        if (seed_opt->count() > 0) ov.seed = seed;
        if (replicates_opt->count() > 0) ov.replicates = replicates;
        return ov;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tabu-tenure dropout experiment harness"};
    app.require_subcommand(1);

    std::string run_config;
    CommonFlags run_flags;
    auto* run_cmd =
        app.add_subcommand("run", "train one experiment config across its "
                                  "replicates and write per-epoch CSVs");
    run_cmd->add_option("config", run_config, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    run_flags.attach(run_cmd);

    std::vector<std::string> compare_configs;
    CommonFlags compare_flags;
    auto* compare_cmd = app.add_subcommand(
        "compare", "run several configs on one dataset and tabulate them");
    compare_cmd
        ->add_option("configs", compare_configs, "experiment config files")
        ->required()
        ->check(CLI::ExistingFile);
    compare_flags.attach(compare_cmd);

    auto* selftest_cmd = app.add_subcommand(
        "selftest", "run the fast invariant suite and report verdicts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) {
            const auto result = tabudrop::run(tabudrop::load_config(run_config),
                                              run_flags.overrides());
            const auto& s = result.summary;
            std::cout << s.variant << ": mean_error "
                      << tabudrop::format_csv_double(s.mean_error)
                      << ", std_error "
                      << tabudrop::format_csv_double(s.std_error) << " over "
                      << s.replicates << " replicate(s)\n";
            std::cout << "summary: " << result.summary_path << '\n';
            for (const auto& path : result.csv_paths)
                std::cout << "epochs:  " << path << '\n';
            return 0;
        }
        if (compare_cmd->parsed()) {
            const auto result =
                tabudrop::compare(compare_configs, compare_flags.overrides());
            std::cout << result.table_text;
            std::cout << "table: " << result.csv_path << '\n';
            return 0;
        }
        if (selftest_cmd->parsed()) {
            return tabudrop::selftest(std::cout) ? 0 : 1;
        }
    } catch (const tabudrop::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

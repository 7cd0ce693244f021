#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vflu/config.hpp"
#include "vflu/errors.hpp"
#include "vflu/experiment.hpp"
#include "vflu/manifest.hpp"
#include "vflu/plots.hpp"

namespace {

// Exit code contract: 0 success, 2 config error, 3 numeric failure.
int guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const vflu::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const vflu::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"vflu - vertical federated learning with certified client unlearning"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "execute one experiment arm from a config file");
    run->add_option("config", config_path, "config file (sectioned key = value format)")->required();

    std::string plots_dir;
    auto* plots = app.add_subcommand("plots", "render accuracy.svg from metrics.csv files");
    plots->add_option("dir", plots_dir, "directory scanned recursively for metrics.csv")->required();

    std::vector<std::string> timing_dirs;
    auto* timing = app.add_subcommand("timing", "print a wall-clock table from run manifests");
    timing->add_option("dirs", timing_dirs, "run directories containing manifest.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e); // prints usage or the error
        return rc == 0 ? 0 : 2;    // command-line misuse is a config error
    }

    if (run->parsed()) {
        return guarded([&] {
            const vflu::ExperimentConfig cfg = vflu::load_config(config_path);
            vflu::run_experiment(cfg, std::cout);
        });
    }
    if (plots->parsed()) {
        return guarded([&] {
            const auto out = vflu::emit_plots(plots_dir);
            std::cout << "wrote " << out.string() << "\n";
        });
    }
    if (timing->parsed()) {
        return guarded([&] {
            std::vector<std::filesystem::path> dirs(timing_dirs.begin(), timing_dirs.end());
            std::cout << vflu::format_timing_table(vflu::time_report(dirs));
        });
    }
    return 2;
}

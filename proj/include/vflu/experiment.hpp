#pragma once

#include <iosfwd>

#include "vflu/config.hpp"

namespace vflu {

/// Materialized inputs shared by every arm.
struct ExperimentSetup {
    SplitNet net;
    std::vector<ClientDataset> clients; // target client already poisoned
    std::vector<VerticalSample> clean_test;
    std::vector<VerticalSample> backdoor_test;
    std::vector<VerticalSample> target_poisoned; // poisoned samples of the target client
    RawDataset train_raw;
    RawDataset test_raw;
    size_t mia_pool_available = 0; // unused trailing train samples (file datasets)
};

ExperimentSetup build_setup(const ExperimentConfig& cfg);

/// Execute one arm end to end and write metrics.csv, summary.json and
/// manifest.json (plus arm-specific artifacts) into cfg.resolved_out_dir().
/// Errors are reported by exception; the CLI maps them to exit codes.
void run_experiment(const ExperimentConfig& cfg, std::ostream& log);

} // namespace vflu

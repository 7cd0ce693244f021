#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vflu/dataset.hpp"
#include "vflu/fedavg.hpp"
#include "vflu/unlearn.hpp"
#include "vflu/verify.hpp"

namespace vflu {

/// Everything one harness invocation needs, parsed from the sectioned
/// key-value config format (grammar documented in the README).
struct ExperimentConfig {
    // [run]
    std::string arm = "fedavg"; // fedavg|retrain|constrained|unlearn|unlearn_pt|grid_t|grid_r|mia
    std::string dataset = "synth"; // synth|mnist|fashion-mnist|cifar10
    std::string model;             // "" = pick by dataset; cnn|alexnet
    uint64_t seed = 1;
    std::string out_dir = "out";
    size_t threads = 0;
    bool record_wall_ms = false;
    bool allow_cifar = false; // the AlexNet arm is heavy; must be asked for

    // [data]
    std::string train_images, train_labels, test_images, test_labels;
    std::vector<std::string> cifar_train_batches;
    std::string cifar_test_batch;
    size_t train_limit = 2000; // subset cap; 0 = use everything
    size_t test_limit = 1000;
    size_t synth_height = 28, synth_width = 28, synth_classes = 10;

    // [train]
    TrainConfig train;

    // [backdoor]
    BackdoorSpec backdoor;
    size_t target_client = 0;

    // [unlearn]
    UnlearnConfig unlearn;

    // [grid]
    std::vector<double> t_values = {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 1e9};
    std::vector<double> r_factors = {1.0 / 3.0, 3.0};

    // [mia]
    size_t mia_shadows = 4;
    size_t mia_pool = 1200;
    size_t mia_poison_pool = 120; // trigger-stamped slice inside the pool
    ShadowTrainConfig shadow;

    void validate() const; // throws ConfigError

    /// Output directory after applying the VFLU_OUTPUT_ROOT override.
    std::filesystem::path resolved_out_dir() const;
};

/// Parse a config file. Unknown sections or keys, bad values and missing
/// files raise ConfigError with file:line diagnostics.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

} // namespace vflu

#pragma once

#include <vector>

#include "vflu/errors.hpp"
#include "vflu/fedavg.hpp"
#include "vflu/split_net.hpp"

namespace vflu {

struct UnlearnConfig {
    size_t target_client = 0;
    Party selected_party = Party::B;
    double eta = 0.001;       // eta_u, ascent rate
    size_t epochs = 30;       // E_u, max ascent epochs
    size_t batch_size = 32;   // m_u
    double radius = 0.0;      // R; <= 0 means "resolve via calibrate_radius"
    double radius_divisor = 3.0; // R = Dist / divisor when unresolved
    double stop_threshold = 1.0; // T, drift threshold on ||W - W_target_prev||
    // true: stop once drift REACHES T (larger T = more forgetting, matching
    // the reported sweeps). false: literal prose reading, stop once drift
    // falls below T; kept selectable for auditability.
    bool stop_when_drift_reaches = true;
    // feed zeros instead of the target's clean unselected-party half
    bool zero_unselected_party = false;
    size_t post_train_rounds = 6;
    uint64_t seed = 1;
};

struct UnlearnTrajectoryPoint {
    size_t epoch = 0;
    double mean_loss = 0.0;
    double drift = 0.0;          // ||W - W_target_prev||
    double dist_to_center = 0.0; // ||W - W_con||
};

struct UnlearnOutcome {
    SplitParams model;
    size_t stop_epoch = 0; // ascent epochs actually run
    double final_drift = 0.0;
    std::vector<UnlearnTrajectoryPoint> trajectory; // one point per epoch
    std::vector<double> step_dists; // dist to center after every projected step
};

/// Thrown when the ascent loss or drift turns non-finite; carries the
/// trajectory recorded up to the failure so the harness can dump it.
class UnlearnAbort : public NumericError {
public:
    UnlearnAbort(const std::string& what, std::vector<UnlearnTrajectoryPoint> trajectory)
        : NumericError(what), trajectory(std::move(trajectory)) {}
    std::vector<UnlearnTrajectoryPoint> trajectory;
};

/// Closed-form removal of half the target's model from the aggregate:
/// W_con = (2N * w_global - w_target_prev) / (2N - 1), applied per block.
SplitParams constrained_model(const SplitParams& w_global, const SplitParams& w_target_prev,
                              size_t num_clients);

/// Mean flattened L2 distance from w_con to the given models.
double mean_distance_to(const SplitParams& w_con, const std::vector<SplitParams>& models);

struct RadiusCalibration {
    double dist = 0.0;   // mean distance to num_random fresh inits
    double radius = 0.0; // dist / divisor
};

/// Dist = mean distance from w_con to `num_random` freshly initialized
/// models; R = Dist / divisor. Errors if Dist is not strictly positive.
RadiusCalibration calibrate_radius(const SplitNet& net, const SplitParams& w_con,
                                   size_t num_random, uint64_t seed, double divisor = 3.0);

/// Gradient-ascent unlearning (mini-batch ascent on the target's poisoned
/// samples, projected after every step onto the R-ball around W_con, early
/// stop on parameter drift). Only `target_data` is ever read; no other
/// client's raw data enters this function.
UnlearnOutcome run_unlearning(const SplitNet& net, const UnlearnConfig& cfg,
                              const SplitParams& w_global, const SplitParams& w_target_prev,
                              const std::vector<VerticalSample>& target_data, size_t num_clients);

/// Recovery: FedAvg continuation from w_unlearn with the target excluded.
/// rounds == 0 returns w_unlearn untouched.
TrainResult post_train(const SplitNet& net, const SplitParams& w_unlearn, const TrainConfig& cfg,
                       const std::vector<ClientDataset>& clients, size_t target_client,
                       size_t rounds, const RoundEval& eval);

struct ThresholdGridRow {
    double threshold = 0.0;
    double clean_acc = 0.0;
    double backdoor_acc = 0.0;
    size_t stop_epoch = 0;
    double final_drift = 0.0;
};

/// One unlearning run per threshold value with shared seeds; rows come back
/// sorted by ascending threshold. Cells run on the worker pool.
std::vector<ThresholdGridRow> grid_search_threshold(
    const SplitNet& net, const UnlearnConfig& base, const std::vector<double>& thresholds,
    const SplitParams& w_global, const SplitParams& w_target_prev,
    const std::vector<VerticalSample>& target_data, size_t num_clients, const RoundEval& eval,
    size_t threads = 0);

struct RadiusGridRow {
    double factor = 0.0; // R = factor * Dist
    double radius = 0.0;
    double clean_acc = 0.0;
    double backdoor_acc = 0.0;
    size_t stop_epoch = 0;
};

/// One unlearning run per radius factor (R = factor * Dist), shared seeds.
std::vector<RadiusGridRow> grid_search_radius(
    const SplitNet& net, const UnlearnConfig& base, const std::vector<double>& factors, double dist,
    const SplitParams& w_global, const SplitParams& w_target_prev,
    const std::vector<VerticalSample>& target_data, size_t num_clients, const RoundEval& eval,
    size_t threads = 0);

} // namespace vflu

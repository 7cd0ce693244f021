#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vflu/dataset.hpp"
#include "vflu/split_net.hpp"

namespace vflu {

struct TrainConfig {
    size_t num_clients = 5;   // N
    size_t epochs = 1;        // E, global rounds
    size_t batch_size = 32;   // m
    double lr = 0.1;          // eta
    uint64_t seed = 1;
    std::vector<size_t> participants; // empty = all of 0..N-1
    size_t threads = 0;               // 0 = hardware concurrency

    std::vector<size_t> resolved_participants() const;
};

/// One emitted metrics row. NaN marks a field that does not apply; the CSV
/// writer renders those as empty.
struct MetricsRecord {
    size_t round = 0;
    std::string phase;
    double clean_acc = NAN;
    double backdoor_acc = NAN;
    double wall_ms = NAN;
    double drift = NAN;
    double dist_to_center = NAN;
};

/// Clean/backdoor accuracy probe invoked once per round on the aggregated
/// model. Keeps the training loop decoupled from the certification module.
using RoundEval = std::function<std::pair<double, double>(const SplitParams&)>;

/// One exchange of the training protocol. The simulator passes these
/// in-process and in plaintext; a wire layer would serialize exactly this.
struct RoundMessage {
    enum class Direction { Up, Down };
    Direction direction = Direction::Down;
    size_t round = 0;
    size_t client_id = 0; // sender for Up, ignored for the broadcast
    SplitParams payload;
};

/// Server-side intake: the Up messages of round k must cover exactly the
/// participant set, once each. Returns payloads in ascending client id.
std::vector<SplitParams> unpack_round(std::vector<RoundMessage> ups, size_t round,
                                      const std::vector<size_t>& participants);

/// Elementwise arithmetic mean. Inputs must be given in ascending client id;
/// the summation order is fixed so results are bit-reproducible.
SplitParams aggregate(const std::vector<SplitParams>& models);

/// One local pass over the client's shuffled mini-batches; per-batch
/// gradients are averaged over the batch and plain SGD is applied to all
/// three parameter blocks. An empty client leaves the model unchanged and
/// emits a warning on stderr.
SplitParams local_epoch(const SplitNet& net, SplitParams model, const ClientDataset& client,
                        size_t batch_size, double lr, uint64_t seed);

struct TrainResult {
    SplitParams model;                 // aggregated global model after the last round
    std::vector<MetricsRecord> rounds; // one record per round
    std::vector<SplitParams> last_locals; // per client id, final-round pre-aggregation models
};

/// Federated averaging over split models: E rounds of broadcast, one local
/// epoch per participant (parallelizable), aggregate in ascending client id.
/// `phase` labels the emitted metrics rows.
TrainResult train_fedavg(const SplitNet& net, const TrainConfig& cfg,
                         const std::vector<ClientDataset>& clients, const RoundEval& eval,
                         const std::string& phase = "train");

/// Same loop continued from an existing model instead of a fresh init.
TrainResult train_fedavg_from(const SplitNet& net, SplitParams init, const TrainConfig& cfg,
                              const std::vector<ClientDataset>& clients, const RoundEval& eval,
                              const std::string& phase = "train");

/// Baseline: fresh training with the target client left out entirely.
TrainResult retrain_without_target(const SplitNet& net, const TrainConfig& cfg,
                                   const std::vector<ClientDataset>& clients, size_t target_client,
                                   const RoundEval& eval);

} // namespace vflu

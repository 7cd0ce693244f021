#include "vflu/fedavg.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "vflu/errors.hpp"
#include "vflu/numeric.hpp"
#include "vflu/parallel.hpp"
#include "vflu/rng.hpp"

namespace vflu {

namespace {
// sub-seed path labels
constexpr uint64_t kSeedInit = 0x11;
constexpr uint64_t kSeedRetrainInit = 0x12;
constexpr uint64_t kSeedRound = 0x21;
} // namespace

std::vector<size_t> TrainConfig::resolved_participants() const {
    std::vector<size_t> out = participants;
    if (out.empty()) {
        out.resize(num_clients);
        std::iota(out.begin(), out.end(), size_t{0});
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<SplitParams> unpack_round(std::vector<RoundMessage> ups, size_t round,
                                      const std::vector<size_t>& participants) {
    std::vector<SplitParams> out(participants.size());
    std::vector<bool> seen(participants.size(), false);
    for (auto& msg : ups) {
        if (msg.direction != RoundMessage::Direction::Up) {
            throw ArgumentError("round intake received a broadcast message");
        }
        if (msg.round != round) {
            throw ArgumentError("message for round " + std::to_string(msg.round) +
                                " arrived during round " + std::to_string(round));
        }
        const auto it = std::lower_bound(participants.begin(), participants.end(), msg.client_id);
        if (it == participants.end() || *it != msg.client_id) {
            throw ArgumentError("client " + std::to_string(msg.client_id) +
                                " is not a participant of this round");
        }
        const size_t slot = size_t(it - participants.begin());
        if (seen[slot]) {
            throw ArgumentError("duplicate message from client " + std::to_string(msg.client_id));
        }
        seen[slot] = true;
        out[slot] = std::move(msg.payload);
    }
    for (size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            throw ArgumentError("round " + std::to_string(round) + " is missing client " +
                                std::to_string(participants[i]));
        }
    }
    return out;
}

SplitParams aggregate(const std::vector<SplitParams>& models) {
    if (models.empty()) throw ArgumentError("aggregate needs at least one model");
    SplitParams acc = models.front();
    for (size_t i = 1; i < models.size(); ++i) {
        const SplitParams& m = models[i];
        if (m.a.size() != acc.a.size() || m.b.size() != acc.b.size() || m.c.size() != acc.c.size()) {
            throw DimensionError("aggregate: model " + std::to_string(i) + " is not shape-aligned");
        }
        axpy(acc, m, 1.0);
    }
    const double inv = 1.0 / double(models.size());
    for (auto* block : {&acc.a, &acc.b, &acc.c}) {
        for (double& v : block->values) v *= inv;
    }
    return acc;
}

SplitParams local_epoch(const SplitNet& net, SplitParams model, const ClientDataset& client,
                        size_t batch_size, double lr, uint64_t seed) {
    if (batch_size == 0) throw ArgumentError("batch size must be at least 1");
    if (client.samples.empty()) {
        std::cerr << "[vflu] warning: client " << client.client_id
                  << " has no samples; local epoch is a no-op\n";
        return model;
    }
    Rng rng(seed);
    std::vector<size_t> order(client.samples.size());
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);

    SplitParams grads{ParamVector(model.a.size()), ParamVector(model.b.size()),
                      ParamVector(model.c.size())};
    SplitCache cache;
    for (size_t start = 0; start < order.size(); start += batch_size) {
        const size_t end = std::min(order.size(), start + batch_size);
        grads.zero();
        for (size_t i = start; i < end; ++i) {
            const VerticalSample& s = client.samples[order[i]];
            split_forward(net, model, s, &cache, true, &rng);
            split_backward(net, model, cache, s.label, grads);
        }
        // batch-mean gradient, one SGD step on all three blocks
        axpy(model, grads, -lr / double(end - start));
    }
    return model;
}

namespace {

TrainResult run_rounds(const SplitNet& net, SplitParams model, const TrainConfig& cfg,
                       const std::vector<ClientDataset>& clients, const RoundEval& eval,
                       const std::string& phase) {
    const std::vector<size_t> participants = cfg.resolved_participants();
    if (participants.empty()) throw ArgumentError("participant set is empty");
    if (cfg.num_clients > clients.size() || participants.back() >= cfg.num_clients) {
        throw ArgumentError("participant id exceeds the configured client count");
    }
    if (cfg.epochs < 1) throw ArgumentError("global epochs must be at least 1");
    if (!(cfg.lr > 0.0)) throw ArgumentError("learning rate must be positive");

    TrainResult result;
    result.last_locals.resize(clients.size());
    std::vector<SplitParams> locals;
    for (size_t round = 1; round <= cfg.epochs; ++round) {
        RoundMessage broadcast{RoundMessage::Direction::Down, round, 0, std::move(model)};
        std::vector<RoundMessage> ups(participants.size());
        parallel_for(participants.size(), cfg.threads, [&](size_t pi) {
            const size_t cid = participants[pi];
            ups[pi] = {RoundMessage::Direction::Up, round, cid,
                       local_epoch(net, broadcast.payload, clients[cid], cfg.batch_size, cfg.lr,
                                   Rng::derive(cfg.seed, kSeedRound, round, cid))};
        });
        // ascending client id regardless of worker completion order
        locals = unpack_round(std::move(ups), round, participants);
        model = aggregate(locals);
        MetricsRecord rec;
        rec.round = round;
        rec.phase = phase;
        if (eval) {
            const auto [clean, backdoor] = eval(model);
            rec.clean_acc = clean;
            rec.backdoor_acc = backdoor;
        }
        result.rounds.push_back(std::move(rec));
    }
    for (size_t pi = 0; pi < participants.size(); ++pi) {
        result.last_locals[participants[pi]] = std::move(locals[pi]);
    }
    result.model = std::move(model);
    return result;
}

} // namespace

TrainResult train_fedavg(const SplitNet& net, const TrainConfig& cfg,
                         const std::vector<ClientDataset>& clients, const RoundEval& eval,
                         const std::string& phase) {
    return run_rounds(net, net.init_params(Rng::derive(cfg.seed, kSeedInit)), cfg, clients, eval,
                      phase);
}

TrainResult train_fedavg_from(const SplitNet& net, SplitParams init, const TrainConfig& cfg,
                              const std::vector<ClientDataset>& clients, const RoundEval& eval,
                              const std::string& phase) {
    return run_rounds(net, std::move(init), cfg, clients, eval, phase);
}

TrainResult retrain_without_target(const SplitNet& net, const TrainConfig& cfg,
                                   const std::vector<ClientDataset>& clients, size_t target_client,
                                   const RoundEval& eval) {
    if (target_client >= cfg.num_clients) {
        throw ArgumentError("target client " + std::to_string(target_client) + " out of range");
    }
    TrainConfig excl = cfg;
    excl.participants.clear();
    for (size_t cid = 0; cid < cfg.num_clients; ++cid) {
        if (cid != target_client) excl.participants.push_back(cid);
    }
    if (excl.participants.empty()) {
        throw ArgumentError("excluding client " + std::to_string(target_client) +
                            " leaves no participants");
    }
    return run_rounds(net, net.init_params(Rng::derive(cfg.seed, kSeedRetrainInit)), excl, clients,
                      eval, "retrain");
}

} // namespace vflu

#include "vflu/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vflu/errors.hpp"
#include "vflu/numeric.hpp"
#include "vflu/parallel.hpp"
#include "vflu/rng.hpp"

namespace vflu {

namespace {
constexpr uint64_t kSeedCalib = 0x31;
constexpr uint64_t kSeedEpoch = 0x41;
} // namespace

SplitParams constrained_model(const SplitParams& w_global, const SplitParams& w_target_prev,
                              size_t num_clients) {
    if (num_clients < 1) throw ArgumentError("need at least one client");
    const double n = double(num_clients);
    const double denom = 2.0 * n - 1.0;
    return constrained_combination(w_global, 2.0 * n / denom, w_target_prev, -1.0 / denom);
}

double mean_distance_to(const SplitParams& w_con, const std::vector<SplitParams>& models) {
    if (models.empty()) throw ArgumentError("mean_distance_to needs at least one model");
    double acc = 0.0;
    for (const auto& m : models) acc += l2_distance(w_con, m);
    return acc / double(models.size());
}

RadiusCalibration calibrate_radius(const SplitNet& net, const SplitParams& w_con,
                                   size_t num_random, uint64_t seed, double divisor) {
    if (num_random == 0) throw ArgumentError("need at least one random model");
    if (!(divisor > 0.0)) throw ArgumentError("radius divisor must be positive");
    std::vector<SplitParams> models;
    models.reserve(num_random);
    for (size_t j = 0; j < num_random; ++j) {
        models.push_back(net.init_params(Rng::derive(seed, kSeedCalib, j)));
    }
    RadiusCalibration out;
    out.dist = mean_distance_to(w_con, models);
    if (!(out.dist > 0.0)) {
        throw ArgumentError("radius must be positive: calibrated Dist is zero");
    }
    out.radius = out.dist / divisor;
    return out;
}

UnlearnOutcome run_unlearning(const SplitNet& net, const UnlearnConfig& cfg,
                              const SplitParams& w_global, const SplitParams& w_target_prev,
                              const std::vector<VerticalSample>& target_data, size_t num_clients) {
    if (target_data.empty()) throw ArgumentError("unlearning needs a non-empty target dataset");
    if (!(cfg.eta >= 0.0)) throw ArgumentError("unlearning rate must be non-negative");
    if (cfg.epochs < 1) throw ArgumentError("unlearning epochs must be at least 1");
    if (cfg.batch_size < 1) throw ArgumentError("unlearning batch size must be at least 1");
    if (!(cfg.radius > 0.0)) throw ArgumentError("unlearning radius must be resolved and positive");
    if (!(cfg.stop_threshold > 0.0)) throw ArgumentError("early-stop threshold must be positive");

    const SplitParams w_con = constrained_model(w_global, w_target_prev, num_clients);

    std::vector<VerticalSample> data = target_data;
    if (cfg.zero_unselected_party) {
        for (auto& s : data) {
            Tensor& clean_half = cfg.selected_party == Party::B ? s.left : s.right;
            clean_half.fill(0.0);
        }
    }

    UnlearnOutcome out;
    out.model = w_con;
    SplitParams grads{ParamVector(w_con.a.size()), ParamVector(w_con.b.size()),
                      ParamVector(w_con.c.size())};
    SplitCache cache;
    std::vector<size_t> order(data.size());

    size_t epoch = 0;
    for (epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(Rng::derive(cfg.seed, kSeedEpoch, epoch));
        std::iota(order.begin(), order.end(), size_t{0});
        rng.shuffle(order);

        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            grads.zero();
            double batch_loss = 0.0;
            try {
                for (size_t i = start; i < end; ++i) {
                    const VerticalSample& s = data[order[i]];
                    split_forward(net, out.model, s, &cache, true, &rng);
                    batch_loss += split_backward(net, out.model, cache, s.label, grads);
                }
            } catch (const NumericError& e) {
                throw UnlearnAbort(std::string(e.what()) + " (unlearning epoch " +
                                       std::to_string(epoch) + ")",
                                   out.trajectory);
            }
            if (!std::isfinite(batch_loss)) {
                throw UnlearnAbort("unlearning loss turned non-finite at epoch " +
                                       std::to_string(epoch),
                                   out.trajectory);
            }
            loss_sum += batch_loss;
            // ascent step on the batch-mean gradient, then pull back into the ball
            axpy(out.model, grads, cfg.eta / double(end - start));
            double dist = l2_distance(out.model, w_con);
            if (!std::isfinite(dist)) {
                throw UnlearnAbort("unlearned parameters turned non-finite at epoch " +
                                       std::to_string(epoch),
                                   out.trajectory);
            }
            for (int pass = 0; pass < 16 && dist > cfg.radius; ++pass) {
                const double scale = cfg.radius / dist * (pass < 4 ? 1.0 : 1.0 - 1e-15);
                // model = w_con + scale * (model - w_con), per block
                out.model = constrained_combination(out.model, scale, w_con, 1.0 - scale);
                dist = l2_distance(out.model, w_con);
            }
            out.step_dists.push_back(dist);
        }

        UnlearnTrajectoryPoint pt;
        pt.epoch = epoch;
        pt.mean_loss = loss_sum / double(data.size());
        pt.drift = l2_distance(out.model, w_target_prev);
        pt.dist_to_center = l2_distance(out.model, w_con);
        if (!std::isfinite(pt.drift) || !std::isfinite(pt.dist_to_center)) {
            throw UnlearnAbort("unlearning drift turned non-finite at epoch " +
                                   std::to_string(epoch),
                               out.trajectory);
        }
        out.trajectory.push_back(pt);
        out.final_drift = pt.drift;

        const bool tripped = cfg.stop_when_drift_reaches ? pt.drift >= cfg.stop_threshold
                                                         : pt.drift < cfg.stop_threshold;
        if (tripped) break;
    }
    out.stop_epoch = std::min(epoch, cfg.epochs);
    return out;
}

TrainResult post_train(const SplitNet& net, const SplitParams& w_unlearn, const TrainConfig& cfg,
                       const std::vector<ClientDataset>& clients, size_t target_client,
                       size_t rounds, const RoundEval& eval) {
    if (rounds == 0) {
        TrainResult r;
        r.model = w_unlearn;
        r.last_locals.resize(clients.size());
        return r;
    }
    TrainConfig pt = cfg;
    pt.epochs = rounds;
    pt.participants.clear();
    for (size_t cid = 0; cid < cfg.num_clients; ++cid) {
        if (cid != target_client) pt.participants.push_back(cid);
    }
    if (pt.participants.empty()) {
        throw ArgumentError("post-training with no remaining participants");
    }
    return train_fedavg_from(net, w_unlearn, pt, clients, eval, "post_train");
}

std::vector<ThresholdGridRow> grid_search_threshold(
    const SplitNet& net, const UnlearnConfig& base, const std::vector<double>& thresholds,
    const SplitParams& w_global, const SplitParams& w_target_prev,
    const std::vector<VerticalSample>& target_data, size_t num_clients, const RoundEval& eval,
    size_t threads) {
    if (thresholds.empty()) throw ArgumentError("threshold grid is empty");
    std::vector<double> sorted = thresholds;
    std::sort(sorted.begin(), sorted.end());
    std::vector<ThresholdGridRow> rows(sorted.size());
    parallel_for(sorted.size(), threads, [&](size_t i) {
        UnlearnConfig cfg = base;
        cfg.stop_threshold = sorted[i];
        const UnlearnOutcome res =
            run_unlearning(net, cfg, w_global, w_target_prev, target_data, num_clients);
        const auto [clean, backdoor] = eval(res.model);
        rows[i] = {sorted[i], clean, backdoor, res.stop_epoch, res.final_drift};
    });
    return rows;
}

std::vector<RadiusGridRow> grid_search_radius(
    const SplitNet& net, const UnlearnConfig& base, const std::vector<double>& factors, double dist,
    const SplitParams& w_global, const SplitParams& w_target_prev,
    const std::vector<VerticalSample>& target_data, size_t num_clients, const RoundEval& eval,
    size_t threads) {
    if (factors.empty()) throw ArgumentError("radius grid is empty");
    if (!(dist > 0.0)) throw ArgumentError("radius grid needs a positive Dist");
    std::vector<double> sorted = factors;
    std::sort(sorted.begin(), sorted.end());
    std::vector<RadiusGridRow> rows(sorted.size());
    parallel_for(sorted.size(), threads, [&](size_t i) {
        UnlearnConfig cfg = base;
        cfg.radius = sorted[i] * dist;
        const UnlearnOutcome res =
            run_unlearning(net, cfg, w_global, w_target_prev, target_data, num_clients);
        const auto [clean, backdoor] = eval(res.model);
        rows[i] = {sorted[i], cfg.radius, clean, backdoor, res.stop_epoch};
    });
    return rows;
}

} // namespace vflu

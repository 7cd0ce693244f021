#include "vflu/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vflu/errors.hpp"
#include "vflu/fedavg.hpp"
#include "vflu/numeric.hpp"
#include "vflu/parallel.hpp"
#include "vflu/rng.hpp"

namespace vflu {

namespace {
constexpr uint64_t kSeedShadowSplit = 0x51;
constexpr uint64_t kSeedShadowInit = 0x52;
constexpr uint64_t kSeedShadowEpoch = 0x53;

size_t argmax(const Tensor& t) {
    return size_t(std::max_element(t.data.begin(), t.data.end()) - t.data.begin());
}
} // namespace

EvalResult evaluate(const SplitNet& net, const SplitParams& params,
                    const std::vector<VerticalSample>& samples, size_t threads) {
    if (samples.empty()) throw ArgumentError("evaluate: no samples");
    const size_t num_classes = net.coordinator().output_size();
    std::vector<uint8_t> correct(samples.size());
    std::vector<uint32_t> pred(samples.size());
    parallel_for(samples.size(), threads, [&](size_t i) {
        const Tensor logits = split_forward(net, params, samples[i]);
        pred[i] = uint32_t(argmax(logits));
        correct[i] = int(pred[i]) == samples[i].label ? 1 : 0;
    });
    EvalResult out;
    out.n = samples.size();
    out.per_class_counts.assign(num_classes, 0);
    size_t hits = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        hits += correct[i];
        out.per_class_counts[pred[i]]++;
    }
    out.accuracy = double(hits) / double(out.n);
    return out;
}

EvalResult backdoor_accuracy(const SplitNet& net, const SplitParams& params,
                             const std::vector<VerticalSample>& tampered, size_t threads) {
    if (tampered.empty()) throw ArgumentError("backdoor_accuracy: no tampered samples");
    for (const auto& s : tampered) {
        if (!s.poisoned) {
            throw ArgumentError("backdoor_accuracy: sample without the poisoned flag");
        }
    }
    return evaluate(net, params, tampered, threads);
}

std::vector<double> predict_softmax(const SplitNet& net, const SplitParams& params,
                                    const VerticalSample& sample) {
    const Tensor logits = split_forward(net, params, sample);
    return softmax(logits.data);
}

std::vector<ShadowModel> train_shadow_models(const SplitNet& net,
                                             const std::vector<VerticalSample>& pool, size_t k,
                                             const ShadowTrainConfig& cfg, uint64_t seed,
                                             size_t threads) {
    if (k == 0) throw ArgumentError("need at least one shadow model");
    if (pool.size() < 2) throw ArgumentError("shadow pool too small");

    // Poisoned pool samples are one indivisible block: a triggered sample is
    // "in training" exactly when the trigger itself was trained in, so the
    // block joins even shadows' members and odd shadows' non-members. The
    // shadows then emulate the two counterfactual pipelines (with and
    // without the attacked client) the membership question distinguishes.
    std::vector<size_t> clean_idx, poisoned_idx;
    for (size_t i = 0; i < pool.size(); ++i) {
        (pool[i].poisoned ? poisoned_idx : clean_idx).push_back(i);
    }
    const size_t half = pool.size() / 2;
    if (poisoned_idx.size() > half) {
        throw ArgumentError("shadow pool has more poisoned samples than half the pool");
    }

    std::vector<ShadowModel> shadows(k);
    parallel_for(k, threads, [&](size_t j) {
        std::vector<size_t> idx = clean_idx;
        Rng rng(Rng::derive(seed, kSeedShadowSplit, j));
        rng.shuffle(idx);
        ShadowModel& sm = shadows[j];
        const bool attacked = j % 2 == 0;
        if (attacked) sm.members = poisoned_idx;
        size_t pos = 0;
        while (sm.members.size() < half) sm.members.push_back(idx[pos++]);
        sm.nonmembers.assign(idx.begin() + long(pos), idx.end());
        if (!attacked) {
            sm.nonmembers.insert(sm.nonmembers.end(), poisoned_idx.begin(), poisoned_idx.end());
        }

        ClientDataset train_set;
        train_set.client_id = j;
        train_set.samples.reserve(half);
        for (size_t i : sm.members) train_set.samples.push_back(pool[i]);

        sm.params = net.init_params(Rng::derive(seed, kSeedShadowInit, j));
        for (size_t e = 1; e <= cfg.epochs; ++e) {
            sm.params = local_epoch(net, std::move(sm.params), train_set, cfg.batch_size, cfg.lr,
                                    Rng::derive(seed, kSeedShadowEpoch, j, e));
        }
    });
    return shadows;
}

std::map<int, AttackDataset> build_attack_dataset(const SplitNet& net,
                                                  const std::vector<ShadowModel>& shadows,
                                                  const std::vector<VerticalSample>& pool) {
    std::map<int, AttackDataset> out;
    auto add = [&](const SplitParams& params, size_t pool_idx, int bit) {
        const VerticalSample& s = pool[pool_idx];
        AttackDataset& d = out[s.label];
        d.class_label = s.label;
        d.softmax_rows.push_back(predict_softmax(net, params, s));
        d.member_bits.push_back(bit);
    };
    for (const auto& sm : shadows) {
        for (size_t i : sm.members) add(sm.params, i, 1);
        for (size_t i : sm.nonmembers) add(sm.params, i, 0);
    }
    return out;
}

double AttackModel::membership_probability(const std::vector<double>& softmax_vec) const {
    if (softmax_vec.size() != weights.size()) {
        throw DimensionError("attack model expects " + std::to_string(weights.size()) +
                             " softmax entries");
    }
    double z = bias;
    for (size_t i = 0; i < weights.size(); ++i) z += weights[i] * softmax_vec[i];
    return 1.0 / (1.0 + std::exp(-z));
}

std::map<int, AttackModel> train_attack_models(const std::map<int, AttackDataset>& datasets) {
    std::map<int, AttackModel> out;
    for (const auto& [label, data] : datasets) {
        if (data.softmax_rows.empty()) continue;
        const size_t dim = data.softmax_rows.front().size();
        const size_t n = data.softmax_rows.size();
        AttackModel m;
        m.weights.assign(dim, 0.0);
        m.bias = 0.0;

        const double lr = 2.0;
        double prev_loss = std::numeric_limits<double>::infinity();
        for (size_t epoch = 0; epoch < 500; ++epoch) {
            std::vector<double> gw(dim, 0.0);
            double gb = 0.0, loss = 0.0;
            for (size_t i = 0; i < n; ++i) {
                const double p = m.membership_probability(data.softmax_rows[i]);
                const double y = double(data.member_bits[i]);
                const double eps = 1e-12;
                loss -= y * std::log(p + eps) + (1.0 - y) * std::log(1.0 - p + eps);
                const double d = p - y;
                for (size_t jj = 0; jj < dim; ++jj) gw[jj] += d * data.softmax_rows[i][jj];
                gb += d;
            }
            loss /= double(n);
            for (size_t jj = 0; jj < dim; ++jj) m.weights[jj] -= lr * gw[jj] / double(n);
            m.bias -= lr * gb / double(n);
            if (std::abs(prev_loss - loss) < 1e-6) break;
            prev_loss = loss;
        }
        out[label] = std::move(m);
    }
    return out;
}

MiaResult mia_recall(const std::map<int, AttackModel>& attack_models, const SplitNet& net,
                     const SplitParams& target_model, const std::vector<VerticalSample>& members,
                     const std::vector<VerticalSample>& nonmembers) {
    if (members.empty()) throw ArgumentError("mia_recall: no member samples");
    MiaResult r;
    auto classify = [&](const VerticalSample& s, bool* is_member_pred) {
        const auto it = attack_models.find(s.label);
        if (it == attack_models.end()) return false; // class absent: skip
        const auto sm = predict_softmax(net, target_model, s);
        *is_member_pred = it->second.membership_probability(sm) >= 0.5;
        return true;
    };
    for (const auto& s : members) {
        bool pred = false;
        if (!classify(s, &pred)) continue;
        pred ? ++r.tp : ++r.fn;
    }
    for (const auto& s : nonmembers) {
        bool pred = false;
        if (!classify(s, &pred)) continue;
        pred ? ++r.fp : ++r.tn;
    }
    if (r.tp + r.fn == 0) throw ArgumentError("mia_recall: no member sample had an attack model");
    r.recall = double(r.tp) / double(r.tp + r.fn);
    return r;
}

} // namespace vflu

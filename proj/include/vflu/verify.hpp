#pragma once

#include <map>
#include <vector>

#include "vflu/split_net.hpp"

namespace vflu {

struct EvalResult {
    double accuracy = 0.0;
    size_t n = 0;
    std::vector<size_t> per_class_counts; // predictions per class; sums to n
};

/// Clean accuracy: argmax of the logits vs the stored label, dropout off.
EvalResult evaluate(const SplitNet& net, const SplitParams& params,
                    const std::vector<VerticalSample>& samples, size_t threads = 0);

/// Backdoor accuracy over a tampered set: fraction classified as the
/// attacker's target label. Every sample must carry the poisoned flag;
/// an empty set is an error ("no tampered samples").
EvalResult backdoor_accuracy(const SplitNet& net, const SplitParams& params,
                             const std::vector<VerticalSample>& tampered, size_t threads = 0);

/// Softmax prediction vector for one sample (dropout off).
std::vector<double> predict_softmax(const SplitNet& net, const SplitParams& params,
                                    const VerticalSample& sample);

struct ShadowTrainConfig {
    size_t epochs = 12;
    size_t batch_size = 32;
    double lr = 0.1;
};

struct ShadowModel {
    SplitParams params;
    std::vector<size_t> members;    // pool indices the shadow trained on
    std::vector<size_t> nonmembers; // held-out pool indices
};

/// k shadows, each trained (centralized SGD, same architecture) on a seeded
/// half of the pool; the other half is its held-out set. Poisoned pool
/// samples move as one block — members of even shadows, non-members of odd
/// ones — so the shadow population covers both the attacked and the clean
/// counterfactual pipeline.
std::vector<ShadowModel> train_shadow_models(const SplitNet& net,
                                             const std::vector<VerticalSample>& pool, size_t k,
                                             const ShadowTrainConfig& cfg, uint64_t seed,
                                             size_t threads = 0);

struct AttackDataset {
    int class_label = 0;
    std::vector<std::vector<double>> softmax_rows;
    std::vector<int> member_bits; // 1 = was in the shadow's training set
};

/// Per true class y: rows (softmax_shadow(x), member bit) for every pool
/// sample of every shadow. Classes with no rows are simply absent.
std::map<int, AttackDataset> build_attack_dataset(const SplitNet& net,
                                                  const std::vector<ShadowModel>& shadows,
                                                  const std::vector<VerticalSample>& pool);

/// Per-class logistic regression over the softmax vector, trained by batch
/// gradient descent to convergence (loss delta < 1e-6 or 500 epochs).
struct AttackModel {
    std::vector<double> weights;
    double bias = 0.0;

    double membership_probability(const std::vector<double>& softmax_vec) const;
};

std::map<int, AttackModel> train_attack_models(const std::map<int, AttackDataset>& datasets);

struct MiaResult {
    double recall = 0.0; // TP / (TP + FN) over true members
    size_t tp = 0, fn = 0, fp = 0, tn = 0;
};

/// Predict membership of each sample through the attack model of its class at
/// threshold 0.5. Samples whose class has no attack model are skipped.
MiaResult mia_recall(const std::map<int, AttackModel>& attack_models, const SplitNet& net,
                     const SplitParams& target_model, const std::vector<VerticalSample>& members,
                     const std::vector<VerticalSample>& nonmembers);

} // namespace vflu

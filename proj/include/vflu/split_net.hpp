#pragma once

#include <vector>

#include "vflu/dataset.hpp"
#include "vflu/net.hpp"

namespace vflu {

/// Parameter triple of one split model: party A net, party B net, coordinator.
struct SplitParams {
    ParamVector a;
    ParamVector b;
    ParamVector c;

    size_t size() const { return a.size() + b.size() + c.size(); }
    void zero();

    /// Single index-aligned vector [a|b|c]; drift and projection act on it.
    ParamVector flatten() const;

    bool operator==(const SplitParams& other) const {
        return a == other.a && b == other.b && c == other.c;
    }
};

void axpy(SplitParams& params, const SplitParams& grads, double scale);
double l2_distance(const SplitParams& x, const SplitParams& y);
SplitParams constrained_combination(const SplitParams& x, double sx, const SplitParams& y, double sy);

/// Architecture triple. The coordinator consumes the concatenation
/// [party A output ⊕ party B output], A's block first.
class SplitNet {
public:
    SplitNet() = default;
    SplitNet(Net party_a, Net party_b, Net coordinator);

    const Net& party_a() const { return party_a_; }
    const Net& party_b() const { return party_b_; }
    const Net& coordinator() const { return coordinator_; }
    size_t out_a() const { return out_a_; } // width of A's block in the concat
    size_t out_b() const { return out_b_; }
    size_t param_count() const;

    SplitParams init_params(Rng& rng) const;
    SplitParams init_params(uint64_t seed) const;

private:
    Net party_a_, party_b_, coordinator_;
    size_t out_a_ = 0, out_b_ = 0;
};

struct SplitCache {
    ForwardCache a, b, c;
    Tensor logits;
};

/// Forward pass of the split pipeline for one sample.
Tensor split_forward(const SplitNet& net, const SplitParams& params, const VerticalSample& sample,
                     SplitCache* cache = nullptr, bool training = false, Rng* rng = nullptr);

/// Backward pass from a cached forward. The coordinator's input gradient is
/// split at out_a(): the A block flows back through party A, the rest through
/// party B. Gradients are accumulated into `grad_accum`; returns the loss.
double split_backward(const SplitNet& net, const SplitParams& params, const SplitCache& cache,
                      int label, SplitParams& grad_accum);

/// Compact CNN split: two conv+pool stages per party (kernel 3, stride 1,
/// padding 1), coordinator FC(concat->128) + ReLU + FC(128->classes).
/// For 28x14 halves the coordinator input is 2688.
SplitNet make_cnn_split(size_t channels, size_t height, size_t left_width, size_t right_width,
                        size_t num_classes);

/// AlexNet-style split: five conv+ReLU+pool stages per party, coordinator
/// FC+Dropout+ReLU twice then FC(->classes). A pool stage is skipped when it
/// would reduce a spatial dim to zero, and the first coordinator FC width is
/// derived from the actual party output.
SplitNet make_alexnet_split(size_t channels, size_t height, size_t left_width, size_t right_width,
                            size_t num_classes);

} // namespace vflu

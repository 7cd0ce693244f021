#include "vflu/split_net.hpp"

#include <algorithm>

#include "vflu/errors.hpp"
#include "vflu/numeric.hpp"

namespace vflu {

void SplitParams::zero() {
    a.zero();
    b.zero();
    c.zero();
}

ParamVector SplitParams::flatten() const {
    ParamVector out(size());
    auto it = std::copy(a.values.begin(), a.values.end(), out.values.begin());
    it = std::copy(b.values.begin(), b.values.end(), it);
    std::copy(c.values.begin(), c.values.end(), it);
    return out;
}

void axpy(SplitParams& params, const SplitParams& grads, double scale) {
    axpy(params.a, grads.a, scale);
    axpy(params.b, grads.b, scale);
    axpy(params.c, grads.c, scale);
}

double l2_distance(const SplitParams& x, const SplitParams& y) {
    auto sq = [](const ParamVector& p, const ParamVector& q) {
        if (p.size() != q.size()) throw DimensionError("split params are not aligned");
        double acc = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - q[i];
            acc += d * d;
        }
        return acc;
    };
    return std::sqrt(sq(x.a, y.a) + sq(x.b, y.b) + sq(x.c, y.c));
}

SplitParams constrained_combination(const SplitParams& x, double sx, const SplitParams& y, double sy) {
    auto comb = [&](const ParamVector& p, const ParamVector& q) {
        if (p.size() != q.size()) throw DimensionError("split params are not aligned");
        ParamVector out(p.size());
        for (size_t i = 0; i < p.size(); ++i) out[i] = sx * p[i] + sy * q[i];
        return out;
    };
    return {comb(x.a, y.a), comb(x.b, y.b), comb(x.c, y.c)};
}

SplitNet::SplitNet(Net party_a, Net party_b, Net coordinator)
    : party_a_(std::move(party_a)), party_b_(std::move(party_b)),
      coordinator_(std::move(coordinator)) {
    out_a_ = party_a_.output_size();
    out_b_ = party_b_.output_size();
    const auto& cin = coordinator_.input_shape();
    if (cin.size() != 1 || cin[0] != out_a_ + out_b_) {
        throw DimensionError("coordinator input width " + shape_to_string(cin) +
                             " != party output widths " + std::to_string(out_a_) + "+" +
                             std::to_string(out_b_));
    }
}

size_t SplitNet::param_count() const {
    return party_a_.param_count() + party_b_.param_count() + coordinator_.param_count();
}

SplitParams SplitNet::init_params(Rng& rng) const {
    return {party_a_.init_params(rng), party_b_.init_params(rng), coordinator_.init_params(rng)};
}

SplitParams SplitNet::init_params(uint64_t seed) const {
    Rng rng(seed);
    return init_params(rng);
}

Tensor split_forward(const SplitNet& net, const SplitParams& params, const VerticalSample& sample,
                     SplitCache* cache, bool training, Rng* rng) {
    SplitCache local;
    SplitCache& cc = cache ? *cache : local;
    const Tensor out_a = net.party_a().forward(params.a, sample.left, cc.a, training, rng);
    const Tensor out_b = net.party_b().forward(params.b, sample.right, cc.b, training, rng);

    Tensor concat({net.out_a() + net.out_b()});
    std::copy(out_a.data.begin(), out_a.data.end(), concat.data.begin());
    std::copy(out_b.data.begin(), out_b.data.end(),
              concat.data.begin() + static_cast<long>(net.out_a()));

    cc.logits = net.coordinator().forward(params.c, concat, cc.c, training, rng);
    return cc.logits;
}

double split_backward(const SplitNet& net, const SplitParams& params, const SplitCache& cache,
                      int label, SplitParams& grad_accum) {
    if (label < 0) throw ArgumentError("negative class label");
    const LossGrad lg = softmax_cross_entropy(cache.logits, size_t(label));

    const Tensor g_concat =
        net.coordinator().backward(params.c, cache.c, lg.grad_logits, grad_accum.c);

    Tensor g_a(net.party_a().output_shape());
    Tensor g_b(net.party_b().output_shape());
    std::copy(g_concat.data.begin(), g_concat.data.begin() + static_cast<long>(net.out_a()),
              g_a.data.begin());
    std::copy(g_concat.data.begin() + static_cast<long>(net.out_a()), g_concat.data.end(),
              g_b.data.begin());

    net.party_a().backward(params.a, cache.a, g_a, grad_accum.a);
    net.party_b().backward(params.b, cache.b, g_b, grad_accum.b);
    return lg.loss;
}

namespace {

Net make_cnn_party(size_t channels, size_t height, size_t width) {
    return Net({channels, height, width},
               {LayerSpec::conv(channels, 32, 3, 1, 1), LayerSpec::max_pool(2, 2),
                LayerSpec::conv(32, 64, 3, 1, 1), LayerSpec::max_pool(2, 2)});
}

} // namespace

SplitNet make_cnn_split(size_t channels, size_t height, size_t left_width, size_t right_width,
                        size_t num_classes) {
    Net a = make_cnn_party(channels, height, left_width);
    Net b = make_cnn_party(channels, height, right_width);
    const size_t concat = a.output_size() + b.output_size();
    Net c({concat}, {LayerSpec::fully_connected(concat, 128), LayerSpec::relu(),
                     LayerSpec::fully_connected(128, num_classes)});
    return SplitNet(std::move(a), std::move(b), std::move(c));
}

namespace {

Net make_alexnet_party(size_t channels, size_t height, size_t width) {
    const size_t chans[6] = {channels, 64, 192, 384, 256, 256};
    std::vector<LayerSpec> layers;
    size_t h = height, w = width;
    for (size_t stage = 0; stage < 5; ++stage) {
        layers.push_back(LayerSpec::conv(chans[stage], chans[stage + 1], 3, 1, 1));
        layers.push_back(LayerSpec::relu());
        // pooling a dim below 1 would make the net vanish; skip such stages
        if (h / 2 >= 1 && w / 2 >= 1 && h >= 2 && w >= 2) {
            layers.push_back(LayerSpec::max_pool(2, 2));
            h /= 2;
            w /= 2;
        }
    }
    return Net({channels, height, width}, std::move(layers));
}

} // namespace

SplitNet make_alexnet_split(size_t channels, size_t height, size_t left_width, size_t right_width,
                            size_t num_classes) {
    Net a = make_alexnet_party(channels, height, left_width);
    Net b = make_alexnet_party(channels, height, right_width);
    const size_t concat = a.output_size() + b.output_size();
    Net c({concat},
          {LayerSpec::fully_connected(concat, 4096), LayerSpec::dropout(0.5), LayerSpec::relu(),
           LayerSpec::fully_connected(4096, 4096), LayerSpec::dropout(0.5), LayerSpec::relu(),
           LayerSpec::fully_connected(4096, num_classes)});
    return SplitNet(std::move(a), std::move(b), std::move(c));
}

} // namespace vflu

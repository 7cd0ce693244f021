#include "vflu/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "vflu/errors.hpp"

namespace vflu {

LossGrad softmax_cross_entropy(const Tensor& logits, size_t label) {
    if (logits.rank() != 1 || logits.size() == 0) {
        throw DimensionError("softmax cross-entropy expects a non-empty 1-D logit vector");
    }
    if (label >= logits.size()) {
        throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(logits.size()) + " classes");
    }
    const double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double sum = 0.0;
    LossGrad out;
    out.grad_logits = Tensor(logits.shape);
    for (size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp(logits.data[i] - mx);
        out.grad_logits.data[i] = e;
        sum += e;
    }
    out.loss = std::log(sum) - (logits.data[label] - mx);
    const double inv = 1.0 / sum;
    for (double& v : out.grad_logits.data) v *= inv;
    out.grad_logits.data[label] -= 1.0;
    return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

namespace {
void check_aligned(const ParamVector& a, const ParamVector& b, const char* who) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(who) + ": vectors of length " + std::to_string(a.size()) +
                             " and " + std::to_string(b.size()) + " are not aligned");
    }
}
} // namespace

ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double eta) {
    check_aligned(params, grads, "sgd_step");
    ParamVector out = params;
    for (size_t i = 0; i < out.size(); ++i) out[i] -= eta * grads[i];
    return out;
}

ParamVector ascent_step(const ParamVector& params, const ParamVector& grads, double eta) {
    check_aligned(params, grads, "ascent_step");
    ParamVector out = params;
    for (size_t i = 0; i < out.size(); ++i) out[i] += eta * grads[i];
    return out;
}

void axpy(ParamVector& params, const ParamVector& grads, double scale) {
    check_aligned(params, grads, "axpy");
    for (size_t i = 0; i < params.size(); ++i) params[i] += scale * grads[i];
}

double l2_distance(const ParamVector& a, const ParamVector& b) {
    check_aligned(a, b, "l2_distance");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

ParamVector project_to_ball(const ParamVector& p, const ParamVector& center, double radius) {
    if (!(radius > 0.0)) {
        throw ArgumentError("projection radius must be positive");
    }
    check_aligned(p, center, "project_to_ball");
    double dist = l2_distance(p, center);
    if (dist <= radius) return p;
    ParamVector out = p;
    // A single rescale can land a few ulps outside the ball; iterate on the
    // recomputed distance so the result is inside in computed arithmetic,
    // which also makes the projection bitwise idempotent.
    for (int pass = 0; pass < 16 && dist > radius; ++pass) {
        const double scale = radius / dist * (pass < 4 ? 1.0 : 1.0 - 1e-15);
        for (size_t i = 0; i < out.size(); ++i) out[i] = center[i] + scale * (out[i] - center[i]);
        dist = l2_distance(out, center);
    }
    return out;
}

} // namespace vflu

#pragma once

#include <vector>

#include "vflu/net.hpp"
#include "vflu/tensor.hpp"

namespace vflu {

struct LossGrad {
    double loss = 0.0;
    Tensor grad_logits;
};

/// Numerically stabilized softmax cross-entropy over a 1-D logit vector.
/// grad_logits = softmax(logits) - one_hot(label).
LossGrad softmax_cross_entropy(const Tensor& logits, size_t label);

/// Stabilized softmax of a 1-D logit vector.
std::vector<double> softmax(const std::vector<double>& logits);

/// out = params - eta * grads
ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double eta);

/// out = params + eta * grads
ParamVector ascent_step(const ParamVector& params, const ParamVector& grads, double eta);

/// params += scale * grads (hot-loop form of the two steps above)
void axpy(ParamVector& params, const ParamVector& grads, double scale);

double l2_distance(const ParamVector& a, const ParamVector& b);

/// Euclidean projection onto the ball of radius `radius` around `center`.
/// Points already inside are returned unchanged (bitwise).
ParamVector project_to_ball(const ParamVector& p, const ParamVector& center, double radius);

} // namespace vflu

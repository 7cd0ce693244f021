#pragma once

#include <cstdint>
#include <vector>

#include "vflu/rng.hpp"
#include "vflu/tensor.hpp"

namespace vflu {

enum class LayerKind { Convolution, MaxPool, Relu, FullyConnected, Dropout };

/// One layer of a feed-forward net. Only the fields of the chosen kind are
/// meaningful; the factory functions fill them in and the Net constructor
/// validates them (dims strictly positive, dropout probability in [0,1)).
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;

    // Convolution / MaxPool
    size_t in_channels = 0;
    size_t out_channels = 0;
    size_t kernel = 0;
    size_t stride = 1;
    size_t padding = 0;

    // FullyConnected
    size_t in_features = 0;
    size_t out_features = 0;

    // Dropout
    double drop_prob = 0.0;

    static LayerSpec conv(size_t in_c, size_t out_c, size_t k, size_t stride = 1, size_t padding = 0);
    static LayerSpec max_pool(size_t k = 2, size_t stride = 2);
    static LayerSpec relu();
    static LayerSpec fully_connected(size_t in, size_t out);
    static LayerSpec dropout(double p);

    const char* kind_name() const;
};

/// Flat, index-aligned parameter storage for one Net. Two ParamVectors built
/// from the same layer list always have equal length, so elementwise
/// arithmetic between them is well defined.
struct ParamVector {
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(size_t n) : values(n, 0.0) {}

    size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    double& operator[](size_t i) { return values[i]; }
    double operator[](size_t i) const { return values[i]; }
    void zero() { std::fill(values.begin(), values.end(), 0.0); }

    bool operator==(const ParamVector& other) const { return values == other.values; }
};

/// Structured (per-layer weight/bias) view of a ParamVector.
struct LayerParams {
    Tensor weight;
    Tensor bias;
};

class Net;

/// Per-layer intermediates recorded by forward() and consumed by backward().
struct ForwardCache {
    std::vector<Tensor> inputs;                     // input tensor of each layer
    std::vector<std::vector<double>> conv_cols;     // per conv layer, im2col patches
    std::vector<std::vector<uint32_t>> pool_argmax; // per pool layer, flat source indices
    std::vector<std::vector<double>> dropout_scale; // per dropout layer, 0 or 1/(1-p)
    Tensor output;
    const Net* net = nullptr; // identity tag; backward() rejects a foreign cache
};

/// A feed-forward net: fixed input shape plus an ordered layer list.
/// Parameters live outside the net in a ParamVector whose layout (per-layer
/// offsets) the net computes at construction time.
class Net {
public:
    Net() = default;
    Net(std::vector<size_t> input_shape, std::vector<LayerSpec> layers);

    size_t param_count() const { return param_count_; }
    size_t layer_count() const { return layers_.size(); }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const std::vector<size_t>& input_shape() const { return input_shape_; }
    const std::vector<size_t>& output_shape() const { return output_shapes_.back(); }
    size_t output_size() const { return shape_product(output_shape()); }
    bool has_dropout() const { return has_dropout_; }

    /// Glorot-uniform weights (s = sqrt(6/(fan_in+fan_out))), zero biases.
    ParamVector init_params(Rng& rng) const;

    /// Forward pass. `training` enables dropout, which then requires `rng`.
    Tensor forward(const ParamVector& params, const Tensor& input, ForwardCache& cache,
                   bool training = false, Rng* rng = nullptr) const;
    Tensor forward(const ParamVector& params, const Tensor& input,
                   bool training = false, Rng* rng = nullptr) const;

    /// Backward pass from `upstream` (gradient w.r.t. the output). Parameter
    /// gradients are ACCUMULATED into `param_grads` (caller zeroes it), which
    /// lets batch loops sum gradients without temporaries. Returns the
    /// gradient w.r.t. the forward input.
    Tensor backward(const ParamVector& params, const ForwardCache& cache,
                    const Tensor& upstream, ParamVector& param_grads) const;

    /// Structured view of a flat vector; unflatten∘flatten is the identity.
    std::vector<LayerParams> unflatten(const ParamVector& params) const;
    ParamVector flatten(const std::vector<LayerParams>& layers) const;

    struct Layout {
        size_t weight_offset = 0, weight_count = 0;
        size_t bias_offset = 0, bias_count = 0;
    };
    const std::vector<Layout>& layout() const { return layout_; }

private:
    void check_params(const ParamVector& params) const;

    std::vector<size_t> input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<std::vector<size_t>> output_shapes_; // per layer
    std::vector<Layout> layout_;
    size_t param_count_ = 0;
    bool has_dropout_ = false;
};

} // namespace vflu

#include "vflu/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vflu/errors.hpp"

namespace vflu {

LayerSpec LayerSpec::conv(size_t in_c, size_t out_c, size_t k, size_t stride, size_t padding) {
    LayerSpec s;
    s.kind = LayerKind::Convolution;
    s.in_channels = in_c;
    s.out_channels = out_c;
    s.kernel = k;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::max_pool(size_t k, size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.kernel = k;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec LayerSpec::fully_connected(size_t in, size_t out) {
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.in_features = in;
    s.out_features = out;
    return s;
}

LayerSpec LayerSpec::dropout(double p) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.drop_prob = p;
    return s;
}

const char* LayerSpec::kind_name() const {
    switch (kind) {
        case LayerKind::Convolution: return "convolution";
        case LayerKind::MaxPool: return "max-pool";
        case LayerKind::Relu: return "relu";
        case LayerKind::FullyConnected: return "fully-connected";
        case LayerKind::Dropout: return "dropout";
    }
    return "?";
}

namespace {

// Splits a [C,H,W] or [H,W] shape into channel/height/width.
void chw(const std::vector<size_t>& shape, size_t& c, size_t& h, size_t& w, const char* who) {
    if (shape.size() == 3) {
        c = shape[0];
        h = shape[1];
        w = shape[2];
    } else if (shape.size() == 2) {
        c = 1;
        h = shape[0];
        w = shape[1];
    } else {
        throw DimensionError(std::string(who) + " expects a 2-D or 3-D input, got " +
                             shape_to_string(shape));
    }
}

// Valid output range for one spatial axis: indices o with 0 <= o*stride+k_off < limit.
void conv_bounds(long k_off, long limit, long stride, long out_dim, long& lo, long& hi) {
    lo = k_off < 0 ? (-k_off + stride - 1) / stride : 0;
    const long m = limit - 1 - k_off;
    hi = m < 0 ? 0 : std::min(out_dim, m / stride + 1);
    if (hi < lo) hi = lo;
}

// Convolutions run over an im2col patch matrix: cols[pos][j] with
// pos = oh*OW+ow and j = (ic*K+kh)*K+kw, so forward/backward reduce to long
// contiguous dot products that vectorize well even for narrow images.
void build_patches(const LayerSpec& l, const Tensor& x, size_t in_c, size_t h, size_t wd,
                   size_t oh_n, size_t ow_n, std::vector<double>& cols) {
    const long k = static_cast<long>(l.kernel), s = static_cast<long>(l.stride),
               p = static_cast<long>(l.padding);
    const size_t ckk = in_c * l.kernel * l.kernel;
    cols.assign(oh_n * ow_n * ckk, 0.0);
    for (size_t ic = 0; ic < in_c; ++ic) {
        const double* xplane = &x.data[ic * h * wd];
        for (long kh = 0; kh < k; ++kh) {
            long oh_lo, oh_hi;
            conv_bounds(kh - p, static_cast<long>(h), s, static_cast<long>(oh_n), oh_lo, oh_hi);
            for (long kw = 0; kw < k; ++kw) {
                const size_t j = (ic * l.kernel + size_t(kh)) * l.kernel + size_t(kw);
                long ow_lo, ow_hi;
                conv_bounds(kw - p, static_cast<long>(wd), s, static_cast<long>(ow_n), ow_lo, ow_hi);
                for (long oh = oh_lo; oh < oh_hi; ++oh) {
                    const double* xrow = xplane + (oh * s + kh - p) * static_cast<long>(wd);
                    double* crow = &cols[(size_t(oh) * ow_n) * ckk + j];
                    for (long ow = ow_lo; ow < ow_hi; ++ow) {
                        crow[size_t(ow) * ckk] = xrow[ow * s + kw - p];
                    }
                }
            }
        }
    }
}

void conv_forward(const LayerSpec& l, const double* w, const double* b,
                  const std::vector<double>& cols, Tensor& out) {
    const size_t npos = out.shape[1] * out.shape[2];
    const size_t ckk = cols.size() / npos;
    for (size_t oc = 0; oc < l.out_channels; ++oc) {
        const double* wrow = w + oc * ckk;
        double* orow = &out.data[oc * npos];
        for (size_t pos = 0; pos < npos; ++pos) {
            const double* crow = &cols[pos * ckk];
            double acc = b[oc];
            for (size_t j = 0; j < ckk; ++j) acc += wrow[j] * crow[j];
            orow[pos] = acc;
        }
    }
}

void conv_backward(const LayerSpec& l, const double* w, const std::vector<double>& cols,
                   size_t in_c, size_t h, size_t wd, const Tensor& g, double* dw, double* db,
                   Tensor& dx) {
    const size_t oh_n = g.shape[1], ow_n = g.shape[2];
    const size_t npos = oh_n * ow_n;
    const size_t ckk = in_c * l.kernel * l.kernel;
    std::vector<double> dcols(npos * ckk, 0.0);
    for (size_t oc = 0; oc < l.out_channels; ++oc) {
        const double* grow = &g.data[oc * npos];
        const double* wrow = w + oc * ckk;
        double* dwrow = dw + oc * ckk;
        double acc = 0.0;
        for (size_t pos = 0; pos < npos; ++pos) {
            const double gv = grow[pos];
            acc += gv;
            const double* crow = &cols[pos * ckk];
            double* dcrow = &dcols[pos * ckk];
            for (size_t j = 0; j < ckk; ++j) {
                dwrow[j] += gv * crow[j];
                dcrow[j] += gv * wrow[j];
            }
        }
        db[oc] += acc;
    }
    // col2im scatter of the patch gradients back onto the input image
    const long k = static_cast<long>(l.kernel), s = static_cast<long>(l.stride),
               p = static_cast<long>(l.padding);
    for (size_t ic = 0; ic < in_c; ++ic) {
        double* dxplane = &dx.data[ic * h * wd];
        for (long kh = 0; kh < k; ++kh) {
            long oh_lo, oh_hi;
            conv_bounds(kh - p, static_cast<long>(h), s, static_cast<long>(oh_n), oh_lo, oh_hi);
            for (long kw = 0; kw < k; ++kw) {
                const size_t j = (ic * l.kernel + size_t(kh)) * l.kernel + size_t(kw);
                long ow_lo, ow_hi;
                conv_bounds(kw - p, static_cast<long>(wd), s, static_cast<long>(ow_n), ow_lo, ow_hi);
                for (long oh = oh_lo; oh < oh_hi; ++oh) {
                    double* dxrow = dxplane + (oh * s + kh - p) * static_cast<long>(wd);
                    const double* dcrow = &dcols[(size_t(oh) * ow_n) * ckk + j];
                    for (long ow = ow_lo; ow < ow_hi; ++ow) {
                        dxrow[ow * s + kw - p] += dcrow[size_t(ow) * ckk];
                    }
                }
            }
        }
    }
}

} // namespace

Net::Net(std::vector<size_t> input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (input_shape_.empty() || shape_product(input_shape_) == 0) {
        throw DimensionError("net input shape must be non-empty with positive dims");
    }
    std::vector<size_t> cur = input_shape_;
    layout_.reserve(layers_.size());
    output_shapes_.reserve(layers_.size());
    for (const LayerSpec& l : layers_) {
        Layout lay;
        switch (l.kind) {
            case LayerKind::Convolution: {
                if (l.in_channels == 0 || l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
                    throw ArgumentError("convolution dimensions must be strictly positive");
                }
                size_t c, h, w;
                chw(cur, c, h, w, "convolution");
                if (c != l.in_channels) {
                    throw DimensionError("convolution expects " + std::to_string(l.in_channels) +
                                         " input channels, got " + shape_to_string(cur));
                }
                if (h + 2 * l.padding < l.kernel || w + 2 * l.padding < l.kernel) {
                    throw DimensionError("convolution kernel larger than padded input " +
                                         shape_to_string(cur));
                }
                const size_t oh = (h + 2 * l.padding - l.kernel) / l.stride + 1;
                const size_t ow = (w + 2 * l.padding - l.kernel) / l.stride + 1;
                cur = {l.out_channels, oh, ow};
                lay.weight_count = l.out_channels * l.in_channels * l.kernel * l.kernel;
                lay.bias_count = l.out_channels;
                break;
            }
            case LayerKind::MaxPool: {
                if (l.kernel == 0 || l.stride == 0) {
                    throw ArgumentError("max-pool dimensions must be strictly positive");
                }
                size_t c, h, w;
                chw(cur, c, h, w, "max-pool");
                if (h < l.kernel || w < l.kernel) {
                    throw DimensionError("max-pool window larger than input " + shape_to_string(cur));
                }
                cur = {c, (h - l.kernel) / l.stride + 1, (w - l.kernel) / l.stride + 1};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::FullyConnected: {
                if (l.in_features == 0 || l.out_features == 0) {
                    throw ArgumentError("fully-connected dimensions must be strictly positive");
                }
                if (shape_product(cur) != l.in_features) {
                    throw DimensionError("fully-connected expects " + std::to_string(l.in_features) +
                                         " inputs, previous layer yields " + shape_to_string(cur));
                }
                cur = {l.out_features};
                lay.weight_count = l.out_features * l.in_features;
                lay.bias_count = l.out_features;
                break;
            }
            case LayerKind::Dropout: {
                if (!(l.drop_prob >= 0.0 && l.drop_prob < 1.0)) {
                    throw ArgumentError("dropout probability must be in [0,1)");
                }
                has_dropout_ = has_dropout_ || l.drop_prob > 0.0;
                break;
            }
        }
        lay.weight_offset = param_count_;
        lay.bias_offset = param_count_ + lay.weight_count;
        param_count_ += lay.weight_count + lay.bias_count;
        layout_.push_back(lay);
        output_shapes_.push_back(cur);
    }
    if (output_shapes_.empty()) output_shapes_.push_back(input_shape_);
}

ParamVector Net::init_params(Rng& rng) const {
    ParamVector p(param_count_);
    for (size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        size_t fan_in = 0, fan_out = 0;
        if (l.kind == LayerKind::Convolution) {
            fan_in = l.in_channels * l.kernel * l.kernel;
            fan_out = l.out_channels * l.kernel * l.kernel;
        } else if (l.kind == LayerKind::FullyConnected) {
            fan_in = l.in_features;
            fan_out = l.out_features;
        } else {
            continue;
        }
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (size_t j = 0; j < layout_[i].weight_count; ++j) {
            p[layout_[i].weight_offset + j] = rng.uniform(-s, s);
        }
        // biases stay zero
    }
    return p;
}

void Net::check_params(const ParamVector& params) const {
    if (params.size() != param_count_) {
        throw DimensionError("param vector has " + std::to_string(params.size()) +
                             " entries, net needs " + std::to_string(param_count_));
    }
}

Tensor Net::forward(const ParamVector& params, const Tensor& input, ForwardCache& cache,
                    bool training, Rng* rng) const {
    check_params(params);
    if (input.shape != input_shape_) {
        throw DimensionError("net input shape " + input.shape_str() + " != expected " +
                             shape_to_string(input_shape_));
    }
    cache.net = this;
    cache.inputs.resize(layers_.size());
    cache.conv_cols.resize(layers_.size());
    cache.pool_argmax.resize(layers_.size());
    cache.dropout_scale.resize(layers_.size());

    Tensor cur = input;
    for (size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        const Layout& lay = layout_[i];
        Tensor out;
        switch (l.kind) {
            case LayerKind::Convolution: {
                size_t c, h, w;
                chw(cur.shape, c, h, w, "convolution");
                out = Tensor(output_shapes_[i]);
                build_patches(l, cur, c, h, w, out.shape[1], out.shape[2], cache.conv_cols[i]);
                conv_forward(l, &params.values[lay.weight_offset], &params.values[lay.bias_offset],
                             cache.conv_cols[i], out);
                break;
            }
            case LayerKind::MaxPool: {
                size_t c, h, w;
                chw(cur.shape, c, h, w, "max-pool");
                out = Tensor(output_shapes_[i]);
                auto& argmax = cache.pool_argmax[i];
                argmax.resize(out.size());
                const size_t oh_n = out.shape[1], ow_n = out.shape[2];
                size_t o = 0;
                for (size_t ch = 0; ch < c; ++ch) {
                    for (size_t oh = 0; oh < oh_n; ++oh) {
                        for (size_t ow = 0; ow < ow_n; ++ow, ++o) {
                            double best = -std::numeric_limits<double>::infinity();
                            size_t best_idx = 0;
                            for (size_t kh = 0; kh < l.kernel; ++kh) {
                                const size_t ih = oh * l.stride + kh;
                                for (size_t kw = 0; kw < l.kernel; ++kw) {
                                    const size_t iw = ow * l.stride + kw;
                                    const size_t idx = (ch * h + ih) * w + iw;
                                    // strict > makes ties route to the first index
                                    if (cur.data[idx] > best) {
                                        best = cur.data[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            out.data[o] = best;
                            argmax[o] = static_cast<uint32_t>(best_idx);
                        }
                    }
                }
                break;
            }
            case LayerKind::Relu: {
                out = cur;
                for (double& v : out.data) v = v > 0.0 ? v : 0.0;
                break;
            }
            case LayerKind::FullyConnected: {
                out = Tensor({l.out_features});
                const double* w = &params.values[lay.weight_offset];
                const double* b = &params.values[lay.bias_offset];
                for (size_t oi = 0; oi < l.out_features; ++oi) {
                    const double* wrow = w + oi * l.in_features;
                    double acc = b[oi];
                    for (size_t j = 0; j < l.in_features; ++j) acc += wrow[j] * cur.data[j];
                    out.data[oi] = acc;
                }
                break;
            }
            case LayerKind::Dropout: {
                out = cur;
                auto& scale = cache.dropout_scale[i];
                if (training && l.drop_prob > 0.0) {
                    if (!rng) {
                        throw ArgumentError("training forward through dropout requires an RNG");
                    }
                    const double keep = 1.0 / (1.0 - l.drop_prob);
                    scale.resize(out.size());
                    for (size_t j = 0; j < out.size(); ++j) {
                        scale[j] = rng->uniform() < l.drop_prob ? 0.0 : keep;
                        out.data[j] *= scale[j];
                    }
                } else {
                    scale.clear();
                }
                break;
            }
        }
        cache.inputs[i] = std::move(cur);
        cur = std::move(out);
    }
    if (!cur.all_finite()) {
        throw NumericError("net forward produced a non-finite output");
    }
    cache.output = cur;
    return cur;
}

Tensor Net::forward(const ParamVector& params, const Tensor& input, bool training, Rng* rng) const {
    ForwardCache cache;
    return forward(params, input, cache, training, rng);
}

Tensor Net::backward(const ParamVector& params, const ForwardCache& cache, const Tensor& upstream,
                     ParamVector& param_grads) const {
    check_params(params);
    if (cache.net != this || cache.inputs.size() != layers_.size()) {
        throw DimensionError("forward cache does not belong to this net");
    }
    if (param_grads.size() != param_count_) {
        throw DimensionError("gradient vector has wrong length");
    }
    if (upstream.shape != output_shape()) {
        throw DimensionError("upstream gradient shape " + upstream.shape_str() +
                             " != net output shape " + shape_to_string(output_shape()));
    }

    Tensor g = upstream;
    for (size_t ri = layers_.size(); ri-- > 0;) {
        const LayerSpec& l = layers_[ri];
        const Layout& lay = layout_[ri];
        const Tensor& x = cache.inputs[ri];
        Tensor gin;
        switch (l.kind) {
            case LayerKind::Convolution: {
                size_t c, h, w;
                chw(x.shape, c, h, w, "convolution");
                gin = Tensor(x.shape);
                conv_backward(l, &params.values[lay.weight_offset], cache.conv_cols[ri], c, h, w, g,
                              &param_grads.values[lay.weight_offset],
                              &param_grads.values[lay.bias_offset], gin);
                break;
            }
            case LayerKind::MaxPool: {
                gin = Tensor(x.shape);
                const auto& argmax = cache.pool_argmax[ri];
                for (size_t j = 0; j < g.size(); ++j) gin.data[argmax[j]] += g.data[j];
                break;
            }
            case LayerKind::Relu: {
                gin = g;
                for (size_t j = 0; j < gin.size(); ++j) {
                    if (x.data[j] <= 0.0) gin.data[j] = 0.0;
                }
                break;
            }
            case LayerKind::FullyConnected: {
                gin = Tensor(x.shape);
                const double* w = &params.values[lay.weight_offset];
                double* dw = &param_grads.values[lay.weight_offset];
                double* db = &param_grads.values[lay.bias_offset];
                for (size_t oi = 0; oi < l.out_features; ++oi) {
                    const double go = g.data[oi];
                    db[oi] += go;
                    const double* wrow = w + oi * l.in_features;
                    double* dwrow = dw + oi * l.in_features;
                    for (size_t j = 0; j < l.in_features; ++j) {
                        dwrow[j] += go * x.data[j];
                        gin.data[j] += wrow[j] * go;
                    }
                }
                break;
            }
            case LayerKind::Dropout: {
                gin = g;
                const auto& scale = cache.dropout_scale[ri];
                if (!scale.empty()) {
                    for (size_t j = 0; j < gin.size(); ++j) gin.data[j] *= scale[j];
                }
                break;
            }
        }
        g = std::move(gin);
    }
    return g;
}

std::vector<LayerParams> Net::unflatten(const ParamVector& params) const {
    check_params(params);
    std::vector<LayerParams> out(layers_.size());
    for (size_t i = 0; i < layers_.size(); ++i) {
        const Layout& lay = layout_[i];
        out[i].weight = Tensor::from({lay.weight_count},
                                     {params.values.begin() + static_cast<long>(lay.weight_offset),
                                      params.values.begin() + static_cast<long>(lay.weight_offset + lay.weight_count)});
        out[i].bias = Tensor::from({lay.bias_count},
                                   {params.values.begin() + static_cast<long>(lay.bias_offset),
                                    params.values.begin() + static_cast<long>(lay.bias_offset + lay.bias_count)});
    }
    return out;
}

ParamVector Net::flatten(const std::vector<LayerParams>& layers) const {
    if (layers.size() != layers_.size()) {
        throw DimensionError("layer parameter list does not match net");
    }
    ParamVector p(param_count_);
    for (size_t i = 0; i < layers.size(); ++i) {
        const Layout& lay = layout_[i];
        if (layers[i].weight.size() != lay.weight_count || layers[i].bias.size() != lay.bias_count) {
            throw DimensionError("layer " + std::to_string(i) + " parameter sizes do not match net");
        }
        std::copy(layers[i].weight.data.begin(), layers[i].weight.data.end(),
                  p.values.begin() + static_cast<long>(lay.weight_offset));
        std::copy(layers[i].bias.data.begin(), layers[i].bias.data.end(),
                  p.values.begin() + static_cast<long>(lay.bias_offset));
    }
    return p;
}

} // namespace vflu

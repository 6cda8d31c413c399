#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "van/tensor.hpp"

namespace van {

// Full 2-D convolution geometry. Stride, dilation and padding are the same
// in both spatial dimensions; padding is symmetric zero padding per side.
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
    bool has_bias = false;

    void validate() const;  // throws ConfigError on an inconsistent spec
    bool is_depthwise() const {
        return groups == in_channels && in_channels == out_channels;
    }
};

// Padding that keeps spatial extents unchanged at stride 1. Requires the
// effective kernel span dilation*(kernel-1)+1 to be odd.
std::size_t same_padding(std::size_t kernel, std::size_t dilation);

// floor((in + 2*padding - dilation*(kernel-1) - 1) / stride) + 1.
// Throws GeometryError when the result would be < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t dilation, std::size_t padding);

template <typename T>
struct ConvWeights {
    Tensor<T> weight;                 // (out_channels, in_channels/groups, kh, kw)
    std::optional<Tensor<T>> bias;    // (out_channels), present iff spec.has_bias
};

template <typename T>
struct ConvGrads {
    Tensor<T> dx;
    Tensor<T> dweight;
    std::optional<Tensor<T>> dbias;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvWeights<T>& w, const ConvSpec& spec);

// Gradients of sum(upstream * conv2d(x, w)) with respect to x, weight, bias.
template <typename T>
ConvGrads<T> conv2d_vjp(const Tensor<T>& x, const ConvWeights<T>& w, const ConvSpec& spec,
                        const Tensor<T>& upstream);

// gelu(x) = x * Phi(x), exact standard normal CDF form.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> gelu_vjp(const Tensor<T>& x, const Tensor<T>& upstream);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid_vjp(const Tensor<T>& x, const Tensor<T>& upstream);

// Inference-mode batch normalization over channels of an NCHW tensor.
template <typename T>
struct NormVectors {
    Tensor<T> gamma;  // all rank-1, length = channels
    Tensor<T> beta;
    Tensor<T> mean;
    Tensor<T> var;
};

template <typename T>
struct BatchNormGrads {
    Tensor<T> dx;
    Tensor<T> dgamma;
    Tensor<T> dbeta;
};

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const NormVectors<T>& p, T eps);
template <typename T>
BatchNormGrads<T> batch_norm_infer_vjp(const Tensor<T>& x, const NormVectors<T>& p, T eps,
                                       const Tensor<T>& upstream);

// (N, C, H, W) -> (N, C), mean over the spatial extents.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avg_pool_vjp(const Tensor<T>& x, const Tensor<T>& upstream);

// out[n,o] = b[o] + sum_i w[o,i] * x[n,i]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
struct LinearGrads {
    Tensor<T> dx;
    Tensor<T> dw;
    Tensor<T> db;
};
template <typename T>
LinearGrads<T> linear_vjp(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                          const Tensor<T>& upstream);

// Mean over the batch of -log softmax(logits)[label], max-stabilized.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels);
template <typename T>
Tensor<T> softmax_cross_entropy_vjp(const Tensor<T>& logits,
                                    const std::vector<std::size_t>& labels, T upstream);

}  // namespace van

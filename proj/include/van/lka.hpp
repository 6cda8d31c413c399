#pragma once

#include <cstddef>

#include "van/nn_ops.hpp"
#include "van/tensor.hpp"

namespace van {

// Ablation variants of the attention block. `full` is the standard form;
// the others drop one stage of the chain, drop or replace the gating step,
// or squash the attention map through a sigmoid first.
enum class LkaVariant {
    full,
    no_dw,
    no_dwd,
    no_pw,
    non_attention,
    add_attention,
    sigmoid_attention,
};

const char* lka_variant_name(LkaVariant v);

// Large-kernel-attention geometry: a nominal KxK convolution realized as a
// (2d-1)x(2d-1) depthwise conv, a ceil(K/d)^2 depthwise conv with dilation d,
// and a 1x1 conv. Derived kernel sizes are always recomputed from (K, d).
struct LkaConfig {
    std::size_t channels = 1;
    std::size_t nominal_kernel = 21;
    std::size_t dilation = 3;
    LkaVariant variant = LkaVariant::full;
    bool with_bias = false;

    std::size_t dw_kernel() const { return 2 * dilation - 1; }
    std::size_t dwd_kernel() const { return (nominal_kernel + dilation - 1) / dilation; }

    // Throws ConfigError unless d >= 1, K >= d, channels >= 1 and both
    // depthwise stages admit symmetric same-resolution padding (effective
    // span dilation*(kernel-1)+1 odd).
    void validate() const;

    ConvSpec dw_spec() const;
    ConvSpec dwd_spec() const;
    ConvSpec pw_spec() const;
};

template <typename T>
struct LkaWeights {
    ConvWeights<T> dw;
    ConvWeights<T> dwd;
    ConvWeights<T> pw;
};

template <typename T>
struct LkaGrads {
    Tensor<T> dinput;
    ConvGrads<T> dw;
    ConvGrads<T> dwd;
    ConvGrads<T> pw;
};

template <typename T>
LkaWeights<T> lka_random_weights(const LkaConfig& cfg, double stddev, NormalRng& rng);

// Center-delta depthwise kernels and an identity pointwise map, so the
// attention map reproduces the input exactly.
template <typename T>
LkaWeights<T> lka_identity_weights(const LkaConfig& cfg);

// All-ones kernels and identity pointwise map; used for impulse-response
// support measurements.
template <typename T>
LkaWeights<T> lka_ones_weights(const LkaConfig& cfg);

// Attention = Conv1x1(DW-D-Conv(DW-Conv(F))), same resolution throughout.
// No normalization is applied to the attention map.
template <typename T>
Tensor<T> attention_map(const Tensor<T>& input, const LkaWeights<T>& w, const LkaConfig& cfg);

// Output = Attention (x) F. Requires cfg.variant == full.
template <typename T>
Tensor<T> lka_forward(const Tensor<T>& input, const LkaWeights<T>& w, const LkaConfig& cfg);

// Dispatches on cfg.variant; `full` is identical to lka_forward.
template <typename T>
Tensor<T> lka_variant_forward(const Tensor<T>& input, const LkaWeights<T>& w,
                              const LkaConfig& cfg);

// Gradients of sum(upstream * lka_variant_forward(input)) for every input
// and weight tensor. Skipped stages receive zero gradients.
template <typename T>
LkaGrads<T> lka_variant_vjp(const Tensor<T>& input, const LkaWeights<T>& w, const LkaConfig& cfg,
                            const Tensor<T>& upstream);

// Side length of the impulse-response support of the composed dw + dwd
// chain: (2d-1) + d*(ceil(K/d)-1).
std::size_t receptive_span(const LkaConfig& cfg);

}  // namespace van

#include "van/lka.hpp"

#include <string>
#include <vector>

namespace van {

const char* lka_variant_name(LkaVariant v) {
    switch (v) {
        case LkaVariant::full: return "full";
        case LkaVariant::no_dw: return "no_dw";
        case LkaVariant::no_dwd: return "no_dwd";
        case LkaVariant::no_pw: return "no_pw";
        case LkaVariant::non_attention: return "non_attention";
        case LkaVariant::add_attention: return "add_attention";
        case LkaVariant::sigmoid_attention: return "sigmoid_attention";
    }
    return "?";
}

void LkaConfig::validate() const {
    if (channels < 1) throw ConfigError("lka channels must be >= 1");
    if (dilation < 1) throw ConfigError("lka dilation must be >= 1");
    if (nominal_kernel < dilation) {
        throw ConfigError("lka nominal kernel " + std::to_string(nominal_kernel) +
                          " must be >= dilation " + std::to_string(dilation));
    }
    // Both stages must keep resolution with symmetric zero padding.
    same_padding(dw_kernel(), 1);
    same_padding(dwd_kernel(), dilation);
}

ConvSpec LkaConfig::dw_spec() const {
    ConvSpec s;
    s.in_channels = s.out_channels = s.groups = channels;
    s.kernel_h = s.kernel_w = dw_kernel();
    s.dilation = 1;
    s.padding = same_padding(dw_kernel(), 1);
    s.has_bias = with_bias;
    return s;
}

ConvSpec LkaConfig::dwd_spec() const {
    ConvSpec s;
    s.in_channels = s.out_channels = s.groups = channels;
    s.kernel_h = s.kernel_w = dwd_kernel();
    s.dilation = dilation;
    s.padding = same_padding(dwd_kernel(), dilation);
    s.has_bias = with_bias;
    return s;
}

ConvSpec LkaConfig::pw_spec() const {
    ConvSpec s;
    s.in_channels = s.out_channels = channels;
    s.kernel_h = s.kernel_w = 1;
    s.groups = 1;
    s.has_bias = with_bias;
    return s;
}

std::size_t receptive_span(const LkaConfig& cfg) {
    cfg.validate();
    return (2 * cfg.dilation - 1) + cfg.dilation * (cfg.dwd_kernel() - 1);
}

namespace {

template <typename T>
ConvWeights<T> conv_weights_for(const ConvSpec& spec, double stddev, NormalRng& rng) {
    ConvWeights<T> w;
    w.weight = Tensor<T>::random_normal(
        {spec.out_channels, spec.in_channels / spec.groups, spec.kernel_h, spec.kernel_w}, 0.0,
        stddev, rng);
    if (spec.has_bias) w.bias = Tensor<T>::zeros({spec.out_channels});
    return w;
}

template <typename T>
ConvWeights<T> filled_depthwise(const ConvSpec& spec, T value) {
    ConvWeights<T> w;
    w.weight = Tensor<T>::filled({spec.out_channels, 1, spec.kernel_h, spec.kernel_w}, value);
    if (spec.has_bias) w.bias = Tensor<T>::zeros({spec.out_channels});
    return w;
}

template <typename T>
ConvWeights<T> identity_pointwise(const ConvSpec& spec) {
    ConvWeights<T> w;
    w.weight = Tensor<T>::zeros({spec.out_channels, spec.in_channels, 1, 1});
    for (std::size_t c = 0; c < spec.out_channels; ++c) {
        w.weight.at4(c, c, 0, 0) = T(1);
    }
    if (spec.has_bias) w.bias = Tensor<T>::zeros({spec.out_channels});
    return w;
}

// Which chain stages a variant keeps, in Eq.-order dw -> dwd -> pw.
struct ChainMask {
    bool dw, dwd, pw;
};

ChainMask chain_mask(LkaVariant v) {
    ChainMask m{true, true, true};
    if (v == LkaVariant::no_dw) m.dw = false;
    if (v == LkaVariant::no_dwd) m.dwd = false;
    if (v == LkaVariant::no_pw) m.pw = false;
    return m;
}

}  // namespace

template <typename T>
LkaWeights<T> lka_random_weights(const LkaConfig& cfg, double stddev, NormalRng& rng) {
    cfg.validate();
    LkaWeights<T> w;
    w.dw = conv_weights_for<T>(cfg.dw_spec(), stddev, rng);
    w.dwd = conv_weights_for<T>(cfg.dwd_spec(), stddev, rng);
    w.pw = conv_weights_for<T>(cfg.pw_spec(), stddev, rng);
    return w;
}

template <typename T>
LkaWeights<T> lka_identity_weights(const LkaConfig& cfg) {
    cfg.validate();
    LkaWeights<T> w;
    w.dw = filled_depthwise<T>(cfg.dw_spec(), T(0));
    w.dwd = filled_depthwise<T>(cfg.dwd_spec(), T(0));
    const std::size_t kd = cfg.dw_kernel();
    const std::size_t kdd = cfg.dwd_kernel();
    for (std::size_t c = 0; c < cfg.channels; ++c) {
        w.dw.weight.at4(c, 0, kd / 2, kd / 2) = T(1);
        w.dwd.weight.at4(c, 0, kdd / 2, kdd / 2) = T(1);
    }
    w.pw = identity_pointwise<T>(cfg.pw_spec());
    return w;
}

template <typename T>
LkaWeights<T> lka_ones_weights(const LkaConfig& cfg) {
    cfg.validate();
    LkaWeights<T> w;
    w.dw = filled_depthwise<T>(cfg.dw_spec(), T(1));
    w.dwd = filled_depthwise<T>(cfg.dwd_spec(), T(1));
    w.pw = identity_pointwise<T>(cfg.pw_spec());
    return w;
}

namespace {

template <typename T>
Tensor<T> chain_forward(const Tensor<T>& input, const LkaWeights<T>& w, const LkaConfig& cfg,
                        std::vector<Tensor<T>>* cache) {
    const ChainMask m = chain_mask(cfg.variant);
    Tensor<T> cur = input;
    if (cache) cache->push_back(cur);
    if (m.dw) {
        cur = conv2d(cur, w.dw, cfg.dw_spec());
        if (cache) cache->push_back(cur);
    }
    if (m.dwd) {
        cur = conv2d(cur, w.dwd, cfg.dwd_spec());
        if (cache) cache->push_back(cur);
    }
    if (m.pw) {
        cur = conv2d(cur, w.pw, cfg.pw_spec());
        if (cache) cache->push_back(cur);
    }
    return cur;
}

}  // namespace

template <typename T>
Tensor<T> attention_map(const Tensor<T>& input, const LkaWeights<T>& w, const LkaConfig& cfg) {
    cfg.validate();
    if (input.rank() != 4 || input.channels() != cfg.channels) {
        throw ShapeError("attention_map expects NCHW input with " + std::to_string(cfg.channels) +
                         " channels, got " + shape_to_string(input.shape()));
    }
    LkaConfig full_cfg = cfg;
    full_cfg.variant = LkaVariant::full;
    return chain_forward<T>(input, w, full_cfg, nullptr);
}

template <typename T>
Tensor<T> lka_forward(const Tensor<T>& input, const LkaWeights<T>& w, const LkaConfig& cfg) {
    if (cfg.variant != LkaVariant::full) {
        throw ConfigError("lka_forward requires the full variant; use lka_variant_forward");
    }
    return elementwise_mul(attention_map(input, w, cfg), input);
}

template <typename T>
Tensor<T> lka_variant_forward(const Tensor<T>& input, const LkaWeights<T>& w,
                              const LkaConfig& cfg) {
    cfg.validate();
    if (input.rank() != 4 || input.channels() != cfg.channels) {
        throw ShapeError("lka_variant_forward expects NCHW input with " +
                         std::to_string(cfg.channels) + " channels");
    }
    const Tensor<T> chain = chain_forward<T>(input, w, cfg, nullptr);
    switch (cfg.variant) {
        case LkaVariant::non_attention:
            return chain;
        case LkaVariant::add_attention:
            return elementwise_add(chain, input);
        case LkaVariant::sigmoid_attention:
            return elementwise_mul(sigmoid(chain), input);
        default:
            return elementwise_mul(chain, input);
    }
}

template <typename T>
LkaGrads<T> lka_variant_vjp(const Tensor<T>& input, const LkaWeights<T>& w, const LkaConfig& cfg,
                            const Tensor<T>& upstream) {
    cfg.validate();
    if (!upstream.same_shape(input)) {
        throw ShapeError("lka_variant_vjp upstream shape mismatch");
    }
    std::vector<Tensor<T>> cache;
    const Tensor<T> chain = chain_forward(input, w, cfg, &cache);

    // Split upstream into the gradient reaching the chain output and the
    // gradient reaching the input directly through the gate.
    Tensor<T> dchain = upstream;
    Tensor<T> dinput_direct = Tensor<T>::zeros(input.shape());
    switch (cfg.variant) {
        case LkaVariant::non_attention:
            break;
        case LkaVariant::add_attention:
            dinput_direct = upstream;
            break;
        case LkaVariant::sigmoid_attention: {
            const Tensor<T> gate = sigmoid(chain);
            dinput_direct = elementwise_mul(upstream, gate);
            dchain = sigmoid_vjp(chain, elementwise_mul(upstream, input));
            break;
        }
        default:
            dinput_direct = elementwise_mul(upstream, chain);
            dchain = elementwise_mul(upstream, input);
            break;
    }

    LkaGrads<T> g;
    const ChainMask m = chain_mask(cfg.variant);
    auto zero_grads = [](const ConvWeights<T>& cw) {
        ConvGrads<T> zg;
        zg.dweight = Tensor<T>::zeros(cw.weight.shape());
        if (cw.bias) zg.dbias = Tensor<T>::zeros(cw.bias->shape());
        return zg;
    };
    g.dw = zero_grads(w.dw);
    g.dwd = zero_grads(w.dwd);
    g.pw = zero_grads(w.pw);

    // Walk the cached chain backwards.
    std::size_t pos = cache.size() - 1;
    Tensor<T> up = dchain;
    if (m.pw) {
        ConvGrads<T> cg = conv2d_vjp(cache[pos - 1], w.pw, cfg.pw_spec(), up);
        g.pw = std::move(cg);
        up = g.pw.dx;
        --pos;
    }
    if (m.dwd) {
        ConvGrads<T> cg = conv2d_vjp(cache[pos - 1], w.dwd, cfg.dwd_spec(), up);
        g.dwd = std::move(cg);
        up = g.dwd.dx;
        --pos;
    }
    if (m.dw) {
        ConvGrads<T> cg = conv2d_vjp(cache[pos - 1], w.dw, cfg.dw_spec(), up);
        g.dw = std::move(cg);
        up = g.dw.dx;
        --pos;
    }
    g.dinput = elementwise_add(up, dinput_direct);
    return g;
}

#define VAN_INSTANTIATE_LKA(T)                                                                  \
    template LkaWeights<T> lka_random_weights<T>(const LkaConfig&, double, NormalRng&);         \
    template LkaWeights<T> lka_identity_weights<T>(const LkaConfig&);                           \
    template LkaWeights<T> lka_ones_weights<T>(const LkaConfig&);                               \
    template Tensor<T> attention_map<T>(const Tensor<T>&, const LkaWeights<T>&,                 \
                                        const LkaConfig&);                                      \
    template Tensor<T> lka_forward<T>(const Tensor<T>&, const LkaWeights<T>&, const LkaConfig&); \
    template Tensor<T> lka_variant_forward<T>(const Tensor<T>&, const LkaWeights<T>&,           \
                                              const LkaConfig&);                                \
    template LkaGrads<T> lka_variant_vjp<T>(const Tensor<T>&, const LkaWeights<T>&,             \
                                            const LkaConfig&, const Tensor<T>&);

VAN_INSTANTIATE_LKA(float)
VAN_INSTANTIATE_LKA(double)

#undef VAN_INSTANTIATE_LKA

}  // namespace van

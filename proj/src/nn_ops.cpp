#include "van/nn_ops.hpp"

#include <cmath>
#include <string>

namespace van {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }
double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

template <typename T>
void check_conv_args(const Tensor<T>& x, const ConvWeights<T>& w, const ConvSpec& spec) {
    spec.validate();
    if (x.rank() != 4) {
        throw ShapeError("conv2d expects NCHW input, got shape " + shape_to_string(x.shape()));
    }
    if (x.channels() != spec.in_channels) {
        throw ShapeError("conv2d input has " + std::to_string(x.channels()) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
    }
    const Shape expect{spec.out_channels, spec.in_channels / spec.groups, spec.kernel_h,
                       spec.kernel_w};
    if (w.weight.shape() != expect) {
        throw ShapeError("conv2d weight shape " + shape_to_string(w.weight.shape()) +
                         " does not match spec " + shape_to_string(expect));
    }
    if (spec.has_bias != w.bias.has_value()) {
        throw ShapeError("conv2d bias presence does not match spec.has_bias");
    }
    if (w.bias && w.bias->shape() != Shape{spec.out_channels}) {
        throw ShapeError("conv2d bias shape " + shape_to_string(w.bias->shape()) +
                         " does not match out_channels " + std::to_string(spec.out_channels));
    }
}

}  // namespace

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1 || stride < 1 ||
        dilation < 1 || groups < 1) {
        throw ConfigError("conv spec counts must be >= 1");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
        throw ConfigError("conv spec channels must be divisible by groups: in=" +
                          std::to_string(in_channels) + " out=" + std::to_string(out_channels) +
                          " groups=" + std::to_string(groups));
    }
}

std::size_t same_padding(std::size_t kernel, std::size_t dilation) {
    const std::size_t span = dilation * (kernel - 1);
    if (span % 2 != 0) {
        throw ConfigError("same padding needs an odd effective span, got kernel " +
                          std::to_string(kernel) + " dilation " + std::to_string(dilation));
    }
    return span / 2;
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t dilation, std::size_t padding) {
    const long long num = static_cast<long long>(in) + 2ll * static_cast<long long>(padding) -
                          static_cast<long long>(dilation) * (static_cast<long long>(kernel) - 1) -
                          1ll;
    if (num < 0) {
        throw GeometryError("conv output extent < 1 for input " + std::to_string(in) +
                            ", kernel " + std::to_string(kernel) + ", stride " +
                            std::to_string(stride) + ", dilation " + std::to_string(dilation) +
                            ", padding " + std::to_string(padding));
    }
    return static_cast<std::size_t>(num) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvWeights<T>& w, const ConvSpec& spec) {
    check_conv_args(x, w, spec);
    const std::size_t oh = conv_output_extent(x.height(), spec.kernel_h, spec.stride,
                                              spec.dilation, spec.padding);
    const std::size_t ow = conv_output_extent(x.width(), spec.kernel_w, spec.stride,
                                              spec.dilation, spec.padding);
    const std::size_t icg = spec.in_channels / spec.groups;
    const std::size_t ocg = spec.out_channels / spec.groups;
    Tensor<T> out = Tensor<T>::zeros({x.batch(), spec.out_channels, oh, ow});

    const long long ih_max = static_cast<long long>(x.height());
    const long long iw_max = static_cast<long long>(x.width());
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            const std::size_t g = oc / ocg;
            const T bias = w.bias ? (*w.bias)[oc] : T(0);
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xw = 0; xw < ow; ++xw) {
                    T acc = bias;
                    for (std::size_t ic = 0; ic < icg; ++ic) {
                        const std::size_t in_c = g * icg + ic;
                        for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
                            const long long ih = static_cast<long long>(y * spec.stride) +
                                                 static_cast<long long>(kh * spec.dilation) -
                                                 static_cast<long long>(spec.padding);
                            if (ih < 0 || ih >= ih_max) continue;
                            for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                                const long long iw = static_cast<long long>(xw * spec.stride) +
                                                     static_cast<long long>(kw * spec.dilation) -
                                                     static_cast<long long>(spec.padding);
                                if (iw < 0 || iw >= iw_max) continue;
                                acc += x.at4(n, in_c, static_cast<std::size_t>(ih),
                                             static_cast<std::size_t>(iw)) *
                                       w.weight.at4(oc, ic, kh, kw);
                            }
                        }
                    }
                    out.at4(n, oc, y, xw) = acc;
                }
            }
        }
    }
    ensure_finite(out, "conv2d");
    return out;
}

template <typename T>
ConvGrads<T> conv2d_vjp(const Tensor<T>& x, const ConvWeights<T>& w, const ConvSpec& spec,
                        const Tensor<T>& upstream) {
    check_conv_args(x, w, spec);
    const std::size_t oh = conv_output_extent(x.height(), spec.kernel_h, spec.stride,
                                              spec.dilation, spec.padding);
    const std::size_t ow = conv_output_extent(x.width(), spec.kernel_w, spec.stride,
                                              spec.dilation, spec.padding);
    const Shape out_shape{x.batch(), spec.out_channels, oh, ow};
    if (upstream.shape() != out_shape) {
        throw ShapeError("conv2d_vjp upstream shape " + shape_to_string(upstream.shape()) +
                         " does not match output shape " + shape_to_string(out_shape));
    }

    ConvGrads<T> g;
    g.dx = Tensor<T>::zeros(x.shape());
    g.dweight = Tensor<T>::zeros(w.weight.shape());
    if (w.bias) g.dbias = Tensor<T>::zeros(w.bias->shape());

    const std::size_t icg = spec.in_channels / spec.groups;
    const std::size_t ocg = spec.out_channels / spec.groups;
    const long long ih_max = static_cast<long long>(x.height());
    const long long iw_max = static_cast<long long>(x.width());
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            const std::size_t g_idx = oc / ocg;
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xw = 0; xw < ow; ++xw) {
                    const T up = upstream.at4(n, oc, y, xw);
                    if (g.dbias) (*g.dbias)[oc] += up;
                    for (std::size_t ic = 0; ic < icg; ++ic) {
                        const std::size_t in_c = g_idx * icg + ic;
                        for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
                            const long long ih = static_cast<long long>(y * spec.stride) +
                                                 static_cast<long long>(kh * spec.dilation) -
                                                 static_cast<long long>(spec.padding);
                            if (ih < 0 || ih >= ih_max) continue;
                            for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                                const long long iw = static_cast<long long>(xw * spec.stride) +
                                                     static_cast<long long>(kw * spec.dilation) -
                                                     static_cast<long long>(spec.padding);
                                if (iw < 0 || iw >= iw_max) continue;
                                const std::size_t ihs = static_cast<std::size_t>(ih);
                                const std::size_t iws = static_cast<std::size_t>(iw);
                                g.dx.at4(n, in_c, ihs, iws) += up * w.weight.at4(oc, ic, kh, kw);
                                g.dweight.at4(oc, ic, kh, kw) += up * x.at4(n, in_c, ihs, iws);
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = static_cast<double>(x[i]);
        out[i] = static_cast<T>(v * normal_cdf(v));
    }
    return out;
}

template <typename T>
Tensor<T> gelu_vjp(const Tensor<T>& x, const Tensor<T>& upstream) {
    if (!x.same_shape(upstream)) {
        throw ShapeError("gelu_vjp upstream shape mismatch");
    }
    Tensor<T> dx = x;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double v = static_cast<double>(x[i]);
        dx[i] = static_cast<T>(static_cast<double>(upstream[i]) *
                               (normal_cdf(v) + v * normal_pdf(v)));
    }
    return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = static_cast<double>(x[i]);
        double s;
        if (v >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            s = e / (1.0 + e);
        }
        out[i] = static_cast<T>(s);
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid_vjp(const Tensor<T>& x, const Tensor<T>& upstream) {
    if (!x.same_shape(upstream)) {
        throw ShapeError("sigmoid_vjp upstream shape mismatch");
    }
    const Tensor<T> s = sigmoid(x);
    Tensor<T> dx = x;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] = upstream[i] * s[i] * (T(1) - s[i]);
    }
    return dx;
}

namespace {

template <typename T>
void check_norm_args(const Tensor<T>& x, const NormVectors<T>& p, T eps) {
    if (x.rank() != 4) {
        throw ShapeError("batch_norm_infer expects NCHW input");
    }
    const Shape want{x.channels()};
    if (p.gamma.shape() != want || p.beta.shape() != want || p.mean.shape() != want ||
        p.var.shape() != want) {
        throw ShapeError("batch_norm_infer vectors must have length " +
                         std::to_string(x.channels()));
    }
    for (std::size_t c = 0; c < p.var.size(); ++c) {
        if (p.var[c] < T(0)) throw ParamError("batch_norm_infer variance must be >= 0");
    }
    if (!(eps > T(0))) throw ParamError("batch_norm_infer eps must be > 0");
}

}  // namespace

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const NormVectors<T>& p, T eps) {
    check_norm_args(x, p, eps);
    Tensor<T> out = x;
    const std::size_t spatial = x.height() * x.width();
    std::size_t idx = 0;
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const T inv = T(1) / static_cast<T>(std::sqrt(static_cast<double>(p.var[c] + eps)));
            const T scale = p.gamma[c] * inv;
            const T shift = p.beta[c] - p.mean[c] * scale;
            for (std::size_t i = 0; i < spatial; ++i, ++idx) {
                out[idx] = x[idx] * scale + shift;
            }
        }
    }
    ensure_finite(out, "batch_norm_infer");
    return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_infer_vjp(const Tensor<T>& x, const NormVectors<T>& p, T eps,
                                       const Tensor<T>& upstream) {
    check_norm_args(x, p, eps);
    if (!x.same_shape(upstream)) {
        throw ShapeError("batch_norm_infer_vjp upstream shape mismatch");
    }
    BatchNormGrads<T> g;
    g.dx = Tensor<T>::zeros(x.shape());
    g.dgamma = Tensor<T>::zeros({x.channels()});
    g.dbeta = Tensor<T>::zeros({x.channels()});
    const std::size_t spatial = x.height() * x.width();
    std::size_t idx = 0;
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const T inv = T(1) / static_cast<T>(std::sqrt(static_cast<double>(p.var[c] + eps)));
            for (std::size_t i = 0; i < spatial; ++i, ++idx) {
                const T up = upstream[idx];
                g.dx[idx] = up * p.gamma[c] * inv;
                g.dgamma[c] += up * (x[idx] - p.mean[c]) * inv;
                g.dbeta[c] += up;
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.rank() != 4) {
        throw ShapeError("global_avg_pool expects NCHW input");
    }
    Tensor<T> out = Tensor<T>::zeros({x.batch(), x.channels()});
    const std::size_t spatial = x.height() * x.width();
    std::size_t idx = 0;
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            T acc = T(0);
            for (std::size_t i = 0; i < spatial; ++i, ++idx) acc += x[idx];
            out[n * x.channels() + c] = acc / static_cast<T>(spatial);
        }
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_vjp(const Tensor<T>& x, const Tensor<T>& upstream) {
    if (upstream.shape() != Shape{x.batch(), x.channels()}) {
        throw ShapeError("global_avg_pool_vjp upstream shape mismatch");
    }
    Tensor<T> dx = Tensor<T>::zeros(x.shape());
    const std::size_t spatial = x.height() * x.width();
    std::size_t idx = 0;
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const T up = upstream[n * x.channels() + c] / static_cast<T>(spatial);
            for (std::size_t i = 0; i < spatial; ++i, ++idx) dx[idx] = up;
        }
    }
    return dx;
}

namespace {

template <typename T>
void check_linear_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) {
        throw ShapeError("linear expects x (batch,in), w (out,in), b (out)");
    }
    if (w.extent(1) != x.extent(1) || b.extent(0) != w.extent(0)) {
        throw ShapeError("linear shape mismatch: x " + shape_to_string(x.shape()) + ", w " +
                         shape_to_string(w.shape()) + ", b " + shape_to_string(b.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    check_linear_args(x, w, b);
    const std::size_t batch = x.extent(0), in = x.extent(1), out_n = w.extent(0);
    Tensor<T> out = Tensor<T>::zeros({batch, out_n});
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < out_n; ++o) {
            T acc = b[o];
            for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[n * in + i];
            out[n * out_n + o] = acc;
        }
    }
    ensure_finite(out, "linear");
    return out;
}

template <typename T>
LinearGrads<T> linear_vjp(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                          const Tensor<T>& upstream) {
    check_linear_args(x, w, b);
    const std::size_t batch = x.extent(0), in = x.extent(1), out_n = w.extent(0);
    if (upstream.shape() != Shape{batch, out_n}) {
        throw ShapeError("linear_vjp upstream shape mismatch");
    }
    LinearGrads<T> g;
    g.dx = Tensor<T>::zeros(x.shape());
    g.dw = Tensor<T>::zeros(w.shape());
    g.db = Tensor<T>::zeros(b.shape());
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < out_n; ++o) {
            const T up = upstream[n * out_n + o];
            g.db[o] += up;
            for (std::size_t i = 0; i < in; ++i) {
                g.dw[o * in + i] += up * x[n * in + i];
                g.dx[n * in + i] += up * w[o * in + i];
            }
        }
    }
    return g;
}

namespace {

template <typename T>
void check_xent_args(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy expects (batch, classes) logits");
    }
    if (labels.size() != logits.extent(0)) {
        throw ShapeError("softmax_cross_entropy needs one label per batch row");
    }
    for (std::size_t lab : labels) {
        if (lab >= logits.extent(1)) {
            throw ParamError("label " + std::to_string(lab) + " out of range for " +
                             std::to_string(logits.extent(1)) + " classes");
        }
    }
}

}  // namespace

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
    check_xent_args(logits, labels);
    const std::size_t batch = logits.extent(0), classes = logits.extent(1);
    T total = T(0);
    for (std::size_t n = 0; n < batch; ++n) {
        const T* row = logits.data().data() + n * classes;
        T mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        T sum = T(0);
        for (std::size_t c = 0; c < classes; ++c) {
            sum += static_cast<T>(std::exp(static_cast<double>(row[c] - mx)));
        }
        total += static_cast<T>(std::log(static_cast<double>(sum))) - (row[labels[n]] - mx);
    }
    return total / static_cast<T>(batch);
}

template <typename T>
Tensor<T> softmax_cross_entropy_vjp(const Tensor<T>& logits,
                                    const std::vector<std::size_t>& labels, T upstream) {
    check_xent_args(logits, labels);
    const std::size_t batch = logits.extent(0), classes = logits.extent(1);
    Tensor<T> dlogits = Tensor<T>::zeros(logits.shape());
    for (std::size_t n = 0; n < batch; ++n) {
        const T* row = logits.data().data() + n * classes;
        T mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        T sum = T(0);
        for (std::size_t c = 0; c < classes; ++c) {
            sum += static_cast<T>(std::exp(static_cast<double>(row[c] - mx)));
        }
        for (std::size_t c = 0; c < classes; ++c) {
            const T p = static_cast<T>(std::exp(static_cast<double>(row[c] - mx))) / sum;
            const T onehot = (c == labels[n]) ? T(1) : T(0);
            dlogits[n * classes + c] = upstream * (p - onehot) / static_cast<T>(batch);
        }
    }
    return dlogits;
}

#define VAN_INSTANTIATE_NN_OPS(T)                                                              \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const ConvWeights<T>&, const ConvSpec&);    \
    template ConvGrads<T> conv2d_vjp<T>(const Tensor<T>&, const ConvWeights<T>&,               \
                                        const ConvSpec&, const Tensor<T>&);                    \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                              \
    template Tensor<T> gelu_vjp<T>(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                           \
    template Tensor<T> sigmoid_vjp<T>(const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> batch_norm_infer<T>(const Tensor<T>&, const NormVectors<T>&, T);        \
    template BatchNormGrads<T> batch_norm_infer_vjp<T>(const Tensor<T>&, const NormVectors<T>&, \
                                                       T, const Tensor<T>&);                   \
    template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                   \
    template Tensor<T> global_avg_pool_vjp<T>(const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
    template LinearGrads<T> linear_vjp<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&);                                   \
    template T softmax_cross_entropy<T>(const Tensor<T>&, const std::vector<std::size_t>&);    \
    template Tensor<T> softmax_cross_entropy_vjp<T>(const Tensor<T>&,                          \
                                                    const std::vector<std::size_t>&, T);

VAN_INSTANTIATE_NN_OPS(float)
VAN_INSTANTIATE_NN_OPS(double)

#undef VAN_INSTANTIATE_NN_OPS

}  // namespace van

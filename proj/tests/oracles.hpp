#pragma once

// Test-only reference implementations, kept independent of the library's
// code paths: the convolution oracle pads explicitly and accumulates in
// kernel-major order, geometry is found by enumerating window positions,
// and elementwise oracles are plain flat loops.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "van/nn_ops.hpp"
#include "van/tensor.hpp"

namespace oracles {

// Largest p with p*stride + dilation*(kernel-1) inside the padded extent,
// found by walking positions one by one.
inline std::size_t output_extent_by_enumeration(std::size_t in, std::size_t kernel,
                                                std::size_t stride, std::size_t dilation,
                                                std::size_t padding) {
    const std::size_t padded = in + 2 * padding;
    std::size_t count = 0;
    for (std::size_t pos = 0;; ++pos) {
        const std::size_t last_tap = pos * stride + dilation * (kernel - 1);
        if (last_tap >= padded) break;
        ++count;
    }
    return count;
}

template <typename T>
van::Tensor<T> conv2d_reference(const van::Tensor<T>& x, const van::ConvWeights<T>& w,
                                const van::ConvSpec& spec) {
    const std::size_t ph = x.height() + 2 * spec.padding;
    const std::size_t pw = x.width() + 2 * spec.padding;
    van::Tensor<T> padded = van::Tensor<T>::zeros({x.batch(), x.channels(), ph, pw});
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            for (std::size_t y = 0; y < x.height(); ++y) {
                for (std::size_t xx = 0; xx < x.width(); ++xx) {
                    padded.at4(n, c, y + spec.padding, xx + spec.padding) = x.at4(n, c, y, xx);
                }
            }
        }
    }

    const std::size_t oh =
        output_extent_by_enumeration(x.height(), spec.kernel_h, spec.stride, spec.dilation,
                                     spec.padding);
    const std::size_t ow =
        output_extent_by_enumeration(x.width(), spec.kernel_w, spec.stride, spec.dilation,
                                     spec.padding);
    van::Tensor<T> out = van::Tensor<T>::zeros({x.batch(), spec.out_channels, oh, ow});

    const std::size_t icg = spec.in_channels / spec.groups;
    const std::size_t ocg = spec.out_channels / spec.groups;
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t g = 0; g < spec.groups; ++g) {
            for (std::size_t ocl = 0; ocl < ocg; ++ocl) {
                const std::size_t oc = g * ocg + ocl;
                for (std::size_t icl = 0; icl < icg; ++icl) {
                    const std::size_t ic = g * icg + icl;
                    for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
                        for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                            const T wv = w.weight.at4(oc, icl, kh, kw);
                            for (std::size_t y = 0; y < oh; ++y) {
                                for (std::size_t xx = 0; xx < ow; ++xx) {
                                    out.at4(n, oc, y, xx) +=
                                        wv * padded.at4(n, ic, y * spec.stride + kh * spec.dilation,
                                                        xx * spec.stride + kw * spec.dilation);
                                }
                            }
                        }
                    }
                }
            }
        }
        if (w.bias) {
            for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
                for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        out.at4(n, oc, y, xx) += (*w.bias)[oc];
                    }
                }
            }
        }
    }
    return out;
}

// Spatial bounding box of entries with |v| > threshold; returns (height,
// width) of the support, (0, 0) when everything is below threshold.
template <typename T>
std::pair<std::size_t, std::size_t> measured_support(const van::Tensor<T>& t,
                                                     double threshold = 0.0) {
    std::size_t ymin = t.height(), ymax = 0, xmin = t.width(), xmax = 0;
    bool any = false;
    for (std::size_t n = 0; n < t.batch(); ++n) {
        for (std::size_t c = 0; c < t.channels(); ++c) {
            for (std::size_t y = 0; y < t.height(); ++y) {
                for (std::size_t x = 0; x < t.width(); ++x) {
                    if (std::abs(static_cast<double>(t.at4(n, c, y, x))) > threshold) {
                        any = true;
                        ymin = std::min(ymin, y);
                        ymax = std::max(ymax, y);
                        xmin = std::min(xmin, x);
                        xmax = std::max(xmax, x);
                    }
                }
            }
        }
    }
    if (!any) return {0, 0};
    return {ymax - ymin + 1, xmax - xmin + 1};
}

// High-precision standard normal CDF in long double, via erfcl.
inline long double normal_cdf_ld(long double x) {
    return 0.5L * erfcl(-x / 1.41421356237309504880168872420969808L);
}

inline double dot(const van::TensorD& a, const van::TensorD& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace oracles

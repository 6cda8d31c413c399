#include "van/cost.hpp"

#include "van/lka.hpp"
#include "van/nn_ops.hpp"

namespace van {

void CostReport::add(std::string name, Count params, Count macs) {
    total_params += params;
    total_macs += macs;
    rows.push_back({std::move(name), params, macs});
}

namespace {

Count ceil_div(Count a, Count b) { return (a + b - 1) / b; }

void check_positive(Count v, const char* what) {
    if (v < 1) throw ParamError(std::string(what) + " must be >= 1");
}

}  // namespace

Count standard_conv_params(Count kernel, Count channels) {
    check_positive(kernel, "kernel");
    check_positive(channels, "channels");
    return kernel * kernel * channels * channels;
}

Count mobilenet_decomp_params(Count kernel, Count channels) {
    check_positive(kernel, "kernel");
    check_positive(channels, "channels");
    return channels * kernel * kernel + channels * channels;
}

Count lka_decomp_params(Count kernel, Count dilation, Count channels) {
    check_positive(kernel, "kernel");
    check_positive(dilation, "dilation");
    check_positive(channels, "channels");
    if (kernel < dilation) throw ParamError("kernel must be >= dilation");
    const Count kd = ceil_div(kernel, dilation);
    const Count dw = 2 * dilation - 1;
    return channels * (kd * kd + dw * dw) + channels * channels;
}

Count lka_decomp_macs(Count kernel, Count dilation, Count channels, Count height, Count width) {
    check_positive(height, "height");
    check_positive(width, "width");
    return lka_decomp_params(kernel, dilation, channels) * height * width;
}

Count optimal_dilation(Count kernel, Count d_max) {
    check_positive(kernel, "kernel");
    check_positive(d_max, "d_max");
    Count best_d = 1;
    Count best = -1;
    for (Count d = 1; d <= d_max && d <= kernel; ++d) {
        const Count kd = ceil_div(kernel, d);
        const Count obj = kd * kd + (2 * d - 1) * (2 * d - 1);
        if (best < 0 || obj < best) {
            best = obj;
            best_d = d;
        }
    }
    return best_d;
}

std::vector<ComparisonRow> params_comparison_table(Count kernel,
                                                   const std::vector<Count>& channel_list) {
    if (channel_list.empty()) throw ParamError("channel list must not be empty");
    const Count d = optimal_dilation(kernel);
    std::vector<ComparisonRow> rows;
    rows.reserve(channel_list.size());
    for (Count c : channel_list) {
        ComparisonRow r;
        r.channels = c;
        r.standard_conv = standard_conv_params(kernel, c);
        r.mobilenet = mobilenet_decomp_params(kernel, c);
        r.ours = lka_decomp_params(kernel, d, c);
        rows.push_back(r);
    }
    return rows;
}

namespace {

struct CostWalker {
    CostReport report;
    bool bias;

    void conv(const std::string& name, Count in_c, Count out_c, Count kernel, Count groups,
              Count out_h, Count out_w) {
        const Count weight = out_c * (in_c / groups) * kernel * kernel;
        const Count params = weight + (bias ? out_c : 0);
        report.add(name, params, weight * out_h * out_w);
    }

    void norm(const std::string& name, Count channels) { report.add(name, 2 * channels, 0); }

    void layerscale(const std::string& name, Count channels) { report.add(name, channels, 0); }

    void linear_layer(const std::string& name, Count in, Count out) {
        report.add(name, in * out + (bias ? out : 0), in * out);
    }
};

}  // namespace

CostReport model_cost(const VanVariant& variant, std::size_t input_h, std::size_t input_w,
                      bool bias) {
    variant.validate();
    if (input_h % 32 != 0 || input_w % 32 != 0) {
        throw GeometryError("model_cost input extents must be divisible by 32, got " +
                            std::to_string(input_h) + "x" + std::to_string(input_w));
    }

    CostWalker walker;
    walker.bias = bias;
    walker.report.bias_included = bias;

    LkaConfig lka;
    lka.nominal_kernel = variant.lka_nominal_kernel;
    lka.dilation = variant.lka_dilation;

    std::size_t h = input_h, w = input_w;
    Count prev_c = 3;
    for (std::size_t i = 0; i < 4; ++i) {
        const StageConfig& s = variant.stages[i];
        const std::string stage = "stage" + std::to_string(i + 1);
        const Count c = static_cast<Count>(s.channels);
        h = conv_output_extent(h, s.downsample_kernel, s.downsample_stride, 1,
                               s.downsample_padding);
        w = conv_output_extent(w, s.downsample_kernel, s.downsample_stride, 1,
                               s.downsample_padding);
        const Count hw_h = static_cast<Count>(h), hw_w = static_cast<Count>(w);
        walker.conv(stage + ".downsample", prev_c, c, static_cast<Count>(s.downsample_kernel), 1,
                    hw_h, hw_w);
        walker.norm(stage + ".downsample_norm", c);

        lka.channels = s.channels;
        const Count k_dw = static_cast<Count>(lka.dw_kernel());
        const Count k_dwd = static_cast<Count>(lka.dwd_kernel());
        const Count hidden = c * static_cast<Count>(s.expansion_ratio);
        for (std::size_t b = 0; b < s.depth; ++b) {
            const std::string blk = stage + ".block" + std::to_string(b);
            walker.norm(blk + ".norm1", c);
            walker.conv(blk + ".attn.pw_in", c, c, 1, 1, hw_h, hw_w);
            walker.conv(blk + ".attn.lka.dw", c, c, k_dw, c, hw_h, hw_w);
            walker.conv(blk + ".attn.lka.dwd", c, c, k_dwd, c, hw_h, hw_w);
            walker.conv(blk + ".attn.lka.pw", c, c, 1, 1, hw_h, hw_w);
            walker.conv(blk + ".attn.pw_out", c, c, 1, 1, hw_h, hw_w);
            walker.layerscale(blk + ".layerscale1", c);
            walker.norm(blk + ".norm2", c);
            walker.conv(blk + ".ffn.pw1", c, hidden, 1, 1, hw_h, hw_w);
            walker.conv(blk + ".ffn.dw", hidden, hidden, 3, hidden, hw_h, hw_w);
            walker.conv(blk + ".ffn.pw2", hidden, c, 1, 1, hw_h, hw_w);
            walker.layerscale(blk + ".layerscale2", c);
        }
        walker.norm(stage + ".norm", c);
        prev_c = c;
    }

    walker.norm("head.norm", prev_c);
    walker.linear_layer("head.linear", prev_c, static_cast<Count>(variant.num_classes));
    return walker.report;
}

}  // namespace van

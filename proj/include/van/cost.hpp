#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "van/variant.hpp"

namespace van {

using Count = std::int64_t;

struct CostRow {
    std::string name;
    Count params = 0;
    Count macs = 0;
};

// Exact integer parameter / multiply-accumulate budget. Totals always equal
// the sum of the rows; no floating point is involved anywhere.
struct CostReport {
    Count total_params = 0;
    Count total_macs = 0;
    bool bias_included = false;
    std::vector<CostRow> rows;

    void add(std::string name, Count params, Count macs);
};

// K*K*C*C: a dense KxK convolution with C input and output channels, no bias.
Count standard_conv_params(Count kernel, Count channels);

// C*K*K + C*C: depthwise KxK plus pointwise.
Count mobilenet_decomp_params(Count kernel, Count channels);

// C*(ceil(K/d)^2 + (2d-1)^2) + C^2: depthwise (2d-1)^2, depthwise dilated
// ceil(K/d)^2, plus pointwise.
Count lka_decomp_params(Count kernel, Count dilation, Count channels);

// Multiply-accumulates at resolution HxW; exactly params * H * W.
Count lka_decomp_macs(Count kernel, Count dilation, Count channels, Count height, Count width);

// The d in [1, d_max] minimizing ceil(K/d)^2 + (2d-1)^2; ties break toward
// the smaller d. The objective is independent of the channel count.
Count optimal_dilation(Count kernel, Count d_max = 16);

struct ComparisonRow {
    Count channels = 0;
    Count standard_conv = 0;
    Count mobilenet = 0;
    Count ours = 0;
};

// One row per channel count, with d = optimal_dilation(kernel), bias off.
std::vector<ComparisonRow> params_comparison_table(Count kernel,
                                                   const std::vector<Count>& channel_list);

// Structural walk over every layer of the variant at the given input
// resolution. Parameters follow the bias flag; MACs always use the bias-free
// weight count times output positions, and norm/activation/pooling layers
// contribute zero MACs.
CostReport model_cost(const VanVariant& variant, std::size_t input_h, std::size_t input_w,
                      bool bias);

}  // namespace van

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "van/error.hpp"

namespace van {

// One backbone stage: a strided downsample conv followed by `depth` blocks
// of width `channels` with the given feed-forward expansion ratio.
struct StageConfig {
    std::size_t channels = 1;
    std::size_t depth = 1;
    std::size_t expansion_ratio = 1;
    std::size_t downsample_kernel = 3;
    std::size_t downsample_stride = 2;
    std::size_t downsample_padding = 1;
};

// A full model preset: four stages plus the attention geometry and head
// width. Presets B0..B6 follow the published table; `micro` is a tiny
// configuration that exercises every code path in seconds.
struct VanVariant {
    std::string name;
    std::array<StageConfig, 4> stages;
    std::size_t lka_nominal_kernel = 21;
    std::size_t lka_dilation = 3;
    std::size_t num_classes = 1000;
    double layerscale_init = 0.01;

    void validate() const;  // throws ConfigError
};

VanVariant van_b0();
VanVariant van_b1();
VanVariant van_b2();
VanVariant van_b3();
VanVariant van_b4();
VanVariant van_b5();
VanVariant van_b6();
VanVariant van_micro();

const std::vector<std::string>& preset_names();
std::optional<VanVariant> find_preset(const std::string& name);

}  // namespace van

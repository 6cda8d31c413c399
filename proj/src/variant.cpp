#include "van/variant.hpp"

#include "van/lka.hpp"

namespace van {

void VanVariant::validate() const {
    if (name.empty()) throw ConfigError("variant name must not be empty");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    for (const StageConfig& s : stages) {
        if (s.channels < 1 || s.depth < 1 || s.expansion_ratio < 1 || s.downsample_kernel < 1 ||
            s.downsample_stride < 1) {
            throw ConfigError("stage counts must be >= 1 in variant " + name);
        }
        LkaConfig lka;
        lka.channels = s.channels;
        lka.nominal_kernel = lka_nominal_kernel;
        lka.dilation = lka_dilation;
        lka.validate();
    }
}

namespace {

VanVariant make_variant(std::string name, std::array<std::size_t, 4> channels,
                        std::array<std::size_t, 4> depths, std::array<std::size_t, 4> ratios,
                        std::size_t num_classes) {
    VanVariant v;
    v.name = std::move(name);
    for (std::size_t i = 0; i < 4; ++i) {
        StageConfig s;
        s.channels = channels[i];
        s.depth = depths[i];
        s.expansion_ratio = ratios[i];
        if (i == 0) {
            s.downsample_kernel = 7;
            s.downsample_stride = 4;
            s.downsample_padding = 3;
        } else {
            s.downsample_kernel = 3;
            s.downsample_stride = 2;
            s.downsample_padding = 1;
        }
        v.stages[i] = s;
    }
    v.num_classes = num_classes;
    return v;
}

}  // namespace

VanVariant van_b0() { return make_variant("B0", {32, 64, 160, 256}, {3, 3, 5, 2}, {8, 8, 4, 4}, 1000); }
VanVariant van_b1() { return make_variant("B1", {64, 128, 320, 512}, {2, 2, 4, 2}, {8, 8, 4, 4}, 1000); }
VanVariant van_b2() { return make_variant("B2", {64, 128, 320, 512}, {3, 3, 12, 3}, {8, 8, 4, 4}, 1000); }
VanVariant van_b3() { return make_variant("B3", {64, 128, 320, 512}, {3, 5, 27, 3}, {8, 8, 4, 4}, 1000); }
VanVariant van_b4() { return make_variant("B4", {64, 128, 320, 512}, {3, 6, 40, 3}, {8, 8, 4, 4}, 1000); }
VanVariant van_b5() { return make_variant("B5", {96, 192, 480, 768}, {3, 3, 24, 3}, {8, 8, 4, 4}, 1000); }
VanVariant van_b6() { return make_variant("B6", {96, 192, 384, 768}, {6, 6, 90, 6}, {8, 8, 4, 4}, 1000); }

VanVariant van_micro() {
    return make_variant("micro", {8, 16, 32, 64}, {1, 1, 2, 1}, {4, 4, 4, 4}, 2);
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"B0", "B1", "B2", "B3", "B4", "B5", "B6", "micro"};
    return names;
}

std::optional<VanVariant> find_preset(const std::string& name) {
    if (name == "B0") return van_b0();
    if (name == "B1") return van_b1();
    if (name == "B2") return van_b2();
    if (name == "B3") return van_b3();
    if (name == "B4") return van_b4();
    if (name == "B5") return van_b5();
    if (name == "B6") return van_b6();
    if (name == "micro") return van_micro();
    return std::nullopt;
}

}  // namespace van

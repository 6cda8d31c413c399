#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "van/tensor.hpp"

namespace van {

struct GradCheckReport {
    std::string op;
    double tolerance = 0.0;
    double max_rel_error = 0.0;
    std::size_t checked = 0;  // number of perturbed entries
    bool pass = true;
    std::string worst;  // "tensor[flat_index]" of the largest error
};

// One tensor to perturb, paired with the analytic gradient claimed for it.
struct GradCheckTarget {
    std::string name;
    TensorD* tensor;
    const TensorD* analytic;
};

// Central finite differences against the analytic gradients: for each checked
// entry, h = 1e-4 * (1 + |value|) and the relative error uses denominator
// max(1, |analytic|, |numeric|). `eval` must recompute the scalar from the
// current tensor contents. With max_entries_per_tensor = 0 every entry is
// checked; otherwise a deterministic sample (from sample_seed) is used.
GradCheckReport check_gradients(const std::string& op_name,
                                const std::function<double()>& eval,
                                const std::vector<GradCheckTarget>& targets, double tolerance,
                                std::size_t max_entries_per_tensor = 0,
                                std::uint64_t sample_seed = 0);

// Named finite-difference checks covering every differentiable op plus the
// LKA block, one backbone block and the full VAN-micro model. With
// inject_fault the first analytic weight-gradient entry is zeroed before
// comparing, which must flip the verdict (self-test of the checker).
const std::vector<std::string>& gradcheck_op_names();
GradCheckReport run_op_gradcheck(const std::string& op, std::uint64_t seed,
                                 bool inject_fault = false);
std::vector<GradCheckReport> run_all_gradchecks(std::uint64_t seed, bool inject_fault = false);

}  // namespace van

#include "van/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "van/lka.hpp"
#include "van/nn_ops.hpp"
#include "van/van_model.hpp"

namespace van {

GradCheckReport check_gradients(const std::string& op_name,
                                const std::function<double()>& eval,
                                const std::vector<GradCheckTarget>& targets, double tolerance,
                                std::size_t max_entries_per_tensor, std::uint64_t sample_seed) {
    GradCheckReport report;
    report.op = op_name;
    report.tolerance = tolerance;
    std::mt19937_64 sampler(sample_seed);

    for (const GradCheckTarget& target : targets) {
        TensorD& t = *target.tensor;
        if (!target.analytic->same_shape(t)) {
            throw ShapeError("analytic gradient shape mismatch for " + target.name);
        }
        std::vector<std::size_t> indices;
        if (max_entries_per_tensor == 0 || t.size() <= max_entries_per_tensor) {
            indices.resize(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) indices[i] = i;
        } else {
            for (std::size_t i = 0; i < max_entries_per_tensor; ++i) {
                indices.push_back(sampler() % t.size());
            }
        }
        for (std::size_t idx : indices) {
            const double saved = t[idx];
            const double h = 1e-4 * (1.0 + std::abs(saved));
            t[idx] = saved + h;
            const double plus = eval();
            t[idx] = saved - h;
            const double minus = eval();
            t[idx] = saved;
            const double numeric = (plus - minus) / (2.0 * h);
            const double analytic = (*target.analytic)[idx];
            const double rel = std::abs(analytic - numeric) /
                               std::max({1.0, std::abs(analytic), std::abs(numeric)});
            ++report.checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = target.name + "[" + std::to_string(idx) + "]";
            }
        }
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

namespace {

double dot(const TensorD& a, const TensorD& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Zero one entry of the first analytic gradient that has any weight in it;
// used as the negative control.
void corrupt(std::vector<TensorD*> analytics) {
    for (TensorD* g : analytics) {
        if (g && g->size() > 0) {
            (*g)[0] = 0.0;
            return;
        }
    }
}

GradCheckReport check_conv(const std::string& name, const ConvSpec& spec, Shape input_shape,
                           std::uint64_t seed, bool inject_fault, double tol) {
    TensorD x = TensorD::random_normal(input_shape, 0.0, 1.0, seed);
    NormalRng rng(seed + 1);
    ConvWeights<double> w;
    w.weight = TensorD::random_normal(
        {spec.out_channels, spec.in_channels / spec.groups, spec.kernel_h, spec.kernel_w}, 0.0,
        0.5, rng);
    if (spec.has_bias) w.bias = TensorD::random_normal({spec.out_channels}, 0.0, 0.5, rng);

    const TensorD base = conv2d(x, w, spec);
    const TensorD upstream = TensorD::random_normal(base.shape(), 0.0, 1.0, seed + 2);
    ConvGrads<double> grads = conv2d_vjp(x, w, spec, upstream);
    if (inject_fault) corrupt({&grads.dweight});

    std::vector<GradCheckTarget> targets{{"x", &x, &grads.dx},
                                         {"weight", &w.weight, &grads.dweight}};
    if (w.bias) targets.push_back({"bias", &*w.bias, &*grads.dbias});
    auto eval = [&] { return dot(upstream, conv2d(x, w, spec)); };
    return check_gradients(name, eval, targets, tol);
}

GradCheckReport check_pointwise(const std::string& name, std::uint64_t seed, bool inject_fault,
                                bool use_sigmoid) {
    TensorD x = TensorD::random_normal({2, 3, 4, 4}, 0.0, 2.0, seed);
    const TensorD upstream = TensorD::random_normal(x.shape(), 0.0, 1.0, seed + 2);
    TensorD dx = use_sigmoid ? sigmoid_vjp(x, upstream) : gelu_vjp(x, upstream);
    if (inject_fault) corrupt({&dx});
    auto eval = [&] {
        return dot(upstream, use_sigmoid ? sigmoid(x) : gelu(x));
    };
    return check_gradients(name, eval, {{"x", &x, &dx}}, 1e-6);
}

GradCheckReport check_batch_norm(std::uint64_t seed, bool inject_fault) {
    TensorD x = TensorD::random_normal({2, 3, 4, 4}, 0.0, 1.0, seed);
    NormalRng rng(seed + 1);
    NormVectors<double> p;
    p.gamma = TensorD::random_normal({3}, 1.0, 0.2, rng);
    p.beta = TensorD::random_normal({3}, 0.0, 0.2, rng);
    p.mean = TensorD::random_normal({3}, 0.0, 0.5, rng);
    p.var = TensorD::filled({3}, 0.8);
    const double eps = kBnEps;
    const TensorD base = batch_norm_infer(x, p, eps);
    const TensorD upstream = TensorD::random_normal(base.shape(), 0.0, 1.0, seed + 2);
    BatchNormGrads<double> g = batch_norm_infer_vjp(x, p, eps, upstream);
    if (inject_fault) corrupt({&g.dgamma});
    auto eval = [&] { return dot(upstream, batch_norm_infer(x, p, eps)); };
    return check_gradients("batch_norm", eval,
                           {{"x", &x, &g.dx}, {"gamma", &p.gamma, &g.dgamma},
                            {"beta", &p.beta, &g.dbeta}},
                           1e-6);
}

GradCheckReport check_global_avg_pool(std::uint64_t seed, bool inject_fault) {
    TensorD x = TensorD::random_normal({2, 3, 4, 5}, 0.0, 1.0, seed);
    const TensorD upstream = TensorD::random_normal({2, 3}, 0.0, 1.0, seed + 2);
    TensorD dx = global_avg_pool_vjp(x, upstream);
    if (inject_fault) corrupt({&dx});
    auto eval = [&] { return dot(upstream, global_avg_pool(x)); };
    return check_gradients("global_avg_pool", eval, {{"x", &x, &dx}}, 1e-6);
}

GradCheckReport check_linear(std::uint64_t seed, bool inject_fault) {
    TensorD x = TensorD::random_normal({2, 3}, 0.0, 1.0, seed);
    NormalRng rng(seed + 1);
    TensorD w = TensorD::random_normal({4, 3}, 0.0, 1.0, rng);
    TensorD b = TensorD::random_normal({4}, 0.0, 1.0, rng);
    const TensorD upstream = TensorD::random_normal({2, 4}, 0.0, 1.0, seed + 2);
    LinearGrads<double> g = linear_vjp(x, w, b, upstream);
    if (inject_fault) corrupt({&g.dw});
    auto eval = [&] { return dot(upstream, linear(x, w, b)); };
    return check_gradients("linear", eval,
                           {{"x", &x, &g.dx}, {"w", &w, &g.dw}, {"b", &b, &g.db}}, 1e-6);
}

GradCheckReport check_cross_entropy(std::uint64_t seed, bool inject_fault) {
    TensorD logits = TensorD::random_normal({3, 5}, 0.0, 2.0, seed);
    const std::vector<std::size_t> labels{0, 2, 4};
    TensorD dlogits = softmax_cross_entropy_vjp(logits, labels, 1.0);
    if (inject_fault) corrupt({&dlogits});
    auto eval = [&] { return softmax_cross_entropy(logits, labels); };
    return check_gradients("softmax_cross_entropy", eval, {{"logits", &logits, &dlogits}}, 1e-6);
}

GradCheckReport check_lka(const std::string& name, LkaVariant variant, std::uint64_t seed,
                          bool inject_fault) {
    LkaConfig cfg;
    cfg.channels = 2;
    cfg.nominal_kernel = 7;
    cfg.dilation = 2;
    cfg.variant = variant;
    cfg.with_bias = true;
    NormalRng rng(seed + 1);
    LkaWeights<double> w = lka_random_weights<double>(cfg, 0.4, rng);
    TensorD x = TensorD::random_normal({1, 2, 8, 8}, 0.0, 1.0, seed);
    const TensorD upstream = TensorD::random_normal(x.shape(), 0.0, 1.0, seed + 2);
    LkaGrads<double> g = lka_variant_vjp(x, w, cfg, upstream);
    if (inject_fault) corrupt({&g.pw.dweight});

    std::vector<GradCheckTarget> targets{{"x", &x, &g.dinput},
                                         {"dw.weight", &w.dw.weight, &g.dw.dweight},
                                         {"dwd.weight", &w.dwd.weight, &g.dwd.dweight},
                                         {"pw.weight", &w.pw.weight, &g.pw.dweight}};
    if (w.dw.bias) targets.push_back({"dw.bias", &*w.dw.bias, &*g.dw.dbias});
    if (w.dwd.bias) targets.push_back({"dwd.bias", &*w.dwd.bias, &*g.dwd.dbias});
    if (w.pw.bias) targets.push_back({"pw.bias", &*w.pw.bias, &*g.pw.dbias});
    auto eval = [&] { return dot(upstream, lka_variant_forward(x, w, cfg)); };
    return check_gradients(name, eval, targets, 1e-4);
}

GradCheckReport check_block(std::uint64_t seed, bool inject_fault) {
    VanVariant variant = van_micro();
    ModelWeights<double> model = build_van<double>(variant, seed);
    BlockWeights<double>& blk = model.stages[0].blocks[0];
    const LkaConfig cfg = block_lka_config(variant, variant.stages[0].channels);
    TensorD x = TensorD::random_normal({1, 8, 8, 8}, 0.0, 1.0, seed + 3);

    Tape tape;
    BlockTapeRecord rec = tape_single_block(tape, blk, cfg, x);
    const TensorD upstream =
        TensorD::random_normal(tape.value(rec.output).shape(), 0.0, 1.0, seed + 2);
    const Tape::Id root = tape.weighted_sum(rec.output, upstream);
    const std::vector<TensorD> grads = tape.backward(root);

    // Pin analytic gradients and wire targets to the live block tensors.
    auto refs = model_tensor_refs(model);
    std::map<std::string, TensorD*> by_name;
    for (auto& r : refs) by_name[r.name] = r.tensor;

    std::vector<TensorD> analytic;
    std::vector<std::pair<std::string, TensorD*>> live;
    analytic.reserve(rec.params.size() + 1);
    for (const auto& [name, id] : rec.params) {
        // names are "block.<suffix>"; the live tensor is stage1.block0.<suffix>
        const std::string live_name = "stage1.block0" + name.substr(5);
        TensorD* tensor = by_name.at(live_name);
        analytic.push_back(grads[id].empty() ? TensorD::zeros(tensor->shape()) : grads[id]);
        live.emplace_back(name, tensor);
    }
    analytic.push_back(grads[rec.input]);
    // Zero a whole gradient tensor so the fault survives entry sampling.
    if (inject_fault) analytic[2] = TensorD::zeros(analytic[2].shape());  // pw_in.weight

    std::vector<GradCheckTarget> targets;
    for (std::size_t i = 0; i < live.size(); ++i) {
        targets.push_back({live[i].first, live[i].second, &analytic[i]});
    }
    targets.push_back({"x", &x, &analytic.back()});
    auto eval = [&] { return dot(upstream, block_forward(x, blk, cfg)); };
    return check_gradients("block", eval, targets, 1e-4, 6, seed);
}

GradCheckReport check_model(std::uint64_t seed, bool inject_fault) {
    VanVariant variant = van_micro();
    ModelWeights<double> model = build_van<double>(variant, seed);
    TensorD images = TensorD::random_normal({1, 3, 16, 16}, 0.0, 1.0, seed + 3);

    ModelTape mt(model);
    const Tape::Id logits = mt.forward(images);
    const TensorD upstream =
        TensorD::random_normal(mt.tape().value(logits).shape(), 0.0, 1.0, seed + 2);
    const Tape::Id root = mt.tape().weighted_sum(logits, upstream);
    const std::vector<TensorD> grads = mt.tape().backward(root);

    auto refs = model_tensor_refs(model);
    std::vector<TensorD> analytic;
    std::vector<std::pair<std::string, TensorD*>> live;
    std::size_t p = 0;
    for (auto& ref : refs) {
        if (!ref.is_parameter) continue;
        const auto& [name, id] = mt.parameters()[p++];
        analytic.push_back(grads[id].empty() ? TensorD::zeros(ref.tensor->shape()) : grads[id]);
        live.emplace_back(name, ref.tensor);
    }
    analytic.push_back(grads[mt.input_id()]);
    if (inject_fault) analytic[0] = TensorD::zeros(analytic[0].shape());  // downsample weight

    std::vector<GradCheckTarget> targets;
    for (std::size_t i = 0; i < live.size(); ++i) {
        targets.push_back({live[i].first, live[i].second, &analytic[i]});
    }
    targets.push_back({"images", &images, &analytic.back()});
    auto eval = [&] { return dot(upstream, model_logits(images, model)); };
    // Sampled entries keep the full-model check inside the runtime budget.
    return check_gradients("model", eval, targets, 1e-3, 3, seed);
}

using CheckFn = GradCheckReport (*)(std::uint64_t, bool);

GradCheckReport dispatch(const std::string& op, std::uint64_t seed, bool inject_fault) {
    if (op == "conv2d") {
        ConvSpec spec;
        spec.in_channels = 3;
        spec.out_channels = 4;
        spec.kernel_h = spec.kernel_w = 3;
        spec.padding = 1;
        spec.has_bias = true;
        return check_conv("conv2d", spec, {1, 3, 6, 6}, seed, inject_fault, 1e-4);
    }
    if (op == "conv2d_depthwise_dilated") {
        ConvSpec spec;
        spec.in_channels = spec.out_channels = spec.groups = 4;
        spec.kernel_h = spec.kernel_w = 3;
        spec.dilation = 2;
        spec.padding = 2;
        spec.has_bias = true;
        return check_conv("conv2d_depthwise_dilated", spec, {1, 4, 8, 8}, seed, inject_fault,
                          1e-4);
    }
    if (op == "conv2d_strided") {
        ConvSpec spec;
        spec.in_channels = 2;
        spec.out_channels = 3;
        spec.kernel_h = spec.kernel_w = 3;
        spec.stride = 2;
        spec.padding = 1;
        spec.has_bias = true;
        return check_conv("conv2d_strided", spec, {1, 2, 9, 9}, seed, inject_fault, 1e-4);
    }
    if (op == "gelu") return check_pointwise("gelu", seed, inject_fault, false);
    if (op == "sigmoid") return check_pointwise("sigmoid", seed, inject_fault, true);
    if (op == "batch_norm") return check_batch_norm(seed, inject_fault);
    if (op == "global_avg_pool") return check_global_avg_pool(seed, inject_fault);
    if (op == "linear") return check_linear(seed, inject_fault);
    if (op == "softmax_cross_entropy") return check_cross_entropy(seed, inject_fault);
    if (op == "lka") return check_lka("lka", LkaVariant::full, seed, inject_fault);
    if (op == "lka_no_dw") return check_lka("lka_no_dw", LkaVariant::no_dw, seed, inject_fault);
    if (op == "lka_no_dwd") return check_lka("lka_no_dwd", LkaVariant::no_dwd, seed, inject_fault);
    if (op == "lka_no_pw") return check_lka("lka_no_pw", LkaVariant::no_pw, seed, inject_fault);
    if (op == "lka_non_attention") {
        return check_lka("lka_non_attention", LkaVariant::non_attention, seed, inject_fault);
    }
    if (op == "lka_add_attention") {
        return check_lka("lka_add_attention", LkaVariant::add_attention, seed, inject_fault);
    }
    if (op == "lka_sigmoid_attention") {
        return check_lka("lka_sigmoid_attention", LkaVariant::sigmoid_attention, seed,
                         inject_fault);
    }
    if (op == "block") return check_block(seed, inject_fault);
    if (op == "model") return check_model(seed, inject_fault);
    throw ParamError("unknown gradcheck op: " + op);
}

}  // namespace

const std::vector<std::string>& gradcheck_op_names() {
    static const std::vector<std::string> names{
        "conv2d",        "conv2d_depthwise_dilated",
        "conv2d_strided", "gelu",
        "sigmoid",       "batch_norm",
        "global_avg_pool", "linear",
        "softmax_cross_entropy", "lka",
        "lka_no_dw",     "lka_no_dwd",
        "lka_no_pw",     "lka_non_attention",
        "lka_add_attention", "lka_sigmoid_attention",
        "block",         "model"};
    return names;
}

GradCheckReport run_op_gradcheck(const std::string& op, std::uint64_t seed, bool inject_fault) {
    return dispatch(op, seed, inject_fault);
}

std::vector<GradCheckReport> run_all_gradchecks(std::uint64_t seed, bool inject_fault) {
    std::vector<GradCheckReport> reports;
    for (const std::string& op : gradcheck_op_names()) {
        reports.push_back(run_op_gradcheck(op, seed, inject_fault));
    }
    return reports;
}

}  // namespace van

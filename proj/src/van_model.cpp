#include "van/van_model.hpp"

#include <cmath>

namespace van {

LkaConfig block_lka_config(const VanVariant& variant, std::size_t channels) {
    LkaConfig cfg;
    cfg.channels = channels;
    cfg.nominal_kernel = variant.lka_nominal_kernel;
    cfg.dilation = variant.lka_dilation;
    cfg.variant = LkaVariant::full;
    cfg.with_bias = true;
    return cfg;
}

namespace {

ConvSpec downsample_spec(std::size_t in_c, const StageConfig& s) {
    ConvSpec spec;
    spec.in_channels = in_c;
    spec.out_channels = s.channels;
    spec.kernel_h = spec.kernel_w = s.downsample_kernel;
    spec.stride = s.downsample_stride;
    spec.padding = s.downsample_padding;
    spec.has_bias = true;
    return spec;
}

ConvSpec pointwise_spec(std::size_t in_c, std::size_t out_c) {
    ConvSpec spec;
    spec.in_channels = in_c;
    spec.out_channels = out_c;
    spec.kernel_h = spec.kernel_w = 1;
    spec.has_bias = true;
    return spec;
}

ConvSpec ffn_dw_spec(std::size_t channels) {
    ConvSpec spec;
    spec.in_channels = spec.out_channels = spec.groups = channels;
    spec.kernel_h = spec.kernel_w = 3;
    spec.padding = 1;
    spec.has_bias = true;
    return spec;
}

Shape conv_weight_shape(const ConvSpec& s) {
    return {s.out_channels, s.in_channels / s.groups, s.kernel_h, s.kernel_w};
}

// Shared structural walk. The visitor receives (name, shape, is_parameter)
// for every tensor in traversal order; this single function fixes the
// checkpoint entry order and the parameter count.
template <typename F>
void walk_model_tensors(const VanVariant& variant, F&& visit) {
    auto conv = [&](const std::string& name, const ConvSpec& spec) {
        visit(name + ".weight", conv_weight_shape(spec), true);
        if (spec.has_bias) visit(name + ".bias", Shape{spec.out_channels}, true);
    };
    auto norm = [&](const std::string& name, std::size_t c) {
        visit(name + ".gamma", Shape{c}, true);
        visit(name + ".beta", Shape{c}, true);
        visit(name + ".running_mean", Shape{c}, false);
        visit(name + ".running_var", Shape{c}, false);
    };

    std::size_t prev_c = 3;
    for (std::size_t i = 0; i < 4; ++i) {
        const StageConfig& s = variant.stages[i];
        const std::string stage = "stage" + std::to_string(i + 1);
        conv(stage + ".downsample", downsample_spec(prev_c, s));
        norm(stage + ".downsample_norm", s.channels);
        const LkaConfig lka = block_lka_config(variant, s.channels);
        const std::size_t hidden = s.channels * s.expansion_ratio;
        for (std::size_t b = 0; b < s.depth; ++b) {
            const std::string blk = stage + ".block" + std::to_string(b);
            norm(blk + ".norm1", s.channels);
            conv(blk + ".attn.pw_in", pointwise_spec(s.channels, s.channels));
            conv(blk + ".attn.lka.dw", lka.dw_spec());
            conv(blk + ".attn.lka.dwd", lka.dwd_spec());
            conv(blk + ".attn.lka.pw", lka.pw_spec());
            conv(blk + ".attn.pw_out", pointwise_spec(s.channels, s.channels));
            visit(blk + ".layerscale1", Shape{s.channels}, true);
            norm(blk + ".norm2", s.channels);
            conv(blk + ".ffn.pw1", pointwise_spec(s.channels, hidden));
            conv(blk + ".ffn.dw", ffn_dw_spec(hidden));
            conv(blk + ".ffn.pw2", pointwise_spec(hidden, s.channels));
            visit(blk + ".layerscale2", Shape{s.channels}, true);
        }
        norm(stage + ".norm", s.channels);
        prev_c = s.channels;
    }
    norm("head.norm", prev_c);
    visit("head.linear.weight", Shape{variant.num_classes, prev_c}, true);
    visit("head.linear.bias", Shape{variant.num_classes}, true);
}

}  // namespace

std::vector<TensorSpecEntry> enumerate_model_tensors(const VanVariant& variant) {
    variant.validate();
    std::vector<TensorSpecEntry> entries;
    walk_model_tensors(variant, [&](const std::string& name, Shape shape, bool is_param) {
        entries.push_back({name, std::move(shape), is_param});
    });
    return entries;
}

template <typename T>
std::vector<NamedTensorRef<T>> model_tensor_refs(ModelWeights<T>& m) {
    std::vector<NamedTensorRef<T>> refs;
    auto conv = [&](const std::string& name, ConvWeights<T>& w) {
        refs.push_back({name + ".weight", &w.weight, true});
        if (w.bias) refs.push_back({name + ".bias", &*w.bias, true});
    };
    auto norm = [&](const std::string& name, NormVectors<T>& p) {
        refs.push_back({name + ".gamma", &p.gamma, true});
        refs.push_back({name + ".beta", &p.beta, true});
        refs.push_back({name + ".running_mean", &p.mean, false});
        refs.push_back({name + ".running_var", &p.var, false});
    };
    for (std::size_t i = 0; i < 4; ++i) {
        StageWeights<T>& s = m.stages[i];
        const std::string stage = "stage" + std::to_string(i + 1);
        conv(stage + ".downsample", s.downsample);
        norm(stage + ".downsample_norm", s.downsample_norm);
        for (std::size_t b = 0; b < s.blocks.size(); ++b) {
            BlockWeights<T>& blk = s.blocks[b];
            const std::string bn = stage + ".block" + std::to_string(b);
            norm(bn + ".norm1", blk.norm1);
            conv(bn + ".attn.pw_in", blk.pw_in);
            conv(bn + ".attn.lka.dw", blk.lka.dw);
            conv(bn + ".attn.lka.dwd", blk.lka.dwd);
            conv(bn + ".attn.lka.pw", blk.lka.pw);
            conv(bn + ".attn.pw_out", blk.pw_out);
            refs.push_back({bn + ".layerscale1", &blk.layerscale1, true});
            norm(bn + ".norm2", blk.norm2);
            conv(bn + ".ffn.pw1", blk.ffn_pw1);
            conv(bn + ".ffn.dw", blk.ffn_dw);
            conv(bn + ".ffn.pw2", blk.ffn_pw2);
            refs.push_back({bn + ".layerscale2", &blk.layerscale2, true});
        }
        norm(stage + ".norm", s.norm);
    }
    norm("head.norm", m.head_norm);
    refs.push_back({"head.linear.weight", &m.head_weight, true});
    refs.push_back({"head.linear.bias", &m.head_bias, true});
    return refs;
}

template <typename T>
std::int64_t parameter_element_count(const ModelWeights<T>& m) {
    auto& mutable_m = const_cast<ModelWeights<T>&>(m);
    std::int64_t total = 0;
    for (const auto& ref : model_tensor_refs(mutable_m)) {
        if (ref.is_parameter) total += static_cast<std::int64_t>(ref.tensor->size());
    }
    return total;
}

std::int64_t parameter_element_count(const VanVariant& variant) {
    std::int64_t total = 0;
    for (const auto& e : enumerate_model_tensors(variant)) {
        if (e.is_parameter) total += static_cast<std::int64_t>(shape_numel(e.shape));
    }
    return total;
}

namespace {

template <typename T>
ConvWeights<T> init_conv(const ConvSpec& spec, NormalRng& rng) {
    ConvWeights<T> w;
    const Shape shape = conv_weight_shape(spec);
    const double fan_in =
        static_cast<double>((spec.in_channels / spec.groups) * spec.kernel_h * spec.kernel_w);
    w.weight = Tensor<T>::random_normal(shape, 0.0, std::sqrt(2.0 / fan_in), rng);
    if (spec.has_bias) w.bias = Tensor<T>::zeros({spec.out_channels});
    return w;
}

template <typename T>
NormVectors<T> init_norm(std::size_t c) {
    NormVectors<T> p;
    p.gamma = Tensor<T>::filled({c}, T(1));
    p.beta = Tensor<T>::zeros({c});
    p.mean = Tensor<T>::zeros({c});
    p.var = Tensor<T>::filled({c}, T(1));
    return p;
}

}  // namespace

template <typename T>
ModelWeights<T> build_van(const VanVariant& variant, std::uint64_t seed) {
    variant.validate();
    NormalRng rng(seed);
    ModelWeights<T> m;
    m.variant = variant;
    std::size_t prev_c = 3;
    for (std::size_t i = 0; i < 4; ++i) {
        const StageConfig& s = variant.stages[i];
        StageWeights<T>& stage = m.stages[i];
        stage.downsample = init_conv<T>(downsample_spec(prev_c, s), rng);
        stage.downsample_norm = init_norm<T>(s.channels);
        const LkaConfig lka = block_lka_config(variant, s.channels);
        const std::size_t hidden = s.channels * s.expansion_ratio;
        stage.blocks.resize(s.depth);
        for (std::size_t b = 0; b < s.depth; ++b) {
            BlockWeights<T>& blk = stage.blocks[b];
            blk.norm1 = init_norm<T>(s.channels);
            blk.pw_in = init_conv<T>(pointwise_spec(s.channels, s.channels), rng);
            blk.lka.dw = init_conv<T>(lka.dw_spec(), rng);
            blk.lka.dwd = init_conv<T>(lka.dwd_spec(), rng);
            blk.lka.pw = init_conv<T>(lka.pw_spec(), rng);
            blk.pw_out = init_conv<T>(pointwise_spec(s.channels, s.channels), rng);
            blk.layerscale1 =
                Tensor<T>::filled({s.channels}, static_cast<T>(variant.layerscale_init));
            blk.norm2 = init_norm<T>(s.channels);
            blk.ffn_pw1 = init_conv<T>(pointwise_spec(s.channels, hidden), rng);
            blk.ffn_dw = init_conv<T>(ffn_dw_spec(hidden), rng);
            blk.ffn_pw2 = init_conv<T>(pointwise_spec(hidden, s.channels), rng);
            blk.layerscale2 =
                Tensor<T>::filled({s.channels}, static_cast<T>(variant.layerscale_init));
        }
        stage.norm = init_norm<T>(s.channels);
        prev_c = s.channels;
    }
    m.head_norm = init_norm<T>(prev_c);
    m.head_weight = Tensor<T>::random_normal({variant.num_classes, prev_c}, 0.0, 0.01, rng);
    m.head_bias = Tensor<T>::zeros({variant.num_classes});
    return m;
}

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockWeights<T>& blk, const LkaConfig& lka_cfg) {
    const T eps = static_cast<T>(kBnEps);

    // Attention sub-block: x <- x + ls1 * (f1(x) + x)
    Tensor<T> t = batch_norm_infer(x, blk.norm1, eps);
    t = conv2d(t, blk.pw_in, pointwise_spec(x.channels(), x.channels()));
    t = gelu(t);
    t = lka_forward(t, blk.lka, lka_cfg);
    t = conv2d(t, blk.pw_out, pointwise_spec(x.channels(), x.channels()));
    Tensor<T> out = elementwise_add(x, scale_channels(elementwise_add(t, x), blk.layerscale1));

    // FFN sub-block: x <- x + ls2 * (f2(x) + x)
    const std::size_t hidden = blk.ffn_pw1.weight.extent(0);
    t = batch_norm_infer(out, blk.norm2, eps);
    t = conv2d(t, blk.ffn_pw1, pointwise_spec(out.channels(), hidden));
    t = conv2d(t, blk.ffn_dw, ffn_dw_spec(hidden));
    t = gelu(t);
    t = conv2d(t, blk.ffn_pw2, pointwise_spec(hidden, out.channels()));
    return elementwise_add(out, scale_channels(elementwise_add(t, out), blk.layerscale2));
}

template <typename T>
Tensor<T> stage_forward(const Tensor<T>& x, const StageWeights<T>& stage, const StageConfig& cfg,
                        const LkaConfig& lka_cfg) {
    const T eps = static_cast<T>(kBnEps);
    Tensor<T> t = conv2d(x, stage.downsample, downsample_spec(x.channels(), cfg));
    t = batch_norm_infer(t, stage.downsample_norm, eps);
    for (const BlockWeights<T>& blk : stage.blocks) {
        t = block_forward(t, blk, lka_cfg);
    }
    return batch_norm_infer(t, stage.norm, eps);
}

namespace {

template <typename T>
ForwardResult<T> forward_impl(const Tensor<T>& images, const ModelWeights<T>& m) {
    ForwardResult<T> result;
    Tensor<T> t = images;
    for (std::size_t i = 0; i < 4; ++i) {
        const StageConfig& cfg = m.variant.stages[i];
        t = stage_forward(t, m.stages[i], cfg, block_lka_config(m.variant, cfg.channels));
        result.stage_features[i] = t;
    }
    t = batch_norm_infer(t, m.head_norm, static_cast<T>(kBnEps));
    Tensor<T> pooled = global_avg_pool(t);
    result.logits = linear(pooled, m.head_weight, m.head_bias);
    return result;
}

template <typename T>
void check_model_input(const Tensor<T>& images) {
    if (images.rank() != 4 || images.channels() != 3) {
        throw ShapeError("model input must be (N, 3, H, W), got " +
                         shape_to_string(images.shape()));
    }
}

}  // namespace

template <typename T>
ForwardResult<T> model_forward(const Tensor<T>& images, const ModelWeights<T>& m) {
    check_model_input(images);
    if (images.height() % 32 != 0 || images.width() % 32 != 0) {
        throw GeometryError("model_forward input extents must be divisible by 32, got " +
                            std::to_string(images.height()) + "x" +
                            std::to_string(images.width()));
    }
    return forward_impl(images, m);
}

template <typename T>
Tensor<T> model_logits(const Tensor<T>& images, const ModelWeights<T>& m) {
    check_model_input(images);
    return forward_impl(images, m).logits;
}

// --- tape-backed model -------------------------------------------------------

namespace {

struct ConvIds {
    Tape::Id weight = 0;
    std::optional<Tape::Id> bias;
};
struct NormIds {
    Tape::Id gamma = 0;
    Tape::Id beta = 0;
    TensorD mean;
    TensorD var;
};
struct LkaIds {
    ConvIds dw, dwd, pw;
};
struct BlockIds {
    NormIds norm1;
    ConvIds pw_in;
    LkaIds lka;
    ConvIds pw_out;
    Tape::Id ls1 = 0;
    NormIds norm2;
    ConvIds ffn_pw1, ffn_dw, ffn_pw2;
    Tape::Id ls2 = 0;
};
struct StageIds {
    ConvIds downsample;
    NormIds ds_norm;
    std::vector<BlockIds> blocks;
    NormIds norm;
};

// Leafs parameters onto the tape and records (name, id) pairs in traversal
// order, mirroring model_tensor_refs.
struct LeafRecorder {
    Tape& tape;
    std::vector<std::pair<std::string, Tape::Id>>& params;

    Tape::Id param(const std::string& name, const TensorD& t) {
        const Tape::Id id = tape.leaf(t);
        params.emplace_back(name, id);
        return id;
    }
    ConvIds conv(const std::string& name, const ConvWeights<double>& w) {
        ConvIds ids;
        ids.weight = param(name + ".weight", w.weight);
        if (w.bias) ids.bias = param(name + ".bias", *w.bias);
        return ids;
    }
    NormIds norm(const std::string& name, const NormVectors<double>& p) {
        NormIds ids;
        ids.gamma = param(name + ".gamma", p.gamma);
        ids.beta = param(name + ".beta", p.beta);
        ids.mean = p.mean;
        ids.var = p.var;
        return ids;
    }
};

BlockIds leaf_block(LeafRecorder& rec, const std::string& prefix,
                    const BlockWeights<double>& blk) {
    BlockIds bid;
    bid.norm1 = rec.norm(prefix + ".norm1", blk.norm1);
    bid.pw_in = rec.conv(prefix + ".attn.pw_in", blk.pw_in);
    bid.lka.dw = rec.conv(prefix + ".attn.lka.dw", blk.lka.dw);
    bid.lka.dwd = rec.conv(prefix + ".attn.lka.dwd", blk.lka.dwd);
    bid.lka.pw = rec.conv(prefix + ".attn.lka.pw", blk.lka.pw);
    bid.pw_out = rec.conv(prefix + ".attn.pw_out", blk.pw_out);
    bid.ls1 = rec.param(prefix + ".layerscale1", blk.layerscale1);
    bid.norm2 = rec.norm(prefix + ".norm2", blk.norm2);
    bid.ffn_pw1 = rec.conv(prefix + ".ffn.pw1", blk.ffn_pw1);
    bid.ffn_dw = rec.conv(prefix + ".ffn.dw", blk.ffn_dw);
    bid.ffn_pw2 = rec.conv(prefix + ".ffn.pw2", blk.ffn_pw2);
    bid.ls2 = rec.param(prefix + ".layerscale2", blk.layerscale2);
    return bid;
}

Tape::Id graph_bn(Tape& tape, Tape::Id x, const NormIds& p) {
    return tape.batch_norm(x, p.gamma, p.beta, p.mean, p.var, kBnEps);
}

Tape::Id graph_conv(Tape& tape, Tape::Id x, const ConvIds& w, const ConvSpec& spec) {
    return tape.conv(x, w.weight, w.bias, spec);
}

Tape::Id graph_block(Tape& tape, Tape::Id x, const BlockIds& blk, const LkaConfig& lka_cfg) {
    const std::size_t c = lka_cfg.channels;

    Tape::Id t = graph_bn(tape, x, blk.norm1);
    t = graph_conv(tape, t, blk.pw_in, pointwise_spec(c, c));
    t = tape.gelu_op(t);
    // LKA: attention chain gated onto its own input.
    Tape::Id a = graph_conv(tape, t, blk.lka.dw, lka_cfg.dw_spec());
    a = graph_conv(tape, a, blk.lka.dwd, lka_cfg.dwd_spec());
    a = graph_conv(tape, a, blk.lka.pw, lka_cfg.pw_spec());
    t = tape.mul(a, t);
    t = graph_conv(tape, t, blk.pw_out, pointwise_spec(c, c));
    Tape::Id out = tape.add(x, tape.scale_by_channel(tape.add(t, x), blk.ls1));

    const std::size_t hidden = tape.value(blk.ffn_pw1.weight).extent(0);
    t = graph_bn(tape, out, blk.norm2);
    t = graph_conv(tape, t, blk.ffn_pw1, pointwise_spec(c, hidden));
    t = graph_conv(tape, t, blk.ffn_dw, ffn_dw_spec(hidden));
    t = tape.gelu_op(t);
    t = graph_conv(tape, t, blk.ffn_pw2, pointwise_spec(hidden, c));
    return tape.add(out, tape.scale_by_channel(tape.add(t, out), blk.ls2));
}

}  // namespace

struct ModelTape::Impl {
    VanVariant variant;
    Tape tape;
    std::array<StageIds, 4> stages;
    NormIds head_norm;
    Tape::Id head_w = 0;
    Tape::Id head_b = 0;
    Tape::Id input = 0;
    std::vector<std::pair<std::string, Tape::Id>> params;
};

ModelTape::ModelTape(const ModelWeights<double>& m) : impl_(std::make_unique<Impl>()) {
    impl_->variant = m.variant;
    LeafRecorder rec{impl_->tape, impl_->params};
    for (std::size_t i = 0; i < 4; ++i) {
        const StageWeights<double>& s = m.stages[i];
        const std::string stage = "stage" + std::to_string(i + 1);
        StageIds& sid = impl_->stages[i];
        sid.downsample = rec.conv(stage + ".downsample", s.downsample);
        sid.ds_norm = rec.norm(stage + ".downsample_norm", s.downsample_norm);
        sid.blocks.reserve(s.blocks.size());
        for (std::size_t b = 0; b < s.blocks.size(); ++b) {
            sid.blocks.push_back(
                leaf_block(rec, stage + ".block" + std::to_string(b), s.blocks[b]));
        }
        sid.norm = rec.norm(stage + ".norm", s.norm);
    }
    impl_->head_norm = rec.norm("head.norm", m.head_norm);
    impl_->head_w = rec.param("head.linear.weight", m.head_weight);
    impl_->head_b = rec.param("head.linear.bias", m.head_bias);
}

ModelTape::~ModelTape() = default;
ModelTape::ModelTape(ModelTape&&) noexcept = default;
ModelTape& ModelTape::operator=(ModelTape&&) noexcept = default;

Tape& ModelTape::tape() { return impl_->tape; }

const std::vector<std::pair<std::string, Tape::Id>>& ModelTape::parameters() const {
    return impl_->params;
}

Tape::Id ModelTape::input_id() const { return impl_->input; }

Tape::Id ModelTape::forward(const TensorD& images) {
    check_model_input(images);
    Tape& tape = impl_->tape;
    Tape::Id t = tape.leaf(images);
    impl_->input = t;
    std::size_t prev_c = 3;
    for (std::size_t i = 0; i < 4; ++i) {
        const StageConfig& cfg = impl_->variant.stages[i];
        const StageIds& sid = impl_->stages[i];
        t = graph_conv(tape, t, sid.downsample, downsample_spec(prev_c, cfg));
        t = graph_bn(tape, t, sid.ds_norm);
        const LkaConfig lka_cfg = block_lka_config(impl_->variant, cfg.channels);
        for (const BlockIds& blk : sid.blocks) {
            t = graph_block(tape, t, blk, lka_cfg);
        }
        t = graph_bn(tape, t, sid.norm);
        prev_c = cfg.channels;
    }
    t = graph_bn(tape, t, impl_->head_norm);
    t = tape.global_pool(t);
    return tape.linear_op(t, impl_->head_w, impl_->head_b);
}

Tape::Id ModelTape::loss(const TensorD& images, const std::vector<std::size_t>& labels) {
    return impl_->tape.cross_entropy(forward(images), labels);
}

BlockTapeRecord tape_single_block(Tape& tape, const BlockWeights<double>& blk,
                                  const LkaConfig& lka_cfg, const TensorD& x) {
    BlockTapeRecord rec_out;
    LeafRecorder rec{tape, rec_out.params};
    const BlockIds ids = leaf_block(rec, "block", blk);
    rec_out.input = tape.leaf(x);
    rec_out.output = graph_block(tape, rec_out.input, ids, lka_cfg);
    return rec_out;
}

double train_micro_step(ModelWeights<double>& model, const TensorD& images,
                        const std::vector<std::size_t>& labels, double lr) {
    if (lr < 0.0) throw ParamError("learning rate must be >= 0");
    ModelTape mt(model);
    const Tape::Id loss_id = mt.loss(images, labels);
    const double loss = mt.tape().value(loss_id)[0];
    const std::vector<TensorD> grads = mt.tape().backward(loss_id);

    auto refs = model_tensor_refs(model);
    std::size_t p = 0;
    for (auto& ref : refs) {
        if (!ref.is_parameter) continue;
        const auto& [name, id] = mt.parameters()[p++];
        if (name != ref.name) {
            throw ConfigError("tape/weight traversal mismatch at " + name + " vs " + ref.name);
        }
        const TensorD& g = grads[id];
        if (g.empty()) continue;  // parameter unused by the loss
        TensorD& w = *ref.tensor;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    }
    return loss;
}

#define VAN_INSTANTIATE_MODEL(T)                                                                 \
    template std::vector<NamedTensorRef<T>> model_tensor_refs<T>(ModelWeights<T>&);              \
    template std::int64_t parameter_element_count<T>(const ModelWeights<T>&);                    \
    template ModelWeights<T> build_van<T>(const VanVariant&, std::uint64_t);                     \
    template Tensor<T> block_forward<T>(const Tensor<T>&, const BlockWeights<T>&,                \
                                        const LkaConfig&);                                       \
    template Tensor<T> stage_forward<T>(const Tensor<T>&, const StageWeights<T>&,                \
                                        const StageConfig&, const LkaConfig&);                   \
    template ForwardResult<T> model_forward<T>(const Tensor<T>&, const ModelWeights<T>&);        \
    template Tensor<T> model_logits<T>(const Tensor<T>&, const ModelWeights<T>&);

VAN_INSTANTIATE_MODEL(float)
VAN_INSTANTIATE_MODEL(double)

#undef VAN_INSTANTIATE_MODEL

}  // namespace van

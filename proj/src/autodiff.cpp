#include "van/autodiff.hpp"

#include <utility>

namespace van {

Tape::Id Tape::push(TensorD value, std::vector<Id> parents, BackFn back) {
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(back)});
    return nodes_.size() - 1;
}

Tape::Id Tape::leaf(TensorD value) { return push(std::move(value), {}, {}); }

Tape::Id Tape::conv(Id x, Id weight, std::optional<Id> bias, const ConvSpec& spec) {
    ConvWeights<double> w;
    w.weight = value(weight);
    if (bias) w.bias = value(*bias);
    TensorD out = conv2d(value(x), w, spec);
    std::vector<Id> parents{x, weight};
    if (bias) parents.push_back(*bias);
    return push(std::move(out), std::move(parents),
                [x, weight, bias, spec](const Tape& t, const TensorD& up) {
                    ConvWeights<double> wv;
                    wv.weight = t.value(weight);
                    if (bias) wv.bias = t.value(*bias);
                    ConvGrads<double> g = conv2d_vjp(t.value(x), wv, spec, up);
                    std::vector<TensorD> out_grads{std::move(g.dx), std::move(g.dweight)};
                    if (bias) out_grads.push_back(std::move(*g.dbias));
                    return out_grads;
                });
}

Tape::Id Tape::gelu_op(Id x) {
    TensorD out = gelu(value(x));
    return push(std::move(out), {x}, [x](const Tape& t, const TensorD& up) {
        return std::vector<TensorD>{gelu_vjp(t.value(x), up)};
    });
}

Tape::Id Tape::sigmoid_op(Id x) {
    TensorD out = sigmoid(value(x));
    return push(std::move(out), {x}, [x](const Tape& t, const TensorD& up) {
        return std::vector<TensorD>{sigmoid_vjp(t.value(x), up)};
    });
}

Tape::Id Tape::batch_norm(Id x, Id gamma, Id beta, TensorD mean, TensorD var, double eps) {
    NormVectors<double> p{value(gamma), value(beta), mean, var};
    TensorD out = batch_norm_infer(value(x), p, eps);
    return push(std::move(out), {x, gamma, beta},
                [x, gamma, beta, mean = std::move(mean), var = std::move(var), eps](
                    const Tape& t, const TensorD& up) {
                    NormVectors<double> pv{t.value(gamma), t.value(beta), mean, var};
                    BatchNormGrads<double> g = batch_norm_infer_vjp(t.value(x), pv, eps, up);
                    return std::vector<TensorD>{std::move(g.dx), std::move(g.dgamma),
                                                std::move(g.dbeta)};
                });
}

Tape::Id Tape::mul(Id a, Id b) {
    TensorD out = elementwise_mul(value(a), value(b));
    return push(std::move(out), {a, b}, [a, b](const Tape& t, const TensorD& up) {
        return std::vector<TensorD>{elementwise_mul(up, t.value(b)),
                                    elementwise_mul(up, t.value(a))};
    });
}

Tape::Id Tape::add(Id a, Id b) {
    TensorD out = elementwise_add(value(a), value(b));
    return push(std::move(out), {a, b}, [](const Tape&, const TensorD& up) {
        return std::vector<TensorD>{up, up};
    });
}

Tape::Id Tape::scale_by_channel(Id x, Id lambda) {
    TensorD out = scale_channels(value(x), value(lambda));
    return push(std::move(out), {x, lambda}, [x, lambda](const Tape& t, const TensorD& up) {
        const TensorD& xv = t.value(x);
        const TensorD& lv = t.value(lambda);
        TensorD dx = scale_channels(up, lv);
        TensorD dl = TensorD::zeros(lv.shape());
        const std::size_t spatial = xv.height() * xv.width();
        std::size_t idx = 0;
        for (std::size_t n = 0; n < xv.batch(); ++n) {
            for (std::size_t c = 0; c < xv.channels(); ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < spatial; ++i, ++idx) acc += up[idx] * xv[idx];
                dl[c] += acc;
            }
        }
        return std::vector<TensorD>{std::move(dx), std::move(dl)};
    });
}

Tape::Id Tape::global_pool(Id x) {
    TensorD out = global_avg_pool(value(x));
    return push(std::move(out), {x}, [x](const Tape& t, const TensorD& up) {
        return std::vector<TensorD>{global_avg_pool_vjp(t.value(x), up)};
    });
}

Tape::Id Tape::linear_op(Id x, Id w, Id b) {
    TensorD out = linear(value(x), value(w), value(b));
    return push(std::move(out), {x, w, b}, [x, w, b](const Tape& t, const TensorD& up) {
        LinearGrads<double> g = linear_vjp(t.value(x), t.value(w), t.value(b), up);
        return std::vector<TensorD>{std::move(g.dx), std::move(g.dw), std::move(g.db)};
    });
}

Tape::Id Tape::cross_entropy(Id logits, std::vector<std::size_t> labels) {
    const double loss = softmax_cross_entropy(value(logits), labels);
    TensorD out = TensorD::from_data({1}, {loss});
    return push(std::move(out), {logits},
                [logits, labels = std::move(labels)](const Tape& t, const TensorD& up) {
                    return std::vector<TensorD>{
                        softmax_cross_entropy_vjp(t.value(logits), labels, up[0])};
                });
}

Tape::Id Tape::weighted_sum(Id x, TensorD weights) {
    const TensorD& xv = value(x);
    if (!xv.same_shape(weights)) {
        throw ShapeError("weighted_sum weights shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
    return push(TensorD::from_data({1}, {acc}), {x},
                [weights = std::move(weights)](const Tape&, const TensorD& up) {
                    TensorD dx = weights;
                    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= up[0];
                    return std::vector<TensorD>{std::move(dx)};
                });
}

std::vector<TensorD> Tape::backward(Id root) const {
    if (root >= nodes_.size()) throw ParamError("backward root id out of range");
    if (nodes_[root].value.size() != 1) {
        throw ShapeError("backward root must be a scalar node");
    }
    std::vector<TensorD> grads(nodes_.size());
    grads[root] = TensorD::filled({1}, 1.0);
    for (std::size_t idx = root + 1; idx-- > 0;) {
        const Node& node = nodes_[idx];
        if (grads[idx].empty() || !node.back) continue;
        std::vector<TensorD> parent_grads = node.back(*this, grads[idx]);
        for (std::size_t p = 0; p < node.parents.size(); ++p) {
            const Id pid = node.parents[p];
            if (grads[pid].empty()) {
                grads[pid] = std::move(parent_grads[p]);
            } else {
                grads[pid] = elementwise_add(grads[pid], parent_grads[p]);
            }
        }
    }
    return grads;
}

}  // namespace van

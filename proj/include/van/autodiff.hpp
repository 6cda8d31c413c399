#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "van/nn_ops.hpp"
#include "van/tensor.hpp"

namespace van {

// Minimal reverse-mode tape over 64-bit tensors. Every recorded operation
// delegates its backward rule to the hand-written vjp of the matching op,
// so tape gradients inherit the correctness of the per-op vjps. Used for
// the training demo and whole-model gradient checks; inference paths call
// the ops directly and never touch a tape.
class Tape {
public:
    using Id = std::size_t;

    Id leaf(TensorD value);
    const TensorD& value(Id id) const { return nodes_[id].value; }
    std::size_t size() const { return nodes_.size(); }

    Id conv(Id x, Id weight, std::optional<Id> bias, const ConvSpec& spec);
    Id gelu_op(Id x);
    Id sigmoid_op(Id x);
    Id batch_norm(Id x, Id gamma, Id beta, TensorD mean, TensorD var, double eps);
    Id mul(Id a, Id b);
    Id add(Id a, Id b);
    Id scale_by_channel(Id x, Id lambda);
    Id global_pool(Id x);
    Id linear_op(Id x, Id w, Id b);
    // Scalar loss, stored as a rank-1 tensor of size 1.
    Id cross_entropy(Id logits, std::vector<std::size_t> labels);
    // sum(weights (x) x) as a scalar node; weights are constants.
    Id weighted_sum(Id x, TensorD weights);

    // Reverse sweep from a scalar root. Returns one gradient per node id;
    // nodes the root does not depend on get empty tensors.
    std::vector<TensorD> backward(Id root) const;

private:
    // Maps the upstream gradient of a node to gradients of its parents,
    // in parent order.
    using BackFn =
        std::function<std::vector<TensorD>(const Tape&, const TensorD& upstream)>;

    struct Node {
        TensorD value;
        std::vector<Id> parents;
        BackFn back;  // empty for leaves
    };

    Id push(TensorD value, std::vector<Id> parents, BackFn back);

    std::vector<Node> nodes_;
};

}  // namespace van

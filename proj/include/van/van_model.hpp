#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "van/autodiff.hpp"
#include "van/lka.hpp"
#include "van/nn_ops.hpp"
#include "van/tensor.hpp"
#include "van/variant.hpp"

namespace van {

// Batch-norm epsilon used everywhere in the model.
inline constexpr double kBnEps = 1e-5;

template <typename T>
struct BlockWeights {
    NormVectors<T> norm1;
    ConvWeights<T> pw_in;
    LkaWeights<T> lka;
    ConvWeights<T> pw_out;
    Tensor<T> layerscale1;  // (C)
    NormVectors<T> norm2;
    ConvWeights<T> ffn_pw1;
    ConvWeights<T> ffn_dw;
    ConvWeights<T> ffn_pw2;
    Tensor<T> layerscale2;  // (C)
};

template <typename T>
struct StageWeights {
    ConvWeights<T> downsample;
    NormVectors<T> downsample_norm;
    std::vector<BlockWeights<T>> blocks;
    NormVectors<T> norm;  // applied after the stage's last block
};

template <typename T>
struct ModelWeights {
    VanVariant variant;
    std::array<StageWeights<T>, 4> stages;
    NormVectors<T> head_norm;
    Tensor<T> head_weight;  // (num_classes, C4)
    Tensor<T> head_bias;    // (num_classes)
};

using ModelWeightsF = ModelWeights<float>;
using ModelWeightsD = ModelWeights<double>;

// The attention geometry every block of the variant uses (biases on, since
// the model builder carries biases everywhere).
LkaConfig block_lka_config(const VanVariant& variant, std::size_t channels);

// --- tensor traversal ------------------------------------------------------
// Single source of truth for tensor naming and ordering. Checkpoints, the
// SGD update and the parameter count all walk this list.

template <typename T>
struct NamedTensorRef {
    std::string name;
    Tensor<T>* tensor;
    bool is_parameter;  // false for batch-norm running statistics
};

template <typename T>
std::vector<NamedTensorRef<T>> model_tensor_refs(ModelWeights<T>& m);

// Shape-only plan of the same traversal, computable without allocating any
// weights (B5/B6 bookkeeping stays cheap).
struct TensorSpecEntry {
    std::string name;
    Shape shape;
    bool is_parameter;
};

std::vector<TensorSpecEntry> enumerate_model_tensors(const VanVariant& variant);

// Sum of parameter-tensor element counts (running statistics excluded).
template <typename T>
std::int64_t parameter_element_count(const ModelWeights<T>& m);
std::int64_t parameter_element_count(const VanVariant& variant);

// --- construction ----------------------------------------------------------

// Deterministic initialization: conv/linear weights are N(0, sqrt(2/fan_in))
// from one seeded stream in traversal order, biases zero, norms identity
// (gamma 1, beta 0, mean 0, var 1), LayerScale vectors at layerscale_init,
// and the classifier weight N(0, 0.01) so initial logits sit near zero.
template <typename T>
ModelWeights<T> build_van(const VanVariant& variant, std::uint64_t seed);

// --- forward ---------------------------------------------------------------

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockWeights<T>& blk, const LkaConfig& lka_cfg);

template <typename T>
Tensor<T> stage_forward(const Tensor<T>& x, const StageWeights<T>& stage, const StageConfig& cfg,
                        const LkaConfig& lka_cfg);

template <typename T>
struct ForwardResult {
    Tensor<T> logits;                         // (N, num_classes)
    std::array<Tensor<T>, 4> stage_features;  // outputs of the four stages
};

// Input (N, 3, H, W) with H and W divisible by 32.
template <typename T>
ForwardResult<T> model_forward(const Tensor<T>& images, const ModelWeights<T>& m);

// Logits only, without the divisible-by-32 contract: accepts any input the
// downsample chain maps to nonempty feature maps. Training and gradient
// checks go through here.
template <typename T>
Tensor<T> model_logits(const Tensor<T>& images, const ModelWeights<T>& m);

// --- tape-backed training and gradient checks ------------------------------

// Records one forward pass of the model on a tape so gradients for every
// parameter are available. Running statistics enter as constants.
class ModelTape {
public:
    explicit ModelTape(const ModelWeights<double>& m);
    ~ModelTape();
    ModelTape(ModelTape&&) noexcept;
    ModelTape& operator=(ModelTape&&) noexcept;

    Tape::Id forward(const TensorD& images);  // logits node
    Tape::Id loss(const TensorD& images, const std::vector<std::size_t>& labels);

    Tape& tape();
    // Parameter nodes in model_tensor_refs order (parameters only).
    const std::vector<std::pair<std::string, Tape::Id>>& parameters() const;
    // Leaf node of the most recent forward's input images.
    Tape::Id input_id() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Records a single block on `tape`.
struct BlockTapeRecord {
    Tape::Id output = 0;
    Tape::Id input = 0;
    std::vector<std::pair<std::string, Tape::Id>> params;  // traversal order
};

BlockTapeRecord tape_single_block(Tape& tape, const BlockWeights<double>& blk,
                                  const LkaConfig& lka_cfg, const TensorD& x);

// One full-batch gradient-descent step over every trainable tensor
// (running statistics excluded). Returns the pre-update loss.
double train_micro_step(ModelWeights<double>& model, const TensorD& images,
                        const std::vector<std::size_t>& labels, double lr);

}  // namespace van

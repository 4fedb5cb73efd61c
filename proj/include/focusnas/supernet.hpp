#pragma once

#include <cstdint>
#include <vector>

#include "focusnas/checkpoint.hpp"
#include "focusnas/optimizer.hpp"
#include "focusnas/rng.hpp"
#include "focusnas/search_space.hpp"
#include "focusnas/tape.hpp"

namespace focusnas {

enum class StoragePrecision { f32, f64 };

struct BlockParams {
    Parameter ln1_g, ln1_b;
    Parameter qkv_w, qkv_b;  // qkv columns grouped by head: [q|k|v] per head
    Parameter proj_w, proj_b;
    Parameter ln2_g, ln2_b;
    Parameter fc1_w, fc1_b;
    Parameter fc2_w, fc2_b;
    Parameter cpe_k, cpe_b;  // only populated when the space uses per-block CPE
};

/// The entangled weight superset W. Every tensor is shaped by the space
/// maxima, and a sub-network reads leading slices of each.
struct SupernetParams {
    SearchSpaceSpec space;
    StoragePrecision precision = StoragePrecision::f32;
    Parameter patch_w, patch_b;
    Parameter cpe_k, cpe_b;  // empty when the space uses per-block CPE
    std::vector<BlockParams> blocks;
    Parameter norm_g, norm_b;
    Parameter head_w, head_b;

    static SupernetParams init(const SearchSpaceSpec& space, Rng& rng,
                               StoragePrecision precision = StoragePrecision::f32);

    /// Every populated parameter, in a fixed order.
    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
    [[nodiscard]] std::size_t parameter_count() const;
    void zero_grad();
};

/// A sub-network realized over W: the config plus the slice rule. Holds no
/// weights of its own.
class SubnetView {
public:
    struct Slice {
        Parameter* param;
        Shape extent;
    };

    SubnetView(SupernetParams& params, ArchConfig cfg);

    [[nodiscard]] const ArchConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] SupernetParams& params() const noexcept { return *params_; }
    /// Every tensor the sub-network reads and the leading extent it reads.
    [[nodiscard]] std::vector<Slice> slices() const;

private:
    SupernetParams* params_;
    ArchConfig cfg_;
};

SubnetView select_subnet(SupernetParams& params, const ArchConfig& cfg);

struct Batch {
    Tensor images;  // [b x S x S x 3]
    std::vector<int> labels;
};

/// [b x S x S x 3] -> [b*(S/p)^2 x p*p*3], tokens in raster order.
Tensor patchify(const Tensor& images, int patch_size);

/// Differentiable forward pass on `tape`; returns logits [b x num_classes].
Var forward(const SubnetView& view, const Tensor& images, Tape& tape);
/// Inference-only convenience.
Tensor forward(const SubnetView& view, const Tensor& images);

/// One optimizer step on the sliced region of W. Returns the batch loss;
/// `correct`, when given, receives the pre-update argmax hit count.
double train_step(const SubnetView& view, const Batch& batch, AdamW& optimizer, double lr,
                  std::size_t* correct = nullptr);

/// Fraction of argmax-correct predictions; evaluated in chunks without a tape.
double minibatch_accuracy(const SubnetView& view, const Batch& batch);
/// Process-wide count of minibatch_accuracy calls, for evaluation audits.
std::uint64_t accuracy_evaluations() noexcept;
/// Correct-prediction count, for callers that aggregate several batches.
std::size_t correct_count(const SubnetView& view, const Batch& batch);

/// Checkpoint meta carries the space so a loader can rebuild the shapes.
Checkpoint to_checkpoint(const SupernetParams& w);
SupernetParams supernet_from_checkpoint(const Checkpoint& ckpt);

}  // namespace focusnas

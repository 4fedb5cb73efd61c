#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "focusnas/checkpoint.hpp"
#include "focusnas/cost_model.hpp"
#include "focusnas/search_space.hpp"
#include "focusnas/supernet.hpp"
#include "focusnas/tape.hpp"

namespace focusnas {

/// Constraint-conditioned recurrent controller. The LSTM is unrolled over the
/// ArchSequence positions; step 0 reads the (interpolated) constraint
/// embedding and every later step reads the embedding of the previous
/// choice. Heads are shared per dimension kind.
struct SamplerModel {
    SearchSpaceSpec space;
    ConstraintSpec constraint;
    std::vector<double> grid;  // quantized constraint values, ascending
    int hidden = 64;
    StoragePrecision precision = StoragePrecision::f32;

    Parameter table;    // [grid x hidden]
    Parameter lstm_wx;  // [hidden x 4*hidden], gates i|f|g|o
    Parameter lstm_wh;  // [hidden x 4*hidden]
    Parameter lstm_b;   // [4*hidden]
    std::array<Parameter, kDimKinds> choice_embed;  // [choices x hidden]
    std::array<Parameter, kDimKinds> head_w;        // [hidden x choices]
    std::array<Parameter, kDimKinds> head_b;        // [choices]

    double baseline = 0.0;
    /// Bumped by every parameter update; traces remember the version they
    /// were drawn under.
    std::uint64_t version = 0;

    /// Heads start at zero, so the initial policy is exactly uniform; every
    /// other tensor is drawn from U(-init_range, init_range).
    static SamplerModel init(const SearchSpaceSpec& space, const ConstraintSpec& constraint, Rng& rng, int hidden = 64,
                             double init_range = 0.5, StoragePrecision precision = StoragePrecision::f32);

    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
    void zero_grad();
};

/// Table row for grid points, linear interpolation between the two
/// neighbouring rows otherwise.
Var embed_constraint(SamplerModel& model, double budget, Tape& tape);
Tensor embed_constraint(const SamplerModel& model, double budget);

struct SampleTrace {
    ArchSequence sequence;
    std::vector<double> step_log_probs;  // zero at inactive steps
    std::vector<bool> active;
    double budget = 0.0;
    double log_prob = 0.0;
    std::uint64_t version = 0;
};

SampleTrace sample_architecture(const SamplerModel& model, double budget, Rng& rng);

/// Sum of active-step log-probabilities of `seq` under the model, recorded on
/// `tape` so it can be differentiated.
Var log_prob(SamplerModel& model, const ArchSequence& seq, double budget, Tape& tape);
/// Per-step log-probabilities without recording.
std::vector<double> step_log_probs(const SamplerModel& model, const ArchSequence& seq, double budget);

/// acc - beta * |budget / cost - 1|.
double compute_reward(double acc, double budget, double cost, double beta);

struct PolicyGradientOptions {
    bool use_baseline = true;
    double baseline_decay = 0.9;

    friend bool operator==(const PolicyGradientOptions&, const PolicyGradientOptions&) = default;
};

/// theta += lr * (reward - baseline) * grad log pi(trace), then the baseline
/// moves toward `reward`. Returns the advantage used.
double policy_gradient_step(SamplerModel& model, const SampleTrace& trace, double reward, double lr,
                            const PolicyGradientOptions& opts = {});

struct SamplerTrainConfig {
    int iterations = 100;
    double lr = 0.05;
    double beta = 0.07;
    PolicyGradientOptions pg;
    /// Drop the accuracy term from the reward (constraint-only training).
    bool accuracy_term = true;
    /// Train against one budget instead of draws from the prior.
    std::optional<double> fixed_budget;

    void validate() const;

    friend bool operator==(const SamplerTrainConfig&, const SamplerTrainConfig&) = default;
};

struct SamplerIteration {
    int iteration = 0;
    double budget = 0.0;
    double cost = 0.0;
    double acc = 0.0;
    double reward = 0.0;
    double advantage = 0.0;
    ArchConfig arch;
};

/// Source of the reward minibatch for iteration `i`.
using BatchSource = std::function<const Batch&(int iteration)>;

struct SamplerRngs {
    Rng& constraints;
    Rng& archs;
};

/// K rounds of: draw B, draw a trace, score the decoded architecture on a
/// minibatch with W frozen, update the policy. `on_iteration` sees every round.
std::vector<SamplerIteration> train_sampler(SamplerModel& model, SupernetParams& w, const SamplerTrainConfig& cfg,
                                            const BatchSource& batches, SamplerRngs rngs,
                                            const std::function<void(const SamplerIteration&)>& on_iteration = {});

Checkpoint to_checkpoint(const SamplerModel& model);
SamplerModel sampler_from_checkpoint(const Checkpoint& ckpt);

}  // namespace focusnas

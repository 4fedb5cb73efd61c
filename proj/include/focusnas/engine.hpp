#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "focusnas/cost_model.hpp"
#include "focusnas/dataset.hpp"
#include "focusnas/optimizer.hpp"
#include "focusnas/sampler.hpp"
#include "focusnas/supernet.hpp"
#include "json.hpp"

namespace focusnas {

/// Step schedule of training resolutions; epochs are 1-based.
struct ProgressiveSchedule {
    struct Stage {
        int epoch_start = 1;
        int image_size = 0;

        friend bool operator==(const Stage&, const Stage&) = default;
    };
    std::vector<Stage> stages;

    /// First `fraction` of the epochs at the smallest size, the rest at the largest.
    static ProgressiveSchedule two_stage(const SearchSpaceSpec& space, int epochs, double fraction = 0.6);

    [[nodiscard]] int size_at(int epoch) const;
    void validate(const SearchSpaceSpec& space) const;

    friend bool operator==(const ProgressiveSchedule&, const ProgressiveSchedule&) = default;
};

struct TrainSchedule {
    int epochs = 40;
    /// Sampler update interval: the sampler trains at the start of epochs tau, 2*tau, ...
    int interval = 8;
    int batch_size = 32;
    /// Peak supernet learning rate; linear warmup, then cosine decay to min_lr.
    double lr = 2e-3;
    double min_lr = 1e-5;
    int warmup_epochs = 2;
    AdamWConfig adamw;
    /// Size of the minibatch that scores each sampler draw.
    int reward_batch_size = 64;
    /// Empty means the default two-stage schedule for `epochs`.
    std::optional<ProgressiveSchedule> progressive;
    std::uint64_t seed = 0;

    void validate(const SearchSpaceSpec& space) const;
    [[nodiscard]] ProgressiveSchedule resolved_progressive(const SearchSpaceSpec& space) const;
    /// Learning rate for 0-based global step `step` of `total`.
    [[nodiscard]] double lr_at(std::int64_t step, std::int64_t total, std::int64_t steps_per_epoch) const;

    friend bool operator==(const TrainSchedule&, const TrainSchedule&) = default;
};

/// Independent random streams derived from one run seed, so ablations can vary
/// one source of randomness at a time.
struct RunStreams {
    explicit RunStreams(std::uint64_t seed);

    Rng supernet_init;
    Rng sampler_init;
    Rng batch_order;
    Rng constraint_draws;
    Rng arch_draws;
    Rng sampler_data;
};

enum class Phase { supernet, sampler, search };
std::string_view to_string(Phase phase) noexcept;

struct MetricsEvent {
    Phase phase = Phase::supernet;
    int epoch = 0;
    int iteration = 0;
    nlohmann::json values = nlohmann::json::object();
};

struct TrainHooks {
    std::function<void(const MetricsEvent&)> on_event;
    /// Called after every epoch with the current state (sampler is null for
    /// uniform training).
    std::function<void(int epoch, const SupernetParams&, const SamplerModel*)> on_epoch_end;
    /// Called once with the state at the moment training failed, before the
    /// error propagates.
    std::function<void(int epoch, const SupernetParams&, const SamplerModel*)> on_abort;
};

struct DataSplits {
    const Dataset& train;
    const Dataset& val;
};

struct FocusFormerRun {
    SupernetParams supernet;
    SamplerModel sampler;
};

/// Interleaved training: at epochs n*tau the sampler is trained against the
/// frozen supernet, then every batch draws a budget from the prior and an
/// architecture from the sampler and takes one supernet step on it.
FocusFormerRun train_focusformer(const SearchSpaceSpec& space, const ConstraintSpec& constraint,
                                 const TrainSchedule& schedule, const SamplerTrainConfig& sampler_cfg,
                                 DataSplits data, const TrainHooks& hooks = {}, double sampler_init_range = 0.5);

/// Same loop with architectures drawn uniformly among those meeting the budget.
SupernetParams train_uniform(const SearchSpaceSpec& space, const ConstraintSpec& constraint,
                             const TrainSchedule& schedule, DataSplits data, const TrainHooks& hooks = {});

/// Number of metrics events a training run emits.
std::int64_t expected_event_count(const TrainSchedule& schedule, const SamplerTrainConfig& sampler_cfg, bool focusformer);

enum class SearchMethod { sampler, evolution, random };
std::string_view to_string(SearchMethod method) noexcept;
SearchMethod search_method_from_string(std::string_view name);

struct EvolutionConfig {
    int population = 50;
    int generations = 20;
    int parents = 10;
    double mutation_rate = 0.1;
    int mutation_count = 25;
    int crossover_count = 25;
    /// Attempts allowed per requested candidate before giving up.
    int tries_per_candidate = 50;

    void validate() const;

    friend bool operator==(const EvolutionConfig&, const EvolutionConfig&) = default;
};

struct SearchRequest {
    double budget = 0.0;
    int candidates = 30;
    SearchMethod method = SearchMethod::sampler;
    /// Draw attempts allowed per requested feasible candidate.
    int attempts_per_candidate = 50;
    EvolutionConfig evolution;
};

struct Candidate {
    ArchConfig arch;
    CostReport cost;
    double accuracy = 0.0;
};

struct SearchResult {
    SearchMethod method = SearchMethod::sampler;
    double budget = 0.0;
    ArchConfig best;
    CostReport cost;
    double accuracy = 0.0;
    /// minibatch_accuracy calls made by this search.
    std::int64_t evaluated = 0;
    std::int64_t draws = 0;
    double wall_seconds = 0.0;
    /// Every evaluated architecture in evaluation order.
    std::vector<Candidate> history;
};

nlohmann::json to_json(const SearchResult& result, bool with_history = false);

/// Fixed validation batch at the final resolution, shared by every candidate
/// so accuracy comparisons are paired.
Batch validation_subset(const Dataset& val, const SearchSpaceSpec& space, std::size_t count, std::uint64_t seed);

/// Scores architectures on a fixed batch, fanning out over `threads` workers.
/// Results are reduced by candidate index, so the thread count never changes
/// them.
class Evaluator {
public:
    Evaluator(SupernetParams& w, const Batch& val, int threads = 1);

    std::vector<double> evaluate(const std::vector<ArchConfig>& archs);
    [[nodiscard]] std::int64_t evaluated() const noexcept { return evaluated_; }

private:
    SupernetParams* w_;
    const Batch* val_;
    int threads_;
    std::int64_t evaluated_ = 0;
};

/// FOCUSNAS_THREADS, defaulting to 1.
int evaluation_threads();

SearchResult search_sampler(SupernetParams& w, const SamplerModel& model, const SearchRequest& req, const Batch& val,
                            Rng& rng, int threads = 1);
SearchResult search_evolution(SupernetParams& w, const ConstraintSpec& constraint, const SearchRequest& req,
                              const Batch& val, Rng& rng, int threads = 1);
SearchResult search_random(SupernetParams& w, const ConstraintSpec& constraint, const SearchRequest& req,
                           const Batch& val, Rng& rng, int threads = 1);

/// Dispatches on req.method; `model` is required for the sampler method.
SearchResult run_search(SupernetParams& w, const SamplerModel* model, const ConstraintSpec& constraint,
                        const SearchRequest& req, const Batch& val, Rng& rng, int threads = 1);

struct SweepEntry {
    double budget = 0.0;
    std::optional<SearchResult> result;
    std::string error;
};

struct ParetoSweep {
    std::vector<SweepEntry> entries;
    /// (flops, accuracy) of the successful searches, ordered by flops.
    std::vector<std::pair<std::int64_t, double>> frontier;
};

/// One search per budget; a failing budget is recorded and the sweep goes on.
ParetoSweep pareto_sweep(SupernetParams& w, const SamplerModel* model, const ConstraintSpec& constraint,
                         const std::vector<double>& budgets, const SearchRequest& base, const Batch& val, Rng& rng,
                         int threads = 1);

/// `count` uniformly drawn sub-networks, each evaluated once.
std::vector<Candidate> random_subnet_dump(SupernetParams& w, std::size_t count, const Batch& val, Rng& rng,
                                          int threads = 1);

}  // namespace focusnas

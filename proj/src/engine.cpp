#include "focusnas/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <thread>

#include "focusnas/error.hpp"

namespace focusnas {

namespace {

using Sz = std::size_t;

double cost_of(const ArchConfig& cfg, const SearchSpaceSpec& space, ConstraintMode mode) {
    return constrained_cost(compute_cost(cfg, space, space.max_image_size), mode);
}

void check_data(const SearchSpaceSpec& space, const TrainSchedule& schedule, DataSplits data) {
    data.train.validate();
    data.val.validate();
    require(data.train.num_classes == space.num_classes, Errc::invalid_argument,
            "training set has " + std::to_string(data.train.num_classes) + " classes, the space expects " +
                std::to_string(space.num_classes));
    require(data.train.size() >= static_cast<Sz>(schedule.batch_size), Errc::invalid_argument,
            "training set is smaller than one batch");
}

/// The loop shared by both training methods; `sampler` selects FocusFormer.
void run_training(SupernetParams& w, SamplerModel* sampler, const SamplerTrainConfig* sampler_cfg,
                  const ConstraintSpec& constraint, const TrainSchedule& schedule, DataSplits data,
                  const TrainHooks& hooks, RunStreams& rs) {
    const SearchSpaceSpec& space = w.space;
    const ProgressiveSchedule prog = schedule.resolved_progressive(space);
    AdamW optimizer(w.all(), schedule.adamw, w.precision == StoragePrecision::f32);

    const Sz n = data.train.size();
    const Sz bs = static_cast<Sz>(schedule.batch_size);
    const Sz per_epoch = n / bs;
    const auto total = static_cast<std::int64_t>(per_epoch) * schedule.epochs;
    std::vector<Sz> order(n);
    std::iota(order.begin(), order.end(), Sz{0});
    std::int64_t step = 0;

    auto emit = [&](MetricsEvent ev) {
        if (hooks.on_event) hooks.on_event(ev);
    };

    int epoch = 0;
    try {
        for (epoch = 1; epoch <= schedule.epochs; ++epoch) {
            const int size = prog.size_at(epoch);
            if (sampler && epoch % schedule.interval == 0) {
                Batch reward_batch;
                std::vector<Sz> pick(n);
                std::iota(pick.begin(), pick.end(), Sz{0});
                const Sz rb = std::min(n, static_cast<Sz>(schedule.reward_batch_size));
                BatchSource source = [&](int) -> const Batch& {
                    for (Sz i = 0; i < rb; ++i) std::swap(pick[i], pick[i + rs.sampler_data.index(n - i)]);
                    reward_batch = gather_batch(data.train, std::span(pick).first(rb), size);
                    return reward_batch;
                };
                train_sampler(*sampler, w, *sampler_cfg, source, {rs.constraint_draws, rs.arch_draws},
                              [&](const SamplerIteration& it) {
                                  emit({Phase::sampler,
                                        epoch,
                                        it.iteration,
                                        {{"budget", it.budget},
                                         {"cost", it.cost},
                                         {"acc", it.acc},
                                         {"reward", it.reward},
                                         {"advantage", it.advantage},
                                         {"baseline", sampler->baseline},
                                         {"image_size", size},
                                         {"arch", encode(it.arch, space).indices}}});
                              });
            }

            rs.batch_order.shuffle(order.begin(), order.end());
            double loss_sum = 0.0, budget_sum = 0.0;
            std::size_t correct = 0;
            nlohmann::json archs = nlohmann::json::array();
            double lr = 0.0;
            for (Sz b = 0; b < per_epoch; ++b) {
                const double budget =
                    quantize_constraint(sample_constraint(constraint, rs.constraint_draws), constraint);
                const ArchConfig arch =
                    sampler ? decode(sample_architecture(*sampler, budget, rs.arch_draws).sequence, space)
                            : uniform_sample_under_constraint(space, budget, constraint.mode, rs.arch_draws);
                const Batch batch = gather_batch(data.train, std::span(order).subspan(b * bs, bs), size);
                lr = schedule.lr_at(step++, total, static_cast<std::int64_t>(per_epoch));
                std::size_t hits = 0;
                loss_sum += train_step(SubnetView(w, arch), batch, optimizer, lr, &hits);
                correct += hits;
                budget_sum += budget;
                archs.push_back(encode(arch, space).indices);
            }
            const auto batches = static_cast<double>(per_epoch);
            emit({Phase::supernet,
                  epoch,
                  static_cast<int>(per_epoch),
                  {{"loss", loss_sum / batches},
                   {"acc", static_cast<double>(correct) / (batches * static_cast<double>(bs))},
                   {"lr", lr},
                   {"image_size", size},
                   {"mean_budget", budget_sum / batches},
                   {"archs", std::move(archs)}}});
            if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, w, sampler);
        }
    } catch (const Error&) {
        if (hooks.on_abort) hooks.on_abort(epoch, w, sampler);
        throw;
    }
}

struct Better {
    const SearchSpaceSpec* space;
    bool operator()(const Candidate& a, const Candidate& b) const {
        if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
        if (a.cost.flops != b.cost.flops) return a.cost.flops < b.cost.flops;
        return encode(a.arch, *space) < encode(b.arch, *space);
    }
};

/// Memoized scoring by canonical config, so a repeated draw costs no evaluation.
class Scorer {
public:
    Scorer(SupernetParams& w, const Batch& val, int threads) : space_(w.space), eval_(w, val, threads) {}

    /// Scores every not-yet-seen config of `archs` (canonical, feasible).
    void score(const std::vector<ArchConfig>& archs) {
        std::vector<ArchConfig> fresh;
        for (const ArchConfig& a : archs)
            if (seen_.insert(encode(a, space_)).second) fresh.push_back(a);
        const std::vector<double> acc = eval_.evaluate(fresh);
        for (Sz i = 0; i < fresh.size(); ++i)
            history_.push_back({fresh[i], compute_cost(fresh[i], space_, space_.max_image_size), acc[i]});
    }

    [[nodiscard]] bool seen(const ArchConfig& a) const { return seen_.contains(encode(a, space_)); }
    [[nodiscard]] const std::vector<Candidate>& history() const { return history_; }
    [[nodiscard]] std::int64_t evaluated() const { return eval_.evaluated(); }

    /// The best `k` candidates so far, best first.
    [[nodiscard]] std::vector<Candidate> top(Sz k) const {
        std::vector<Candidate> sorted = history_;
        std::stable_sort(sorted.begin(), sorted.end(), Better{&space_});
        sorted.resize(std::min(k, sorted.size()));
        return sorted;
    }

private:
    const SearchSpaceSpec& space_;
    Evaluator eval_;
    std::set<ArchSequence> seen_;
    std::vector<Candidate> history_;
};

SearchResult finish(const Scorer& scorer, SearchMethod method, double budget, std::int64_t draws,
                    std::chrono::steady_clock::time_point start) {
    require(!scorer.history().empty(), Errc::tries_exhausted, "search evaluated no feasible architecture");
    SearchResult r;
    r.method = method;
    r.budget = budget;
    const Candidate best = scorer.top(1).front();
    r.best = best.arch;
    r.cost = best.cost;
    r.accuracy = best.accuracy;
    r.evaluated = scorer.evaluated();
    r.draws = draws;
    r.history = scorer.history();
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

void check_request(const SearchRequest& req, const SearchSpaceSpec& space, ConstraintMode mode) {
    require(req.candidates >= 1, Errc::invalid_argument, "search needs at least one candidate");
    require(req.attempts_per_candidate >= 1, Errc::invalid_argument, "attempts per candidate must be >= 1");
    const double floor_cost = cost_of(min_config(space), space, mode);
    require(req.budget >= floor_cost, Errc::budget_infeasible,
            "budget " + std::to_string(req.budget) + " is below the minimal config cost " + std::to_string(floor_cost));
}

/// Collects `req.candidates` feasible draws from `draw`, capped at
/// attempts_per_candidate draws per candidate, and scores them.
template <class Draw>
SearchResult draw_and_score(SupernetParams& w, ConstraintMode mode, const SearchRequest& req, const Batch& val,
                            int threads, SearchMethod method, Draw&& draw) {
    const auto start = std::chrono::steady_clock::now();
    const SearchSpaceSpec& space = w.space;
    const std::int64_t cap = static_cast<std::int64_t>(req.candidates) * req.attempts_per_candidate;
    std::vector<ArchConfig> feasible;
    std::int64_t draws = 0;
    while (static_cast<int>(feasible.size()) < req.candidates && draws < cap) {
        ArchConfig a = canonical(draw(), space);
        ++draws;
        if (cost_of(a, space, mode) <= req.budget) feasible.push_back(std::move(a));
    }
    require(!feasible.empty(), Errc::tries_exhausted,
            "no architecture within budget " + std::to_string(req.budget) + " after " + std::to_string(draws) +
                " draws");
    Scorer scorer(w, val, threads);
    scorer.score(feasible);
    return finish(scorer, method, req.budget, draws, start);
}

}  // namespace

ProgressiveSchedule ProgressiveSchedule::two_stage(const SearchSpaceSpec& space, int epochs, double fraction) {
    require(epochs >= 1, Errc::invalid_argument, "epochs must be >= 1");
    require(fraction >= 0.0 && fraction <= 1.0, Errc::invalid_argument, "stage fraction must lie in [0, 1]");
    ProgressiveSchedule s;
    s.stages.push_back({1, space.min_image_size});
    const int second = std::min(epochs, static_cast<int>(std::floor(fraction * epochs)) + 1);
    if (space.max_image_size != space.min_image_size) {
        if (second == 1)
            s.stages.front().image_size = space.max_image_size;
        else
            s.stages.push_back({second, space.max_image_size});
    }
    return s;
}

int ProgressiveSchedule::size_at(int epoch) const {
    require(!stages.empty(), Errc::invalid_argument, "progressive schedule has no stages");
    int size = stages.front().image_size;
    for (const Stage& st : stages)
        if (st.epoch_start <= epoch) size = st.image_size;
    return size;
}

void ProgressiveSchedule::validate(const SearchSpaceSpec& space) const {
    require(!stages.empty(), Errc::invalid_argument, "progressive schedule has no stages");
    require(stages.front().epoch_start == 1, Errc::invalid_argument, "first stage must start at epoch 1");
    for (Sz i = 0; i < stages.size(); ++i) {
        const Stage& st = stages[i];
        require(st.image_size > 0 && st.image_size % space.patch_size == 0, Errc::invalid_argument,
                "stage image size " + std::to_string(st.image_size) + " is not a positive multiple of the patch size");
        require(st.image_size >= space.min_image_size && st.image_size <= space.max_image_size,
                Errc::invalid_argument, "stage image size outside [min_image_size, max_image_size]");
        if (i > 0) {
            require(st.epoch_start > stages[i - 1].epoch_start, Errc::invalid_argument,
                    "stage epochs must be increasing");
            require(st.image_size >= stages[i - 1].image_size, Errc::invalid_argument,
                    "stage image sizes must be non-decreasing");
        }
    }
}

void TrainSchedule::validate(const SearchSpaceSpec& space) const {
    require(epochs >= 1, Errc::invalid_argument, "epochs must be >= 1");
    require(interval >= 1, Errc::invalid_argument, "sampler update interval must be >= 1");
    require(batch_size >= 1, Errc::invalid_argument, "batch size must be >= 1");
    require(reward_batch_size >= 1, Errc::invalid_argument, "reward batch size must be >= 1");
    require(lr > 0.0 && min_lr >= 0.0 && min_lr <= lr, Errc::invalid_argument,
            "learning rates must satisfy 0 <= min_lr <= lr, lr > 0");
    require(warmup_epochs >= 0, Errc::invalid_argument, "warmup epochs must be >= 0");
    resolved_progressive(space).validate(space);
}

ProgressiveSchedule TrainSchedule::resolved_progressive(const SearchSpaceSpec& space) const {
    return progressive ? *progressive : ProgressiveSchedule::two_stage(space, epochs);
}

double TrainSchedule::lr_at(std::int64_t step, std::int64_t total, std::int64_t steps_per_epoch) const {
    const std::int64_t warm = std::min<std::int64_t>(total, warmup_epochs * steps_per_epoch);
    if (step < warm) return lr * static_cast<double>(step + 1) / static_cast<double>(warm);
    const std::int64_t span = std::max<std::int64_t>(1, total - warm);
    const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
    return min_lr + 0.5 * (lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

RunStreams::RunStreams(std::uint64_t seed)
    : supernet_init(seed, "supernet-init"),
      sampler_init(seed, "sampler-init"),
      batch_order(seed, "batch-order"),
      constraint_draws(seed, "constraint-draws"),
      arch_draws(seed, "arch-draws"),
      sampler_data(seed, "sampler-data") {}

std::string_view to_string(Phase phase) noexcept {
    switch (phase) {
        case Phase::supernet: return "supernet";
        case Phase::sampler: return "sampler";
        case Phase::search: return "search";
    }
    return "unknown";
}

FocusFormerRun train_focusformer(const SearchSpaceSpec& space, const ConstraintSpec& constraint,
                                 const TrainSchedule& schedule, const SamplerTrainConfig& sampler_cfg,
                                 DataSplits data, const TrainHooks& hooks, double sampler_init_range) {
    space.validate();
    constraint.validate();
    schedule.validate(space);
    sampler_cfg.validate();
    check_data(space, schedule, data);
    RunStreams rs(schedule.seed);
    FocusFormerRun run{SupernetParams::init(space, rs.supernet_init),
                       SamplerModel::init(space, constraint, rs.sampler_init, 64, sampler_init_range)};
    run_training(run.supernet, &run.sampler, &sampler_cfg, constraint, schedule, data, hooks, rs);
    return run;
}

SupernetParams train_uniform(const SearchSpaceSpec& space, const ConstraintSpec& constraint,
                             const TrainSchedule& schedule, DataSplits data, const TrainHooks& hooks) {
    space.validate();
    constraint.validate();
    schedule.validate(space);
    check_data(space, schedule, data);
    RunStreams rs(schedule.seed);
    SupernetParams w = SupernetParams::init(space, rs.supernet_init);
    run_training(w, nullptr, nullptr, constraint, schedule, data, hooks, rs);
    return w;
}

std::int64_t expected_event_count(const TrainSchedule& schedule, const SamplerTrainConfig& sampler_cfg,
                                  bool focusformer) {
    const std::int64_t blocks = focusformer ? schedule.epochs / schedule.interval : 0;
    return schedule.epochs + blocks * sampler_cfg.iterations;
}

std::string_view to_string(SearchMethod method) noexcept {
    switch (method) {
        case SearchMethod::sampler: return "sampler";
        case SearchMethod::evolution: return "evolution";
        case SearchMethod::random: return "random";
    }
    return "unknown";
}

SearchMethod search_method_from_string(std::string_view name) {
    if (name == "sampler") return SearchMethod::sampler;
    if (name == "evolution") return SearchMethod::evolution;
    if (name == "random") return SearchMethod::random;
    fail(Errc::invalid_argument, "unknown search method '" + std::string(name) + "'");
}

void EvolutionConfig::validate() const {
    require(population >= 1 && generations >= 0 && parents >= 1, Errc::invalid_argument,
            "evolution needs population >= 1, generations >= 0, parents >= 1");
    require(mutation_rate >= 0.0 && mutation_rate <= 1.0, Errc::invalid_argument, "mutation rate must lie in [0, 1]");
    require(mutation_count >= 0 && crossover_count >= 0 && mutation_count + crossover_count >= 1,
            Errc::invalid_argument, "evolution needs at least one offspring per generation");
    require(tries_per_candidate >= 1, Errc::invalid_argument, "tries per candidate must be >= 1");
}

nlohmann::json to_json(const SearchResult& r, bool with_history) {
    nlohmann::json j = {{"method", to_string(r.method)},
                        {"budget", r.budget},
                        {"best", to_json(r.best)},
                        {"cost", to_json(r.cost)},
                        {"accuracy", r.accuracy},
                        {"evaluated", r.evaluated},
                        {"draws", r.draws},
                        {"wall_seconds", r.wall_seconds}};
    if (with_history) {
        nlohmann::json h = nlohmann::json::array();
        for (const Candidate& c : r.history)
            h.push_back({{"arch", to_json(c.arch)}, {"cost", to_json(c.cost)}, {"accuracy", c.accuracy}});
        j["history"] = std::move(h);
    }
    return j;
}

Batch validation_subset(const Dataset& val, const SearchSpaceSpec& space, std::size_t count, std::uint64_t seed) {
    val.validate();
    require(count >= 1, Errc::invalid_argument, "validation subset must hold at least one sample");
    std::vector<Sz> idx(val.size());
    std::iota(idx.begin(), idx.end(), Sz{0});
    if (idx.size() > count) {
        Rng rng(seed, "validation-subset");
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(count);
        std::sort(idx.begin(), idx.end());
    }
    return gather_batch(val, idx, space.max_image_size);
}

Evaluator::Evaluator(SupernetParams& w, const Batch& val, int threads) : w_(&w), val_(&val), threads_(threads) {
    require(threads >= 1, Errc::invalid_argument, "evaluation needs at least one thread");
    require(!val.labels.empty(), Errc::invalid_argument, "validation batch is empty");
}

std::vector<double> Evaluator::evaluate(const std::vector<ArchConfig>& archs) {
    std::vector<double> acc(archs.size());
    const Sz workers = std::min<Sz>(static_cast<Sz>(threads_), archs.size());
    if (workers <= 1) {
        for (Sz i = 0; i < archs.size(); ++i) acc[i] = minibatch_accuracy(SubnetView(*w_, archs[i]), *val_);
    } else {
        std::atomic<Sz> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr error;
        std::atomic<bool> failed{false};
        for (Sz t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (Sz i = next++; i < archs.size(); i = next++) {
                    try {
                        acc[i] = minibatch_accuracy(SubnetView(*w_, archs[i]), *val_);
                    } catch (...) {
                        if (!failed.exchange(true)) error = std::current_exception();
                    }
                }
            });
        for (std::thread& th : pool) th.join();
        if (error) std::rethrow_exception(error);
    }
    evaluated_ += static_cast<std::int64_t>(archs.size());
    return acc;
}

int evaluation_threads() {
    const char* env = std::getenv("FOCUSNAS_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    require(end && *end == '\0' && v >= 1 && v <= 1024, Errc::invalid_argument,
            "FOCUSNAS_THREADS must be an integer in [1, 1024]");
    return static_cast<int>(v);
}

SearchResult search_sampler(SupernetParams& w, const SamplerModel& model, const SearchRequest& req, const Batch& val,
                            Rng& rng, int threads) {
    require(model.space == w.space, Errc::invalid_argument, "sampler and supernet use different spaces");
    check_request(req, w.space, model.constraint.mode);
    require(req.budget >= model.constraint.b_min && req.budget <= model.constraint.b_max, Errc::out_of_range,
            "budget " + std::to_string(req.budget) + " outside the sampler's constraint range");
    return draw_and_score(w, model.constraint.mode, req, val, threads, SearchMethod::sampler,
                          [&] { return decode(sample_architecture(model, req.budget, rng).sequence, w.space); });
}

SearchResult search_random(SupernetParams& w, const ConstraintSpec& constraint, const SearchRequest& req,
                           const Batch& val, Rng& rng, int threads) {
    check_request(req, w.space, constraint.mode);
    return draw_and_score(w, constraint.mode, req, val, threads, SearchMethod::random,
                          [&] { return uniform_sample(w.space, rng); });
}

SearchResult search_evolution(SupernetParams& w, const ConstraintSpec& constraint, const SearchRequest& req,
                              const Batch& val, Rng& rng, int threads) {
    const EvolutionConfig& ev = req.evolution;
    ev.validate();
    check_request(req, w.space, constraint.mode);
    const auto start = std::chrono::steady_clock::now();
    const SearchSpaceSpec& space = w.space;
    Scorer scorer(w, val, threads);
    std::int64_t draws = 0;
    std::set<ArchSequence> pending;

    // Accepts only feasible configs never evaluated nor already queued.
    auto admit = [&](ArchConfig a, std::vector<ArchConfig>& out) {
        ++draws;
        a = canonical(a, space);
        if (cost_of(a, space, constraint.mode) > req.budget || scorer.seen(a)) return;
        if (!pending.insert(encode(a, space)).second) return;
        out.push_back(std::move(a));
    };

    std::vector<ArchConfig> population;
    for (std::int64_t t = 0, cap = static_cast<std::int64_t>(ev.population) * ev.tries_per_candidate;
         static_cast<int>(population.size()) < ev.population && t < cap; ++t)
        admit(uniform_sample(space, rng), population);
    require(!population.empty(), Errc::tries_exhausted,
            "no feasible initial population under budget " + std::to_string(req.budget));
    scorer.score(population);
    pending.clear();

    for (int g = 0; g < ev.generations; ++g) {
        const std::vector<Candidate> parents = scorer.top(static_cast<Sz>(ev.parents));
        std::vector<ArchConfig> offspring;
        for (std::int64_t t = 0, cap = static_cast<std::int64_t>(ev.mutation_count) * ev.tries_per_candidate;
             static_cast<int>(offspring.size()) < ev.mutation_count && t < cap; ++t) {
            const ArchConfig& p = parents[rng.index(parents.size())].arch;
            admit(mutate(p, space, ev.mutation_rate, rng), offspring);
        }
        const Sz mutated = offspring.size();
        for (std::int64_t t = 0, cap = static_cast<std::int64_t>(ev.crossover_count) * ev.tries_per_candidate;
             offspring.size() - mutated < static_cast<Sz>(ev.crossover_count) && t < cap; ++t) {
            const ArchConfig& a = parents[rng.index(parents.size())].arch;
            const ArchConfig& b = parents[rng.index(parents.size())].arch;
            admit(crossover(a, b, space, rng), offspring);
        }
        scorer.score(offspring);
        pending.clear();
    }
    return finish(scorer, SearchMethod::evolution, req.budget, draws, start);
}

SearchResult run_search(SupernetParams& w, const SamplerModel* model, const ConstraintSpec& constraint,
                        const SearchRequest& req, const Batch& val, Rng& rng, int threads) {
    switch (req.method) {
        case SearchMethod::sampler:
            require(model != nullptr, Errc::missing_checkpoint, "sampler search needs a trained sampler");
            return search_sampler(w, *model, req, val, rng, threads);
        case SearchMethod::evolution: return search_evolution(w, constraint, req, val, rng, threads);
        case SearchMethod::random: return search_random(w, constraint, req, val, rng, threads);
    }
    fail(Errc::invalid_argument, "unknown search method");
}

ParetoSweep pareto_sweep(SupernetParams& w, const SamplerModel* model, const ConstraintSpec& constraint,
                         const std::vector<double>& budgets, const SearchRequest& base, const Batch& val, Rng& rng,
                         int threads) {
    require(std::is_sorted(budgets.begin(), budgets.end()), Errc::invalid_argument, "budgets must be ascending");
    ParetoSweep sweep;
    for (double b : budgets) {
        SweepEntry entry;
        entry.budget = b;
        SearchRequest req = base;
        req.budget = b;
        try {
            entry.result = run_search(w, model, constraint, req, val, rng, threads);
            sweep.frontier.emplace_back(entry.result->cost.flops, entry.result->accuracy);
        } catch (const Error& e) {
            entry.error = std::string(to_string(e.code())) + ": " + e.what();
        }
        sweep.entries.push_back(std::move(entry));
    }
    std::stable_sort(sweep.frontier.begin(), sweep.frontier.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return sweep;
}

std::vector<Candidate> random_subnet_dump(SupernetParams& w, std::size_t count, const Batch& val, Rng& rng,
                                          int threads) {
    std::vector<ArchConfig> archs;
    for (Sz i = 0; i < count; ++i) archs.push_back(canonical(uniform_sample(w.space, rng), w.space));
    Evaluator eval(w, val, threads);
    const std::vector<double> acc = eval.evaluate(archs);
    std::vector<Candidate> out;
    for (Sz i = 0; i < count; ++i)
        out.push_back({archs[i], compute_cost(archs[i], w.space, w.space.max_image_size), acc[i]});
    return out;
}

}  // namespace focusnas

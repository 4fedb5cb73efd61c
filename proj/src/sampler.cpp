#include "focusnas/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "focusnas/error.hpp"
#include "focusnas/ops.hpp"
#include "json_util.hpp"

namespace focusnas {

namespace {

constexpr std::array<const char*, kDimKinds> kKindNames{"depth", "embed_dim", "mlp_ratio", "heads"};

using Sz = std::size_t;

Parameter uniform_param(std::string name, Shape shape, double range, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-range, range);
    return Parameter(std::move(name), std::move(t));
}

Sz kind_index(DimKind k) { return static_cast<Sz>(k); }

/// Segment [lo, lo+1] of the grid containing `budget` and the weight of row lo+1.
std::pair<Sz, double> locate(const std::vector<double>& grid, double budget) {
    require(budget >= grid.front() && budget <= grid.back(), Errc::out_of_range,
            "budget " + std::to_string(budget) + " outside constraint range [" + std::to_string(grid.front()) + ", " +
                std::to_string(grid.back()) + "]");
    if (grid.size() == 1) return {0, 0.0};
    const auto it = std::upper_bound(grid.begin(), grid.end(), budget);
    Sz hi = static_cast<Sz>(it - grid.begin());
    hi = std::clamp<Sz>(hi, 1, grid.size() - 1);
    const Sz lo = hi - 1;
    return {lo, (budget - grid[lo]) / (grid[hi] - grid[lo])};
}

/// Every model parameter read once onto a tape, so an unroll reuses the
/// same nodes across steps.
struct Bound {
    Var table, wx, wh, b;
    std::array<Var, kDimKinds> embed, hw, hb;
};

template <class Model>
Bound bind(Model& m, Tape& tape) {
    auto read = [&](auto& p) { return tape.parameter(p, p.value.shape()); };
    Bound b;
    b.table = read(m.table);
    b.wx = read(m.lstm_wx);
    b.wh = read(m.lstm_wh);
    b.b = read(m.lstm_b);
    for (Sz k = 0; k < kDimKinds; ++k) {
        b.embed[k] = read(m.choice_embed[k]);
        b.hw[k] = read(m.head_w[k]);
        b.hb[k] = read(m.head_b[k]);
    }
    return b;
}

Var interpolate(const Bound& b, const std::vector<double>& grid, double budget) {
    const auto [lo, t] = locate(grid, budget);
    Var row_lo = ops::row(b.table, lo);
    if (t == 0.0) return row_lo;
    Var row_hi = ops::row(b.table, lo + 1);
    if (t == 1.0) return row_hi;
    return ops::add(ops::scale(row_lo, 1.0 - t), ops::scale(row_hi, t));
}

struct Cell {
    Var h, c;
    bool empty = true;
};

Cell lstm_step(const Bound& b, Var x, const Cell& prev, Sz hidden) {
    Var gates = ops::matmul(x, b.wx);
    if (!prev.empty) gates = ops::add(gates, ops::matmul(prev.h, b.wh));
    gates = ops::add_bias(gates, b.b);
    Var i = ops::sigmoid(ops::slice_cols(gates, 0, hidden));
    Var f = ops::sigmoid(ops::slice_cols(gates, hidden, 2 * hidden));
    Var g = ops::tanh(ops::slice_cols(gates, 2 * hidden, 3 * hidden));
    Var o = ops::sigmoid(ops::slice_cols(gates, 3 * hidden, 4 * hidden));
    Var c = ops::mul(i, g);
    if (!prev.empty) c = ops::add(ops::mul(f, prev.c), c);
    return {ops::mul(o, ops::tanh(c)), c, false};
}

bool step_active(const SearchSpaceSpec& space, Sz position, int depth) {
    const int block = space.block_at(position);
    return block < 0 || block < depth;
}

/// Unrolls the controller. With `forced` set the choices are replayed;
/// otherwise they are drawn from `rng`. Returns per-step log-prob Vars.
template <class Model>
std::vector<Var> unroll(Model& m, double budget, Tape& tape, ArchSequence& seq, const ArchSequence* forced, Rng* rng) {
    const SearchSpaceSpec& space = m.space;
    const Sz len = space.sequence_length();
    if (forced) {
        require(forced->indices.size() == len, Errc::invalid_argument, "sequence length does not match the space");
        seq = *forced;
    } else {
        seq.indices.assign(len, 0);
    }
    const Bound b = bind(m, tape);
    const auto hidden = static_cast<Sz>(m.hidden);
    std::vector<Var> out;
    Cell cell;
    Var x = interpolate(b, m.grid, budget);
    for (Sz p = 0; p < len; ++p) {
        const Sz k = kind_index(space.kind_at(p));
        cell = lstm_step(b, x, cell, hidden);
        Var logp = ops::log_softmax_rows(ops::add_bias(ops::matmul(cell.h, b.hw[k]), b.hb[k]));
        Sz choice = 0;
        if (forced) {
            require(seq.indices[p] >= 0 && static_cast<Sz>(seq.indices[p]) < space.choice_count_at(p),
                    Errc::out_of_range, "choice index out of range at position " + std::to_string(p));
            choice = static_cast<Sz>(seq.indices[p]);
        } else {
            const Tensor& lp = logp.value();
            const double u = rng->uniform();
            double acc = 0.0;
            choice = lp.size() - 1;
            for (Sz j = 0; j < lp.size(); ++j) {
                acc += std::exp(lp[j]);
                if (u < acc) {
                    choice = j;
                    break;
                }
            }
            seq.indices[p] = static_cast<int>(choice);
        }
        out.push_back(ops::pick(logp, choice));
        if (p + 1 < len) x = ops::row(b.embed[k], choice);
    }
    return out;
}

}  // namespace

SamplerModel SamplerModel::init(const SearchSpaceSpec& space, const ConstraintSpec& constraint, Rng& rng, int hidden,
                                double init_range, StoragePrecision precision) {
    space.validate();
    constraint.validate();
    require(hidden > 0, Errc::invalid_argument, "sampler hidden width must be positive");
    require(init_range >= 0.0, Errc::invalid_argument, "sampler init range must be non-negative");
    SamplerModel m;
    m.space = space;
    m.constraint = constraint;
    m.grid = constraint.grid();
    m.hidden = hidden;
    m.precision = precision;
    const auto h = static_cast<Sz>(hidden);
    m.table = uniform_param("constraint_table", {m.grid.size(), h}, init_range, rng);
    m.lstm_wx = uniform_param("lstm.wx", {h, 4 * h}, init_range, rng);
    m.lstm_wh = uniform_param("lstm.wh", {h, 4 * h}, init_range, rng);
    m.lstm_b = uniform_param("lstm.bias", {4 * h}, init_range, rng);
    for (Sz k = 0; k < kDimKinds; ++k) {
        const Sz n = space.choice_count(static_cast<DimKind>(k));
        const std::string kind = kKindNames[k];
        m.choice_embed[k] = uniform_param("choice_embed." + kind, {n, h}, init_range, rng);
        m.head_w[k] = Parameter("head." + kind + ".weight", Tensor({h, n}, 0.0));
        m.head_b[k] = Parameter("head." + kind + ".bias", Tensor({n}, 0.0));
    }
    if (precision == StoragePrecision::f32)
        for (Parameter* p : m.all()) p->round_to_f32();
    return m;
}

std::vector<Parameter*> SamplerModel::all() {
    std::vector<Parameter*> out{&table, &lstm_wx, &lstm_wh, &lstm_b};
    for (Sz k = 0; k < kDimKinds; ++k) out.push_back(&choice_embed[k]);
    for (Sz k = 0; k < kDimKinds; ++k) {
        out.push_back(&head_w[k]);
        out.push_back(&head_b[k]);
    }
    return out;
}

std::vector<const Parameter*> SamplerModel::all() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<SamplerModel*>(this)->all()) out.push_back(p);
    return out;
}

void SamplerModel::zero_grad() {
    for (Parameter* p : all()) p->zero_grad();
}

Var embed_constraint(SamplerModel& model, double budget, Tape& tape) {
    return interpolate(bind(model, tape), model.grid, budget);
}

Tensor embed_constraint(const SamplerModel& model, double budget) {
    Tape tape(false);
    return interpolate(bind(model, tape), model.grid, budget).value();
}

SampleTrace sample_architecture(const SamplerModel& model, double budget, Rng& rng) {
    Tape tape(false);
    SampleTrace trace;
    const std::vector<Var> steps = unroll(model, budget, tape, trace.sequence, nullptr, &rng);
    const int depth = model.space.depth_choices[static_cast<Sz>(trace.sequence.indices[0])];
    for (Sz p = 0; p < steps.size(); ++p) {
        const bool on = step_active(model.space, p, depth);
        trace.active.push_back(on);
        trace.step_log_probs.push_back(on ? steps[p].value()[0] : 0.0);
        if (on) trace.log_prob += steps[p].value()[0];
    }
    trace.budget = budget;
    trace.version = model.version;
    return trace;
}

Var log_prob(SamplerModel& model, const ArchSequence& seq, double budget, Tape& tape) {
    ArchSequence replay;
    const std::vector<Var> steps = unroll(model, budget, tape, replay, &seq, nullptr);
    const int depth = model.space.depth_choices[static_cast<Sz>(seq.indices[0])];
    Var total = steps[0];
    for (Sz p = 1; p < steps.size(); ++p)
        if (step_active(model.space, p, depth)) total = ops::add(total, steps[p]);
    return total;
}

std::vector<double> step_log_probs(const SamplerModel& model, const ArchSequence& seq, double budget) {
    Tape tape(false);
    ArchSequence replay;
    const std::vector<Var> steps = unroll(model, budget, tape, replay, &seq, nullptr);
    const int depth = model.space.depth_choices[static_cast<Sz>(seq.indices[0])];
    std::vector<double> out;
    for (Sz p = 0; p < steps.size(); ++p) out.push_back(step_active(model.space, p, depth) ? steps[p].value()[0] : 0.0);
    return out;
}

double compute_reward(double acc, double budget, double cost, double beta) {
    require(cost > 0.0, Errc::invalid_argument, "reward needs a positive cost");
    require(acc >= 0.0 && acc <= 1.0, Errc::invalid_argument, "accuracy must lie in [0, 1]");
    require(beta >= 0.0, Errc::invalid_argument, "beta must be non-negative");
    return acc - beta * std::abs(budget / cost - 1.0);
}

double policy_gradient_step(SamplerModel& model, const SampleTrace& trace, double reward, double lr,
                            const PolicyGradientOptions& opts) {
    require(trace.version == model.version, Errc::stale_trace,
            "trace drawn under sampler version " + std::to_string(trace.version) + ", model is at " +
                std::to_string(model.version));
    require(lr > 0.0, Errc::invalid_argument, "sampler learning rate must be positive");
    require(std::isfinite(reward), Errc::non_finite, "non-finite reward");
    const double advantage = opts.use_baseline ? reward - model.baseline : reward;
    if (opts.use_baseline) model.baseline = opts.baseline_decay * model.baseline + (1.0 - opts.baseline_decay) * reward;
    if (advantage == 0.0) return 0.0;

    model.zero_grad();
    {
        Tape tape;
        tape.backward(log_prob(model, trace.sequence, trace.budget, tape));
    }
    const double scale = lr * advantage;
    for (Parameter* p : model.all()) {
        for (Sz i = 0; i < p->value.size(); ++i) {
            const double v = p->value[i] + scale * p->grad[i];
            p->value[i] = model.precision == StoragePrecision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
        }
        require(p->value.all_finite(), Errc::non_finite, "non-finite sampler parameter " + p->name);
    }
    ++model.version;
    return advantage;
}

void SamplerTrainConfig::validate() const {
    require(iterations >= 0, Errc::invalid_argument, "sampler iterations must be non-negative");
    require(lr > 0.0, Errc::invalid_argument, "sampler learning rate must be positive");
    require(beta >= 0.0, Errc::invalid_argument, "beta must be non-negative");
    require(pg.baseline_decay >= 0.0 && pg.baseline_decay < 1.0, Errc::invalid_argument,
            "baseline decay must lie in [0, 1)");
}

std::vector<SamplerIteration> train_sampler(SamplerModel& model, SupernetParams& w, const SamplerTrainConfig& cfg,
                                            const BatchSource& batches, SamplerRngs rngs,
                                            const std::function<void(const SamplerIteration&)>& on_iteration) {
    cfg.validate();
    require(model.space == w.space, Errc::invalid_argument, "sampler and supernet use different spaces");
    std::vector<SamplerIteration> log;
    for (int it = 0; it < cfg.iterations; ++it) {
        SamplerIteration rec;
        rec.iteration = it;
        rec.budget = cfg.fixed_budget ? *cfg.fixed_budget
                                      : quantize_constraint(sample_constraint(model.constraint, rngs.constraints),
                                                            model.constraint);
        const SampleTrace trace = sample_architecture(model, rec.budget, rngs.archs);
        rec.arch = decode(trace.sequence, model.space);
        rec.cost = constrained_cost(compute_cost(rec.arch, model.space, model.space.max_image_size),
                                    model.constraint.mode);
        rec.acc = cfg.accuracy_term ? minibatch_accuracy(SubnetView(w, rec.arch), batches(it)) : 0.0;
        rec.reward = compute_reward(rec.acc, rec.budget, rec.cost, cfg.beta);
        rec.advantage = policy_gradient_step(model, trace, rec.reward, cfg.lr, cfg.pg);
        if (on_iteration) on_iteration(rec);
        log.push_back(std::move(rec));
    }
    return log;
}

Checkpoint to_checkpoint(const SamplerModel& m) {
    nlohmann::json meta = {{"kind", "sampler"},
                           {"space", to_json(m.space)},
                           {"constraint", to_json(m.constraint)},
                           {"grid", m.grid},
                           {"hidden", m.hidden},
                           {"baseline", m.baseline},
                           {"version", m.version}};
    return snapshot_parameters(m.all(), std::move(meta));
}

SamplerModel sampler_from_checkpoint(const Checkpoint& ckpt) {
    constexpr const char* ctx = "checkpoint.meta";
    require(ckpt.meta.value("kind", "") == "sampler", Errc::format, "checkpoint does not hold a sampler");
    const SearchSpaceSpec space = space_from_json(detail::read_req<nlohmann::json>(ckpt.meta, "space", ctx));
    const ConstraintSpec constraint =
        constraint_from_json(detail::read_req<nlohmann::json>(ckpt.meta, "constraint", ctx));
    const int hidden = detail::read_req<int>(ckpt.meta, "hidden", ctx);
    Rng unused(0);
    SamplerModel m = SamplerModel::init(space, constraint, unused, hidden);
    require(detail::read_req<std::vector<double>>(ckpt.meta, "grid", ctx) == m.grid, Errc::format,
            "stored constraint grid does not match its spec");
    load_parameters(ckpt, m.all());
    m.baseline = detail::read_req<double>(ckpt.meta, "baseline", ctx);
    m.version = detail::read_req<std::uint64_t>(ckpt.meta, "version", ctx);
    return m;
}

}  // namespace focusnas

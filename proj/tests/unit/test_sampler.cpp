#include <cmath>
#include <map>

#include "../support/gradcheck.hpp"
#include "../support/stats.hpp"
#include "doctest.h"
#include "focusnas/error.hpp"
#include "focusnas/sampler.hpp"

using namespace focusnas;
using focusnas::testing::rel_error;

namespace {

/// Only the MLP-ratio step has more than one choice.
SearchSpaceSpec ratio_only_space() {
    SearchSpaceSpec s;
    s.depth_choices = {1};
    s.embed_choices = {8};
    s.mlp_ratio_choices = {1.0, 2.0};
    s.head_choices = {1};
    s.min_image_size = 8;
    s.max_image_size = 8;
    return s;
}

/// Small but with variable depth, so some steps go inactive.
SearchSpaceSpec micro_space() {
    SearchSpaceSpec s;
    s.depth_choices = {1, 2};
    s.embed_choices = {8, 16};
    s.mlp_ratio_choices = {1.0, 2.0};
    s.head_choices = {1, 2};
    s.min_image_size = 8;
    s.max_image_size = 8;
    return s;
}

ConstraintSpec small_constraint() {
    ConstraintSpec c;
    c.b_min = 200'000;
    c.b_max = 600'000;
    c.step = 100'000;
    return c;
}

void randomize_heads(SamplerModel& m, Rng& rng, double range) {
    for (std::size_t k = 0; k < kDimKinds; ++k) {
        for (double& v : m.head_w[k].value.data()) v = rng.uniform(-range, range);
        for (double& v : m.head_b[k].value.data()) v = rng.uniform(-range, range);
    }
}

}  // namespace

TEST_CASE("constraint embedding interpolates between grid rows") {
    Rng rng(3);
    SamplerModel m = SamplerModel::init(SearchSpaceSpec{}, small_constraint(), rng);
    REQUIRE(m.grid == std::vector<double>{200'000, 300'000, 400'000, 500'000, 600'000});
    const std::size_t h = static_cast<std::size_t>(m.hidden);
    auto row = [&](std::size_t r, std::size_t j) { return m.table.value[r * h + j]; };

    const Tensor at = embed_constraint(m, 300'000);
    const Tensor quarter = embed_constraint(m, 275'000);
    const Tensor mid = embed_constraint(m, 450'000);
    for (std::size_t j = 0; j < h; ++j) {
        CHECK(at[j] == row(1, j));
        CHECK(quarter[j] == doctest::Approx(0.25 * row(0, j) + 0.75 * row(1, j)).epsilon(1e-12));
        CHECK(mid[j] == doctest::Approx(0.5 * row(2, j) + 0.5 * row(3, j)).epsilon(1e-12));
    }
    CHECK(embed_constraint(m, 600'000)[0] == row(4, 0));
    CHECK_THROWS_AS(embed_constraint(m, 100'000), Error);
    CHECK_THROWS_AS(embed_constraint(m, 700'000), Error);
}

TEST_CASE("zero-initialized heads give uniform per-position marginals") {
    SearchSpaceSpec space;
    Rng init(11);
    SamplerModel m = SamplerModel::init(space, ConstraintSpec{}, init);
    const std::size_t len = space.sequence_length();
    std::vector<std::vector<std::size_t>> counts(len);
    for (std::size_t p = 0; p < len; ++p) counts[p].assign(space.choice_count_at(p), 0);
    Rng draws(12);
    for (int i = 0; i < 10'000; ++i) {
        const SampleTrace t = sample_architecture(m, 800'000, draws);
        for (std::size_t p = 0; p < len; ++p) ++counts[p][static_cast<std::size_t>(t.sequence.indices[p])];
    }
    for (std::size_t p = 0; p < len; ++p) {
        const double pval = focusnas::testing::chi_square_uniform_p(counts[p]);
        INFO("position " << p);
        CHECK(pval > 0.01);
    }
}

TEST_CASE("policy probabilities over a micro-space sum to one") {
    const SearchSpaceSpec space = micro_space();
    Rng rng(5);
    SamplerModel m = SamplerModel::init(space, small_constraint(), rng, 16);
    randomize_heads(m, rng, 1.5);
    for (double budget : {200'000.0, 333'333.0, 600'000.0}) {
        double total = 0.0;
        for (const ArchConfig& cfg : enumerate_canonical(space)) {
            double lp = 0.0;
            for (double v : step_log_probs(m, encode(cfg, space), budget)) lp += v;
            total += std::exp(lp);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("sampled traces report their own log-probabilities") {
    const SearchSpaceSpec space = micro_space();
    Rng rng(6);
    SamplerModel m = SamplerModel::init(space, small_constraint(), rng, 16);
    randomize_heads(m, rng, 1.0);
    Rng draws(7);
    for (int i = 0; i < 20; ++i) {
        const SampleTrace t = sample_architecture(m, 450'000, draws);
        const std::vector<double> replay = step_log_probs(m, t.sequence, 450'000);
        double sum = 0.0;
        for (std::size_t p = 0; p < replay.size(); ++p) {
            CHECK(replay[p] == doctest::Approx(t.step_log_probs[p]).epsilon(1e-12));
            if (!t.active[p]) CHECK(replay[p] == 0.0);
            sum += replay[p];
        }
        CHECK(sum == doctest::Approx(t.log_prob).epsilon(1e-12));
        const int depth = space.depth_choices[static_cast<std::size_t>(t.sequence.indices[0])];
        for (std::size_t p = 0; p < replay.size(); ++p)
            CHECK(t.active[p] == (space.block_at(p) < depth));
    }
}

TEST_CASE("log-probability gradient matches central differences") {
    const SearchSpaceSpec space = micro_space();
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        Rng rng(seed);
        SamplerModel m = SamplerModel::init(space, small_constraint(), rng, 8, 0.5, StoragePrecision::f64);
        randomize_heads(m, rng, 0.8);
        Rng draws(seed + 100);
        const double budget = 250'000 + 300'000 * draws.uniform();
        const SampleTrace trace = sample_architecture(m, budget, draws);

        m.zero_grad();
        {
            Tape tape;
            tape.backward(log_prob(m, trace.sequence, budget, tape));
        }
        auto value = [&] {
            double s = 0.0;
            for (double v : step_log_probs(m, trace.sequence, budget)) s += v;
            return s;
        };
        double worst = 0.0;
        const double h = 1e-5;
        for (Parameter* p : m.all()) {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const double orig = p->value[i];
                p->value[i] = orig + h;
                const double up = value();
                p->value[i] = orig - h;
                const double down = value();
                p->value[i] = orig;
                worst = std::max(worst, rel_error(p->grad[i], (up - down) / (2 * h)));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("one policy-gradient step moves the ratio head by the hand-derived amount") {
    const SearchSpaceSpec space = ratio_only_space();
    Rng rng(8);
    SamplerModel m = SamplerModel::init(space, small_constraint(), rng, 8, 0.5, StoragePrecision::f64);
    const SamplerModel before = m;
    SampleTrace trace;
    Rng draws(9);
    do {
        trace = sample_architecture(m, 400'000, draws);
    } while (trace.sequence.indices[2] != 0);
    CHECK(trace.log_prob == doctest::Approx(std::log(0.5)).epsilon(1e-12));

    // advantage 0.1 against the zero baseline, lr 1: bias += 0.1 * (onehot - 0.5)
    const double adv = policy_gradient_step(m, trace, 0.1, 1.0);
    CHECK(adv == doctest::Approx(0.1).epsilon(1e-15));
    const std::size_t ratio = static_cast<std::size_t>(DimKind::mlp_ratio);
    CHECK(m.head_b[ratio].value[0] == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(m.head_b[ratio].value[1] == doctest::Approx(-0.05).epsilon(1e-12));
    CHECK(m.baseline == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(m.version == 1);
    // Single-choice heads and everything upstream of the zero heads get no gradient.
    const auto now = m.all();
    const auto old = before.all();
    for (std::size_t i = 0; i < now.size(); ++i) {
        if (now[i] == &m.head_b[ratio] || now[i] == &m.head_w[ratio]) continue;
        INFO(now[i]->name);
        CHECK(now[i]->value == old[i]->value);
    }
}

TEST_CASE("zero advantage leaves the sampler untouched") {
    Rng rng(10);
    SamplerModel m = SamplerModel::init(micro_space(), small_constraint(), rng, 8);
    Rng draws(11);
    const SampleTrace t = sample_architecture(m, 300'000, draws);
    const SamplerModel before = m;
    CHECK(policy_gradient_step(m, t, 0.0, 0.5) == 0.0);
    const auto now = m.all();
    const auto old = before.all();
    for (std::size_t i = 0; i < now.size(); ++i) CHECK(now[i]->value == old[i]->value);
    CHECK(m.version == before.version);
}

TEST_CASE("stale traces and bad arguments are rejected") {
    Rng rng(12);
    SamplerModel m = SamplerModel::init(micro_space(), small_constraint(), rng, 8);
    Rng draws(13);
    const SampleTrace a = sample_architecture(m, 300'000, draws);
    const SampleTrace b = sample_architecture(m, 300'000, draws);
    policy_gradient_step(m, a, 0.5, 0.1);
    try {
        policy_gradient_step(m, b, 0.5, 0.1);
        FAIL("stale trace accepted");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::stale_trace);
    }
    const SampleTrace c = sample_architecture(m, 300'000, draws);
    CHECK_THROWS_AS(policy_gradient_step(m, c, 0.5, 0.0), Error);
    CHECK_THROWS_AS(compute_reward(0.5, 100.0, 0.0, 0.07), Error);
    CHECK_THROWS_AS(compute_reward(1.5, 100.0, 100.0, 0.07), Error);
    CHECK(compute_reward(0.8, 200.0, 100.0, 0.07) == doctest::Approx(0.8 - 0.07));
    CHECK(compute_reward(0.8, 100.0, 100.0, 0.07) == doctest::Approx(0.8));
}

TEST_CASE("raw mode uses the reward itself as the advantage") {
    Rng rng(14);
    SamplerModel m = SamplerModel::init(micro_space(), small_constraint(), rng, 8);
    m.baseline = 0.3;
    Rng draws(15);
    const SampleTrace t = sample_architecture(m, 300'000, draws);
    PolicyGradientOptions raw;
    raw.use_baseline = false;
    CHECK(policy_gradient_step(m, t, 0.2, 0.1, raw) == doctest::Approx(0.2));
    CHECK(m.baseline == 0.3);
}

TEST_CASE("sampler training is seeded and zero iterations change nothing") {
    const SearchSpaceSpec space = micro_space();
    Rng wr(16);
    SupernetParams w = SupernetParams::init(space, wr);
    SamplerTrainConfig cfg;
    cfg.iterations = 30;
    cfg.accuracy_term = false;
    cfg.beta = 1.0;
    cfg.lr = 0.5;
    Batch unused;
    const BatchSource src = [&](int) -> const Batch& { return unused; };
    auto run = [&](int iterations) {
        Rng init(17);
        SamplerModel m = SamplerModel::init(space, small_constraint(), init, 16);
        Rng rc(18), ra(19);
        SamplerTrainConfig c = cfg;
        c.iterations = iterations;
        const auto log = train_sampler(m, w, c, src, {rc, ra});
        CHECK(log.size() == static_cast<std::size_t>(iterations));
        return m;
    };
    const SamplerModel a = run(30), b = run(30), zero = run(0);
    Rng init(17);
    const SamplerModel fresh = SamplerModel::init(space, small_constraint(), init, 16);
    const auto pa = a.all(), pb = b.all(), pz = zero.all(), pf = fresh.all();
    bool moved = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->value == pb[i]->value);
        CHECK(pz[i]->value == pf[i]->value);
        moved = moved || pa[i]->value != pf[i]->value;
    }
    CHECK(moved);
    CHECK(a.baseline == b.baseline);
    CHECK(zero.version == 0);
}

TEST_CASE("constraint-only training concentrates cost near the budget") {
    SearchSpaceSpec space;
    Rng wr(20);
    SupernetParams w = SupernetParams::init(space, wr);
    const double budget = 900'000;
    Rng init(0, "sampler-init");
    SamplerModel m = SamplerModel::init(space, ConstraintSpec{}, init);
    auto gap = [&](std::uint64_t seed) {
        Rng r(seed);
        double g = 0.0;
        for (int i = 0; i < 200; ++i) {
            const ArchConfig a = decode(sample_architecture(m, budget, r).sequence, space);
            g += std::abs(budget / static_cast<double>(compute_cost(a, space, space.max_image_size).flops) - 1.0);
        }
        return g / 200.0;
    };
    const double g0 = gap(1);
    SamplerTrainConfig cfg;
    cfg.iterations = 300;
    cfg.lr = 1.0;
    cfg.beta = 1.0;
    cfg.accuracy_term = false;
    cfg.fixed_budget = budget;
    Batch unused;
    Rng rc(2), ra(3);
    train_sampler(m, w, cfg, [&](int) -> const Batch& { return unused; }, {rc, ra});
    CHECK(gap(4) < 0.5 * g0);
}

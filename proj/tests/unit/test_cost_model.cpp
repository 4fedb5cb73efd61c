#include <algorithm>
#include <map>

#include "../support/cost_oracle.hpp"
#include "../support/stats.hpp"
#include "doctest.h"
#include "focusnas/cost_model.hpp"
#include "focusnas/error.hpp"

using namespace focusnas;
using focusnas::testing::chi_square_uniform_p;
using focusnas::testing::enumerate_cost;

namespace {

SearchSpaceSpec single_block_space() {
    SearchSpaceSpec s;
    s.depth_choices = {1};
    s.embed_choices = {16};
    s.mlp_ratio_choices = {2.0};
    s.head_choices = {2};
    s.min_image_size = 16;
    s.max_image_size = 16;
    return s;
}

}  // namespace

TEST_CASE("worked example") {
    const SearchSpaceSpec space = single_block_space();
    const ArchConfig cfg{1, 16, {2.0}, {2}};
    const CostReport r = compute_cost(cfg, space, 16);
    CHECK(r.flops == 55712);
    CHECK(r.params == 3370);
    const auto items = cost_breakdown(cfg, space, 16);
    CHECK(items[0].flops == 12288);
    CHECK(items[1].flops == 2304);
    CHECK(items[2].flops == 24576 + 16384);
    CHECK(items.back().flops == 160);

    Rng rng(0);
    SupernetParams w = SupernetParams::init(space, rng);
    const auto oracle = enumerate_cost(w, cfg, 16);
    CHECK(oracle.flops == 55712);
    CHECK(oracle.params == 3370);
}

TEST_CASE("block-free terms") {
    const SearchSpaceSpec space;
    const ArchConfig cfg = min_config(space);
    std::int64_t non_block = 0;
    for (const auto& item : cost_breakdown(cfg, space, 16))
        if (item.name.rfind("block_", 0) != 0) non_block += item.flops;
    const std::int64_t n = 16;
    CHECK(non_block == n * 48 * 16 + n * 9 * 16 + 16 * 10);
}

TEST_CASE("closed form matches the enumeration oracle on the whole space") {
    for (bool per_block : {false, true}) {
        SearchSpaceSpec space;
        space.cpe_per_block = per_block;
        Rng rng(1);
        SupernetParams w = SupernetParams::init(space, rng);
        for (const ArchConfig& cfg : enumerate_canonical(space)) {
            for (int size : {space.min_image_size, space.max_image_size}) {
                const CostReport r = compute_cost(cfg, space, size);
                const auto o = enumerate_cost(w, cfg, size);
                REQUIRE(r.flops == o.flops);
                REQUIRE(r.params == o.params);
            }
        }
        CHECK(compute_cost(max_config(space), space, 24).params == static_cast<std::int64_t>(w.parameter_count()));
    }
}

TEST_CASE("monotonicity") {
    const SearchSpaceSpec space;
    Rng rng(2);
    for (int t = 0; t < 300; ++t) {
        const ArchConfig cfg = uniform_sample(space, rng);
        const CostReport base = compute_cost(cfg, space, 24);
        CHECK(compute_cost(cfg, space, 16).flops <= base.flops);
        ArchSequence seq = encode(cfg, space);
        for (std::size_t p = 0; p < seq.indices.size(); ++p) {
            if (static_cast<std::size_t>(seq.indices[p]) + 1 >= space.choice_count_at(p)) continue;
            ArchSequence up = seq;
            ++up.indices[p];
            const CostReport r = compute_cost(decode(up, space), space, 24);
            CHECK(r.flops >= base.flops);
            CHECK(r.params >= base.params);
        }
    }
}

TEST_CASE("indivisible resolution") {
    const SearchSpaceSpec space;
    CHECK_THROWS_AS(compute_cost(min_config(space), space, 18), Error);
}

TEST_CASE("quantize_constraint") {
    CHECK(quantize_constraint(1800, 200) == 1800);
    CHECK(quantize_constraint(1730, 200) == 1800);
    CHECK(quantize_constraint(1700, 200) == 1800);
    CHECK(quantize_constraint(1699, 200) == 1600);
    CHECK_THROWS_AS(quantize_constraint(0, 200), Error);
    CHECK_THROWS_AS(quantize_constraint(100, -1), Error);

    ConstraintSpec spec;
    spec.b_min = 250'000;
    spec.b_max = 1'420'000;
    const auto grid = spec.grid();
    CHECK(grid.front() == 250'000);
    CHECK(grid[1] == 300'000);
    CHECK(grid.back() == 1'420'000);
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double q = quantize_constraint(sample_constraint(spec, rng), spec);
        REQUIRE(std::find(grid.begin(), grid.end(), q) != grid.end());
        REQUIRE(quantize_constraint(q, spec) == q);
    }
}

TEST_CASE("sample_constraint") {
    ConstraintSpec degenerate;
    degenerate.b_min = degenerate.b_max = 500'000;
    Rng rng(4);
    for (int i = 0; i < 10; ++i) CHECK(sample_constraint(degenerate, rng) == 500'000);

    ConstraintSpec spec;
    double mean = 0;
    for (int i = 0; i < 100000; ++i) mean += sample_constraint(spec, rng) / 100000.0;
    CHECK(std::abs(mean - 850'000) / 850'000 < 0.01);

    Rng a(9), b(9);
    CHECK(sample_constraint(spec, a) == sample_constraint(spec, b));
}

TEST_CASE("uniform_sample_under_constraint") {
    SearchSpaceSpec space;
    Rng rng(5);
    const double top = static_cast<double>(compute_cost(max_config(space), space, 24).flops);
    Rng probe(5);
    for (int i = 0; i < 10; ++i) {
        const ArchConfig direct = uniform_sample(space, probe);
        CHECK(uniform_sample_under_constraint(space, top, ConstraintMode::flops, rng) == direct);
    }
    const double bottom = static_cast<double>(compute_cost(min_config(space), space, 24).flops);
    try {
        uniform_sample_under_constraint(space, bottom - 1, ConstraintMode::flops, rng);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::budget_infeasible);
    }

    // Small space: the accepted set is exactly the enumerated feasible set and
    // sequences are hit uniformly.
    SearchSpaceSpec small;
    small.depth_choices = {1, 2};
    small.embed_choices = {16, 32};
    small.mlp_ratio_choices = {1.0, 2.0};
    small.head_choices = {1, 2};
    std::vector<std::int64_t> costs;
    for (const auto& seq : enumerate_sequences(small))
        costs.push_back(compute_cost(decode(seq, small), small, 24).flops);
    std::vector<std::int64_t> sorted = costs;
    std::sort(sorted.begin(), sorted.end());
    const double median = static_cast<double>(sorted[sorted.size() / 2]);
    std::map<std::vector<int>, std::size_t> feasible;
    const auto seqs = enumerate_sequences(small);
    for (std::size_t i = 0; i < seqs.size(); ++i)
        if (static_cast<double>(costs[i]) <= median) feasible[seqs[i].indices] = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto s = encode(uniform_sample_under_constraint(small, median, ConstraintMode::flops, rng), small);
        auto it = feasible.find(s.indices);
        REQUIRE(it != feasible.end());
        ++it->second;
    }
    std::vector<std::size_t> counts;
    for (const auto& [k, c] : feasible) {
        CHECK(c > 0);
        counts.push_back(c);
    }
    CHECK(chi_square_uniform_p(counts) > 0.01);

    // Parameter mode compares against parameter counts.
    const double pbudget = static_cast<double>(compute_cost(min_config(space), space, 24).params);
    const ArchConfig tight = uniform_sample_under_constraint(space, pbudget, ConstraintMode::params, rng, 200000);
    CHECK(compute_cost(tight, space, 24).params <= pbudget);
}

TEST_CASE("constraint json") {
    ConstraintSpec s;
    s.mode = ConstraintMode::params;
    s.step = 50'000;
    CHECK(constraint_from_json(to_json(s)) == s);
    CHECK_THROWS_AS(constraint_from_json(nlohmann::json{{"b_min", 5.0}, {"b_max", 1.0}}), Error);
    CHECK_THROWS_AS(constraint_from_json(nlohmann::json{{"unknown", 1}}), Error);
}

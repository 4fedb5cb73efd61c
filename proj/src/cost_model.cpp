#include "focusnas/cost_model.hpp"

#include <algorithm>
#include <cmath>

#include "focusnas/error.hpp"
#include "json_util.hpp"

namespace focusnas {

std::vector<CostItem> cost_breakdown(const ArchConfig& cfg, const SearchSpaceSpec& space, int image_size) {
    validate(cfg, space);
    require(image_size > 0 && image_size % space.patch_size == 0, Errc::invalid_argument,
            "image size " + std::to_string(image_size) + " is not divisible by patch size " +
                std::to_string(space.patch_size));
    using i64 = std::int64_t;
    const i64 side = image_size / space.patch_size;
    const i64 n = side * side;
    const i64 p2c = static_cast<i64>(space.patch_size) * space.patch_size * 3;
    const i64 e = cfg.embed_dim;
    const i64 k = space.num_classes;

    std::vector<CostItem> items;
    items.push_back({"patch_embed", n * p2c * e, p2c * e + e});
    const CostItem cpe{"cpe", n * 9 * e, 9 * e + e};
    if (!space.cpe_per_block) items.push_back(cpe);
    for (int b = 0; b < cfg.depth; ++b) {
        const auto i = static_cast<std::size_t>(b);
        const i64 w = static_cast<i64>(space.head_dim) * cfg.heads[i];
        const i64 hidden = mlp_hidden(cfg.mlp_ratios[i], cfg.embed_dim);
        if (space.cpe_per_block) items.push_back({"cpe_" + std::to_string(b), cpe.flops, cpe.params});
        const i64 msa_flops = n * e * 3 * w + n * n * w + n * n * w + n * w * e;
        const i64 mlp_flops = 2 * n * e * hidden;
        const i64 params = 2 * e                         // ln1
                           + e * 3 * w + 3 * w           // qkv
                           + w * e + e                   // proj
                           + 2 * e                       // ln2
                           + e * hidden + hidden         // mlp in
                           + hidden * e + e;             // mlp out
        items.push_back({"block_" + std::to_string(b), msa_flops + mlp_flops, params});
    }
    items.push_back({"final_norm", 0, 2 * e});
    items.push_back({"head", e * k, e * k + k});
    return items;
}

CostReport compute_cost(const ArchConfig& cfg, const SearchSpaceSpec& space, int image_size) {
    CostReport r;
    r.resolution = image_size;
    for (const auto& item : cost_breakdown(cfg, space, image_size)) {
        r.flops += item.flops;
        r.params += item.params;
    }
    return r;
}

void ConstraintSpec::validate() const {
    require(step > 0.0, Errc::invalid_argument, "constraint step must be positive");
    require(b_min > 0.0 && b_min <= b_max, Errc::invalid_argument, "constraint range must satisfy 0 < b_min <= b_max");
}

std::vector<double> ConstraintSpec::grid() const {
    validate();
    std::vector<double> g{b_min};
    for (double k = std::floor(b_min / step) + 1.0; k * step < b_max; k += 1.0)
        if (k * step > b_min) g.push_back(k * step);
    if (b_max > b_min) g.push_back(b_max);
    return g;
}

double constrained_cost(const CostReport& report, ConstraintMode mode) {
    return static_cast<double>(mode == ConstraintMode::flops ? report.flops : report.params);
}

double quantize_constraint(double b, double step) {
    require(b > 0.0 && step > 0.0, Errc::invalid_argument, "quantize_constraint needs positive budget and step");
    return std::round(b / step) * step;  // std::round rounds halves away from zero
}

double quantize_constraint(double b, const ConstraintSpec& spec) {
    spec.validate();
    return std::clamp(quantize_constraint(b, spec.step), spec.b_min, spec.b_max);
}

double sample_constraint(const ConstraintSpec& spec, Rng& rng) {
    spec.validate();
    return spec.b_min + (spec.b_max - spec.b_min) * rng.uniform();
}

ArchConfig uniform_sample_under_constraint(const SearchSpaceSpec& space, double budget, ConstraintMode mode, Rng& rng,
                                           int max_tries) {
    const double floor_cost = constrained_cost(compute_cost(min_config(space), space, space.max_image_size), mode);
    require(budget >= floor_cost, Errc::budget_infeasible,
            "budget " + std::to_string(budget) + " is below the minimal config cost " + std::to_string(floor_cost));
    for (int t = 0; t < max_tries; ++t) {
        ArchConfig cfg = uniform_sample(space, rng);
        if (constrained_cost(compute_cost(cfg, space, space.max_image_size), mode) <= budget) return cfg;
    }
    fail(Errc::tries_exhausted, "no feasible config within " + std::to_string(max_tries) + " draws");
}

nlohmann::json to_json(const CostReport& r) {
    return {{"flops", r.flops}, {"params", r.params}, {"resolution", r.resolution}};
}

nlohmann::json to_json(const ConstraintSpec& s) {
    return {{"mode", s.mode == ConstraintMode::flops ? "flops" : "params"},
            {"b_min", s.b_min},
            {"b_max", s.b_max},
            {"step", s.step}};
}

ConstraintSpec constraint_from_json(const nlohmann::json& j) {
    constexpr const char* ctx = "constraint";
    detail::check_keys(j, {"mode", "b_min", "b_max", "step"}, ctx);
    ConstraintSpec s;
    std::string mode = "flops";
    detail::read_opt(j, "mode", mode, ctx);
    require(mode == "flops" || mode == "params", Errc::schema, "constraint.mode must be 'flops' or 'params'");
    s.mode = mode == "flops" ? ConstraintMode::flops : ConstraintMode::params;
    detail::read_opt(j, "b_min", s.b_min, ctx);
    detail::read_opt(j, "b_max", s.b_max, ctx);
    detail::read_opt(j, "step", s.step, ctx);
    s.validate();
    return s;
}

}  // namespace focusnas

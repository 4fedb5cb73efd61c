#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "focusnas/rng.hpp"
#include "focusnas/search_space.hpp"
#include "json.hpp"

namespace focusnas {

/// FLOPs are multiply-accumulates; softmax, normalization, activations and
/// residual adds are not counted.
struct CostReport {
    std::int64_t flops = 0;
    std::int64_t params = 0;
    int resolution = 0;

    friend bool operator==(const CostReport&, const CostReport&) = default;
};

struct CostItem {
    std::string name;
    std::int64_t flops = 0;
    std::int64_t params = 0;
};

/// Per-layer costs in network order: patch_embed, cpe, block_i..., final_norm, head.
std::vector<CostItem> cost_breakdown(const ArchConfig& cfg, const SearchSpaceSpec& space, int image_size);
CostReport compute_cost(const ArchConfig& cfg, const SearchSpaceSpec& space, int image_size);

enum class ConstraintMode { flops, params };

/// A budget prior: uniform on [b_min, b_max], quantized with step `step`.
/// Grid points are b_min, every multiple of `step` strictly inside the range,
/// and b_max, so quantized values always land on the grid.
struct ConstraintSpec {
    ConstraintMode mode = ConstraintMode::flops;
    double b_min = 200'000;
    double b_max = 1'500'000;
    double step = 100'000;

    void validate() const;
    [[nodiscard]] std::vector<double> grid() const;

    friend bool operator==(const ConstraintSpec&, const ConstraintSpec&) = default;
};

/// The cost figure a constraint compares against.
double constrained_cost(const CostReport& report, ConstraintMode mode);

/// round(b / s) * s with halves rounded away from zero.
double quantize_constraint(double b, double step);
/// Quantized and clamped into [b_min, b_max]; always a grid point.
double quantize_constraint(double b, const ConstraintSpec& spec);

double sample_constraint(const ConstraintSpec& spec, Rng& rng);

/// Rejection sampling from the uniform distribution over configs whose
/// constrained cost at the space's max image size is <= budget.
ArchConfig uniform_sample_under_constraint(const SearchSpaceSpec& space, double budget, ConstraintMode mode, Rng& rng,
                                           int max_tries = 10'000);

nlohmann::json to_json(const CostReport& report);
nlohmann::json to_json(const ConstraintSpec& spec);
ConstraintSpec constraint_from_json(const nlohmann::json& j);

}  // namespace focusnas

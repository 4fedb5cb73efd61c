#pragma once

#include <cstdint>
#include <string>

#include "focusnas/supernet.hpp"

namespace focusnas::testing {

struct OracleCost {
    std::int64_t flops = 0;
    std::int64_t params = 0;
};

/// Counts MACs and parameters by walking every weight tensor a sub-network
/// actually reads from the supernet, independently of the closed-form model.
inline OracleCost enumerate_cost(SupernetParams& w, const ArchConfig& cfg, int image_size) {
    SubnetView view(w, cfg);
    const auto side = static_cast<std::int64_t>(image_size / w.space.patch_size);
    const std::int64_t n = side * side;
    OracleCost out;
    auto ends_with = [](const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    for (const auto& [param, extent] : view.slices()) {
        std::int64_t count = 1;
        for (std::size_t d : extent) count *= static_cast<std::int64_t>(d);
        out.params += count;
        const std::string& name = param->name;
        if (ends_with(name, "cpe.kernel")) {
            out.flops += n * count;  // every token applies its 3x3 window per channel
        } else if (ends_with(name, ".weight") && extent.size() == 2) {
            const std::int64_t rows = name == "head.weight" ? 1 : n;
            out.flops += rows * count;
            if (ends_with(name, "qkv.weight")) {
                const auto width = static_cast<std::int64_t>(extent[1] / 3);
                out.flops += 2 * n * n * width;  // q k^T and attention-weighted values
            }
        }
    }
    return out;
}

}  // namespace focusnas::testing

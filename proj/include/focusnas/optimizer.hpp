#pragma once

#include <cstdint>
#include <vector>

#include "focusnas/tape.hpp"

namespace focusnas {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;

    friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

/// Decoupled-weight-decay Adam whose update is confined to the region of each
/// parameter touched since its last `zero_grad`. Moment buffers are kept at
/// full parameter shape; untouched elements and their moments stay bit-identical.
/// Rank-1 parameters (biases, norm affines) are not decayed.
class AdamW {
public:
    AdamW(const std::vector<Parameter*>& params, AdamWConfig cfg, bool round_to_f32);

    void step(double lr);
    [[nodiscard]] std::int64_t steps() const noexcept { return t_; }
    [[nodiscard]] const AdamWConfig& config() const noexcept { return cfg_; }

private:
    struct Slot {
        Parameter* param;
        Tensor m;
        Tensor v;
    };
    std::vector<Slot> slots_;
    AdamWConfig cfg_;
    bool round_to_f32_;
    std::int64_t t_ = 0;
};

}  // namespace focusnas

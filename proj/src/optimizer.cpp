#include "focusnas/optimizer.hpp"

#include <cmath>

#include "focusnas/error.hpp"

namespace focusnas {

AdamW::AdamW(const std::vector<Parameter*>& params, AdamWConfig cfg, bool round_to_f32)
    : cfg_(cfg), round_to_f32_(round_to_f32) {
    for (Parameter* p : params) slots_.push_back({p, Tensor(p->value.shape(), 0.0), Tensor(p->value.shape(), 0.0)});
}

void AdamW::step(double lr) {
    require(lr >= 0.0, Errc::invalid_argument, "learning rate must be non-negative");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Slot& s : slots_) {
        Parameter& p = *s.param;
        if (p.touched.empty()) continue;
        const Shape& full = p.value.shape();
        std::size_t rows = 1;
        for (std::size_t i = 0; i + 1 < p.touched.size(); ++i) rows *= p.touched[i];
        const std::size_t cols = p.touched.back();
        const std::size_t ld = full.back();
        const double decay = full.size() >= 2 ? cfg_.weight_decay : 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * ld + c;
                const double g = p.grad[i];
                s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
                s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
                const double update = (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + cfg_.eps);
                double w = p.value[i];
                w -= lr * (update + decay * w);
                p.value[i] = round_to_f32_ ? static_cast<double>(static_cast<float>(w)) : w;
            }
    }
}

}  // namespace focusnas

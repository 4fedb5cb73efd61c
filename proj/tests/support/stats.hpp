#pragma once

#include <boost/math/special_functions/gamma.hpp>
#include <cstddef>
#include <vector>

namespace focusnas::testing {

/// Pearson chi-square goodness-of-fit p-value of observed counts against
/// expected probabilities (which must sum to 1).
inline double chi_square_p(const std::vector<std::size_t>& counts, const std::vector<double>& probs) {
    double total = 0;
    for (std::size_t c : counts) total += static_cast<double>(c);
    double stat = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double expected = total * probs[i];
        const double d = static_cast<double>(counts[i]) - expected;
        stat += d * d / expected;
    }
    const double df = static_cast<double>(counts.size()) - 1.0;
    if (df < 1.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, stat / 2.0);
}

inline double chi_square_uniform_p(const std::vector<std::size_t>& counts) {
    return chi_square_p(counts, std::vector<double>(counts.size(), 1.0 / static_cast<double>(counts.size())));
}

}  // namespace focusnas::testing

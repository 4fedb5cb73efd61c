#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace focusnas {

enum class Errc {
    shape_mismatch,
    invalid_argument,
    out_of_range,
    non_finite,
    tape_state,
    budget_infeasible,
    tries_exhausted,
    stale_trace,
    io,
    format,
    schema,
    missing_checkpoint,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::shape_mismatch: return "shape_mismatch";
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::out_of_range: return "out_of_range";
        case Errc::non_finite: return "non_finite";
        case Errc::tape_state: return "tape_state";
        case Errc::budget_infeasible: return "budget_infeasible";
        case Errc::tries_exhausted: return "tries_exhausted";
        case Errc::stale_trace: return "stale_trace";
        case Errc::io: return "io";
        case Errc::format: return "format";
        case Errc::schema: return "schema";
        case Errc::missing_checkpoint: return "missing_checkpoint";
    }
    return "unknown";
}

/// Every failure in the library surfaces as this exception; `code()` is the
/// stable, machine-readable part and is what the CLI prints.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace focusnas

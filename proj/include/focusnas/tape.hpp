#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>

#include "focusnas/tensor.hpp"

namespace focusnas {

/// A named weight tensor that lives outside any tape. `grad` accumulates
/// across backward passes until `zero_grad`; `touched` records the leading
/// extent read since then, which is the region an optimizer may update.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Shape touched;

    Parameter() = default;
    Parameter(std::string name, Tensor value);

    void zero_grad();
    void mark_touched(const Shape& extent);
    /// Round every value to the nearest binary32, the storage precision of
    /// model weights outside gradient-check mode.
    void round_to_f32();
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
public:
    Var() = default;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] Tape& tape() const { return *tape_; }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }
    [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records primitive ops in execution order and replays them backward.
/// Node ids are assigned in creation order, so the reverse id order is a
/// reverse topological order. A tape supports exactly one backward pass.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    /// With `record == false` values are computed but no backward state is
    /// kept and parameters are not marked as touched.
    explicit Tape(bool record = true) : recording_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);
    Var parameter(Parameter& param);
    /// Leading slice of `param` with the given extent per axis. For rank > 2
    /// only the first and last axes may be narrowed.
    Var parameter(Parameter& param, const Shape& extent);
    /// Read-only slice; only valid on a non-recording tape.
    Var parameter(const Parameter& param, const Shape& extent);

    void backward(Var loss);

    /// Gradient accumulated into `v`; zeros when `v` never received one.
    [[nodiscard]] Tensor grad(Var v) const;

    [[nodiscard]] bool recording() const noexcept { return recording_; }
    [[nodiscard]] bool backward_done() const noexcept { return backward_done_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    // Op-author interface.
    Var record(std::string_view op, Tensor value, bool needs_grad, Backward backward);
    [[nodiscard]] bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
    /// Gradient accumulator for `v`, allocated as zeros on first access.
    Tensor& grad_of(Var v);
    [[nodiscard]] const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        bool needs_grad = false;
    };

    std::deque<Node> nodes_;
    bool recording_;
    bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value_of(id_); }

}  // namespace focusnas

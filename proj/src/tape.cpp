#include "focusnas/tape.hpp"

#include <algorithm>

#include "focusnas/error.hpp"

namespace focusnas {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}

void Parameter::zero_grad() {
    grad.fill(0.0);
    touched.clear();
}

void Parameter::mark_touched(const Shape& extent) {
    if (touched.empty()) {
        touched = extent;
        return;
    }
    for (std::size_t i = 0; i < extent.size(); ++i) touched[i] = std::max(touched[i], extent[i]);
}

void Parameter::round_to_f32() {
    for (double& v : value.data()) v = static_cast<double>(static_cast<float>(v));
}

namespace {

// Views a tensor of rank r as [lead x last], with everything between the
// first and last axes folded into the lead when r > 2.
struct Flat {
    std::size_t rows;
    std::size_t cols;
};

Flat flatten(const Shape& s) {
    if (s.size() == 1) return {1, s[0]};
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) rows *= s[i];
    return {rows, s.back()};
}

}  // namespace

Var Tape::constant(Tensor value) { return record("constant", std::move(value), false, nullptr); }

Var Tape::variable(Tensor value) { return record("variable", std::move(value), true, nullptr); }

Var Tape::parameter(Parameter& param) { return parameter(param, param.value.shape()); }

namespace {

Tensor slice_leading(const Parameter& param, const Shape& extent, Flat& src, Flat& dst) {
    const Shape& full = param.value.shape();
    require(extent.size() == full.size(), Errc::shape_mismatch,
            "slice rank mismatch for " + param.name + ": " + shape_string(extent) + " vs " + shape_string(full));
    for (std::size_t i = 0; i < full.size(); ++i) {
        require(extent[i] >= 1 && extent[i] <= full[i], Errc::shape_mismatch,
                "slice " + shape_string(extent) + " exceeds " + param.name + " " + shape_string(full));
        if (i > 0 && i + 1 < full.size())
            require(extent[i] == full[i], Errc::shape_mismatch, "inner axes of " + param.name + " cannot be sliced");
    }
    src = flatten(full);
    dst = flatten(extent);
    Tensor slice(extent);
    for (std::size_t r = 0; r < dst.rows; ++r)
        std::copy_n(param.value.ptr() + r * src.cols, dst.cols, slice.ptr() + r * dst.cols);
    return slice;
}

}  // namespace

Var Tape::parameter(const Parameter& param, const Shape& extent) {
    require(!recording_, Errc::tape_state, "read-only parameter access on a recording tape");
    Flat src{}, dst{};
    return record("parameter", slice_leading(param, extent, src, dst), false, nullptr);
}

Var Tape::parameter(Parameter& param, const Shape& extent) {
    Flat src{}, dst{};
    Tensor slice = slice_leading(param, extent, src, dst);
    if (!recording_) return record("parameter", std::move(slice), false, nullptr);

    param.mark_touched(extent);
    Parameter* p = &param;
    return record("parameter", std::move(slice), true, [p, src, dst](Tape&, const Tensor& g) {
        for (std::size_t r = 0; r < dst.rows; ++r) {
            double* out = p->grad.ptr() + r * src.cols;
            const double* in = g.ptr() + r * dst.cols;
            for (std::size_t c = 0; c < dst.cols; ++c) out[c] += in[c];
        }
    });
}

Var Tape::record(std::string_view op, Tensor value, bool needs_grad, Backward backward) {
    require(!backward_done_, Errc::tape_state, "tape already replayed; record on a fresh tape");
    if (!value.all_finite()) fail(Errc::non_finite, "non-finite value produced by " + std::string(op));
    Node node;
    node.value = std::move(value);
    node.needs_grad = recording_ && needs_grad;
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_of(Var v) {
    Node& n = nodes_[v.id()];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    require(recording_, Errc::tape_state, "backward on a non-recording tape");
    require(!backward_done_, Errc::tape_state, "backward already called on this tape; re-record the forward pass");
    require(loss.valid() && &loss.tape() == this, Errc::tape_state, "loss is not recorded on this tape");
    require(loss.value().size() == 1, Errc::shape_mismatch, "loss must be a scalar, got " + shape_string(loss.shape()));
    backward_done_ = true;
    grad_of(loss)[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
        n.backward(*this, n.grad);
    }
}

}  // namespace focusnas

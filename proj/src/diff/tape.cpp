#include "mtm/diff/tape.hpp"

#include <cmath>

#include "mtm/errors.hpp"

namespace mtm::diff {

const Array& Var::value() const {
    if (!valid()) throw Error("use of an empty Var handle");
    return tape_->value(*this);
}

double Var::scalar() const {
    const Array& a = value();
    if (a.size() != 1) throw ShapeError("scalar() on array of shape " + shape_str(a.shape));
    return a.data[0];
}

Var Tape::input(Array value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, true});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Array value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, false});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Array value, const std::vector<Var>& parents, BackwardFn backward) {
    bool tracked = false;
    for (const Var& p : parents) {
        if (!p.valid() || p.tape() != this)
            throw Error("op input does not belong to this tape");
        if (p.id() >= static_cast<int>(nodes_.size()))
            throw Error("op input recorded after its consumer");
        tracked = tracked || nodes_[static_cast<std::size_t>(p.id())].tracked;
    }
    nodes_.push_back(Node{std::move(value), {}, tracked ? std::move(backward) : nullptr, tracked});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

std::vector<double>& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

Array Tape::grad_of(const Var& v) {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (n.grad.empty()) return Array::zeros(n.value.shape);
    return Array(n.value.shape, n.grad);
}

void Tape::backward(const Var& root) {
    if (!root.valid() || root.tape() != this) throw Error("backward root is not on this tape");
    const Array& rv = value(root);
    if (rv.size() != 1)
        throw ShapeError("backward root must be scalar, got shape " + shape_str(rv.shape));
    if (!std::isfinite(rv.data[0]))
        throw NumericError("backward on non-finite value");
    grad_buffer(root.id())[0] = 1.0;
    for (int id = root.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.tracked || n.grad.empty() || !n.backward) continue;
        n.backward(*this, id);
    }
}

} // namespace mtm::diff

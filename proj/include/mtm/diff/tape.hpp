#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "mtm/diff/array.hpp"

namespace mtm::diff {

class Tape;

// Handle to one node on a tape. Cheap to copy; invalid when default-built.
class Var {
public:
    Var() = default;

    const Array& value() const;
    const Shape& shape() const { return value().shape; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double scalar() const;

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Append-only record of a computation. Nodes are recorded in topological
// order; backward() walks them in reverse record order exactly once.
// Single-owner: one thread builds and differentiates a tape.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self_id)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Tracked leaf: gradients are accumulated for it.
    Var input(Array value);
    // Untracked leaf: participates in values, never receives gradient.
    Var constant(Array value);

    // Primitive used by every op (and by tests that need a custom node).
    // `backward` reads grad(out) and accumulates into the parents' grads.
    Var record(Array value, const std::vector<Var>& parents, BackwardFn backward);

    // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse.
    // `root` must be scalar. Call at most once per tape.
    void backward(const Var& root);

    const Array& value(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }
    const Array& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    // Gradient buffer for a node, allocated (zeroed) on first touch.
    std::vector<double>& grad(const Var& v) { return grad_buffer(v.id()); }
    std::vector<double>& grad_buffer(int id);
    bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }
    // Gradient of a tracked leaf after backward(); zeros if it never received flow.
    Array grad_of(const Var& v);

    bool tracked(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].tracked; }
    bool tracked(int id) const { return nodes_[static_cast<std::size_t>(id)].tracked; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Array value;
        std::vector<double> grad;
        BackwardFn backward;
        bool tracked = false;
    };
    // Deque keeps references to existing nodes valid while new ones are
    // recorded, so `value()` results can be held across further ops.
    std::deque<Node> nodes_;
};

} // namespace mtm::diff

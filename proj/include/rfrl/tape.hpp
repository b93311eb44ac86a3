#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rfrl/tensor.hpp"

namespace rfrl {

using NodeId = std::size_t;

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, NodeId id) : tape_(tape), id_(id) {}

    Tape<T>& tape() const;
    NodeId id() const noexcept { return id_; }
    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    NodeId id_ = 0;
};

/// Gradients produced by Tape::backward, keyed by node id. Only nodes that
/// require grad have entries; leaves that the loss does not reach get zeros.
template <typename T>
class Gradients {
public:
    Gradients() = default;

    bool contains(NodeId id) const noexcept { return id < grads_.size() && grads_[id].has_value(); }
    bool contains(const Var<T>& v) const noexcept { return contains(v.id()); }
    const Tensor<T>* find(NodeId id) const noexcept { return contains(id) ? &*grads_[id] : nullptr; }
    const Tensor<T>& at(const Var<T>& v) const;

    /// Gradients of the requires-grad leaves (parameters and inputs).
    std::map<NodeId, Tensor<T>> leaves() const;

private:
    friend class Tape<T>;
    std::vector<std::optional<Tensor<T>>> grads_;
    std::vector<bool> is_leaf_;
};

/// Define-by-run record of primitive ops. Nodes are appended in creation
/// order, so the node list is already topologically sorted.
template <typename T>
class Tape {
public:
    /// Receives dLoss/dOutput and which inputs need a gradient; returns one
    /// gradient per input (entries for inputs that need none are ignored).
    using BackwardFn = std::function<std::vector<Tensor<T>>(const Tensor<T>& grad_out,
                                                            const std::vector<bool>& need)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> value);
    Var<T> leaf(Tensor<T> value, bool requires_grad);
    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    /// Appends an op node. Raises NumericsError if `value` is not finite.
    Var<T> record(std::string op, std::vector<Var<T>> inputs, Tensor<T> value, BackwardFn backward);

    /// Reverse sweep from a single-element loss. Each node is visited once.
    Gradients<T> backward(const Var<T>& loss) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    const std::string& op_name(NodeId id) const { return nodes_.at(id).op; }
    const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }

private:
    struct Node {
        std::string op;
        std::vector<NodeId> inputs;
        Tensor<T> value;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::deque<Node> nodes_;  // stable references across pushes
};

extern template class Var<float>;
extern template class Var<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace rfrl

#include "rfrl/tape.hpp"

namespace rfrl {

template <typename T>
Tape<T>& Var<T>::tape() const {
    if (!tape_) throw ContractError("use of an unbound Var");
    return *tape_;
}

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape().value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
    return tape().requires_grad(id_);
}

template <typename T>
const Tensor<T>& Gradients<T>::at(const Var<T>& v) const {
    if (!contains(v)) {
        throw ContractError("no gradient recorded for node " + std::to_string(v.id()));
    }
    return *grads_[v.id()];
}

template <typename T>
std::map<NodeId, Tensor<T>> Gradients<T>::leaves() const {
    std::map<NodeId, Tensor<T>> out;
    for (NodeId i = 0; i < grads_.size(); ++i) {
        if (grads_[i] && is_leaf_[i]) out.emplace(i, *grads_[i]);
    }
    return out;
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
    const bool rg = value.requires_grad();
    return leaf(std::move(value), rg);
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
    require_finite(value, "leaf");
    value.set_requires_grad(requires_grad);
    nodes_.push_back(Node{"leaf", {}, std::move(value), requires_grad, nullptr});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string op, std::vector<Var<T>> inputs, Tensor<T> value, BackwardFn backward) {
    require_finite(value, op.c_str());
    Node node;
    node.op = std::move(op);
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        if (&in.tape() != this) throw ContractError("op '" + node.op + "' mixes values from different tapes");
        node.inputs.push_back(in.id());
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    value.set_requires_grad(node.requires_grad);
    node.value = std::move(value);
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) const {
    if (&loss.tape() != this) throw ContractError("loss was recorded on a different tape");
    const Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(root.value.shape()));
    }

    const NodeId last = loss.id();
    Gradients<T> out;
    out.grads_.resize(last + 1);
    out.is_leaf_.resize(last + 1);
    if (!root.requires_grad) return out;

    std::vector<std::optional<Tensor<T>>>& g = out.grads_;
    g[last] = Tensor<T>(root.value.shape(), T(1));

    for (NodeId id = last + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        out.is_leaf_[id] = node.inputs.empty();
        if (!node.requires_grad) continue;
        if (!g[id]) {
            // Not reached from the loss.
            g[id] = Tensor<T>::zeros_like(node.value);
            continue;
        }
        if (!node.backward) continue;

        std::vector<bool> need(node.inputs.size());
        for (std::size_t k = 0; k < node.inputs.size(); ++k) need[k] = nodes_[node.inputs[k]].requires_grad;
        std::vector<Tensor<T>> in_grads = node.backward(*g[id], need);
        if (in_grads.size() != node.inputs.size()) {
            throw ContractError("backward of '" + node.op + "' returned wrong number of gradients");
        }
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            if (!need[k]) continue;
            const NodeId src = node.inputs[k];
            Tensor<T>& contrib = in_grads[k];
            if (contrib.shape() != nodes_[src].value.shape()) {
                throw ShapeError("backward of '" + node.op + "' produced gradient " + shape_str(contrib.shape()) +
                                 " for input " + shape_str(nodes_[src].value.shape()));
            }
            if (!g[src]) {
                g[src] = std::move(contrib);
            } else {
                auto dst = g[src]->data();
                auto add = contrib.data();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += add[i];
            }
        }
        require_finite(*g[id], ("backward of " + node.op).c_str());
    }
    return out;
}

template class Var<float>;
template class Var<double>;
template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace rfrl

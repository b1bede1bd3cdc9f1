// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/graph.hpp"

#include "tcdnet/errors.hpp"

namespace tcdnet {

const Tensor& Var::value() const {
    if (!graph) throw ContractError("use of unbound Var");
    return graph->value(*this);
}

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    grads_.emplace_back();
    return Var{this, nodes_.size() - 1};
}

Var Graph::input(Tensor value, bool requires_grad) {
    Node n;
    n.op = "input";
    n.owned = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    return push(std::move(n));
}

Var Graph::constant(Tensor value) { return input(std::move(value), false); }

Var Graph::param(const Tensor& t) {
    if (auto it = bound_.find(&t); it != bound_.end()) return Var{this, it->second};
    Node n;
    n.op = "param";
    n.borrowed = &t;
    n.requires_grad = grad_enabled_;
    Var v = push(std::move(n));
    bound_.emplace(&t, v.id);
    return v;
}

Var Graph::frozen(const Tensor& t) {
    Node n;
    n.op = "frozen";
    n.borrowed = &t;
    return push(std::move(n));
}

Var Graph::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Graph::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    if (!value.all_finite()) throw NumericError("non-finite value produced by " + std::string(op));
    Node n;
    n.op = std::string(op);
    n.owned = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        if (in.graph != this) throw ContractError(std::string(op) + ": input belongs to another graph");
        n.inputs.push_back(in.id);
        n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
}

const Tensor& Graph::value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.borrowed ? *n.borrowed : n.owned;
}

std::span<double> Graph::grad_buffer(Var v) {
    const Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return {};
    auto& g = grads_[v.id];
    if (g.empty()) g.assign(value(v).size(), 0.0);
    return g;
}

void Graph::backward(Var loss) {
    if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
    if (backward_done_) throw ContractError("backward: tape already consumed");
    if (value(loss).size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_string(value(loss).shape()));
    }
    backward_done_ = true;
    auto seed = grad_buffer(loss);
    if (seed.empty()) return;
    seed[0] += 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (!n.requires_grad || !n.backward || grads_[k].empty()) continue;
        n.backward(*this, n.borrowed ? *n.borrowed : n.owned, grads_[k]);
        // Saved intermediates are no longer needed.
        n.backward = nullptr;
    }
}

Tensor Graph::grad(Var v) const {
    const Tensor& val = value(v);
    const auto& g = grads_.at(v.id);
    if (g.empty()) return Tensor::zeros(val.shape());
    return Tensor(val.shape(), g);
}

Tensor Graph::grad_of(const Tensor& param) const {
    auto it = bound_.find(&param);
    if (it == bound_.end()) throw ContractError("grad_of: tensor was never bound to this graph");
    return grad(Var{const_cast<Graph*>(this), it->second});
}

}  // namespace tcdnet

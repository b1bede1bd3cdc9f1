// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tcdnet/tensor.hpp"

namespace tcdnet {

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy; valid while the graph lives.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape for one forward pass.
///
/// Nodes are appended in execution order, so the tape is topologically sorted by
/// construction. backward() walks it once in reverse and may be called only once.
/// A graph must stay on one thread.
class Graph {
public:
    /// Receives the node's output value and its gradient; pushes contributions into
    /// inputs via Graph::grad_buffer.
    using BackwardFn = std::function<void(Graph&, const Tensor& out, std::span<const double> grad_out)>;

    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }

    /// Owned leaf.
    Var input(Tensor value, bool requires_grad = true);
    /// Owned leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Borrowed leaf tracking gradients (when enabled). The same tensor maps to one leaf.
    Var param(const Tensor& t);
    /// Borrowed leaf without gradient tracking (frozen weights).
    Var frozen(const Tensor& t);

    /// Appends an op node. Inputs must belong to this graph. Non-finite outputs throw NumericError.
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::string_view op_name(Var v) const { return nodes_.at(v.id).op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every node that requires a gradient.
    void backward(Var loss);

    /// Mutable accumulation buffer for v's gradient, lazily zero-initialised.
    /// Empty when v does not require a gradient.
    std::span<double> grad_buffer(Var v);

    /// Gradient of v after backward(); zeros if no path from the loss reached v.
    Tensor grad(Var v) const;
    /// Gradient of a tensor bound with param(); throws if it was never bound.
    Tensor grad_of(const Tensor& param) const;
    bool is_bound(const Tensor& param) const { return bound_.contains(&param); }

private:
    struct Node {
        std::string op;
        Tensor owned;
        const Tensor* borrowed = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    Var push(Node node);

    std::deque<Node> nodes_;  // stable references across appends
    std::vector<std::vector<double>> grads_;
    std::unordered_map<const Tensor*, std::size_t> bound_;
    bool grad_enabled_;
    bool backward_done_ = false;
};

}  // namespace tcdnet

// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tcdnet/graph.hpp"

namespace tcdnet {

/// One element to probe: tensor `tensor` of the checked set, flat element `element`.
struct GradProbe {
    std::size_t tensor = 0;
    std::size_t element = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    GradProbe worst;
    std::size_t probes = 0;
};

/// Scalar function of one tensor.
using UnaryLoss = std::function<Var(Graph&, Var)>;
/// Scalar function that binds its inputs itself through Graph::param.
using BoundLoss = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients against central differences with step h.
/// Error per element: |analytic - fd| / max(1, |fd|). Returns the maximum.
double check_gradients(const UnaryLoss& f, const Tensor& x, double h = 1e-5);

/// Same check for a function of several bound tensors. `tensors` are perturbed in place
/// and restored; `probes` defaults to every element when empty.
GradCheckReport check_gradients(const BoundLoss& f, std::span<Tensor* const> tensors, double h,
                                std::span<const GradProbe> probes = {});

}  // namespace tcdnet

// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tcdnet/errors.hpp"

namespace tcdnet {

namespace {

double evaluate(const BoundLoss& f) {
    Graph g;
    const double v = g.value(f(g)).item();
    if (!std::isfinite(v)) throw NumericError("gradient check: non-finite function value");
    return v;
}

}  // namespace

GradCheckReport check_gradients(const BoundLoss& f, std::span<Tensor* const> tensors, double h,
                                std::span<const GradProbe> probes) {
    if (!(h > 0.0)) throw ContractError("gradient check: step must be positive");

    std::vector<Tensor> analytic;
    {
        Graph g;
        Var loss = f(g);
        g.backward(loss);
        for (Tensor* t : tensors) {
            analytic.push_back(g.is_bound(*t) ? g.grad_of(*t) : Tensor::zeros(t->shape()));
        }
    }

    std::vector<GradProbe> all;
    if (probes.empty()) {
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            for (std::size_t i = 0; i < tensors[k]->size(); ++i) all.push_back({k, i});
        }
        probes = all;
    }

    GradCheckReport report;
    for (const GradProbe& p : probes) {
        if (p.tensor >= tensors.size()) throw ContractError("gradient check: probe tensor out of range");
        Tensor& t = *tensors[p.tensor];
        const double orig = t[p.element];
        t[p.element] = orig + h;
        const double fp = evaluate(f);
        t[p.element] = orig - h;
        const double fm = evaluate(f);
        t[p.element] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[p.tensor][p.element] - fd) / std::max(1.0, std::abs(fd));
        if (err > report.max_rel_error || report.probes == 0) {
            report.max_rel_error = std::max(report.max_rel_error, err);
            report.worst = p;
        }
        ++report.probes;
    }
    return report;
}

double check_gradients(const UnaryLoss& f, const Tensor& x, double h) {
    Tensor copy = x;
    Tensor* tensors[] = {&copy};
    return check_gradients([&](Graph& g) { return f(g, g.param(copy)); }, tensors, h).max_rel_error;
}

}  // namespace tcdnet

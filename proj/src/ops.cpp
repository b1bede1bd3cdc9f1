// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "tcdnet/errors.hpp"

namespace tcdnet {

namespace {

using Grad = std::span<const double>;

constexpr double kGeluCoeff = 0.044715;

void require_same_shape(const char* op, Var a, Var b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

void require_rank(const char* op, Var a, std::size_t rank) {
    if (a.value().rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_string(a.shape()));
    }
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

Graph& graph_of(Var a) {
    if (!a.graph) throw ContractError("op on unbound Var");
    return *a.graph;
}

// Elementwise unary op: forward value f(x), derivative df(x, y).
template <class F, class DF>
Var unary(const char* name, Var a, F f, DF df) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    return graph_of(a).record(name, std::move(out), {a}, [a, df](Graph& g, const Tensor& y, Grad go) {
        const Tensor& x = g.value(a);
        auto ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * df(x[i], y[i]);
    });
}

}  // namespace

double gelu_value(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return 0.5 * x * (1.0 + std::tanh(c * (x + kGeluCoeff * x * x * x)));
}

Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return graph_of(a).record("add", std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, Grad go) {
        for (Var in : {a, b}) {
            auto gi = g.grad_buffer(in);
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return graph_of(a).record("sub", std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, Grad go) {
        auto ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
        auto gb = g.grad_buffer(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return graph_of(a).record("mul", std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, Grad go) {
        const auto& av = g.value(a);
        const auto& bv = g.value(b);
        auto ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
        auto gb = g.grad_buffer(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
    });
}

Var scale(Var a, double s) {
    return unary("scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sqrt(Var a) {
    for (double v : a.value().data()) {
        if (v < 0.0) throw NumericError("sqrt of negative value");
    }
    return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var abs(Var a) {
    return unary(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var gelu(Var x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return unary("gelu", x, gelu_value, [c](double v, double) {
        const double t = std::tanh(c * (v + kGeluCoeff * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * kGeluCoeff * v * v);
    });
}

Var charbonnier(Var a, double eps) {
    if (!(eps > 0.0)) throw ContractError("charbonnier: eps must be positive");
    const double e2 = eps * eps;
    return unary(
        "charbonnier", a, [e2](double x) { return std::sqrt(x * x + e2); },
        [](double x, double y) { return x / y; });
}

Var add_rowwise(Var x, Var bias) {
    const auto& xv = x.value();
    const auto& bv = bias.value();
    const std::size_t n = last_dim(xv);
    if (bv.rank() != 1 || bv.size() != n) {
        throw DimensionError("add_rowwise: bias " + shape_string(bv.shape()) + " does not match " +
                             shape_string(xv.shape()));
    }
    Tensor out = Tensor(xv.shape(), xv.storage());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return graph_of(x).record("add_rowwise", std::move(out), {x, bias},
                              [x, bias, n](Graph& g, const Tensor&, Grad go) {
                                  auto gx = g.grad_buffer(x);
                                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
                                  auto gb = g.grad_buffer(bias);
                                  if (!gb.empty()) {
                                      for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] += go[i];
                                  }
                              });
}

Var matmul(Var a, Var b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.dim(1) != bv.dim(0)) {
        throw DimensionError("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                             shape_string(bv.shape()));
    }
    Tensor out({av.dim(0), bv.dim(1)});
    out.as_matrix().noalias() = av.as_matrix() * bv.as_matrix();
    return graph_of(a).record("matmul", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& out, Grad go) {
        const auto& av = g.value(a);
        const auto& bv = g.value(b);
        ConstMatrixMap dc(go.data(), static_cast<Eigen::Index>(out.dim(0)), static_cast<Eigen::Index>(out.dim(1)));
        if (auto ga = g.grad_buffer(a); !ga.empty()) {
            MatrixMap(ga.data(), static_cast<Eigen::Index>(av.dim(0)), static_cast<Eigen::Index>(av.dim(1)))
                .noalias() += dc * bv.as_matrix().transpose();
        }
        if (auto gb = g.grad_buffer(b); !gb.empty()) {
            MatrixMap(gb.data(), static_cast<Eigen::Index>(bv.dim(0)), static_cast<Eigen::Index>(bv.dim(1)))
                .noalias() += av.as_matrix().transpose() * dc;
        }
    });
}

Var linear(Var x, Var weight, Var bias) { return add_rowwise(matmul(x, weight), bias); }

Var transpose2d(Var a) {
    require_rank("transpose2d", a, 2);
    const auto& av = a.value();
    Tensor out({av.dim(1), av.dim(0)});
    out.as_matrix() = av.as_matrix().transpose();
    return graph_of(a).record("transpose2d", std::move(out), {a}, [a](Graph& g, const Tensor& out, Grad go) {
        auto ga = g.grad_buffer(a);
        const auto rows = static_cast<Eigen::Index>(out.dim(0));
        const auto cols = static_cast<Eigen::Index>(out.dim(1));
        MatrixMap(ga.data(), cols, rows) += ConstMatrixMap(go.data(), rows, cols).transpose();
    });
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return graph_of(a).record("reshape", std::move(out), {a}, [a](Graph& g, const Tensor&, Grad go) {
        auto ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return graph_of(a).record("sum", Tensor::scalar(s), {a}, [a](Graph& g, const Tensor&, Grad go) {
        auto ga = g.grad_buffer(a);
        for (double& v : ga) v += go[0];
    });
}

Var mean(Var a) {
    const auto n = a.value().size();
    if (n == 0) throw DimensionError("mean of empty tensor");
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const double inv = 1.0 / static_cast<double>(n);
    return graph_of(a).record("mean", Tensor::scalar(s * inv), {a}, [a, inv](Graph& g, const Tensor&, Grad go) {
        auto ga = g.grad_buffer(a);
        for (double& v : ga) v += go[0] * inv;
    });
}

namespace {

// Decompose a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    Shape out_shape = parts[0].shape();
    if (axis >= out_shape.size()) throw DimensionError("concat: axis out of range");
    std::size_t total = 0;
    for (const Var& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
        total += s[axis];
        s[axis] = out_shape[axis];
        if (s != out_shape) throw DimensionError("concat: incompatible shapes");
    }
    out_shape[axis] = total;
    const AxisSplit os = split_axis(out_shape, axis);
    Tensor out(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        offsets.push_back(off);
        const auto& pv = p.value();
        const AxisSplit ps = split_axis(pv.shape(), axis);
        for (std::size_t o = 0; o < ps.outer; ++o) {
            std::copy_n(pv.data().begin() + o * ps.extent * ps.inner, ps.extent * ps.inner,
                        out.data().begin() + (o * os.extent + off) * os.inner);
        }
        off += ps.extent;
    }
    std::vector<Var> ins(parts.begin(), parts.end());
    return graph_of(parts[0]).record(
        "concat", std::move(out), parts, [ins, offsets, axis, os](Graph& g, const Tensor&, Grad go) {
            for (std::size_t k = 0; k < ins.size(); ++k) {
                auto gp = g.grad_buffer(ins[k]);
                if (gp.empty()) continue;
                const AxisSplit ps = split_axis(g.value(ins[k]).shape(), axis);
                for (std::size_t o = 0; o < ps.outer; ++o) {
                    const double* src = go.data() + (o * os.extent + offsets[k]) * os.inner;
                    double* dst = gp.data() + o * ps.extent * ps.inner;
                    for (std::size_t i = 0; i < ps.extent * ps.inner; ++i) dst[i] += src[i];
                }
            }
        });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
    const auto& av = a.value();
    if (axis >= av.rank() || begin > end || end > av.dim(axis)) {
        throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for shape " + shape_string(av.shape()));
    }
    Shape s = av.shape();
    s[axis] = end - begin;
    const AxisSplit is = split_axis(av.shape(), axis);
    const std::size_t len = (end - begin) * is.inner;
    Tensor out(s);
    for (std::size_t o = 0; o < is.outer; ++o) {
        std::copy_n(av.data().begin() + (o * is.extent + begin) * is.inner, len, out.data().begin() + o * len);
    }
    return graph_of(a).record("slice", std::move(out), {a}, [a, is, begin, len](Graph& g, const Tensor&, Grad go) {
        auto ga = g.grad_buffer(a);
        for (std::size_t o = 0; o < is.outer; ++o) {
            double* dst = ga.data() + (o * is.extent + begin) * is.inner;
            const double* src = go.data() + o * len;
            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
    });
}

Var gather(Var a, std::vector<std::size_t> index, Shape shape) {
    const auto& av = a.value();
    if (shape_size(shape) != index.size()) throw DimensionError("gather: index count does not match shape");
    Tensor out(std::move(shape));
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= av.size()) throw DimensionError("gather: index out of range");
        out[k] = av[index[k]];
    }
    return graph_of(a).record("gather", std::move(out), {a},
                              [a, index = std::move(index)](Graph& g, const Tensor&, Grad go) {
                                  auto ga = g.grad_buffer(a);
                                  for (std::size_t k = 0; k < index.size(); ++k) ga[index[k]] += go[k];
                              });
}

Var softmax_rows(Var x) {
    const auto& xv = x.value();
    const std::size_t n = last_dim(xv);
    const std::size_t rows = n ? xv.size() / n : 0;
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data().data() + r * n;
        double* o = out.data().data() + r * n;
        const double m = *std::max_element(in, in + n);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = std::exp(in[i] - m);
            z += o[i];
        }
        for (std::size_t i = 0; i < n; ++i) o[i] /= z;
    }
    return graph_of(x).record("softmax_rows", std::move(out), {x}, [x, n, rows](Graph& g, const Tensor& y, Grad go) {
        auto gx = g.grad_buffer(x);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y.data().data() + r * n;
            const double* gr = go.data() + r * n;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += yr[i] * gr[i];
            for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += yr[i] * (gr[i] - dot);
        }
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
    const auto& xv = x.value();
    const std::size_t d = last_dim(xv);
    if (d == 0) throw DimensionError("layer_norm: empty feature axis");
    if (gamma.value().size() != d || beta.value().size() != d) {
        throw DimensionError("layer_norm: affine parameters do not match feature size " + std::to_string(d));
    }
    const std::size_t rows = xv.size() / d;
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    Tensor out(xv.shape());
    // Saved per-row normalised values and inverse std.
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data().data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += in[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < d; ++i) {
            const double h = (in[i] - mu) * is;
            (*xhat)[r * d + i] = h;
            out[r * d + i] = gv[i] * h + bv[i];
        }
    }
    return graph_of(x).record(
        "layer_norm", std::move(out), {x, gamma, beta},
        [x, gamma, beta, d, rows, xhat, inv_std](Graph& g, const Tensor&, Grad go) {
            const auto& gv = g.value(gamma);
            auto gx = g.grad_buffer(x);
            auto gg = g.grad_buffer(gamma);
            auto gb = g.grad_buffer(beta);
            std::vector<double> dh(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* h = xhat->data() + r * d;
                const double* gr = go.data() + r * d;
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    dh[i] = gr[i] * gv[i];
                    mean_dh += dh[i];
                    mean_dh_h += dh[i] * h[i];
                    if (!gg.empty()) gg[i] += gr[i] * h[i];
                    if (!gb.empty()) gb[i] += gr[i];
                }
                if (gx.empty()) continue;
                mean_dh /= static_cast<double>(d);
                mean_dh_h /= static_cast<double>(d);
                const double is = (*inv_std)[r];
                for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += is * (dh[i] - mean_dh - h[i] * mean_dh_h);
            }
        });
}

Var center_rows(Var x) {
    const auto& xv = x.value();
    const std::size_t d = last_dim(xv);
    const std::size_t rows = d ? xv.size() / d : 0;
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += xv[r * d + i];
        mu /= static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] = xv[r * d + i] - mu;
    }
    return graph_of(x).record("center_rows", std::move(out), {x}, [x, d, rows](Graph& g, const Tensor&, Grad go) {
        auto gx = g.grad_buffer(x);
        for (std::size_t r = 0; r < rows; ++r) {
            double mu = 0.0;
            for (std::size_t i = 0; i < d; ++i) mu += go[r * d + i];
            mu /= static_cast<double>(d);
            for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += go[r * d + i] - mu;
        }
    });
}

Var depthwise_conv3x3(Var x, Var kernels, Var bias) {
    require_rank("depthwise_conv3x3", x, 3);
    const auto& xv = x.value();
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (kernels.shape() != Shape{c, 3, 3}) {
        throw DimensionError("depthwise_conv3x3: kernel shape " + shape_string(kernels.shape()) + ", expected " +
                             shape_string({c, 3, 3}));
    }
    if (bias.shape() != Shape{c}) throw DimensionError("depthwise_conv3x3: bias shape mismatch");
    const auto& kv = kernels.value();
    const auto& bv = bias.value();
    Tensor out(xv.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                double acc = bv[ch];
                for (std::size_t i = 0; i < 3; ++i) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - 1;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t j = 0; j < 3; ++j) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - 1;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        acc += kv[(ch * 3 + i) * 3 + j] * xv.at(ch, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                    }
                }
                out.at(ch, y, xx) = acc;
            }
        }
    }
    return graph_of(x).record(
        "depthwise_conv3x3", std::move(out), {x, kernels, bias},
        [x, kernels, bias, c, h, w](Graph& g, const Tensor&, Grad go) {
            const auto& xv = g.value(x);
            const auto& kv = g.value(kernels);
            auto gx = g.grad_buffer(x);
            auto gk = g.grad_buffer(kernels);
            auto gb = g.grad_buffer(bias);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const double d = go[(ch * h + y) * w + xx];
                        if (!gb.empty()) gb[ch] += d;
                        for (std::size_t i = 0; i < 3; ++i) {
                            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - 1;
                            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t j = 0; j < 3; ++j) {
                                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - 1;
                                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                                const std::size_t src = (ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx);
                                const std::size_t k = (ch * 3 + i) * 3 + j;
                                if (!gx.empty()) gx[src] += kv[k] * d;
                                if (!gk.empty()) gk[k] += xv[src] * d;
                            }
                        }
                    }
                }
            }
        });
}

namespace {

// cols[(ci*9 + i*3 + j), y*w + x] = x[ci, y+i-1, x+j-1] (zero outside).
RowMatrix im2col3x3(const Tensor& x) {
    const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(cin * 9), static_cast<Eigen::Index>(h * w));
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                const auto row = static_cast<Eigen::Index>(ci * 9 + i * 3 + j);
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - 1;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - 1;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        cols(row, static_cast<Eigen::Index>(y * w + xx)) =
                            x.at(ci, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                    }
                }
            }
        }
    }
    return cols;
}

void col2im3x3_add(const RowMatrix& cols, std::size_t cin, std::size_t h, std::size_t w, std::span<double> dx) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                const auto row = static_cast<Eigen::Index>(ci * 9 + i * 3 + j);
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - 1;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - 1;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        dx[(ci * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] +=
                            cols(row, static_cast<Eigen::Index>(y * w + xx));
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d_3x3(Var x, Var weight, Var bias) {
    require_rank("conv2d_3x3", x, 3);
    const auto& xv = x.value();
    const std::size_t cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const auto& wv = weight.value();
    if (wv.rank() != 4 || wv.dim(1) != cin || wv.dim(2) != 3 || wv.dim(3) != 3) {
        throw DimensionError("conv2d_3x3: weight shape " + shape_string(wv.shape()) + " incompatible with input " +
                             shape_string(xv.shape()));
    }
    const std::size_t cout = wv.dim(0);
    if (bias.shape() != Shape{cout}) throw DimensionError("conv2d_3x3: bias shape mismatch");
    auto cols = std::make_shared<RowMatrix>(im2col3x3(xv));
    ConstMatrixMap wm(wv.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * 9));
    Tensor out({cout, h, w});
    MatrixMap om(out.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(h * w));
    om.noalias() = wm * (*cols);
    const auto& bv = bias.value();
    for (std::size_t co = 0; co < cout; ++co) om.row(static_cast<Eigen::Index>(co)).array() += bv[co];
    return graph_of(x).record(
        "conv2d_3x3", std::move(out), {x, weight, bias},
        [x, weight, bias, cols, cin, cout, h, w](Graph& g, const Tensor&, Grad go) {
            ConstMatrixMap dout(go.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(h * w));
            if (auto gw = g.grad_buffer(weight); !gw.empty()) {
                MatrixMap(gw.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * 9)).noalias() +=
                    dout * cols->transpose();
            }
            if (auto gb = g.grad_buffer(bias); !gb.empty()) {
                for (std::size_t co = 0; co < cout; ++co) gb[co] += dout.row(static_cast<Eigen::Index>(co)).sum();
            }
            if (auto gx = g.grad_buffer(x); !gx.empty()) {
                const auto& wv = g.value(weight);
                ConstMatrixMap wm(wv.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * 9));
                RowMatrix dcols = wm.transpose() * dout;
                col2im3x3_add(dcols, cin, h, w, gx);
            }
        });
}

Var avg_pool2x2(Var x) {
    require_rank("avg_pool2x2", x, 3);
    const auto& xv = x.value();
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const std::size_t oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) throw DimensionError("avg_pool2x2: input " + shape_string(xv.shape()) + " too small");
    Tensor out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                out.at(ch, y, xx) = 0.25 * (xv.at(ch, 2 * y, 2 * xx) + xv.at(ch, 2 * y, 2 * xx + 1) +
                                            xv.at(ch, 2 * y + 1, 2 * xx) + xv.at(ch, 2 * y + 1, 2 * xx + 1));
            }
        }
    }
    return graph_of(x).record("avg_pool2x2", std::move(out), {x}, [x, c, h, w, oh, ow](Graph& g, const Tensor&, Grad go) {
        auto gx = g.grad_buffer(x);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const double d = 0.25 * go[(ch * oh + y) * ow + xx];
                    gx[(ch * h + 2 * y) * w + 2 * xx] += d;
                    gx[(ch * h + 2 * y) * w + 2 * xx + 1] += d;
                    gx[(ch * h + 2 * y + 1) * w + 2 * xx] += d;
                    gx[(ch * h + 2 * y + 1) * w + 2 * xx + 1] += d;
                }
            }
        }
    });
}

Var abs_cosine_rows(Var a, Var b, double delta) {
    require_same_shape("abs_cosine_rows", a, b);
    require_rank("abs_cosine_rows", a, 2);
    const auto& av = a.value();
    const auto& bv = b.value();
    const std::size_t n = av.dim(0), d = av.dim(1);
    Tensor out({n});
    // Per row: dot, |a|, |b|.
    auto saved = std::make_shared<std::vector<double>>(3 * n);
    for (std::size_t r = 0; r < n; ++r) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            dot += av[r * d + i] * bv[r * d + i];
            na += av[r * d + i] * av[r * d + i];
            nb += bv[r * d + i] * bv[r * d + i];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        (*saved)[3 * r] = dot;
        (*saved)[3 * r + 1] = na;
        (*saved)[3 * r + 2] = nb;
        out[r] = std::abs(dot / (std::max(na, delta) * std::max(nb, delta)));
    }
    return graph_of(a).record(
        "abs_cosine_rows", std::move(out), {a, b}, [a, b, n, d, delta, saved](Graph& g, const Tensor&, Grad go) {
            const auto& av = g.value(a);
            const auto& bv = g.value(b);
            auto ga = g.grad_buffer(a);
            auto gb = g.grad_buffer(b);
            for (std::size_t r = 0; r < n; ++r) {
                const double dot = (*saved)[3 * r];
                const double na = (*saved)[3 * r + 1], nb = (*saved)[3 * r + 2];
                const double ca = std::max(na, delta), cb = std::max(nb, delta);
                const double cosv = dot / (ca * cb);
                const double sgn = cosv > 0.0 ? 1.0 : (cosv < 0.0 ? -1.0 : 0.0);
                const double s = sgn * go[r];
                if (s == 0.0) continue;
                // d(dot/(ca cb))/da = b/(ca cb) - cos * a / ca^2 (norm term only when |a| > delta).
                const double ta = na > delta ? cosv / (ca * ca) : 0.0;
                const double tb = nb > delta ? cosv / (cb * cb) : 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double ai = av[r * d + i], bi = bv[r * d + i];
                    if (!ga.empty()) ga[r * d + i] += s * (bi / (ca * cb) - ta * ai);
                    if (!gb.empty()) gb[r * d + i] += s * (ai / (ca * cb) - tb * bi);
                }
            }
        });
}

std::vector<std::size_t> patchify_index(std::size_t channels, std::size_t height, std::size_t width,
                                        std::size_t patch) {
    if (patch == 0 || height % patch != 0 || width % patch != 0) {
        throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                             " is not divisible by patch size " + std::to_string(patch));
    }
    const std::size_t gh = height / patch, gw = width / patch;
    const std::size_t tok = channels * patch * patch;
    std::vector<std::size_t> index(gh * gw * tok);
    for (std::size_t ty = 0; ty < gh; ++ty) {
        for (std::size_t tx = 0; tx < gw; ++tx) {
            const std::size_t n = ty * gw + tx;
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t i = 0; i < patch; ++i) {
                    for (std::size_t j = 0; j < patch; ++j) {
                        index[n * tok + (c * patch + i) * patch + j] =
                            (c * height + ty * patch + i) * width + tx * patch + j;
                    }
                }
            }
        }
    }
    return index;
}

Var patchify(Var image, std::size_t patch) {
    require_rank("patchify", image, 3);
    const auto& s = image.shape();
    auto index = patchify_index(s[0], s[1], s[2], patch);
    const std::size_t n = (s[1] / patch) * (s[2] / patch);
    return gather(image, std::move(index), {n, s[0] * patch * patch});
}

Var unpatchify(Var tokens, std::size_t channels, std::size_t height, std::size_t width, std::size_t patch) {
    require_rank("unpatchify", tokens, 2);
    const auto forward = patchify_index(channels, height, width, patch);
    const std::size_t n = (height / patch) * (width / patch);
    if (tokens.shape() != Shape{n, channels * patch * patch}) {
        throw DimensionError("unpatchify: tokens " + shape_string(tokens.shape()) + " do not tile a " +
                             std::to_string(height) + "x" + std::to_string(width) + " image");
    }
    // patchify is a permutation; invert it.
    std::vector<std::size_t> inverse(forward.size());
    for (std::size_t k = 0; k < forward.size(); ++k) inverse[forward[k]] = k;
    return gather(tokens, std::move(inverse), {channels, height, width});
}

}  // namespace tcdnet

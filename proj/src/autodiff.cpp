#include "mtpool/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtpool/kernels.hpp"

namespace mtpool::ad {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* op) {
    if (s.size() != rank)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

struct AxisSplit {
    std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size())
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                             shape_str(s));
    AxisSplit r{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

double activation_grad(double x, double y, Activation fn) {
    switch (fn) {
        case Activation::identity: return 1.0;
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
    }
    return 1.0;
}

void softmax_forward(std::span<const double> x, std::size_t m, std::size_t n, std::span<double> y) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.data() + i * n;
        double* yr = y.data() + i * n;
        const double mx = *std::max_element(xr, xr + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
    }
}

void row_normalize_forward(std::span<const double> x, std::size_t m, std::size_t n,
                           std::span<double> y, std::vector<double>& sums) {
    sums.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += x[i * n + j];
        sums[i] = s;
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] = s != 0.0 ? x[i * n + j] / s : x[i * n + j];
    }
}

std::vector<double> row_norms(std::span<const double> x, std::size_t m, std::size_t d) {
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * x[i * d + k];
        norms[i] = std::sqrt(s);
    }
    return norms;
}

void cosine_forward(std::span<const double> a, std::span<const double> b, std::size_t p, std::size_t q,
                    std::size_t d, const std::vector<double>& na, const std::vector<double>& nb,
                    std::span<double> out) {
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) {
            if (na[i] == 0.0 || nb[j] == 0.0) {
                out[i * q + j] = 0.0;
                continue;
            }
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += a[i * d + k] * b[j * d + k];
            out[i * q + j] = dot / (na[i] * nb[j]);
        }
}

}  // namespace

Activation parse_activation(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation fn) {
    switch (fn) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "identity";
}

double activate(double v, Activation fn) {
    switch (fn) {
        case Activation::identity: return v;
        case Activation::relu: return v > 0.0 ? v : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
        case Activation::tanh: return std::tanh(v);
    }
    return v;
}

// --- Var / Tape -------------------------------------------------------------

const Shape& Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::values() const { return tape_->value(id_); }

Tensor Var::tensor() const {
    auto v = values();
    return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

double Var::item() const {
    auto v = values();
    if (v.size() != 1) throw ContractError("item() on a tensor of shape " + shape_str(shape()));
    return v[0];
}

std::span<const double> Tape::Node::data() const {
    if (param) return param->values;
    return owned;
}

Var Tape::constant(Tensor t) {
    Node n;
    n.shape = std::move(t.shape);
    n.owned = std::move(t.values);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& t) {
    Node n;
    n.shape = t.shape;
    n.param = &t;
    n.needs_grad = t.requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Shape shape, std::vector<double> values, std::initializer_list<Var> inputs,
                 Backward backward) {
    return record(std::move(shape), std::move(values), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
}

Var Tape::record(Shape shape, std::vector<double> values, std::span<const Var> inputs, Backward backward) {
    if (numel(shape) != values.size())
        throw DimensionError("recorded shape " + shape_str(shape) + " does not match value count");
    Node n;
    n.shape = std::move(shape);
    n.owned = std::move(values);
    for (const auto& in : inputs) {
        if (in.tape_ != this) throw ContractError("operands live on different tapes");
        n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

std::span<const double> Tape::value(std::size_t id) const { return nodes_[id].data(); }
const Shape& Tape::shape(std::size_t id) const { return nodes_[id].shape; }

std::span<double> Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return {};
    if (n.param) {
        if (!n.param->grad) n.param->grad.emplace(n.param->values.size(), 0.0);
        return *n.param->grad;
    }
    if (n.grad.empty()) n.grad.assign(n.owned.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    if (backward_done_) throw ContractError("backward() already ran on this tape");
    if (loss.tape_ != this) throw ContractError("loss does not belong to this tape");
    if (numel(nodes_[loss.id_].shape) != 1)
        throw ContractError("backward() needs a scalar loss, got " + shape_str(nodes_[loss.id_].shape));
    backward_done_ = true;
    if (!nodes_[loss.id_].needs_grad) return;
    grad(loss.id_)[0] += 1.0;
    for (std::size_t id = loss.id_ + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.backward || n.param || n.grad.empty()) continue;
        n.backward(*this, id);
    }
}

// --- operations ---------------------------------------------------------------

Var matmul(Var a, Var b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw DimensionError("matmul: cannot multiply " + shape_str(sa) + " by " + shape_str(sb));
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    std::vector<double> out(m * n);
    kernels::parallel::gemm(a.values().data(), b.values().data(), out.data(), m, k, n, false, false, false);
    const auto ia = a.id(), ib = b.id();
    return a.tape().record({m, n}, std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        if (auto ga = t.grad(ia); !ga.empty())
            kernels::parallel::gemm(g.data(), t.value(ib).data(), ga.data(), m, n, k, false, true, true);
        if (auto gb = t.grad(ib); !gb.empty())
            kernels::parallel::gemm(t.value(ia).data(), g.data(), gb.data(), k, m, n, true, false, true);
    });
}

Var add(Var a, Var b) {
    require_same(a.shape(), b.shape(), "add");
    auto va = a.values(), vb = b.values();
    std::vector<double> out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(a.shape(), std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        for (auto id : {ia, ib})
            if (auto gi = t.grad(id); !gi.empty())
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    });
}

Var sub(Var a, Var b) {
    require_same(a.shape(), b.shape(), "sub");
    auto va = a.values(), vb = b.values();
    std::vector<double> out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(a.shape(), std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        if (auto ga = t.grad(ia); !ga.empty())
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (auto gb = t.grad(ib); !gb.empty())
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
}

Var hadamard(Var a, Var b) {
    require_same(a.shape(), b.shape(), "hadamard");
    auto va = a.values(), vb = b.values();
    std::vector<double> out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(a.shape(), std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto xa = t.value(ia), xb = t.value(ib);
        if (auto ga = t.grad(ia); !ga.empty())
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
        if (auto gb = t.grad(ib); !gb.empty())
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
    });
}

Var add_row_bias(Var x, Var bias) {
    require_rank(x.shape(), 2, "add_row_bias");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (numel(bias.shape()) != n)
        throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                             shape_str(x.shape()));
    auto vx = x.values(), vb = bias.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = vx[i * n + j] + vb[j];
    const auto ix = x.id(), ib = bias.id();
    return x.tape().record(x.shape(), std::move(out), {x, bias}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        if (auto gx = t.grad(ix); !gx.empty())
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        if (auto gb = t.grad(ib); !gb.empty())
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    });
}

Var scale(Var x, double s) {
    auto vx = x.values();
    std::vector<double> out(vx.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * vx[i];
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
    });
}

Var add_scalar(Var x, double s) {
    auto vx = x.values();
    std::vector<double> out(vx.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] + s;
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var scale_by(Var s, Var x) {
    if (numel(s.shape()) != 1) throw DimensionError("scale_by: factor must have one element, got " + shape_str(s.shape()));
    const double sv = s.item();
    auto vx = x.values();
    std::vector<double> out(vx.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * vx[i];
    const auto is = s.id(), ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {s, x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto xv = t.value(ix);
        if (auto gs = t.grad(is); !gs.empty()) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
            gs[0] += acc;
        }
        if (auto gx = t.grad(ix); !gx.empty())
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
    });
}

Var activate(Var x, Activation fn) {
    auto vx = x.values();
    std::vector<double> out(vx.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = activate(vx[i], fn);
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        auto in = t.value(ix);
        auto y = t.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * activation_grad(in[i], y[i], fn);
    });
}

Var softmax_rows(Var x) {
    require_rank(x.shape(), 2, "softmax_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(m * n);
    softmax_forward(x.values(), m, n, out);
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        auto y = t.value(self);
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
    });
}

Var conv1d_valid(Var x, Var kernel, Var bias) {
    require_rank(x.shape(), 2, "conv1d_valid");
    require_rank(kernel.shape(), 2, "conv1d_valid kernel");
    const std::size_t rows = x.shape()[0], T = x.shape()[1];
    const std::size_t c = kernel.shape()[0], ks = kernel.shape()[1];
    if (numel(bias.shape()) != c)
        throw DimensionError("conv1d_valid: bias " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(c) + " channels");
    if (ks > T)
        throw ConfigError("conv1d_valid: kernel size " + std::to_string(ks) + " exceeds series length " +
                          std::to_string(T));
    const std::size_t len = T - ks + 1;
    std::vector<double> out(rows * c * len);
    kernels::parallel::conv1d_valid(x.values().data(), rows, T, kernel.values().data(), c, ks,
                                    bias.values().data(), out.data());
    const auto ix = x.id(), ik = kernel.id(), ib = bias.id();
    return x.tape().record({rows, c, len}, std::move(out), {x, kernel, bias}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto xv = t.value(ix);
        auto kv = t.value(ik);
        auto gx = t.grad(ix);
        auto gk = t.grad(ik);
        auto gb = t.grad(ib);
        for (std::size_t v = 0; v < rows; ++v)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* go = g.data() + (v * c + ch) * len;
                for (std::size_t tt = 0; tt < len; ++tt) {
                    const double gv = go[tt];
                    if (gv == 0.0) continue;
                    if (!gb.empty()) gb[ch] += gv;
                    for (std::size_t j = 0; j < ks; ++j) {
                        if (!gx.empty()) gx[v * T + tt + j] += gv * kv[ch * ks + j];
                        if (!gk.empty()) gk[ch * ks + j] += gv * xv[v * T + tt + j];
                    }
                }
            }
    });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
    require_rank(x.shape(), 2, "batch_norm");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    if (n == 0) throw DimensionError("batch_norm: empty batch");
    if (numel(gamma.shape()) != d || numel(beta.shape()) != d)
        throw DimensionError("batch_norm: affine parameters do not match width " + std::to_string(d));
    if (state.running_mean.size() != d || state.running_var.size() != d)
        throw DimensionError("batch_norm: running statistics do not match width " + std::to_string(d));

    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    std::vector<double> mean(d, 0.0), inv(d, 0.0), xhat(n * d), out(n * d);
    const bool batch_stats = mode == Mode::train || state.batch_stats_in_eval;
    if (batch_stats) {
        std::vector<double> var(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) mean[j] += xv[i * d + j];
        for (auto& m : mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = xv[i * d + j] - mean[j];
                var[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) {
            var[j] /= static_cast<double>(n);
            inv[j] = 1.0 / std::sqrt(var[j] + state.eps);
            if (mode != Mode::train) continue;
            state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
            state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j];
        }
    } else {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] = state.running_mean[j];
            inv[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xv[i * d + j] - mean[j]) * inv[j];
            xhat[i * d + j] = h;
            out[i * d + j] = gv[j] * h + bv[j];
        }

    const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
    return x.tape().record(x.shape(), std::move(out), {x, gamma, beta},
                           [=, xhat = std::move(xhat), inv = std::move(inv)](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gam = t.value(ig);
        if (auto gg = t.grad(ig); !gg.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
        if (auto gb = t.grad(ib); !gb.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
        auto gx = t.grad(ix);
        if (gx.empty()) return;
        if (!batch_stats) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * gam[j] * inv[j];
            return;
        }
        const double nn = static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dh = g[i * d + j] * gam[j];
                sum_dh += dh;
                sum_dh_h += dh * xhat[i * d + j];
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double dh = g[i * d + j] * gam[j];
                gx[i * d + j] += inv[j] / nn * (nn * dh - sum_dh - xhat[i * d + j] * sum_dh_h);
            }
        }
    });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no operands");
    const Shape& first = parts[0].shape();
    Shape out_shape = first;
    const auto base = split_axis(first, axis, "concat");
    std::vector<std::size_t> lens;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size())
            throw DimensionError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != first[i])
                throw DimensionError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
        lens.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    const std::size_t outer = base.outer, inner = base.inner, total = out_shape[axis];
    std::vector<double> out(numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto v = parts[p].values();
        const std::size_t block = lens[p] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(v.data() + o * block, block, out.data() + o * total * inner + offset * inner);
        offset += lens[p];
    }
    std::vector<std::size_t> ids;
    for (const auto& p : parts) ids.push_back(p.id());
    return parts[0].tape().record(std::move(out_shape), std::move(out), parts, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            const std::size_t block = lens[p] * inner;
            if (auto gp = t.grad(ids[p]); !gp.empty())
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = g.data() + o * total * inner + off * inner;
                    for (std::size_t k = 0; k < block; ++k) gp[o * block + k] += src[k];
                }
            off += lens[p];
        }
    });
}

Var reshape(Var x, Shape shape) {
    if (numel(shape) != numel(x.shape()))
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto v = x.values();
    const auto ix = x.id();
    return x.tape().record(std::move(shape), std::vector<double>(v.begin(), v.end()), {x},
                           [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var transpose(Var x) {
    require_rank(x.shape(), 2, "transpose");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    auto v = x.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
    const auto ix = x.id();
    return x.tape().record({n, m}, std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
    });
}

namespace {

Var reduce_linear(Var x, std::size_t axis, bool mean, const char* op) {
    const auto sp = split_axis(x.shape(), axis, op);
    Shape out_shape = x.shape();
    out_shape[axis] = 1;
    auto v = x.values();
    const double w = mean ? 1.0 / static_cast<double>(sp.len) : 1.0;
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t l = 0; l < sp.len; ++l)
            for (std::size_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += v[(o * sp.len + l) * sp.inner + i];
    if (mean)
        for (auto& e : out) e *= w;
    const auto ix = x.id();
    return x.tape().record(std::move(out_shape), std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t l = 0; l < sp.len; ++l)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    gx[(o * sp.len + l) * sp.inner + i] += w * g[o * sp.inner + i];
    });
}

}  // namespace

Var reduce_sum(Var x, std::size_t axis) { return reduce_linear(x, axis, false, "reduce_sum"); }
Var reduce_mean(Var x, std::size_t axis) { return reduce_linear(x, axis, true, "reduce_mean"); }

Var reduce_max(Var x, std::size_t axis) {
    const auto sp = split_axis(x.shape(), axis, "reduce_max");
    Shape out_shape = x.shape();
    out_shape[axis] = 1;
    auto v = x.values();
    std::vector<double> out(sp.outer * sp.inner);
    std::vector<std::size_t> arg(sp.outer * sp.inner);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
            std::size_t best = (o * sp.len) * sp.inner + i;
            for (std::size_t l = 1; l < sp.len; ++l) {
                const std::size_t k = (o * sp.len + l) * sp.inner + i;
                if (v[k] > v[best]) best = k;
            }
            out[o * sp.inner + i] = v[best];
            arg[o * sp.inner + i] = best;
        }
    const auto ix = x.id();
    return x.tape().record(std::move(out_shape), std::move(out), {x},
                           [=, arg = std::move(arg)](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        for (std::size_t k = 0; k < g.size(); ++k) gx[arg[k]] += g[k];
    });
}

Var sum(Var x) {
    auto v = x.values();
    double s = 0.0;
    for (double e : v) s += e;
    const auto ix = x.id();
    return x.tape().record({1}, {s}, {x}, [=](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        auto gx = t.grad(ix);
        for (auto& e : gx) e += g;
    });
}

Var row_normalize(Var x) {
    require_rank(x.shape(), 2, "row_normalize");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(m * n), sums;
    row_normalize_forward(x.values(), m, n, out, sums);
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x},
                           [=, sums = std::move(sums)](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        auto xv = t.value(ix);
        for (std::size_t i = 0; i < m; ++i) {
            const double s = sums[i];
            if (s == 0.0) {
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j];
                continue;
            }
            double gdotx = 0.0;
            for (std::size_t j = 0; j < n; ++j) gdotx += g[i * n + j] * xv[i * n + j];
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] / s - gdotx / (s * s);
        }
    });
}

Var cosine_rows(Var a, Var b) {
    require_rank(a.shape(), 2, "cosine_rows");
    require_rank(b.shape(), 2, "cosine_rows");
    const std::size_t p = a.shape()[0], q = b.shape()[0], d = a.shape()[1];
    if (b.shape()[1] != d)
        throw DimensionError("cosine_rows: width mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto na = row_norms(a.values(), p, d);
    auto nb = row_norms(b.values(), q, d);
    std::vector<double> out(p * q);
    cosine_forward(a.values(), b.values(), p, q, d, na, nb, out);
    const auto ia = a.id(), ib = b.id();
    return a.tape().record({p, q}, std::move(out), {a, b},
                           [=, na = std::move(na), nb = std::move(nb)](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto c = t.value(self);
        auto av = t.value(ia);
        auto bv = t.value(ib);
        auto ga = t.grad(ia);
        auto gb = t.grad(ib);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                if (na[i] == 0.0 || nb[j] == 0.0) continue;
                const double gij = g[i * q + j];
                if (gij == 0.0) continue;
                const double cij = c[i * q + j];
                const double inv_ab = 1.0 / (na[i] * nb[j]);
                const double ca = cij / (na[i] * na[i]);
                const double cb = cij / (nb[j] * nb[j]);
                for (std::size_t k = 0; k < d; ++k) {
                    if (!ga.empty()) ga[i * d + k] += gij * (bv[j * d + k] * inv_ab - ca * av[i * d + k]);
                    if (!gb.empty()) gb[j * d + k] += gij * (av[i * d + k] * inv_ab - cb * bv[j * d + k]);
                }
            }
    });
}

Var threshold_mask(Var x, double threshold) {
    auto v = x.values();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] >= threshold ? v[i] : 0.0;
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        auto xv = t.value(ix);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] >= threshold) gx[i] += g[i];
    });
}

Var slice_first(Var x, std::size_t index) {
    const Shape& s = x.shape();
    if (index >= s[0])
        throw DimensionError("slice_first: index " + std::to_string(index) + " out of range for " + shape_str(s));
    Shape out_shape(s.begin() + 1, s.end());
    if (out_shape.empty()) out_shape = {1};
    const std::size_t block = numel(out_shape);
    auto v = x.values();
    std::vector<double> out(v.begin() + index * block, v.begin() + (index + 1) * block);
    const auto ix = x.id();
    return x.tape().record(std::move(out_shape), std::move(out), {x}, [=](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gx = t.grad(ix);
        for (std::size_t k = 0; k < block; ++k) gx[index * block + k] += g[k];
    });
}

Var nll(Var probs, std::size_t label, double floor) {
    const std::size_t m = numel(probs.shape());
    if (label >= m)
        throw DimensionError("nll: label " + std::to_string(label) + " out of range for " + std::to_string(m) +
                             " classes");
    const double p = probs.values()[label];
    const double loss = -std::log(std::max(p, floor));
    const auto ip = probs.id();
    return probs.tape().record({1}, {loss}, {probs}, [=](Tape& t, std::size_t self) {
        if (p <= floor) return;
        t.grad(ip)[label] += -t.grad(self)[0] / p;
    });
}

// --- tape-free helpers --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape) + " by " + shape_str(b.shape));
    Tensor out = Tensor::zeros({a.shape[0], b.shape[1]});
    kernels::parallel::gemm(a.values.data(), b.values.data(), out.values.data(), a.shape[0], a.shape[1],
                            b.shape[1], false, false, false);
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape);
    softmax_forward(x.values, x.rows(), x.cols(), out.values);
    return out;
}

Tensor row_normalize(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape);
    std::vector<double> sums;
    row_normalize_forward(x.values, x.rows(), x.cols(), out.values, sums);
    return out;
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw DimensionError("cosine_rows: width mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    const std::size_t d = a.cols();
    Tensor out = Tensor::zeros({a.rows(), b.rows()});
    cosine_forward(a.values, b.values, a.rows(), b.rows(), d, row_norms(a.values, a.rows(), d),
                   row_norms(b.values, b.rows(), d), out.values);
    return out;
}

Tensor transpose(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(j, i) = x(i, j);
    return out;
}

}  // namespace mtpool::ad

#include "bayescope/tape.hpp"

#include <cmath>
#include <utility>

#include "bayescope/errors.hpp"
#include "bayescope/kernels.hpp"

namespace bayescope::ad {

const Tensor& Node::value() const {
    if (!tape_) throw ContractError("use of default-constructed Node");
    return tape_->value(idx_);
}

Node Tape::constant(Tensor value) { return emit(std::move(value), false, nullptr); }

Node Tape::param(const Tensor& value, Tensor* grad_sink) {
    Node n = emit(value, true, nullptr);
    entries_[n.index()].sink = grad_sink;
    return n;
}

Node Tape::emit(Tensor value, bool track, BackFn backprop) {
    EntryRec rec;
    rec.value = std::move(value);
    rec.backprop = std::move(backprop);
    rec.track = track;
    entries_.push_back(std::move(rec));
    return Node(this, entries_.size() - 1);
}

void Tape::backward(Node loss) {
    if (loss.tape() != this) throw ContractError("loss node belongs to a different tape");
    std::size_t top = loss.index();
    if (entries_[top].value.size() != 1)
        throw ContractError("backward requires a scalar loss, got " +
                            entries_[top].value.shape_str());

    // Fresh zero gradients on every call; only entries recorded before the
    // loss can influence it.
    for (std::size_t i = 0; i <= top; ++i) {
        if (!entries_[i].track) continue;
        entries_[i].grad = Tensor::zeros(entries_[i].value.shape());
    }
    entries_[top].grad[0] = 1.0;

    for (std::size_t i = top + 1; i-- > 0;) {
        EntryRec& e = entries_[i];
        if (e.track && e.backprop) e.backprop(*this, i);
    }

    for (std::size_t i = 0; i <= top; ++i) {
        EntryRec& e = entries_[i];
        if (e.sink == nullptr || e.grad.empty()) continue;
        if (!e.sink->same_shape(e.grad))
            throw DimensionError("gradient sink shape mismatch");
        for (std::size_t j = 0; j < e.grad.size(); ++j) (*e.sink)[j] += e.grad[j];
    }
}

Tensor Tape::grad_of(Node n) const {
    const EntryRec& e = entries_[n.index()];
    if (e.grad.empty()) return Tensor::zeros(e.value.shape());
    return e.grad;
}

// ---------------------------------------------------------------------------
// broadcasting helpers
// ---------------------------------------------------------------------------

namespace {

bool is_trailing_of(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    std::size_t off = big.size() - small.size();
    for (std::size_t i = 0; i < small.size(); ++i)
        if (small[i] != big[off + i]) return false;
    return true;
}

// Broadcast layout of a binary op: `full` gives the output shape, `small`
// maps through index % small_size (scalar and trailing-extent expansion both
// reduce to this under row-major layout).
struct BcastPlan {
    bool a_is_full = true;
    std::size_t full_size = 0;
    std::size_t small_size = 0;
};

BcastPlan bcast_plan(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return {true, a.size(), b.size()};
    if (b.size() == 1 || is_trailing_of(b.shape(), a.shape())) return {true, a.size(), b.size()};
    if (a.size() == 1 || is_trailing_of(a.shape(), b.shape())) return {false, b.size(), a.size()};
    throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                         b.shape_str() + " are not broadcast-compatible");
}

Tape* common_tape(Node a, Node b, const char* op) {
    if (a.tape() != b.tape())
        throw ContractError(std::string(op) + ": operands live on different tapes");
    return a.tape();
}

// fa/fb: local partials df/da and df/db given (a_i, b_i).
template <typename Fwd, typename DA, typename DB>
Node binary_op(const char* name, Node a, Node b, Fwd fwd, DA dfda, DB dfdb) {
    Tape* t = common_tape(a, b, name);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    BcastPlan plan = bcast_plan(av, bv, name);

    const Tensor& full = plan.a_is_full ? av : bv;
    Tensor out(full.shape());
    for (std::size_t i = 0; i < plan.full_size; ++i) {
        std::size_t ia = plan.a_is_full ? i : i % plan.small_size;
        std::size_t ib = plan.a_is_full ? i % plan.small_size : i;
        out[i] = fwd(av[ia], bv[ib]);
    }

    bool track = t->tracked(a.index()) || t->tracked(b.index());
    std::size_t ai = a.index(), bi = b.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [ai, bi, plan, dfda, dfdb](Tape& tp, std::size_t self) {
            const Tensor& g = tp.grad_buf(self);
            const Tensor& av2 = tp.value(ai);
            const Tensor& bv2 = tp.value(bi);
            bool need_a = tp.tracked(ai);
            bool need_b = tp.tracked(bi);
            for (std::size_t i = 0; i < plan.full_size; ++i) {
                std::size_t ia = plan.a_is_full ? i : i % plan.small_size;
                std::size_t ib = plan.a_is_full ? i % plan.small_size : i;
                double gi = g[i];
                if (need_a) tp.grad_buf(ai)[ia] += gi * dfda(av2[ia], bv2[ib]);
                if (need_b) tp.grad_buf(bi)[ib] += gi * dfdb(av2[ia], bv2[ib]);
            }
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

// dfdx receives the input value x.
template <typename Fwd, typename DX>
Node unary_op(Node x, Fwd fwd, DX dfdx) {
    Tape* t = x.tape();
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);

    bool track = t->tracked(x.index());
    std::size_t xi = x.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [xi, dfdx](Tape& tp, std::size_t self) {
            const Tensor& g = tp.grad_buf(self);
            const Tensor& xv2 = tp.value(xi);
            Tensor& gx = tp.grad_buf(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv2[i]);
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise suite
// ---------------------------------------------------------------------------

Node add(Node a, Node b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Node sub(Node a, Node b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Node mul(Node a, Node b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Node div(Node a, Node b) {
    bcast_plan(a.value(), b.value(), "div");  // shape errors before value errors
    for (std::size_t i = 0; i < b.value().size(); ++i)
        if (b.value()[i] == 0.0) throw NumericError("div: zero divisor");
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Node affine(Node x, double scale, double shift) {
    return unary_op(
        x, [scale, shift](double v) { return scale * v + shift; },
        [scale](double) { return scale; });
}

Node exp(Node x) {
    Node out = unary_op(
        x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
    if (!out.value().all_finite()) throw NumericError("exp: non-finite result");
    return out;
}

Node log(Node x) {
    for (std::size_t i = 0; i < x.value().size(); ++i)
        if (x.value()[i] <= 0.0) throw NumericError("log: non-positive input");
    return unary_op(
        x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Node tanh(Node x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double v) {
            double t = std::tanh(v);
            return 1.0 - t * t;
        });
}

Node relu(Node x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Node softplus(Node x) {
    return unary_op(
        x, [](double v) { return stable_softplus(v); },
        [](double v) { return stable_sigmoid(v); });
}

Node square(Node x) {
    return unary_op(
        x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Node clamp(Node x, double lo, double hi) {
    if (!(lo < hi)) throw ContractError("clamp: lo must be < hi");
    // Straight-through gradient: the value is pinned to [lo, hi], but the
    // derivative stays 1 outside the range. A dead-zone derivative would trap
    // any head output that once crossed a bound (no restoring gradient); the
    // clamp exists to keep exp(log_var) finite, not to stop training.
    return unary_op(
        x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
        [](double) { return 1.0; });
}

Node reduce_sum(Node x) {
    Tape* t = x.tape();
    const Tensor& xv = x.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];

    bool track = t->tracked(x.index());
    std::size_t xi = x.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [xi](Tape& tp, std::size_t self) {
            double g = tp.grad_buf(self)[0];
            Tensor& gx = tp.grad_buf(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        };
    }
    return t->emit(Tensor::scalar(acc), track, std::move(back));
}

Node reduce_mean(Node x) {
    double inv = 1.0 / static_cast<double>(x.value().size());
    return mul(reduce_sum(x), inv);
}

// ---------------------------------------------------------------------------
// structural
// ---------------------------------------------------------------------------

Node reshape(Node x, Shape shape) {
    Tape* t = x.tape();
    const Tensor& xv = x.value();
    if (shape_numel(shape) != xv.size())
        throw DimensionError("reshape: element count mismatch " + xv.shape_str() + " -> " +
                             shape_to_string(shape));
    Tensor out(std::move(shape));
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i];

    bool track = t->tracked(x.index());
    std::size_t xi = x.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [xi](Tape& tp, std::size_t self) {
            const Tensor& g = tp.grad_buf(self);
            Tensor& gx = tp.grad_buf(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

Node select_column(Node x, std::size_t col) {
    Tape* t = x.tape();
    const Tensor& xv = x.value();
    if (xv.ndim() != 2) throw DimensionError("select_column: expected 2-D, got " + xv.shape_str());
    std::size_t m = xv.extent(0), n = xv.extent(1);
    if (col >= n) throw DimensionError("select_column: column out of range");
    Tensor out({m, 1});
    for (std::size_t i = 0; i < m; ++i) out[i] = xv[i * n + col];

    bool track = t->tracked(x.index());
    std::size_t xi = x.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [xi, col, m, n](Tape& tp, std::size_t self) {
            const Tensor& g = tp.grad_buf(self);
            Tensor& gx = tp.grad_buf(xi);
            for (std::size_t i = 0; i < m; ++i) gx[i * n + col] += g[i];
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

Node concat_rows(std::span<const Node> rows) {
    if (rows.empty()) throw ContractError("concat_rows: no rows");
    Tape* t = rows[0].tape();
    std::size_t n = rows[0].value().size();
    Tensor out({rows.size(), n});
    bool track = false;
    std::vector<std::size_t> idx(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Tensor& rv = rows[r].value();
        if (rows[r].tape() != t) throw ContractError("concat_rows: mixed tapes");
        if (rv.size() != n || rv.ndim() != 2 || rv.extent(0) != 1)
            throw DimensionError("concat_rows: rows must all be [1," + std::to_string(n) + "]");
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] = rv[j];
        idx[r] = rows[r].index();
        track = track || t->tracked(idx[r]);
    }

    Tape::BackFn back = nullptr;
    if (track) {
        back = [idx, n](Tape& tp, std::size_t self) {
            const Tensor& g = tp.grad_buf(self);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                if (!tp.tracked(idx[r])) continue;
                Tensor& gr = tp.grad_buf(idx[r]);
                for (std::size_t j = 0; j < n; ++j) gr[j] += g[r * n + j];
            }
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

// ---------------------------------------------------------------------------
// dense / conv
// ---------------------------------------------------------------------------

Node matmul(Node a, Node b) {
    Tape* t = common_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2)
        throw DimensionError("matmul: expected 2-D operands, got " + av.shape_str() + " and " +
                             bv.shape_str());
    std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
    if (bv.extent(0) != k)
        throw DimensionError("matmul: inner dimensions disagree, " + av.shape_str() + " vs " +
                             bv.shape_str());
    Tensor out({m, n});
    kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);

    bool track = t->tracked(a.index()) || t->tracked(b.index());
    std::size_t ai = a.index(), bi = b.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [ai, bi, m, k, n](Tape& tp, std::size_t self) {
            const Tensor& g = tp.grad_buf(self);
            if (tp.tracked(ai))  // dA += g . B^T
                kernels::matmul(g.data(), tp.value(bi).data(), tp.grad_buf(ai).data(), m, n, k,
                                false, true, true);
            if (tp.tracked(bi))  // dB += A^T . g
                kernels::matmul(tp.value(ai).data(), g.data(), tp.grad_buf(bi).data(), k, m, n,
                                true, false, true);
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

Node conv2d(Node x, Node kernels_node, std::size_t stride) {
    Tape* t = common_tape(x, kernels_node, "conv2d");
    const Tensor& xv = x.value();
    const Tensor& kv = kernels_node.value();
    if (xv.ndim() != 3 || kv.ndim() != 4)
        throw DimensionError("conv2d: expected x[h,w,ci] and kernels[kh,kw,ci,co], got " +
                             xv.shape_str() + " and " + kv.shape_str());
    if (stride == 0) throw ContractError("conv2d: stride must be positive");
    std::size_t h = xv.extent(0), w = xv.extent(1), ci = xv.extent(2);
    std::size_t kh = kv.extent(0), kw = kv.extent(1), co = kv.extent(3);
    if (kv.extent(2) != ci)
        throw DimensionError("conv2d: input channel mismatch, " + xv.shape_str() + " vs " +
                             kv.shape_str());
    if (kh > h || kw > w)
        throw DimensionError("conv2d: kernel " + kv.shape_str() + " larger than input " +
                             xv.shape_str());
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    Tensor out({oh, ow, co});
    kernels::conv2d(xv.data(), kv.data(), out.data(), h, w, ci, kh, kw, co, stride);

    bool track = t->tracked(x.index()) || t->tracked(kernels_node.index());
    std::size_t xi = x.index(), ki = kernels_node.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [xi, ki, h, w, ci, kh, kw, co, stride](Tape& tp, std::size_t self) {
            const Tensor& g = tp.grad_buf(self);
            if (tp.tracked(xi))
                kernels::conv2d_grad_input(tp.value(ki).data(), g.data(),
                                           tp.grad_buf(xi).data(), h, w, ci, kh, kw, co, stride,
                                           true);
            if (tp.tracked(ki))
                kernels::conv2d_grad_kernel(tp.value(xi).data(), g.data(),
                                            tp.grad_buf(ki).data(), h, w, ci, kh, kw, co, stride,
                                            true);
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

Node avg_pool2d(Node x, std::size_t win) {
    Tape* t = x.tape();
    const Tensor& xv = x.value();
    if (xv.ndim() != 3) throw DimensionError("avg_pool2d: expected [h,w,c], got " + xv.shape_str());
    if (win == 0) throw ContractError("avg_pool2d: window must be positive");
    std::size_t h = xv.extent(0), w = xv.extent(1), c = xv.extent(2);
    std::size_t oh = h / win, ow = w / win;
    if (oh == 0 || ow == 0)
        throw DimensionError("avg_pool2d: window larger than input " + xv.shape_str());
    Tensor out({oh, ow, c});
    kernels::avg_pool2d(xv.data(), out.data(), h, w, c, win);

    bool track = t->tracked(x.index());
    std::size_t xi = x.index();
    Tape::BackFn back = nullptr;
    if (track) {
        back = [xi, h, w, c, win](Tape& tp, std::size_t self) {
            kernels::avg_pool2d_grad(tp.grad_buf(self).data(), tp.grad_buf(xi).data(), h, w, c,
                                     win, true);
        };
    }
    return t->emit(std::move(out), track, std::move(back));
}

}  // namespace bayescope::ad

#include "sodsynth/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace sodsynth::ad {

using detail::Node;

const Tensor& Variable::grad() const {
    if (!node_->grad_ready)
        throw UsageError("Variable::grad: no backward pass has populated this gradient");
    return node_->grad;
}

void Variable::assign(Tensor value) {
    if (node_->backprop)
        throw UsageError("Variable::assign: only leaf variables may be reassigned");
    if (!(value.shape() == node_->value.shape()))
        throw DimensionError("Variable::assign: shape mismatch " + value.shape_str() +
                             " vs " + node_->value.shape_str());
    node_->value = std::move(value);
    node_->grad_ready = false;
}

Variable make_op(Tensor value, std::vector<Variable> parents,
                 std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents) {
        n->parents.push_back(p.node());
        if (p.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) n->backprop = std::move(backprop);
    return Variable(std::move(n));
}

namespace {

// Broadcast layout for binary elementwise ops: equal shapes, or one side scalar.
enum class Bcast { Equal, AScalar, BScalar };

Bcast bcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Bcast::Equal;
    if (a.is_scalar() && a.rank() == 0) return Bcast::AScalar;
    if (b.is_scalar() && b.rank() == 0) return Bcast::BScalar;
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() +
                         " and " + b.shape_str() + " (only equal-shape or scalar broadcast)");
}

void accumulate(Node& parent, const Tensor& contribution) {
    double* g = parent.grad.data();
    const double* c = contribution.data();
    for (std::size_t i = 0; i < parent.grad.numel(); ++i) g[i] += c[i];
}

void accumulate_scalar(Node& parent, double contribution) {
    parent.grad[0] += contribution;
}

} // namespace

// -------------------------------------------------------------------------
// elementwise binary
// -------------------------------------------------------------------------

Variable add(const Variable& a, const Variable& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    Bcast k = bcast_kind(ta, tb, "add");
    Tensor out = (k == Bcast::AScalar) ? Tensor(tb.shape()) : Tensor(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = (k == Bcast::AScalar) ? ta[0] : ta[i];
        double y = (k == Bcast::BScalar) ? tb[0] : tb[i];
        out[i] = x + y;
    }
    return make_op(std::move(out), {a, b}, [k](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            if (k == Bcast::AScalar) {
                double s = 0;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) s += n.grad[i];
                accumulate_scalar(pa, s);
            } else {
                accumulate(pa, n.grad);
            }
        }
        if (pb.requires_grad) {
            if (k == Bcast::BScalar) {
                double s = 0;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) s += n.grad[i];
                accumulate_scalar(pb, s);
            } else {
                accumulate(pb, n.grad);
            }
        }
    });
}

Variable add(const Variable& a, double b) { return add(a, Variable(Tensor::scalar(b))); }

Variable sub(const Variable& a, const Variable& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    Bcast k = bcast_kind(ta, tb, "sub");
    Tensor out = (k == Bcast::AScalar) ? Tensor(tb.shape()) : Tensor(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = (k == Bcast::AScalar) ? ta[0] : ta[i];
        double y = (k == Bcast::BScalar) ? tb[0] : tb[i];
        out[i] = x - y;
    }
    return make_op(std::move(out), {a, b}, [k](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            if (k == Bcast::AScalar) {
                double s = 0;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) s += n.grad[i];
                accumulate_scalar(pa, s);
            } else {
                accumulate(pa, n.grad);
            }
        }
        if (pb.requires_grad) {
            if (k == Bcast::BScalar) {
                double s = 0;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) s -= n.grad[i];
                accumulate_scalar(pb, s);
            } else {
                Tensor neg(n.grad.shape());
                for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -n.grad[i];
                accumulate(pb, neg);
            }
        }
    });
}

Variable sub(const Variable& a, double b) { return sub(a, Variable(Tensor::scalar(b))); }
Variable sub(double a, const Variable& b) { return sub(Variable(Tensor::scalar(a)), b); }

Variable mul(const Variable& a, const Variable& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    Bcast k = bcast_kind(ta, tb, "mul");
    Tensor out = (k == Bcast::AScalar) ? Tensor(tb.shape()) : Tensor(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = (k == Bcast::AScalar) ? ta[0] : ta[i];
        double y = (k == Bcast::BScalar) ? tb[0] : tb[i];
        out[i] = x * y;
    }
    return make_op(std::move(out), {a, b}, [k](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const Tensor& va = pa.value;
        const Tensor& vb = pb.value;
        if (pa.requires_grad) {
            if (k == Bcast::AScalar) {
                double s = 0;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) s += n.grad[i] * vb[i];
                accumulate_scalar(pa, s);
            } else {
                Tensor c(n.grad.shape());
                for (std::size_t i = 0; i < c.numel(); ++i)
                    c[i] = n.grad[i] * ((k == Bcast::BScalar) ? vb[0] : vb[i]);
                accumulate(pa, c);
            }
        }
        if (pb.requires_grad) {
            if (k == Bcast::BScalar) {
                double s = 0;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) s += n.grad[i] * va[i];
                accumulate_scalar(pb, s);
            } else {
                Tensor c(n.grad.shape());
                for (std::size_t i = 0; i < c.numel(); ++i)
                    c[i] = n.grad[i] * ((k == Bcast::AScalar) ? va[0] : va[i]);
                accumulate(pb, c);
            }
        }
    });
}

Variable mul(const Variable& a, double b) { return mul(a, Variable(Tensor::scalar(b))); }

namespace {
// Sign-preserving denominator clamp; 0 counts as positive.
inline double clamp_den(double d) {
    if (d >= 0) return std::max(d, kDivEps);
    return std::min(d, -kDivEps);
}
} // namespace

Variable div(const Variable& a, const Variable& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    Bcast k = bcast_kind(ta, tb, "div");
    Tensor out = (k == Bcast::AScalar) ? Tensor(tb.shape()) : Tensor(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = (k == Bcast::AScalar) ? ta[0] : ta[i];
        double y = (k == Bcast::BScalar) ? tb[0] : tb[i];
        out[i] = x / clamp_den(y);
    }
    return make_op(std::move(out), {a, b}, [k](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const Tensor& va = pa.value;
        const Tensor& vb = pb.value;
        auto bval = [&](std::size_t i) { return (k == Bcast::BScalar) ? vb[0] : vb[i]; };
        auto aval = [&](std::size_t i) { return (k == Bcast::AScalar) ? va[0] : va[i]; };
        if (pa.requires_grad) {
            if (k == Bcast::AScalar) {
                double s = 0;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) s += n.grad[i] / clamp_den(vb[i]);
                accumulate_scalar(pa, s);
            } else {
                Tensor c(n.grad.shape());
                for (std::size_t i = 0; i < c.numel(); ++i) c[i] = n.grad[i] / clamp_den(bval(i));
                accumulate(pa, c);
            }
        }
        if (pb.requires_grad) {
            // In the clamped region the output is a/const, so d/db == 0.
            if (k == Bcast::BScalar) {
                double s = 0;
                double d = vb[0];
                if (std::fabs(d) >= kDivEps)
                    for (std::size_t i = 0; i < n.grad.numel(); ++i)
                        s += -n.grad[i] * aval(i) / (d * d);
                accumulate_scalar(pb, s);
            } else {
                Tensor c(n.grad.shape(), 0.0);
                for (std::size_t i = 0; i < c.numel(); ++i) {
                    double d = bval(i);
                    if (std::fabs(d) >= kDivEps) c[i] = -n.grad[i] * aval(i) / (d * d);
                }
                accumulate(pb, c);
            }
        }
    });
}

Variable div(const Variable& a, double b) { return div(a, Variable(Tensor::scalar(b))); }

// -------------------------------------------------------------------------
// elementwise unary
// -------------------------------------------------------------------------

namespace {

Variable unary_op(const Variable& x, Tensor out,
                  std::function<double(double, double)> dgrad) {
    // dgrad(input_value, upstream) -> contribution
    return make_op(std::move(out), {x}, [dgrad](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor c(n.grad.shape());
        for (std::size_t i = 0; i < c.numel(); ++i) c[i] = dgrad(p.value[i], n.grad[i]);
        accumulate(p, c);
    });
}

} // namespace

Variable relu(const Variable& x) {
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(x.value()[i], 0.0);
    return unary_op(x, std::move(out),
                    [](double v, double g) { return v > 0 ? g : 0.0; });
}

Variable sigmoid(const Variable& x) {
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double v = x.value()[i];
        // branch form avoids overflow of exp for large |v|
        out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    // n.value is the sigmoid output, reused for the s*(1-s) derivative
    return make_op(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) {
            double s = n.value[i];
            p.grad[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

Variable abs(const Variable& x) {
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(x.value()[i]);
    return unary_op(x, std::move(out), [](double v, double g) {
        return v > 0 ? g : (v < 0 ? -g : 0.0);
    });
}

Variable log(const Variable& x) {
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = std::log(std::max(x.value()[i], kLogEps));
    // Clamped region is flat, so its derivative is 0.
    return unary_op(x, std::move(out), [](double v, double g) {
        return v > kLogEps ? g / v : 0.0;
    });
}

Variable square(const Variable& x) {
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * x.value()[i];
    return unary_op(x, std::move(out), [](double v, double g) { return 2.0 * v * g; });
}

// -------------------------------------------------------------------------
// reductions
// -------------------------------------------------------------------------

Variable sum(const Variable& x) {
    double s = 0;
    for (std::size_t i = 0; i < x.value().numel(); ++i) s += x.value()[i];
    return make_op(Tensor::scalar(s), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        double g = n.grad[0];
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += g;
    });
}

namespace {

// For an axis-subset reduction, maps each input flat index to the output
// flat index it reduces into.
struct AxisReduction {
    std::vector<int> out_shape;
    std::vector<std::size_t> target; // input flat index -> output flat index
};

AxisReduction plan_reduction(const Tensor& x, const std::vector<int>& axes) {
    const auto& shape = x.shape();
    std::vector<bool> reduce(shape.size(), false);
    for (int a : axes) {
        if (a < 0 || a >= x.rank())
            throw DimensionError("reduce: axis " + std::to_string(a) +
                                 " out of range for rank " + std::to_string(x.rank()));
        if (reduce[static_cast<std::size_t>(a)])
            throw DimensionError("reduce: duplicate axis " + std::to_string(a));
        reduce[static_cast<std::size_t>(a)] = true;
    }
    AxisReduction plan;
    for (std::size_t d = 0; d < shape.size(); ++d)
        if (!reduce[d]) plan.out_shape.push_back(shape[d]);

    std::vector<std::size_t> out_strides(plan.out_shape.size());
    std::size_t stride = 1;
    for (int d = static_cast<int>(plan.out_shape.size()) - 1; d >= 0; --d) {
        out_strides[static_cast<std::size_t>(d)] = stride;
        stride *= static_cast<std::size_t>(plan.out_shape[static_cast<std::size_t>(d)]);
    }

    plan.target.resize(x.numel());
    std::vector<int> coord(shape.size(), 0);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        std::size_t out_idx = 0, od = 0;
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (!reduce[d]) {
                out_idx += static_cast<std::size_t>(coord[d]) * out_strides[od];
                ++od;
            }
        }
        plan.target[i] = out_idx;
        for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
            if (++coord[static_cast<std::size_t>(d)] < shape[static_cast<std::size_t>(d)]) break;
            coord[static_cast<std::size_t>(d)] = 0;
        }
    }
    return plan;
}

} // namespace

Variable sum(const Variable& x, const std::vector<int>& axes) {
    if (axes.empty() || axes.size() == static_cast<std::size_t>(x.value().rank())) {
        // still validate the axes before collapsing to a full reduction
        plan_reduction(x.value(), axes);
        return sum(x);
    }
    auto plan = std::make_shared<AxisReduction>(plan_reduction(x.value(), axes));
    Tensor out(plan->out_shape, 0.0);
    for (std::size_t i = 0; i < x.value().numel(); ++i) out[plan->target[i]] += x.value()[i];
    return make_op(std::move(out), {x}, [plan](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i)
            p.grad[i] += n.grad[plan->target[i]];
    });
}

Variable mean(const Variable& x) {
    // true division keeps identities like mean(ones(n)) == 1 exact
    return div(sum(x), static_cast<double>(x.value().numel()));
}

Variable mean(const Variable& x, const std::vector<int>& axes) {
    if (axes.empty() || axes.size() == static_cast<std::size_t>(x.value().rank()))
        return mean(x);
    std::size_t reduced = 1;
    for (int a : axes) {
        if (a < 0 || a >= x.value().rank())
            throw DimensionError("mean: axis " + std::to_string(a) + " out of range");
        reduced *= static_cast<std::size_t>(x.value().dim(a));
    }
    return div(sum(x, axes), Variable(Tensor::scalar(static_cast<double>(reduced))));
}

// -------------------------------------------------------------------------
// reshape
// -------------------------------------------------------------------------

Variable reshape(const Variable& x, std::vector<int> shape) {
    Tensor out(std::move(shape), std::vector<double>(x.value().data(),
                                                     x.value().data() + x.value().numel()));
    return make_op(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += n.grad[i];
    });
}

// -------------------------------------------------------------------------
// conv2d
// -------------------------------------------------------------------------

Variable conv2d(const Variable& input, const Variable& kernel, int stride, int padding) {
    const Tensor& in = input.value();
    const Tensor& k = kernel.value();
    if (in.rank() != 3)
        throw DimensionError("conv2d: input must be [C_in,H,W], got " + in.shape_str());
    if (k.rank() != 4)
        throw DimensionError("conv2d: kernel must be [C_out,C_in,kh,kw], got " + k.shape_str());
    if (stride < 1) throw ParameterError("conv2d: stride must be positive");
    if (padding < 0) throw ParameterError("conv2d: padding must be nonnegative");
    const int c_in = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int c_out = k.dim(0), kc = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    if (kc != c_in)
        throw DimensionError("conv2d: kernel C_in " + std::to_string(kc) +
                             " does not match input C_in " + std::to_string(c_in));
    if (kh > h + 2 * padding || kw > w + 2 * padding)
        throw DimensionError("conv2d: kernel exceeds padded input size");
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;

    // Valid output-x range for a kernel column c: 0 <= x*stride - padding + c < w.
    auto x_range = [](int offset, int stride_, int limit, int out_limit) {
        int lo = 0;
        if (offset < 0) lo = (-offset + stride_ - 1) / stride_;
        int hi = out_limit - 1;
        int max_from_limit = (limit - 1 - offset);
        if (max_from_limit < 0)
            hi = -1;
        else
            hi = std::min(hi, max_from_limit / stride_);
        return std::pair<int, int>(lo, hi);
    };

    Tensor out({c_out, oh, ow}, 0.0);
    for (int co = 0; co < c_out; ++co) {
        for (int ci = 0; ci < c_in; ++ci) {
            for (int r = 0; r < kh; ++r) {
                for (int c = 0; c < kw; ++c) {
                    const double kv = k.at4(co, ci, r, c);
                    const auto [x_lo, x_hi] = x_range(c - padding, stride, w, ow);
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * stride - padding + r;
                        if (iy < 0 || iy >= h) continue;
                        const double* in_row = in.data() + in.idx3(ci, iy, 0) + (c - padding);
                        double* out_row = out.data() + out.idx3(co, y, 0);
                        if (stride == 1) {
                            for (int x = x_lo; x <= x_hi; ++x) out_row[x] += kv * in_row[x];
                        } else {
                            for (int x = x_lo; x <= x_hi; ++x)
                                out_row[x] += kv * in_row[static_cast<std::size_t>(x) * stride];
                        }
                    }
                }
            }
        }
    }

    return make_op(std::move(out), {input, kernel}, [stride, padding, x_range](Node& n) {
        Node& pin = *n.parents[0];
        Node& pk = *n.parents[1];
        const Tensor& in = pin.value;
        const Tensor& k = pk.value;
        const int c_in = in.dim(0), h = in.dim(1), w = in.dim(2);
        const int c_out = k.dim(0), kh = k.dim(2), kw = k.dim(3);
        const int oh = n.value.dim(1), ow = n.value.dim(2);

        for (int co = 0; co < c_out; ++co) {
            for (int ci = 0; ci < c_in; ++ci) {
                for (int r = 0; r < kh; ++r) {
                    for (int c = 0; c < kw; ++c) {
                        const double kv = k.at4(co, ci, r, c);
                        const auto [x_lo, x_hi] = x_range(c - padding, stride, w, ow);
                        double kgrad = 0.0;
                        for (int y = 0; y < oh; ++y) {
                            const int iy = y * stride - padding + r;
                            if (iy < 0 || iy >= h) continue;
                            const double* g_row = n.grad.data() + n.grad.idx3(co, y, 0);
                            const double* in_row = in.data() + in.idx3(ci, iy, 0) + (c - padding);
                            double* gin_row = pin.requires_grad
                                                  ? pin.grad.data() + pin.grad.idx3(ci, iy, 0) + (c - padding)
                                                  : nullptr;
                            if (stride == 1) {
                                if (gin_row) {
                                    for (int x = x_lo; x <= x_hi; ++x) {
                                        const double g = g_row[x];
                                        kgrad += g * in_row[x];
                                        gin_row[x] += g * kv;
                                    }
                                } else {
                                    for (int x = x_lo; x <= x_hi; ++x) kgrad += g_row[x] * in_row[x];
                                }
                            } else {
                                for (int x = x_lo; x <= x_hi; ++x) {
                                    const std::size_t ix = static_cast<std::size_t>(x) * stride;
                                    const double g = g_row[x];
                                    kgrad += g * in_row[ix];
                                    if (gin_row) gin_row[ix] += g * kv;
                                }
                            }
                        }
                        if (pk.requires_grad) pk.grad.at4(co, ci, r, c) += kgrad;
                    }
                }
            }
        }
    });
}

// -------------------------------------------------------------------------
// bilinear resize
// -------------------------------------------------------------------------

namespace {

struct LinearSample {
    int lo, hi;
    double w_lo, w_hi;
};

std::vector<LinearSample> resize_axis(int in_size, int out_size) {
    std::vector<LinearSample> s(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        if (src > in_size - 1) src = in_size - 1;
        int lo = static_cast<int>(std::floor(src));
        int hi = std::min(lo + 1, in_size - 1);
        double frac = src - lo;
        s[static_cast<std::size_t>(o)] = {lo, hi, 1.0 - frac, frac};
    }
    return s;
}

} // namespace

Variable bilinear_resize(const Variable& x, int out_h, int out_w) {
    const Tensor& in = x.value();
    if (in.rank() != 3)
        throw DimensionError("bilinear_resize: input must be [C,H,W], got " + in.shape_str());
    if (out_h < 1 || out_w < 1)
        throw ParameterError("bilinear_resize: output dims must be >= 1");
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    auto rows = std::make_shared<std::vector<LinearSample>>(resize_axis(h, out_h));
    auto cols = std::make_shared<std::vector<LinearSample>>(resize_axis(w, out_w));

    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < out_h; ++y) {
            const auto& ry = (*rows)[static_cast<std::size_t>(y)];
            for (int xo = 0; xo < out_w; ++xo) {
                const auto& cx = (*cols)[static_cast<std::size_t>(xo)];
                out.at3(ch, y, xo) = ry.w_lo * (cx.w_lo * in.at3(ch, ry.lo, cx.lo) +
                                                cx.w_hi * in.at3(ch, ry.lo, cx.hi)) +
                                     ry.w_hi * (cx.w_lo * in.at3(ch, ry.hi, cx.lo) +
                                                cx.w_hi * in.at3(ch, ry.hi, cx.hi));
            }
        }
    }

    return make_op(std::move(out), {x}, [rows, cols](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        const int c = p.value.dim(0);
        const int out_h = n.value.dim(1), out_w = n.value.dim(2);
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < out_h; ++y) {
                const auto& ry = (*rows)[static_cast<std::size_t>(y)];
                for (int xo = 0; xo < out_w; ++xo) {
                    const auto& cx = (*cols)[static_cast<std::size_t>(xo)];
                    const double g = n.grad.at3(ch, y, xo);
                    p.grad.at3(ch, ry.lo, cx.lo) += g * ry.w_lo * cx.w_lo;
                    p.grad.at3(ch, ry.lo, cx.hi) += g * ry.w_lo * cx.w_hi;
                    p.grad.at3(ch, ry.hi, cx.lo) += g * ry.w_hi * cx.w_lo;
                    p.grad.at3(ch, ry.hi, cx.hi) += g * ry.w_hi * cx.w_hi;
                }
            }
        }
    });
}

// -------------------------------------------------------------------------
// backward
// -------------------------------------------------------------------------

void backward(const Variable& root) {
    if (!root.value().is_scalar() || root.value().rank() != 0)
        throw UsageError("backward: root must be scalar-shaped, got " +
                         root.value().shape_str());

    // Iterative post-order DFS; parents are visited in construction order,
    // so the resulting schedule is deterministic.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    Node* r = root.node().get();
    if (r->requires_grad) {
        stack.push_back({r, 0});
        visited.insert(r);
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* parent = f.node->parents[f.next_parent++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        n->grad = Tensor::zeros_like(n->value);
        n->grad_ready = true;
    }
    if (order.empty()) return; // root does not require grad; nothing to do
    r->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

} // namespace sodsynth::ad

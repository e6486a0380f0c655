#include "vpkl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "vpkl/common.hpp"

namespace vpkl {

namespace {

void check_finite(const Tensor& t, const char* op) {
    if (debug_checks_enabled() && !t.all_finite()) {
        throw std::runtime_error(std::string("non-finite value produced by ") + op);
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                             b.shape_str() + " differ");
    }
}

}  // namespace

Graph::NodeId Graph::push(Node n) {
    check_finite(n.value, "op");
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Graph::NodeId Graph::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.needs_grad = requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_same_shape(ta, tb, "add");
    Node n;
    n.op = Op::Add;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.value = Tensor::uninitialized(ta.shape());
    for (int i = 0; i < ta.size(); ++i) n.value[i] = ta[i] + tb[i];
    return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_same_shape(ta, tb, "sub");
    Node n;
    n.op = Op::Sub;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.value = Tensor::uninitialized(ta.shape());
    for (int i = 0; i < ta.size(); ++i) n.value[i] = ta[i] - tb[i];
    return push(std::move(n));
}

Graph::NodeId Graph::scale(NodeId x, double c) {
    const Tensor& tx = value(x);
    Node n;
    n.op = Op::Scale;
    n.in0 = x;
    n.c = c;
    n.needs_grad = at(x).needs_grad;
    n.value = Tensor::uninitialized(tx.shape());
    for (int i = 0; i < tx.size(); ++i) n.value[i] = c * tx[i];
    return push(std::move(n));
}

Graph::NodeId Graph::add_const(NodeId x, double c) {
    const Tensor& tx = value(x);
    Node n;
    n.op = Op::AddConst;
    n.in0 = x;
    n.c = c;
    n.needs_grad = at(x).needs_grad;
    n.value = Tensor::uninitialized(tx.shape());
    for (int i = 0; i < tx.size(); ++i) n.value[i] = tx[i] + c;
    return push(std::move(n));
}

Graph::NodeId Graph::relu(NodeId x) {
    const Tensor& tx = value(x);
    Node n;
    n.op = Op::Relu;
    n.in0 = x;
    n.needs_grad = at(x).needs_grad;
    n.value = Tensor::uninitialized(tx.shape());
    for (int i = 0; i < tx.size(); ++i) n.value[i] = tx[i] > 0.0 ? tx[i] : 0.0;
    return push(std::move(n));
}

Graph::NodeId Graph::tanh(NodeId x) {
    const Tensor& tx = value(x);
    Node n;
    n.op = Op::Tanh;
    n.in0 = x;
    n.needs_grad = at(x).needs_grad;
    n.value = Tensor::uninitialized(tx.shape());
    for (int i = 0; i < tx.size(); ++i) n.value[i] = std::tanh(tx[i]);
    return push(std::move(n));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Node n;
    n.op = Op::Mul;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    if (ta.same_shape(tb)) {
        n.value = Tensor::uninitialized(ta.shape());
        for (int i = 0; i < ta.size(); ++i) n.value[i] = ta[i] * tb[i];
    } else if (ta.rank() == 1 && tb.rank() == 2 && ta.extent(0) == tb.extent(0)) {
        // Length-N weight broadcast over the rows of NxD.
        const int rows = tb.extent(0);
        const int cols = tb.extent(1);
        n.value = Tensor::uninitialized(tb.shape());
        for (int i = 0; i < rows; ++i) {
            const double w = ta[i];
            for (int j = 0; j < cols; ++j) n.value.at(i, j) = w * tb.at(i, j);
        }
    } else {
        throw DimensionError("mul: incompatible shapes " + ta.shape_str() + " and " +
                             tb.shape_str());
    }
    return push(std::move(n));
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.extent(1) != tb.extent(0)) {
        throw DimensionError("matmul: inner dimensions disagree for " + ta.shape_str() + " and " +
                             tb.shape_str());
    }
    const int p = ta.extent(0), q = ta.extent(1), r = tb.extent(1);
    Node n;
    n.op = Op::MatMul;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.value = Tensor::full({p, r}, 0.0);
    const double* pa = ta.data();
    const double* pb = tb.data();
    double* pc = n.value.data();
    for (int i = 0; i < p; ++i) {
        for (int kq = 0; kq < q; ++kq) {
            const double av = pa[i * q + kq];
            if (av == 0.0) continue;
            const double* brow = pb + kq * r;
            double* crow = pc + i * r;
            for (int j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::transpose(NodeId x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 2) throw DimensionError("transpose: rank-2 required, got " + tx.shape_str());
    const int p = tx.extent(0), q = tx.extent(1);
    Node n;
    n.op = Op::Transpose;
    n.in0 = x;
    n.needs_grad = at(x).needs_grad;
    n.value = Tensor::uninitialized({q, p});
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) n.value.at(j, i) = tx.at(i, j);
    return push(std::move(n));
}

Graph::NodeId Graph::conv1d_same(NodeId x, NodeId k, int dilation) {
    const Tensor& tx = value(x);
    const Tensor& tk = value(k);
    if (tx.rank() != 2 || tk.rank() != 3) {
        throw DimensionError("conv1d_same: expected [NxC_in] and [wxC_inxC_out], got " +
                             tx.shape_str() + " and " + tk.shape_str());
    }
    if (tk.extent(0) % 2 == 0) {
        throw ConfigError("conv1d_same: kernel width must be odd, got " +
                          std::to_string(tk.extent(0)));
    }
    if (dilation < 1) throw ConfigError("conv1d_same: dilation must be >= 1");
    if (tx.extent(1) != tk.extent(1)) {
        throw DimensionError("conv1d_same: channel mismatch between " + tx.shape_str() + " and " +
                             tk.shape_str());
    }
    const int frames = tx.extent(0), cin = tx.extent(1);
    const int w = tk.extent(0), cout = tk.extent(2);
    const int half = (w - 1) / 2;
    Node n;
    n.op = Op::Conv1d;
    n.in0 = x;
    n.in1 = k;
    n.dilation = dilation;
    n.needs_grad = at(x).needs_grad || at(k).needs_grad;
    n.value = Tensor::full({frames, cout}, 0.0);
    for (int t = 0; t < frames; ++t) {
        double* orow = n.value.data() + t * cout;
        for (int u = 0; u < w; ++u) {
            const int s = t + dilation * (u - half);
            if (s < 0 || s >= frames) continue;
            const double* xrow = tx.data() + s * cin;
            const double* kslab = tk.data() + u * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const double xv = xrow[ci];
                if (xv == 0.0) continue;
                const double* krow = kslab + ci * cout;
                for (int co = 0; co < cout; ++co) orow[co] += xv * krow[co];
            }
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::conv2d_same(NodeId x, NodeId k, int stride) {
    const Tensor& tx = value(x);
    const Tensor& tk = value(k);
    if (tx.rank() != 3 || tk.rank() != 4) {
        throw DimensionError("conv2d_same: expected [HxWxC_in] and [wxwxC_inxC_out], got " +
                             tx.shape_str() + " and " + tk.shape_str());
    }
    if (tk.extent(0) != tk.extent(1) || tk.extent(0) % 2 == 0) {
        throw ConfigError("conv2d_same: kernel must be square with odd width");
    }
    if (stride < 1) throw ConfigError("conv2d_same: stride must be >= 1");
    if (tx.extent(2) != tk.extent(2)) {
        throw DimensionError("conv2d_same: channel mismatch between " + tx.shape_str() + " and " +
                             tk.shape_str());
    }
    const int h = tx.extent(0), wdt = tx.extent(1), cin = tx.extent(2);
    const int kw = tk.extent(0), cout = tk.extent(3);
    const int ho = (h + stride - 1) / stride;
    const int wo = (wdt + stride - 1) / stride;
    const int pad_h = std::max((ho - 1) * stride + kw - h, 0) / 2;
    const int pad_w = std::max((wo - 1) * stride + kw - wdt, 0) / 2;
    Node n;
    n.op = Op::Conv2d;
    n.in0 = x;
    n.in1 = k;
    n.stride = stride;
    n.needs_grad = at(x).needs_grad || at(k).needs_grad;
    n.value = Tensor::full({ho, wo, cout}, 0.0);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            double* orow = n.value.data() + (oy * wo + ox) * cout;
            for (int ky = 0; ky < kw; ++ky) {
                const int iy = oy * stride + ky - pad_h;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride + kx - pad_w;
                    if (ix < 0 || ix >= wdt) continue;
                    const double* xrow = tx.data() + (iy * wdt + ix) * cin;
                    const double* kslab = tk.data() + (ky * kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double xv = xrow[ci];
                        if (xv == 0.0) continue;
                        const double* krow = kslab + ci * cout;
                        for (int co = 0; co < cout; ++co) orow[co] += xv * krow[co];
                    }
                }
            }
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::add_rowwise(NodeId x, NodeId b) {
    const Tensor& tx = value(x);
    const Tensor& tb = value(b);
    if (tx.rank() != 2 || tb.rank() != 1 || tx.extent(1) != tb.extent(0)) {
        throw DimensionError("add_rowwise: expected [NxC] and [C], got " + tx.shape_str() +
                             " and " + tb.shape_str());
    }
    const int rows = tx.extent(0), cols = tx.extent(1);
    Node n;
    n.op = Op::AddRowwise;
    n.in0 = x;
    n.in1 = b;
    n.needs_grad = at(x).needs_grad || at(b).needs_grad;
    n.value = Tensor::uninitialized(tx.shape());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) n.value.at(i, j) = tx.at(i, j) + tb[j];
    return push(std::move(n));
}

Graph::NodeId Graph::reduce(NodeId x, int axis, ReduceKind kind) {
    const Tensor& tx = value(x);
    if (axis < 0 || axis >= tx.rank()) {
        throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " +
                             tx.shape_str());
    }
    std::vector<int> out_shape;
    int outer = 1, inner = 1;
    const int nred = tx.extent(axis);
    for (int i = 0; i < tx.rank(); ++i) {
        if (i < axis) outer *= tx.extent(i);
        if (i > axis) inner *= tx.extent(i);
        if (i != axis) out_shape.push_back(tx.extent(i));
    }
    Node n;
    n.op = Op::Reduce;
    n.in0 = x;
    n.axis = axis;
    n.rk = kind;
    n.needs_grad = at(x).needs_grad;
    n.value = Tensor::uninitialized(out_shape);
    if (kind == ReduceKind::Max) n.argmax.assign(static_cast<size_t>(outer) * inner, 0);
    const double* px = tx.data();
    double* po = n.value.data();
    for (int o = 0; o < outer; ++o) {
        for (int i = 0; i < inner; ++i) {
            const int base = o * nred * inner + i;
            const int oi = o * inner + i;
            if (kind == ReduceKind::Max) {
                double best = px[base];
                int best_idx = 0;
                for (int r = 1; r < nred; ++r) {
                    const double v = px[base + r * inner];
                    if (v > best) {  // ties keep the lowest index
                        best = v;
                        best_idx = r;
                    }
                }
                po[oi] = best;
                n.argmax[static_cast<size_t>(oi)] = best_idx;
            } else {
                double acc = 0.0;
                for (int r = 0; r < nred; ++r) acc += px[base + r * inner];
                po[oi] = kind == ReduceKind::Mean ? acc / nred : acc;
            }
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::sum_all(NodeId x) {
    const Tensor& tx = value(x);
    Node n;
    n.op = Op::SumAll;
    n.in0 = x;
    n.needs_grad = at(x).needs_grad;
    double acc = 0.0;
    for (int i = 0; i < tx.size(); ++i) acc += tx[i];
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

Graph::NodeId Graph::cosine_similarity(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 1 || tb.rank() != 1 || ta.extent(0) != tb.extent(0)) {
        throw DimensionError("cosine_similarity: expected equal-length vectors, got " +
                             ta.shape_str() + " and " + tb.shape_str());
    }
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int i = 0; i < ta.size(); ++i) {
        dot += ta[i] * tb[i];
        na2 += ta[i] * ta[i];
        nb2 += tb[i] * tb[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    Node n;
    n.op = Op::Cosine;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    if (na < 1e-154 || nb < 1e-154) {
        if (debug_checks_enabled()) {
            // Zero-norm guard engaged; the op degrades to a constant 0.
            std::fprintf(stderr, "[vpkl] cosine_similarity: zero-norm input, returning 0\n");
        }
        n.c = 0.0;  // flags the degenerate case for backward
        n.value = Tensor::scalar(0.0);
    } else {
        n.c = 1.0;
        n.value = Tensor::scalar(dot / (na * nb + kCosineEps));
    }
    return push(std::move(n));
}

Graph::NodeId Graph::squared_error(NodeId x, double target) {
    const Tensor& tx = value(x);
    if (tx.size() != 1) {
        throw DimensionError("squared_error: scalar required, got " + tx.shape_str());
    }
    Node n;
    n.op = Op::SquaredError;
    n.in0 = x;
    n.c = target;
    n.needs_grad = at(x).needs_grad;
    const double d = tx[0] - target;
    n.value = Tensor::scalar(d * d);
    return push(std::move(n));
}

bool Graph::has_grad(NodeId id) const { return !at(id).grad.empty(); }

const Tensor& Graph::grad(NodeId id) const {
    const Node& n = at(id);
    if (n.grad.empty()) {
        throw std::runtime_error("grad requested for a node backward never reached");
    }
    return n.grad;
}

Tensor& Graph::grad_buffer(NodeId id) {
    Node& n = at(id);
    if (n.grad.empty()) n.grad = Tensor::full(n.value.shape(), 0.0);
    return n.grad;
}

void Graph::backward(NodeId loss) {
    if (loss < 0 || loss >= node_count()) throw UsageError("backward: invalid root node");
    Node& root = at(loss);
    if (root.value.size() != 1) {
        throw UsageError("backward: root must be a scalar, got shape " + root.value.shape_str());
    }
    grad_buffer(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = at(id);
        if (!n.needs_grad || n.grad.empty()) continue;
        backward_node(id);
    }
}

void Graph::backward_node(NodeId id) {
    Node& n = at(id);
    const Tensor& g = n.grad;
    auto needs = [&](NodeId in) { return in >= 0 && at(in).needs_grad; };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < g.size(); ++i) g0[i] += g[i];
            }
            if (needs(n.in1)) {
                Tensor& g1 = grad_buffer(n.in1);
                for (int i = 0; i < g.size(); ++i) g1[i] += g[i];
            }
            break;
        }
        case Op::Sub: {
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < g.size(); ++i) g0[i] += g[i];
            }
            if (needs(n.in1)) {
                Tensor& g1 = grad_buffer(n.in1);
                for (int i = 0; i < g.size(); ++i) g1[i] -= g[i];
            }
            break;
        }
        case Op::Scale: {
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < g.size(); ++i) g0[i] += n.c * g[i];
            }
            break;
        }
        case Op::AddConst: {
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < g.size(); ++i) g0[i] += g[i];
            }
            break;
        }
        case Op::Relu: {
            if (needs(n.in0)) {
                const Tensor& x = value(n.in0);
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < g.size(); ++i) {
                    if (x[i] > 0.0) g0[i] += g[i];
                }
            }
            break;
        }
        case Op::Tanh: {
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < g.size(); ++i) g0[i] += (1.0 - n.value[i] * n.value[i]) * g[i];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& a = value(n.in0);
            const Tensor& b = value(n.in1);
            if (a.same_shape(b)) {
                if (needs(n.in0)) {
                    Tensor& g0 = grad_buffer(n.in0);
                    for (int i = 0; i < g.size(); ++i) g0[i] += b[i] * g[i];
                }
                if (needs(n.in1)) {
                    Tensor& g1 = grad_buffer(n.in1);
                    for (int i = 0; i < g.size(); ++i) g1[i] += a[i] * g[i];
                }
            } else {
                const int rows = b.extent(0), cols = b.extent(1);
                if (needs(n.in0)) {
                    Tensor& g0 = grad_buffer(n.in0);
                    for (int i = 0; i < rows; ++i) {
                        double acc = 0.0;
                        for (int j = 0; j < cols; ++j) acc += g.at(i, j) * b.at(i, j);
                        g0[i] += acc;
                    }
                }
                if (needs(n.in1)) {
                    Tensor& g1 = grad_buffer(n.in1);
                    for (int i = 0; i < rows; ++i) {
                        const double w = a[i];
                        for (int j = 0; j < cols; ++j) g1.at(i, j) += w * g.at(i, j);
                    }
                }
            }
            break;
        }
        case Op::MatMul: {
            const Tensor& a = value(n.in0);
            const Tensor& b = value(n.in1);
            const int p = a.extent(0), q = a.extent(1), r = b.extent(1);
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < p; ++i) {
                    const double* grow = g.data() + i * r;
                    for (int kq = 0; kq < q; ++kq) {
                        const double* brow = b.data() + kq * r;
                        double acc = 0.0;
                        for (int j = 0; j < r; ++j) acc += grow[j] * brow[j];
                        g0.at(i, kq) += acc;
                    }
                }
            }
            if (needs(n.in1)) {
                Tensor& g1 = grad_buffer(n.in1);
                for (int i = 0; i < p; ++i) {
                    const double* grow = g.data() + i * r;
                    const double* arow = a.data() + i * q;
                    for (int kq = 0; kq < q; ++kq) {
                        const double av = arow[kq];
                        if (av == 0.0) continue;
                        double* g1row = g1.data() + kq * r;
                        for (int j = 0; j < r; ++j) g1row[j] += av * grow[j];
                    }
                }
            }
            break;
        }
        case Op::Transpose: {
            if (needs(n.in0)) {
                const int p = value(n.in0).extent(0), q = value(n.in0).extent(1);
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < q; ++j) g0.at(i, j) += g.at(j, i);
            }
            break;
        }
        case Op::Conv1d: {
            const Tensor& x = value(n.in0);
            const Tensor& k = value(n.in1);
            const int frames = x.extent(0), cin = x.extent(1);
            const int w = k.extent(0), cout = k.extent(2);
            const int half = (w - 1) / 2;
            const bool gx = needs(n.in0), gk = needs(n.in1);
            Tensor* g0 = gx ? &grad_buffer(n.in0) : nullptr;
            Tensor* g1 = gk ? &grad_buffer(n.in1) : nullptr;
            for (int t = 0; t < frames; ++t) {
                const double* grow = g.data() + t * cout;
                for (int u = 0; u < w; ++u) {
                    const int s = t + n.dilation * (u - half);
                    if (s < 0 || s >= frames) continue;
                    const double* xrow = x.data() + s * cin;
                    const double* kslab = k.data() + u * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* krow = kslab + ci * cout;
                        if (gx) {
                            double acc = 0.0;
                            for (int co = 0; co < cout; ++co) acc += grow[co] * krow[co];
                            g0->at(s, ci) += acc;
                        }
                        if (gk) {
                            const double xv = xrow[ci];
                            if (xv != 0.0) {
                                double* gkrow = g1->data() + (u * cin + ci) * cout;
                                for (int co = 0; co < cout; ++co) gkrow[co] += xv * grow[co];
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::Conv2d: {
            const Tensor& x = value(n.in0);
            const Tensor& k = value(n.in1);
            const int h = x.extent(0), wdt = x.extent(1), cin = x.extent(2);
            const int kw = k.extent(0), cout = k.extent(3);
            const int ho = n.value.extent(0), wo = n.value.extent(1);
            const int pad_h = std::max((ho - 1) * n.stride + kw - h, 0) / 2;
            const int pad_w = std::max((wo - 1) * n.stride + kw - wdt, 0) / 2;
            const bool gx = needs(n.in0), gk = needs(n.in1);
            Tensor* g0 = gx ? &grad_buffer(n.in0) : nullptr;
            Tensor* g1 = gk ? &grad_buffer(n.in1) : nullptr;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const double* grow = g.data() + (oy * wo + ox) * cout;
                    for (int ky = 0; ky < kw; ++ky) {
                        const int iy = oy * n.stride + ky - pad_h;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * n.stride + kx - pad_w;
                            if (ix < 0 || ix >= wdt) continue;
                            const double* xrow = x.data() + (iy * wdt + ix) * cin;
                            const double* kslab = k.data() + (ky * kw + kx) * cin * cout;
                            for (int ci = 0; ci < cin; ++ci) {
                                const double* krow = kslab + ci * cout;
                                if (gx) {
                                    double acc = 0.0;
                                    for (int co = 0; co < cout; ++co) acc += grow[co] * krow[co];
                                    g0->at(iy, ix, ci) += acc;
                                }
                                if (gk) {
                                    const double xv = xrow[ci];
                                    if (xv != 0.0) {
                                        double* gkrow =
                                            g1->data() + ((ky * kw + kx) * cin + ci) * cout;
                                        for (int co = 0; co < cout; ++co)
                                            gkrow[co] += xv * grow[co];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::AddRowwise: {
            const int rows = value(n.in0).extent(0), cols = value(n.in0).extent(1);
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                for (int i = 0; i < g.size(); ++i) g0[i] += g[i];
            }
            if (needs(n.in1)) {
                Tensor& g1 = grad_buffer(n.in1);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) g1[j] += g.at(i, j);
            }
            break;
        }
        case Op::Reduce: {
            if (!needs(n.in0)) break;
            const Tensor& x = value(n.in0);
            Tensor& g0 = grad_buffer(n.in0);
            int outer = 1, inner = 1;
            const int nred = x.extent(n.axis);
            for (int i = 0; i < x.rank(); ++i) {
                if (i < n.axis) outer *= x.extent(i);
                if (i > n.axis) inner *= x.extent(i);
            }
            for (int o = 0; o < outer; ++o) {
                for (int i = 0; i < inner; ++i) {
                    const int oi = o * inner + i;
                    const int base = o * nred * inner + i;
                    const double gv = g[oi];
                    switch (n.rk) {
                        case ReduceKind::Max:
                            g0[base + n.argmax[static_cast<size_t>(oi)] * inner] += gv;
                            break;
                        case ReduceKind::Mean: {
                            const double share = gv / nred;
                            for (int r = 0; r < nred; ++r) g0[base + r * inner] += share;
                            break;
                        }
                        case ReduceKind::Sum:
                            for (int r = 0; r < nred; ++r) g0[base + r * inner] += gv;
                            break;
                    }
                }
            }
            break;
        }
        case Op::SumAll: {
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                const double gv = g[0];
                for (int i = 0; i < g0.size(); ++i) g0[i] += gv;
            }
            break;
        }
        case Op::Cosine: {
            if (n.c == 0.0) break;  // zero-norm guard: constant output, zero gradient
            const Tensor& a = value(n.in0);
            const Tensor& b = value(n.in1);
            double dot = 0.0, na2 = 0.0, nb2 = 0.0;
            for (int i = 0; i < a.size(); ++i) {
                dot += a[i] * b[i];
                na2 += a[i] * a[i];
                nb2 += b[i] * b[i];
            }
            const double na = std::sqrt(na2), nb = std::sqrt(nb2);
            const double den = na * nb + kCosineEps;
            const double s = dot / den;
            const double gv = g[0];
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                const double ca = s * nb / (den * na);
                for (int i = 0; i < a.size(); ++i) g0[i] += gv * (b[i] / den - ca * a[i]);
            }
            if (needs(n.in1)) {
                Tensor& g1 = grad_buffer(n.in1);
                const double cb = s * na / (den * nb);
                for (int i = 0; i < b.size(); ++i) g1[i] += gv * (a[i] / den - cb * b[i]);
            }
            break;
        }
        case Op::SquaredError: {
            if (needs(n.in0)) {
                Tensor& g0 = grad_buffer(n.in0);
                g0[0] += g[0] * 2.0 * (value(n.in0)[0] - n.c);
            }
            break;
        }
    }
}

double gradient_check(
    const std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>& build,
    const std::vector<Tensor>& inputs, double h) {
    // Analytic pass.
    Graph g;
    std::vector<Graph::NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(g.leaf(t, true));
    const Graph::NodeId loss = build(g, ids);
    g.backward(loss);

    auto eval = [&](const std::vector<Tensor>& xs) {
        Graph gg;
        std::vector<Graph::NodeId> lids;
        lids.reserve(xs.size());
        for (const Tensor& t : xs) lids.push_back(gg.leaf(t, false));
        return gg.value(build(gg, lids)).item();
    };

    double worst = 0.0;
    std::vector<Tensor> probe = inputs;
    for (size_t which = 0; which < inputs.size(); ++which) {
        const Tensor* analytic = g.has_grad(ids[which]) ? &g.grad(ids[which]) : nullptr;
        for (int i = 0; i < probe[which].size(); ++i) {
            const double saved = probe[which][i];
            probe[which][i] = saved + h;
            const double fp = eval(probe);
            probe[which][i] = saved - h;
            const double fm = eval(probe);
            probe[which][i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double exact = analytic ? (*analytic)[i] : 0.0;
            const double rel = std::abs(exact - numeric) /
                               std::max({std::abs(exact), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace vpkl

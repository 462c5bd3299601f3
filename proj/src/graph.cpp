#include "fvita/nn/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "fvita/errors.hpp"

namespace fvita::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

namespace {

MapM mat(Tensor& t, int64_t rows, int64_t cols) {
    return MapM(t.data(), rows, cols);
}
CMapM cmat(const Tensor& t, int64_t rows, int64_t cols) {
    return CMapM(t.data(), rows, cols);
}

void check(bool cond, const char* msg) {
    if (!cond) throw ArgumentError(msg);
}

}  // namespace

Var make_leaf(Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

Var Graph::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = false;
    return track(node);
}

Var Graph::track(Var node) {
    tape_.push_back(node);
    return tape_.back();
}

void Graph::backward(const Var& loss) {
    check(grad_enabled_, "backward() on a no-grad graph");
    check(loss->value.size() == 1, "backward() expects a scalar loss");
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node* n = it->get();
        if (n->backward_fn && n->has_grad()) n->backward_fn();
    }
}

namespace {

Var new_op(Graph& g, Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = g.grad_enabled() && requires_grad;
    return node;
}

}  // namespace

// ---------------- elementwise ----------------

Var add(Graph& g, const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    Var r = new_op(g, std::move(out), a->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a, b]() {
            const Tensor& go = self->grad;
            if (a->requires_grad) {
                Tensor& ga = a->ensure_grad();
                for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b->requires_grad) {
                Tensor& gb = b->ensure_grad();
                for (int64_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        };
    }
    return g.track(r);
}

Var sub(Graph& g, const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    Var r = new_op(g, std::move(out), a->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a, b]() {
            const Tensor& go = self->grad;
            if (a->requires_grad) {
                Tensor& ga = a->ensure_grad();
                for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b->requires_grad) {
                Tensor& gb = b->ensure_grad();
                for (int64_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        };
    }
    return g.track(r);
}

Var mul(Graph& g, const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    Var r = new_op(g, std::move(out), a->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a, b]() {
            const Tensor& go = self->grad;
            if (a->requires_grad) {
                Tensor& ga = a->ensure_grad();
                for (int64_t i = 0; i < go.size(); ++i)
                    ga[i] += go[i] * b->value[i];
            }
            if (b->requires_grad) {
                Tensor& gb = b->ensure_grad();
                for (int64_t i = 0; i < go.size(); ++i)
                    gb[i] += go[i] * a->value[i];
            }
        };
    }
    return g.track(r);
}

Var scale(Graph& g, const Var& a, double s) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    Var r = new_op(g, std::move(out), a->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a, s]() {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < self->grad.size(); ++i)
                ga[i] += self->grad[i] * s;
        };
    }
    return g.track(r);
}

Var silu(Graph& g, const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-out[i]));
        out[i] *= s;
    }
    Var r = new_op(g, std::move(out), a->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a]() {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < self->grad.size(); ++i) {
                double x = a->value[i];
                double s = 1.0 / (1.0 + std::exp(-x));
                ga[i] += self->grad[i] * s * (1.0 + x * (1.0 - s));
            }
        };
    }
    return g.track(r);
}

Var sigmoid_op(Graph& g, const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Var r = new_op(g, std::move(out), a->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a]() {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < self->grad.size(); ++i) {
                double y = self->value[i];
                ga[i] += self->grad[i] * y * (1.0 - y);
            }
        };
    }
    return g.track(r);
}

// ---------------- dense ----------------

Var linear(Graph& g, const Var& x, const Var& w, const Var& b) {
    check(x->value.ndim() == 2 && w->value.ndim() == 2, "linear: need 2-D x, w");
    int n = x->value.dim(0), in = x->value.dim(1), out_dim = w->value.dim(1);
    check(w->value.dim(0) == in, "linear: x/w inner dim mismatch");
    check(b->value.size() == out_dim, "linear: bias dim mismatch");

    Tensor out({n, out_dim});
    mat(out, n, out_dim).noalias() =
        cmat(x->value, n, in) * cmat(w->value, in, out_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) out.at(i, j) += b->value[j];

    Var r = new_op(g, std::move(out),
                   x->requires_grad || w->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, w, b, n, in, out_dim]() {
            CMapM go = cmat(self->grad, n, out_dim);
            if (x->requires_grad)
                mat(x->ensure_grad(), n, in).noalias() +=
                    go * cmat(w->value, in, out_dim).transpose();
            if (w->requires_grad)
                mat(w->ensure_grad(), in, out_dim).noalias() +=
                    cmat(x->value, n, in).transpose() * go;
            if (b->requires_grad) {
                Tensor& gb = b->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < out_dim; ++j)
                        gb[j] += self->grad.at(i, j);
            }
        };
    }
    return g.track(r);
}

Var matmul(Graph& g, const Var& a, const Var& b) {
    check(a->value.ndim() == 2 && b->value.ndim() == 2, "matmul: need 2-D");
    int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    check(b->value.dim(0) == k, "matmul: inner dim mismatch");
    Tensor out({m, n});
    mat(out, m, n).noalias() = cmat(a->value, m, k) * cmat(b->value, k, n);
    Var r = new_op(g, std::move(out), a->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a, b, m, k, n]() {
            CMapM go = cmat(self->grad, m, n);
            if (a->requires_grad)
                mat(a->ensure_grad(), m, k).noalias() +=
                    go * cmat(b->value, k, n).transpose();
            if (b->requires_grad)
                mat(b->ensure_grad(), k, n).noalias() +=
                    cmat(a->value, m, k).transpose() * go;
        };
    }
    return g.track(r);
}

// ---------------- conv ----------------

namespace {

struct ConvDims {
    int n, c, h, w, o, kh, kw, stride, pad, ho, wo;
};

void im2col(const Tensor& x, const ConvDims& d, Tensor& col) {
    // col: [c*kh*kw, n*ho*wo]
    const int64_t cols = int64_t(d.n) * d.ho * d.wo;
    for (int n = 0; n < d.n; ++n) {
        const double* xn = x.data() + int64_t(n) * d.c * d.h * d.w;
        for (int c = 0; c < d.c; ++c) {
            const double* xc = xn + int64_t(c) * d.h * d.w;
            for (int ky = 0; ky < d.kh; ++ky)
                for (int kx = 0; kx < d.kw; ++kx) {
                    double* crow = col.data() +
                                   (int64_t(c) * d.kh * d.kw + ky * d.kw + kx) * cols +
                                   int64_t(n) * d.ho * d.wo;
                    for (int oy = 0; oy < d.ho; ++oy) {
                        int iy = oy * d.stride - d.pad + ky;
                        if (iy < 0 || iy >= d.h) {
                            for (int ox = 0; ox < d.wo; ++ox)
                                crow[oy * d.wo + ox] = 0.0;
                            continue;
                        }
                        for (int ox = 0; ox < d.wo; ++ox) {
                            int ix = ox * d.stride - d.pad + kx;
                            crow[oy * d.wo + ox] =
                                (ix >= 0 && ix < d.w) ? xc[iy * d.w + ix] : 0.0;
                        }
                    }
                }
        }
    }
}

void col2im_add(const Tensor& col, const ConvDims& d, Tensor& dx) {
    const int64_t cols = int64_t(d.n) * d.ho * d.wo;
    for (int n = 0; n < d.n; ++n) {
        double* xn = dx.data() + int64_t(n) * d.c * d.h * d.w;
        for (int c = 0; c < d.c; ++c) {
            double* xc = xn + int64_t(c) * d.h * d.w;
            for (int ky = 0; ky < d.kh; ++ky)
                for (int kx = 0; kx < d.kw; ++kx) {
                    const double* crow =
                        col.data() +
                        (int64_t(c) * d.kh * d.kw + ky * d.kw + kx) * cols +
                        int64_t(n) * d.ho * d.wo;
                    for (int oy = 0; oy < d.ho; ++oy) {
                        int iy = oy * d.stride - d.pad + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        for (int ox = 0; ox < d.wo; ++ox) {
                            int ix = ox * d.stride - d.pad + kx;
                            if (ix >= 0 && ix < d.w)
                                xc[iy * d.w + ix] += crow[oy * d.wo + ox];
                        }
                    }
                }
        }
    }
}

}  // namespace

Var conv2d(Graph& g, const Var& x, const Var& w, const Var& b, int stride,
           int pad) {
    check(x->value.ndim() == 4 && w->value.ndim() == 4, "conv2d: need 4-D x, w");
    ConvDims d;
    d.n = x->value.dim(0);
    d.c = x->value.dim(1);
    d.h = x->value.dim(2);
    d.w = x->value.dim(3);
    d.o = w->value.dim(0);
    d.kh = w->value.dim(2);
    d.kw = w->value.dim(3);
    d.stride = stride;
    d.pad = pad;
    check(w->value.dim(1) == d.c, "conv2d: channel mismatch");
    check(b->value.size() == d.o, "conv2d: bias dim mismatch");
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    check(d.ho > 0 && d.wo > 0, "conv2d: output would be empty");

    const int64_t kdim = int64_t(d.c) * d.kh * d.kw;
    const int64_t cols = int64_t(d.n) * d.ho * d.wo;

    auto col = std::make_shared<Tensor>(
        std::vector<int>{int(kdim), int(cols)});
    im2col(x->value, d, *col);

    // y_mat = W [o, kdim] * col [kdim, cols]
    Tensor ymat({d.o, int(cols)});
    mat(ymat, d.o, cols).noalias() =
        cmat(w->value, d.o, kdim) * cmat(*col, kdim, cols);

    Tensor out({d.n, d.o, d.ho, d.wo});
    for (int n = 0; n < d.n; ++n)
        for (int o = 0; o < d.o; ++o) {
            const double* src = ymat.data() + int64_t(o) * cols +
                                int64_t(n) * d.ho * d.wo;
            double* dst = out.data() +
                          (int64_t(n) * d.o + o) * d.ho * d.wo;
            double bias = b->value[o];
            for (int p = 0; p < d.ho * d.wo; ++p) dst[p] = src[p] + bias;
        }

    Var r = new_op(g, std::move(out),
                   x->requires_grad || w->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, w, b, d, col, kdim, cols]() {
            // gather dY into [o, cols]
            Tensor gymat({d.o, int(cols)});
            for (int n = 0; n < d.n; ++n)
                for (int o = 0; o < d.o; ++o) {
                    const double* src = self->grad.data() +
                                        (int64_t(n) * d.o + o) * d.ho * d.wo;
                    double* dst = gymat.data() + int64_t(o) * cols +
                                  int64_t(n) * d.ho * d.wo;
                    std::copy(src, src + d.ho * d.wo, dst);
                }
            if (b->requires_grad) {
                Tensor& gb = b->ensure_grad();
                for (int o = 0; o < d.o; ++o) {
                    const double* row = gymat.data() + int64_t(o) * cols;
                    double acc = 0.0;
                    for (int64_t p = 0; p < cols; ++p) acc += row[p];
                    gb[o] += acc;
                }
            }
            if (w->requires_grad)
                mat(w->ensure_grad(), d.o, kdim).noalias() +=
                    cmat(gymat, d.o, cols) * cmat(*col, kdim, cols).transpose();
            if (x->requires_grad) {
                Tensor gcol({int(kdim), int(cols)});
                mat(gcol, kdim, cols).noalias() =
                    cmat(w->value, d.o, kdim).transpose() *
                    cmat(gymat, d.o, cols);
                col2im_add(gcol, d, x->ensure_grad());
            }
        };
    } else {
        col.reset();  // no backward: release im2col buffer immediately
    }
    return g.track(r);
}

Var upsample_nearest2(Graph& g, const Var& x) {
    check(x->value.ndim() == 4, "upsample: need 4-D");
    int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2),
        w = x->value.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    for (int i = 0; i < n * c; ++i) {
        const double* src = x->value.data() + int64_t(i) * h * w;
        double* dst = out.data() + int64_t(i) * 4 * h * w;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double v = src[y * w + xx];
                dst[(2 * y) * 2 * w + 2 * xx] = v;
                dst[(2 * y) * 2 * w + 2 * xx + 1] = v;
                dst[(2 * y + 1) * 2 * w + 2 * xx] = v;
                dst[(2 * y + 1) * 2 * w + 2 * xx + 1] = v;
            }
    }
    Var r = new_op(g, std::move(out), x->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, n, c, h, w]() {
            Tensor& gx = x->ensure_grad();
            for (int i = 0; i < n * c; ++i) {
                double* dst = gx.data() + int64_t(i) * h * w;
                const double* src = self->grad.data() + int64_t(i) * 4 * h * w;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        dst[y * w + xx] += src[(2 * y) * 2 * w + 2 * xx] +
                                           src[(2 * y) * 2 * w + 2 * xx + 1] +
                                           src[(2 * y + 1) * 2 * w + 2 * xx] +
                                           src[(2 * y + 1) * 2 * w + 2 * xx + 1];
            }
        };
    }
    return g.track(r);
}

Var group_norm(Graph& g, const Var& x, const Var& gamma, const Var& beta,
               int groups, double eps) {
    check(x->value.ndim() == 4, "group_norm: need 4-D");
    int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2),
        w = x->value.dim(3);
    check(c % groups == 0, "group_norm: channels not divisible by groups");
    check(gamma->value.size() == c && beta->value.size() == c,
          "group_norm: affine dim mismatch");
    const int cg = c / groups;
    const int64_t m = int64_t(cg) * h * w;  // elements per (sample, group)
    const int64_t hw = int64_t(h) * w;

    auto xhat = std::make_shared<Tensor>(x->value.shape());
    auto inv_std = std::make_shared<Tensor>(std::vector<int>{n, groups});
    Tensor out(x->value.shape());

    for (int ni = 0; ni < n; ++ni)
        for (int gi = 0; gi < groups; ++gi) {
            const double* base =
                x->value.data() + (int64_t(ni) * c + int64_t(gi) * cg) * hw;
            double mean = 0.0;
            for (int64_t i = 0; i < m; ++i) mean += base[i];
            mean /= double(m);
            double var = 0.0;
            for (int64_t i = 0; i < m; ++i) {
                double dvi = base[i] - mean;
                var += dvi * dvi;
            }
            var /= double(m);
            double is = 1.0 / std::sqrt(var + eps);
            inv_std->at(ni, gi) = is;
            double* xh = xhat->data() + (int64_t(ni) * c + int64_t(gi) * cg) * hw;
            double* yo = out.data() + (int64_t(ni) * c + int64_t(gi) * cg) * hw;
            for (int ci = 0; ci < cg; ++ci) {
                double ga = gamma->value[gi * cg + ci];
                double be = beta->value[gi * cg + ci];
                for (int64_t p = 0; p < hw; ++p) {
                    double v = (base[ci * hw + p] - mean) * is;
                    xh[ci * hw + p] = v;
                    yo[ci * hw + p] = ga * v + be;
                }
            }
        }

    Var r = new_op(g, std::move(out), x->requires_grad || gamma->requires_grad ||
                                          beta->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, gamma, beta, xhat, inv_std, n, c, groups, cg,
                          m, hw]() {
            const Tensor& go = self->grad;
            if (gamma->requires_grad || beta->requires_grad) {
                Tensor& gg = gamma->ensure_grad();
                Tensor& gb = beta->ensure_grad();
                for (int ni = 0; ni < n; ++ni)
                    for (int ci = 0; ci < c; ++ci) {
                        const double* gor = go.data() + (int64_t(ni) * c + ci) * hw;
                        const double* xhr =
                            xhat->data() + (int64_t(ni) * c + ci) * hw;
                        double sg = 0.0, sb = 0.0;
                        for (int64_t p = 0; p < hw; ++p) {
                            sg += gor[p] * xhr[p];
                            sb += gor[p];
                        }
                        gg[ci] += sg;
                        gb[ci] += sb;
                    }
            }
            if (x->requires_grad) {
                Tensor& gx = x->ensure_grad();
                for (int ni = 0; ni < n; ++ni)
                    for (int gi = 0; gi < groups; ++gi) {
                        const double is = inv_std->at(ni, gi);
                        const int64_t off = (int64_t(ni) * c + int64_t(gi) * cg) * hw;
                        // dxhat = dy * gamma
                        double s1 = 0.0, s2 = 0.0;
                        for (int ci = 0; ci < cg; ++ci) {
                            double ga = gamma->value[gi * cg + ci];
                            const double* gor = go.data() + off + ci * hw;
                            const double* xhr = xhat->data() + off + ci * hw;
                            for (int64_t p = 0; p < hw; ++p) {
                                double dxh = gor[p] * ga;
                                s1 += dxh;
                                s2 += dxh * xhr[p];
                            }
                        }
                        s1 /= double(m);
                        s2 /= double(m);
                        for (int ci = 0; ci < cg; ++ci) {
                            double ga = gamma->value[gi * cg + ci];
                            const double* gor = go.data() + off + ci * hw;
                            const double* xhr = xhat->data() + off + ci * hw;
                            double* gxr = gx.data() + off + ci * hw;
                            for (int64_t p = 0; p < hw; ++p) {
                                double dxh = gor[p] * ga;
                                gxr[p] += is * (dxh - s1 - xhr[p] * s2);
                            }
                        }
                    }
            }
        };
    }
    return g.track(r);
}

Var concat_channels(Graph& g, const Var& a, const Var& b) {
    check(a->value.ndim() == 4 && b->value.ndim() == 4, "concat: need 4-D");
    int n = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1),
        h = a->value.dim(2), w = a->value.dim(3);
    check(b->value.dim(0) == n && b->value.dim(2) == h && b->value.dim(3) == w,
          "concat: spatial/batch mismatch");
    const int64_t hw = int64_t(h) * w;
    Tensor out({n, ca + cb, h, w});
    for (int ni = 0; ni < n; ++ni) {
        std::copy(a->value.data() + int64_t(ni) * ca * hw,
                  a->value.data() + int64_t(ni + 1) * ca * hw,
                  out.data() + int64_t(ni) * (ca + cb) * hw);
        std::copy(b->value.data() + int64_t(ni) * cb * hw,
                  b->value.data() + int64_t(ni + 1) * cb * hw,
                  out.data() + int64_t(ni) * (ca + cb) * hw + ca * hw);
    }
    Var r = new_op(g, std::move(out), a->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a, b, n, ca, cb, hw]() {
            for (int ni = 0; ni < n; ++ni) {
                const double* src = self->grad.data() + int64_t(ni) * (ca + cb) * hw;
                if (a->requires_grad) {
                    double* dst = a->ensure_grad().data() + int64_t(ni) * ca * hw;
                    for (int64_t i = 0; i < ca * hw; ++i) dst[i] += src[i];
                }
                if (b->requires_grad) {
                    double* dst = b->ensure_grad().data() + int64_t(ni) * cb * hw;
                    for (int64_t i = 0; i < cb * hw; ++i)
                        dst[i] += src[ca * hw + i];
                }
            }
        };
    }
    return g.track(r);
}

Var add_channel_bias(Graph& g, const Var& x, const Var& bias) {
    check(x->value.ndim() == 4 && bias->value.ndim() == 2,
          "add_channel_bias: need x 4-D, bias 2-D");
    int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2),
        w = x->value.dim(3);
    check(bias->value.dim(0) == n && bias->value.dim(1) == c,
          "add_channel_bias: bias shape mismatch");
    const int64_t hw = int64_t(h) * w;
    Tensor out = x->value;
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            double bv = bias->value.at(ni, ci);
            double* dst = out.data() + (int64_t(ni) * c + ci) * hw;
            for (int64_t p = 0; p < hw; ++p) dst[p] += bv;
        }
    Var r = new_op(g, std::move(out), x->requires_grad || bias->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, bias, n, c, hw]() {
            if (x->requires_grad) {
                Tensor& gx = x->ensure_grad();
                for (int64_t i = 0; i < self->grad.size(); ++i)
                    gx[i] += self->grad[i];
            }
            if (bias->requires_grad) {
                Tensor& gb = bias->ensure_grad();
                for (int ni = 0; ni < n; ++ni)
                    for (int ci = 0; ci < c; ++ci) {
                        const double* src =
                            self->grad.data() + (int64_t(ni) * c + ci) * hw;
                        double acc = 0.0;
                        for (int64_t p = 0; p < hw; ++p) acc += src[p];
                        gb.at(ni, ci) += acc;
                    }
            }
        };
    }
    return g.track(r);
}

Var spatial_mean(Graph& g, const Var& x) {
    check(x->value.ndim() == 4, "spatial_mean: need 4-D");
    int n = x->value.dim(0), c = x->value.dim(1);
    const int64_t hw = int64_t(x->value.dim(2)) * x->value.dim(3);
    Tensor out({n, c});
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const double* src = x->value.data() + (int64_t(ni) * c + ci) * hw;
            double acc = 0.0;
            for (int64_t p = 0; p < hw; ++p) acc += src[p];
            out.at(ni, ci) = acc / double(hw);
        }
    Var r = new_op(g, std::move(out), x->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, n, c, hw]() {
            Tensor& gx = x->ensure_grad();
            for (int ni = 0; ni < n; ++ni)
                for (int ci = 0; ci < c; ++ci) {
                    double gv = self->grad.at(ni, ci) / double(hw);
                    double* dst = gx.data() + (int64_t(ni) * c + ci) * hw;
                    for (int64_t p = 0; p < hw; ++p) dst[p] += gv;
                }
        };
    }
    return g.track(r);
}

Var slice_batch(Graph& g, const Var& x, int index) {
    check(x->value.ndim() >= 1, "slice_batch: need batched tensor");
    int n = x->value.dim(0);
    check(index >= 0 && index < n, "slice_batch: index out of range");
    const int64_t stride = x->value.size() / n;
    std::vector<int> shape = x->value.shape();
    shape[0] = 1;
    Tensor out(shape);
    std::copy(x->value.data() + index * stride,
              x->value.data() + (index + 1) * stride, out.data());
    Var r = new_op(g, std::move(out), x->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, index, stride]() {
            double* dst = x->ensure_grad().data() + index * stride;
            for (int64_t i = 0; i < stride; ++i) dst[i] += self->grad[i];
        };
    }
    return g.track(r);
}

Var stack_batch(Graph& g, const std::vector<Var>& items) {
    check(!items.empty(), "stack_batch: empty list");
    const auto& s0 = items[0]->value.shape();
    check(s0[0] == 1, "stack_batch: items must have leading dim 1");
    const int64_t stride = items[0]->value.size();
    bool rg = false;
    for (const auto& it : items) {
        check(it->value.shape() == s0, "stack_batch: shape mismatch");
        rg = rg || it->requires_grad;
    }
    std::vector<int> shape = s0;
    shape[0] = int(items.size());
    Tensor out(shape);
    for (size_t i = 0; i < items.size(); ++i)
        std::copy(items[i]->value.data(), items[i]->value.data() + stride,
                  out.data() + int64_t(i) * stride);
    Var r = new_op(g, std::move(out), rg);
    if (r->requires_grad) {
        Node* self = r.get();
        auto parents = items;
        r->backward_fn = [self, parents, stride]() {
            for (size_t i = 0; i < parents.size(); ++i) {
                if (!parents[i]->requires_grad) continue;
                double* dst = parents[i]->ensure_grad().data();
                const double* src = self->grad.data() + int64_t(i) * stride;
                for (int64_t j = 0; j < stride; ++j) dst[j] += src[j];
            }
        };
    }
    return g.track(r);
}

Var to_tokens(Graph& g, const Var& x) {
    check(x->value.ndim() == 4 && x->value.dim(0) == 1,
          "to_tokens: need [1,C,H,W]");
    int c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    const int64_t t = int64_t(h) * w;
    Tensor out({int(t), c});
    for (int ci = 0; ci < c; ++ci) {
        const double* src = x->value.data() + int64_t(ci) * t;
        for (int64_t p = 0; p < t; ++p) out.at(int(p), ci) = src[p];
    }
    Var r = new_op(g, std::move(out), x->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, c, t]() {
            Tensor& gx = x->ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                double* dst = gx.data() + int64_t(ci) * t;
                for (int64_t p = 0; p < t; ++p)
                    dst[p] += self->grad.at(int(p), ci);
            }
        };
    }
    return g.track(r);
}

Var from_tokens(Graph& g, const Var& tok, int channels, int height, int width) {
    check(tok->value.ndim() == 2, "from_tokens: need [T,C]");
    const int64_t t = int64_t(height) * width;
    check(tok->value.dim(0) == t && tok->value.dim(1) == channels,
          "from_tokens: shape mismatch");
    Tensor out({1, channels, height, width});
    for (int ci = 0; ci < channels; ++ci) {
        double* dst = out.data() + int64_t(ci) * t;
        for (int64_t p = 0; p < t; ++p) dst[p] = tok->value.at(int(p), ci);
    }
    Var r = new_op(g, std::move(out), tok->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, tok, channels, t]() {
            Tensor& gt = tok->ensure_grad();
            for (int ci = 0; ci < channels; ++ci) {
                const double* src = self->grad.data() + int64_t(ci) * t;
                for (int64_t p = 0; p < t; ++p) gt.at(int(p), ci) += src[p];
            }
        };
    }
    return g.track(r);
}

Var assemble_rows(Graph& g, int n_rows, int dim,
                  const std::vector<int>& row_index,
                  const std::vector<Var>& rows) {
    check(row_index.size() == rows.size(), "assemble_rows: index/row mismatch");
    Tensor out({n_rows, dim});
    bool rg = false;
    for (size_t i = 0; i < rows.size(); ++i) {
        int r = row_index[i];
        check(r >= 0 && r < n_rows, "assemble_rows: row index out of range");
        check(rows[i]->value.size() == dim, "assemble_rows: row dim mismatch");
        std::copy(rows[i]->value.data(), rows[i]->value.data() + dim,
                  out.data() + int64_t(r) * dim);
        rg = rg || rows[i]->requires_grad;
    }
    Var r = new_op(g, std::move(out), rg);
    if (r->requires_grad) {
        Node* self = r.get();
        auto idx = row_index;
        auto parents = rows;
        r->backward_fn = [self, idx, parents, dim]() {
            for (size_t i = 0; i < parents.size(); ++i) {
                if (!parents[i]->requires_grad) continue;
                double* dst = parents[i]->ensure_grad().data();
                const double* src = self->grad.data() + int64_t(idx[i]) * dim;
                for (int j = 0; j < dim; ++j) dst[j] += src[j];
            }
        };
    }
    return g.track(r);
}

Var multihead_attention(Graph& g, const Var& q, const Var& k, const Var& v,
                        const std::vector<uint8_t>& active, int heads) {
    check(q->value.ndim() == 2 && k->value.ndim() == 2 && v->value.ndim() == 2,
          "mha: need 2-D q/k/v");
    const int t = q->value.dim(0), d = q->value.dim(1);
    const int s = k->value.dim(0);
    check(k->value.dim(1) == d && v->value.dim(0) == s && v->value.dim(1) == d,
          "mha: q/k/v dims inconsistent");
    check(d % heads == 0, "mha: dim not divisible by heads");
    check(int(active.size()) == s, "mha: active mask size mismatch");
    int n_active = 0;
    for (uint8_t a : active) n_active += a ? 1 : 0;
    check(n_active > 0, "mha: no active key slots");

    const int dh = d / heads;
    const double inv_scale = 1.0 / std::sqrt(double(dh));

    // attention weights per head, stored for backward: [heads, t, s]
    auto weights = std::make_shared<Tensor>(std::vector<int>{heads, t, s});
    Tensor out({t, d});

    CMapM qm = cmat(q->value, t, d);
    CMapM km = cmat(k->value, s, d);
    CMapM vm = cmat(v->value, s, d);
    MapM om = mat(out, t, d);

    for (int h = 0; h < heads; ++h) {
        RowMat scores = qm.middleCols(h * dh, dh) *
                        km.middleCols(h * dh, dh).transpose() * inv_scale;
        double* wbase = weights->data() + int64_t(h) * t * s;
        for (int ti = 0; ti < t; ++ti) {
            double m = -1e300;
            for (int si = 0; si < s; ++si)
                if (active[size_t(si)]) m = std::max(m, scores(ti, si));
            double z = 0.0;
            for (int si = 0; si < s; ++si) {
                double wv = 0.0;
                if (active[size_t(si)]) {
                    wv = std::exp(scores(ti, si) - m);
                    z += wv;
                }
                wbase[int64_t(ti) * s + si] = wv;
            }
            for (int si = 0; si < s; ++si) wbase[int64_t(ti) * s + si] /= z;
        }
        CMapM wm(wbase, t, s);
        om.middleCols(h * dh, dh).noalias() = wm * vm.middleCols(h * dh, dh);
    }

    Var r = new_op(g, std::move(out),
                   q->requires_grad || k->requires_grad || v->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        auto act = active;
        r->backward_fn = [self, q, k, v, weights, act, heads, t, s, d, dh,
                          inv_scale]() {
            CMapM go = cmat(self->grad, t, d);
            CMapM qm = cmat(q->value, t, d);
            CMapM km = cmat(k->value, s, d);
            CMapM vm = cmat(v->value, s, d);
            for (int h = 0; h < heads; ++h) {
                CMapM wm(weights->data() + int64_t(h) * t * s, t, s);
                // dV
                if (v->requires_grad)
                    mat(v->ensure_grad(), s, d).middleCols(h * dh, dh).noalias() +=
                        wm.transpose() * go.middleCols(h * dh, dh);
                if (!q->requires_grad && !k->requires_grad) continue;
                // dW = dOut_h * V_h^T
                RowMat dw = go.middleCols(h * dh, dh) *
                            vm.middleCols(h * dh, dh).transpose();
                // softmax backward (masked rows)
                RowMat ds(t, s);
                for (int ti = 0; ti < t; ++ti) {
                    double dot = 0.0;
                    for (int si = 0; si < s; ++si)
                        dot += wm(ti, si) * dw(ti, si);
                    for (int si = 0; si < s; ++si)
                        ds(ti, si) = act[size_t(si)]
                                         ? wm(ti, si) * (dw(ti, si) - dot)
                                         : 0.0;
                }
                ds *= inv_scale;
                if (q->requires_grad)
                    mat(q->ensure_grad(), t, d).middleCols(h * dh, dh).noalias() +=
                        ds * km.middleCols(h * dh, dh);
                if (k->requires_grad)
                    mat(k->ensure_grad(), s, d).middleCols(h * dh, dh).noalias() +=
                        ds.transpose() * qm.middleCols(h * dh, dh);
            }
        };
    }
    return g.track(r);
}

Var mean_all(Graph& g, const Var& x) {
    const int64_t n = x->value.size();
    check(n > 0, "mean_all: empty tensor");
    Tensor out({1});
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x->value[i];
    out[0] = acc / double(n);
    Var r = new_op(g, std::move(out), x->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, x, n]() {
            Tensor& gx = x->ensure_grad();
            double gv = self->grad[0] / double(n);
            for (int64_t i = 0; i < n; ++i) gx[i] += gv;
        };
    }
    return g.track(r);
}

Var mse(Graph& g, const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "mse: shape mismatch");
    const int64_t n = a->value.size();
    Tensor out({1});
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double dv = a->value[i] - b->value[i];
        acc += dv * dv;
    }
    out[0] = acc / double(n);
    Var r = new_op(g, std::move(out), a->requires_grad || b->requires_grad);
    if (r->requires_grad) {
        Node* self = r.get();
        r->backward_fn = [self, a, b, n]() {
            double gv = 2.0 * self->grad[0] / double(n);
            if (a->requires_grad) {
                Tensor& ga = a->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    ga[i] += gv * (a->value[i] - b->value[i]);
            }
            if (b->requires_grad) {
                Tensor& gb = b->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    gb[i] -= gv * (a->value[i] - b->value[i]);
            }
        };
    }
    return g.track(r);
}

}  // namespace fvita::nn

#include "stpc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "stpc/error.hpp"

namespace stpc::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

using ImplPtr = std::shared_ptr<TensorImpl>;

ImplPtr new_impl(Shape shape, std::vector<double> data) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return impl;
}

void record(std::string_view op, std::vector<ImplPtr> inputs, const ImplPtr& out, Tape::BackwardFn fn) {
    Tape::current().record(op, std::move(inputs), out, std::move(fn));
}

[[noreturn]] void shape_fail(std::string_view op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

bool is_suffix(const Shape& full, const Shape& tail) {
    if (tail.size() > full.size()) return false;
    return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, std::string_view op) {
    if (axis >= shape.size()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
    Shape out = shape;
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    return out;
}

// c[m,n] += op(a) op(b) for one batch slice. Accumulation runs over the inner
// dimension in ascending order for every output entry.
void small_gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, bool ta, const double* b,
                bool tb, double* c) {
    if (!tb) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = ta ? a[p * m + i] : a[i * k + p];
                double* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            const double* brow = b + j * k;
            if (ta) {
                for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
            } else {
                const double* arow = a + i * k;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            }
            c[i * n + j] += acc;
        }
    }
}

void gemm2d(std::size_t m, std::size_t n, std::size_t k, const double* a, bool ta, const double* b, bool tb,
            double* c, bool accumulate) {
    MapMat cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
               K = static_cast<Eigen::Index>(k);
    if (!accumulate) cm.setZero();
    if (!ta && !tb)
        cm.noalias() += CMapMat(a, M, K) * CMapMat(b, K, N);
    else if (ta && !tb)
        cm.noalias() += CMapMat(a, K, M).transpose() * CMapMat(b, K, N);
    else if (!ta && tb)
        cm.noalias() += CMapMat(a, M, K) * CMapMat(b, N, K).transpose();
    else
        cm.noalias() += CMapMat(a, K, M).transpose() * CMapMat(b, N, K).transpose();
}

template <typename F>
Tensor map_values(const Tensor& x, F&& f) {
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return Tensor(new_impl(x.shape(), std::move(out)));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    const bool batched = sa.size() == 3;
    if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3)) shape_fail("matmul", sa, sb);
    if (batched && sa[0] != sb[0]) shape_fail("matmul", sa, sb);
    const std::size_t r = sa.size();
    const std::size_t m = trans_a ? sa[r - 1] : sa[r - 2];
    const std::size_t k = trans_a ? sa[r - 2] : sa[r - 1];
    const std::size_t kb = trans_b ? sb[r - 1] : sb[r - 2];
    const std::size_t n = trans_b ? sb[r - 2] : sb[r - 1];
    if (k != kb) shape_fail("matmul", sa, sb);
    const std::size_t batch = batched ? sa[0] : 1;

    std::vector<double> out(batch * m * n, 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    if (batched) {
        for (std::size_t s = 0; s < batch; ++s)
            small_gemm(m, n, k, ad + s * m * k, trans_a, bd + s * k * n, trans_b, out.data() + s * m * n);
    } else {
        gemm2d(m, n, k, ad, trans_a, bd, trans_b, out.data(), false);
    }
    Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
    auto res = new_impl(std::move(shape), std::move(out));
    TensorImpl* A = a.impl();
    TensorImpl* B = b.impl();
    TensorImpl* C = res.get();
    record("matmul", {a.shared(), b.shared()}, res, [=] {
        const double* g = C->grad.data();
        for (std::size_t s = 0; s < batch; ++s) {
            const double* gs = g + s * m * n;
            const double* as = A->data.data() + s * m * k;
            const double* bs = B->data.data() + s * k * n;
            if (A->requires_grad) {
                double* ga = A->grad_buffer().data() + s * m * k;
                // d op(A) = G op(B)^T ; if trans_a store transposed: dA = op(B) G^T
                if (!trans_a) {
                    if (batched)
                        small_gemm(m, k, n, gs, false, bs, !trans_b, ga);
                    else
                        gemm2d(m, k, n, gs, false, bs, !trans_b, ga, true);
                } else {
                    if (batched)
                        small_gemm(k, m, n, bs, trans_b, gs, true, ga);
                    else
                        gemm2d(k, m, n, bs, trans_b, gs, true, ga, true);
                }
            }
            if (B->requires_grad) {
                double* gb = B->grad_buffer().data() + s * k * n;
                // d op(B) = op(A)^T G ; if trans_b store transposed: dB = G^T op(A)
                if (!trans_b) {
                    if (batched)
                        small_gemm(k, n, m, as, !trans_a, gs, false, gb);
                    else
                        gemm2d(k, n, m, as, !trans_a, gs, false, gb, true);
                } else {
                    if (batched)
                        small_gemm(n, k, m, gs, true, as, trans_a, gb);
                    else
                        gemm2d(n, k, m, gs, true, as, trans_a, gb, true);
                }
            }
        }
    });
    return Tensor(res);
}

namespace {

enum class Binary { Add, Sub, Mul };

Tensor binary(std::string_view op, Binary kind, const Tensor& a, const Tensor& b) {
    if (!is_suffix(a.shape(), b.shape())) shape_fail(op, a.shape(), b.shape());
    const std::size_t na = a.numel();
    const std::size_t nb = b.numel();
    std::vector<double> out(na);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < na; ++i) {
        const double bv = bd[nb ? i % nb : 0];
        switch (kind) {
            case Binary::Add: out[i] = ad[i] + bv; break;
            case Binary::Sub: out[i] = ad[i] - bv; break;
            case Binary::Mul: out[i] = ad[i] * bv; break;
        }
    }
    auto res = new_impl(a.shape(), std::move(out));
    TensorImpl* A = a.impl();
    TensorImpl* B = b.impl();
    TensorImpl* C = res.get();
    record(op, {a.shared(), b.shared()}, res, [=] {
        const auto& g = C->grad;
        if (A->requires_grad) {
            auto& ga = A->grad_buffer();
            for (std::size_t i = 0; i < na; ++i)
                ga[i] += kind == Binary::Mul ? g[i] * B->data[i % nb] : g[i];
        }
        if (B->requires_grad) {
            auto& gb = B->grad_buffer();
            for (std::size_t i = 0; i < na; ++i) {
                const std::size_t j = i % nb;
                switch (kind) {
                    case Binary::Add: gb[j] += g[i]; break;
                    case Binary::Sub: gb[j] -= g[i]; break;
                    case Binary::Mul: gb[j] += g[i] * A->data[i]; break;
                }
            }
        }
    });
    return Tensor(res);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::Mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
    Tensor out = map_values(x, [factor](double v) { return v * factor; });
    TensorImpl* X = x.impl();
    TensorImpl* Y = out.impl();
    record("scale", {x.shared()}, out.shared(), [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += Y->grad[i] * factor;
    });
    return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    if (!is_suffix(shape, x.shape())) shape_fail("broadcast_to", x.shape(), shape);
    const std::size_t nx = x.numel();
    std::vector<double> out(shape_numel(shape));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i % nx];
    auto res = new_impl(shape, std::move(out));
    TensorImpl* X = x.impl();
    TensorImpl* Y = res.get();
    record("broadcast", {x.shared()}, res, [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < Y->grad.size(); ++i) gx[i % nx] += Y->grad[i];
    });
    return Tensor(res);
}

Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out = map_values(x, [slope](double v) { return v > 0.0 ? v : slope * v; });
    TensorImpl* X = x.impl();
    TensorImpl* Y = out.impl();
    record("leaky_relu", {x.shared()}, out.shared(), [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += X->data[i] > 0.0 ? Y->grad[i] : slope * Y->grad[i];
    });
    return out;
}

Tensor exp(const Tensor& x) {
    Tensor out = map_values(x, [](double v) { return std::exp(v); });
    TensorImpl* X = x.impl();
    TensorImpl* Y = out.impl();
    record("exp", {x.shared()}, out.shared(), [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += Y->grad[i] * Y->data[i];
    });
    return out;
}

Tensor log(const Tensor& x) {
    Tensor out = map_values(x, [](double v) { return std::log(v); });
    TensorImpl* X = x.impl();
    TensorImpl* Y = out.impl();
    record("log", {x.shared()}, out.shared(), [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += Y->grad[i] / X->data[i];
    });
    return out;
}

Tensor concat_last(std::initializer_list<Tensor> parts) {
    return concat_last(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_last(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_last: no inputs");
    Shape lead = parts[0].shape();
    if (lead.empty()) throw ShapeError("concat_last: scalar input");
    lead.pop_back();
    const std::size_t rows = shape_numel(lead);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape l = p.shape();
        if (l.empty()) throw ShapeError("concat_last: scalar input");
        const std::size_t w = l.back();
        l.pop_back();
        if (l != lead) shape_fail("concat_last", parts[0].shape(), p.shape());
        widths.push_back(w);
        total += w;
    }
    std::vector<double> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t q = 0; q < parts.size(); ++q) {
        const auto d = parts[q].data();
        const std::size_t w = widths[q];
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(d.data() + r * w, w, out.data() + r * total + offset);
        offset += w;
    }
    Shape shape = lead;
    shape.push_back(total);
    auto res = new_impl(std::move(shape), std::move(out));
    std::vector<ImplPtr> inputs;
    for (const auto& p : parts) inputs.push_back(p.shared());
    std::vector<TensorImpl*> raw;
    for (const auto& p : parts) raw.push_back(p.impl());
    TensorImpl* Y = res.get();
    record("concat", inputs, res, [=] {
        std::size_t off = 0;
        for (std::size_t q = 0; q < raw.size(); ++q) {
            const std::size_t w = widths[q];
            if (raw[q]->requires_grad) {
                auto& g = raw[q]->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j) g[r * w + j] += Y->grad[r * total + off + j];
            }
            off += w;
        }
    });
    return Tensor(res);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
    auto res = new_impl(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    TensorImpl* X = x.impl();
    TensorImpl* Y = res.get();
    record("reshape", {x.shared()}, res, [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += Y->grad[i];
    });
    return Tensor(res);
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index) {
    if (x.rank() < 1) throw ShapeError("gather_rows: scalar input");
    const std::size_t rows = x.dim(0);
    const std::size_t width = rows ? x.numel() / rows : 0;
    std::vector<double> out(index.size() * width);
    const double* xd = x.data().data();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto r = index[i];
        if (r < 0 || static_cast<std::size_t>(r) >= rows) {
            throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range for " +
                             shape_str(x.shape()));
        }
        std::copy_n(xd + static_cast<std::size_t>(r) * width, width, out.data() + i * width);
    }
    Shape shape = x.shape();
    shape[0] = index.size();
    auto res = new_impl(std::move(shape), std::move(out));
    std::vector<std::int64_t> idx(index.begin(), index.end());
    TensorImpl* X = x.impl();
    TensorImpl* Y = res.get();
    record("gather", {x.shared()}, res, [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double* dst = gx.data() + static_cast<std::size_t>(idx[i]) * width;
            const double* src = Y->grad.data() + i * width;
            for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
        }
    });
    return Tensor(res);
}

Tensor sum(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "sum");
    std::vector<double> out(s.outer * s.inner, 0.0);
    const double* xd = x.data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        double* dst = out.data() + o * s.inner;
        for (std::size_t k = 0; k < s.extent; ++k) {
            const double* src = xd + (o * s.extent + k) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    }
    auto res = new_impl(drop_axis(x.shape(), axis), std::move(out));
    TensorImpl* X = x.impl();
    TensorImpl* Y = res.get();
    record("sum", {x.shared()}, res, [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < s.extent; ++k)
                for (std::size_t i = 0; i < s.inner; ++i)
                    gx[(o * s.extent + k) * s.inner + i] += Y->grad[o * s.inner + i];
    });
    return Tensor(res);
}

Tensor mean(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "mean");
    return scale(sum(x, axis), 1.0 / static_cast<double>(s.extent));
}

Tensor max(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "max");
    if (s.extent == 0) throw ShapeError("max: empty axis");
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> arg(s.outer * s.inner);
    const double* xd = x.data().data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            std::size_t best = 0;
            double bv = xd[o * s.extent * s.inner + i];
            for (std::size_t k = 1; k < s.extent; ++k) {
                const double v = xd[(o * s.extent + k) * s.inner + i];
                if (v > bv) {
                    bv = v;
                    best = k;
                }
            }
            out[o * s.inner + i] = bv;
            arg[o * s.inner + i] = best;
        }
    auto res = new_impl(drop_axis(x.shape(), axis), std::move(out));
    TensorImpl* X = x.impl();
    TensorImpl* Y = res.get();
    record("max", {x.shared()}, res, [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t j = o * s.inner + i;
                gx[(o * s.extent + arg[j]) * s.inner + i] += Y->grad[j];
            }
    });
    return Tensor(res);
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    auto res = new_impl(Shape{}, {acc});
    TensorImpl* X = x.impl();
    TensorImpl* Y = res.get();
    record("sum_all", {x.shared()}, res, [=] {
        auto& gx = X->grad_buffer();
        for (double& g : gx) g += Y->grad[0];
    });
    return Tensor(res);
}

Tensor mean_all(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "softmax");
    const double* xd = x.data().data();
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (!std::isfinite(xd[i])) throw std::domain_error("softmax: non-finite input");
    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, xd[base + k * s.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < s.extent; ++k) {
                const double e = std::exp(xd[base + k * s.inner] - mx);
                out[base + k * s.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= z;
        }
    auto res = new_impl(x.shape(), std::move(out));
    TensorImpl* X = x.impl();
    TensorImpl* Y = res.get();
    record("softmax", {x.shared()}, res, [=] {
        auto& gx = X->grad_buffer();
        const auto& y = Y->data;
        const auto& g = Y->grad;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < s.extent; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
                for (std::size_t k = 0; k < s.extent; ++k) {
                    const std::size_t j = base + k * s.inner;
                    gx[j] += y[j] * (g[j] - dot);
                }
            }
    });
    return Tensor(res);
}

Tensor threshold(const Tensor& x, double tau) {
    Tensor out = map_values(x, [tau](double v) { return v < tau ? 0.0 : v; });
    TensorImpl* X = x.impl();
    TensorImpl* Y = out.impl();
    record("threshold", {x.shared()}, out.shared(), [=] {
        auto& gx = X->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (!(X->data[i] < tau)) gx[i] += Y->grad[i];
    });
    return out;
}

Tensor cosine_similarity(const Tensor& x, const Tensor& y, double eps) {
    if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) shape_fail("cosine_similarity", x.shape(), y.shape());
    const std::size_t r = x.dim(0), m = y.dim(0), c = x.dim(1);
    const double* xd = x.data().data();
    const double* yd = y.data().data();
    std::vector<double> nx(r), ny(m);
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += xd[i * c + j] * xd[i * c + j];
        nx[i] = std::sqrt(acc);
    }
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += yd[i * c + j] * yd[i * c + j];
        ny[i] = std::sqrt(acc);
    }
    std::vector<double> dots(r * m);
    gemm2d(r, m, c, xd, false, yd, true, dots.data(), false);
    std::vector<double> out(r * m);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = dots[i * m + j] / (nx[i] * ny[j] + eps);
    auto res = new_impl(Shape{r, m}, std::move(out));
    TensorImpl* X = x.impl();
    TensorImpl* Yt = y.impl();
    TensorImpl* S = res.get();
    record("cosine_similarity", {x.shared(), y.shared()}, res,
           [=, nx = std::move(nx), ny = std::move(ny), dots = std::move(dots)] {
               const auto& g = S->grad;
               // w1 = g / D ; per-row and per-column norm-derivative weights
               std::vector<double> w1(r * m);
               std::vector<double> row_w(r, 0.0), col_w(m, 0.0);
               for (std::size_t i = 0; i < r; ++i)
                   for (std::size_t j = 0; j < m; ++j) {
                       const double d = nx[i] * ny[j] + eps;
                       const double gi = g[i * m + j];
                       w1[i * m + j] = gi / d;
                       const double q = gi * dots[i * m + j] / (d * d);
                       row_w[i] += q * ny[j];
                       col_w[j] += q * nx[i];
                   }
               if (X->requires_grad) {
                   auto& gx = X->grad_buffer();
                   gemm2d(r, c, m, w1.data(), false, Yt->data.data(), false, gx.data(), true);
                   for (std::size_t i = 0; i < r; ++i) {
                       if (nx[i] <= 0.0) continue;
                       const double f = row_w[i] / nx[i];
                       for (std::size_t j = 0; j < c; ++j) gx[i * c + j] -= f * X->data[i * c + j];
                   }
               }
               if (Yt->requires_grad) {
                   auto& gy = Yt->grad_buffer();
                   gemm2d(m, c, r, w1.data(), true, X->data.data(), false, gy.data(), true);
                   for (std::size_t j = 0; j < m; ++j) {
                       if (ny[j] <= 0.0) continue;
                       const double f = col_w[j] / ny[j];
                       for (std::size_t q = 0; q < c; ++q) gy[j * c + q] -= f * Yt->data[j * c + q];
                   }
               }
           });
    return Tensor(res);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, int ignore_label) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be rank 2, got " + shape_str(logits.shape()));
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " rows");
    }
    const double* z = logits.data().data();
    std::vector<double> prob(n * c, 0.0);
    std::size_t count = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label == ignore_label) continue;
        if (label < 0 || static_cast<std::size_t>(label) >= c) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(c) + ")");
        }
        const double* row = z + i * c;
        const double mx = *std::max_element(row, row + c);
        double sum_exp = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            prob[i * c + j] = std::exp(row[j] - mx);
            sum_exp += prob[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) prob[i * c + j] /= sum_exp;
        total += std::log(sum_exp) + mx - row[label];
        ++count;
    }
    const double value = count ? total / static_cast<double>(count) : 0.0;
    auto res = new_impl(Shape{}, {value});
    std::vector<int> lab(labels.begin(), labels.end());
    TensorImpl* L = logits.impl();
    TensorImpl* Y = res.get();
    record("cross_entropy", {logits.shared()}, res, [=, prob = std::move(prob), lab = std::move(lab)] {
        auto& gl = L->grad_buffer();
        if (count == 0) return;
        const double gs = Y->grad[0] / static_cast<double>(count);
        for (std::size_t i = 0; i < n; ++i) {
            if (lab[i] == ignore_label) continue;
            for (std::size_t j = 0; j < c; ++j) {
                const double onehot = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                gl[i * c + j] += gs * (prob[i * c + j] - onehot);
            }
        }
    });
    return Tensor(res);
}

}  // namespace stpc::ad

// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "semanti/error.hpp"

namespace semanti {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename Real>
class Tape;

/// Immutable dense value; `node >= 0` means it is tracked on a tape.
template <typename Real>
struct TensorT {
    Shape shape;
    std::shared_ptr<std::vector<Real>> data;
    Tape<Real>* tape = nullptr;
    std::int64_t node = -1;

    TensorT() = default;
    TensorT(Shape s, std::vector<Real> v)
        : shape(std::move(s)), data(std::make_shared<std::vector<Real>>(std::move(v))) {
        if (data->size() != shape_size(shape))
            throw InvalidArgument("tensor data length does not match shape " + shape_str(shape));
    }

    static TensorT zeros(Shape s) {
        const std::size_t n = shape_size(s);
        return TensorT(std::move(s), std::vector<Real>(n, Real(0)));
    }

    std::size_t size() const { return data ? data->size() : 0; }
    bool requires_grad() const { return node >= 0; }
    const std::vector<Real>& values() const { return *data; }
    std::vector<Real>& values_mut() { return *data; }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    Real scalar() const {
        if (size() != 1) throw InvalidArgument("scalar() on tensor of shape " + shape_str(shape));
        return (*data)[0];
    }
};

using Tensor = TensorT<float>;

namespace detail {

// Multiplication by zero turns NaN and +-Inf into NaN and leaves every
// finite value at zero, so one summed flag checks the whole buffer.
template <typename Real>
inline void check_finite(const std::vector<Real>& v, const char* kind) {
    Real flag = Real(0);
    for (const Real x : v) flag += x * Real(0);
    if (!(flag == Real(0)))
        throw NumericError(std::string(kind) + ": non-finite output value");
}

// C(m×n) += A(m×k)·B(k×n). ikj order keeps the inner loop contiguous; the
// 4-deep k unroll cuts C-row read/write traffic. __restrict is required for
// vectorization and is safe because callers never alias C with A or B.
template <typename Real>
inline void mm_nn_acc(Real* __restrict C, const Real* __restrict A, const Real* __restrict B,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* __restrict crow = C + i * n;
        const Real* arow = A + i * k;
        const std::size_t k4 = k & ~std::size_t(3);
        std::size_t l = 0;
        for (; l < k4; l += 4) {
            const Real a0 = arow[l], a1 = arow[l + 1], a2 = arow[l + 2], a3 = arow[l + 3];
            const Real* __restrict b0 = B + l * n;
            const Real* __restrict b1 = b0 + n;
            const Real* __restrict b2 = b1 + n;
            const Real* __restrict b3 = b2 + n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; l < k; ++l) {
            const Real a = arow[l];
            const Real* __restrict brow = B + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C(k×n) += Aᵀ·D with A stored (m×k), D (m×n). Outer-product accumulation
// over pairs of rows; same aliasing contract as mm_nn_acc.
template <typename Real>
inline void mm_tn_acc(Real* __restrict C, const Real* __restrict A, const Real* __restrict D,
                      std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const Real* a0 = A + i * k;
        const Real* a1 = a0 + k;
        const Real* __restrict d0 = D + i * n;
        const Real* __restrict d1 = d0 + n;
        for (std::size_t j = 0; j < k; ++j) {
            const Real c0 = a0[j], c1 = a1[j];
            Real* __restrict crow = C + j * n;
            for (std::size_t l = 0; l < n; ++l) crow[l] += c0 * d0[l] + c1 * d1[l];
        }
    }
    for (; i < m; ++i) {
        const Real* arow = A + i * k;
        const Real* __restrict drow = D + i * n;
        for (std::size_t j = 0; j < k; ++j) {
            const Real a = arow[j];
            Real* __restrict crow = C + j * n;
            for (std::size_t l = 0; l < n; ++l) crow[l] += a * drow[l];
        }
    }
}

template <typename Real>
inline void transpose_into(std::vector<Real>& out, const Real* in, std::size_t rows,
                           std::size_t cols) {
    out.resize(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
}

}  // namespace detail

/// Single-owner record of a forward pass; backward() may run exactly once.
template <typename Real>
class Tape {
public:
    using T = TensorT<Real>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers a value as a differentiable leaf of this tape.
    T leaf(const T& t) {
        T out = t;
        out.tape = this;
        out.node = new_node(t.size(), nullptr);
        return out;
    }

    // ----- primitives -------------------------------------------------------

    T matmul(const T& a, const T& b) {
        require_2d(a, "matmul");
        require_2d(b, "matmul");
        if (a.shape[1] != b.shape[0])
            throw InvalidArgument("matmul: inner dimensions differ, " + shape_str(a.shape) +
                                  " x " + shape_str(b.shape));
        const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
        T out = T::zeros({m, n});
        detail::mm_nn_acc(out.data->data(), a.data->data(), b.data->data(), m, k, n);
        detail::check_finite(*out.data, "matmul");
        return record(out, {&a, &b}, [a = a.data, b = b.data, m, k, n](Ctx ctx) {
            if (ctx.in[0]) {
                // dA += dC · Bᵀ
                thread_local std::vector<Real> bt;
                detail::transpose_into(bt, b->data(), k, n);
                detail::mm_nn_acc(ctx.in[0]->data(), ctx.out.data(), bt.data(), m, n, k);
            }
            if (ctx.in[1])
                detail::mm_tn_acc(ctx.in[1]->data(), a->data(), ctx.out.data(), m, k, n);
        });
    }

    /// Elementwise add, or bias broadcast when b is 1-D over a's last axis.
    T add(const T& a, const T& b) {
        const bool bias = b.shape.size() == 1 && a.shape.size() >= 1 &&
                          a.shape.back() == b.shape[0] && a.shape != b.shape;
        if (!bias && a.shape != b.shape)
            throw InvalidArgument("add: shapes differ, " + shape_str(a.shape) + " vs " +
                                  shape_str(b.shape));
        T out = T::zeros(a.shape);
        const std::size_t n = bias ? b.shape[0] : a.size();
        const std::size_t rows = a.size() / (n == 0 ? 1 : n);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j)
                (*out.data)[r * n + j] = (*a.data)[r * n + j] + (*b.data)[bias ? j : r * n + j];
        detail::check_finite(*out.data, "add");
        return record(out, {&a, &b}, [rows, n, bias](Ctx ctx) {
            if (ctx.in[0])
                for (std::size_t i = 0; i < rows * n; ++i) (*ctx.in[0])[i] += ctx.out[i];
            if (ctx.in[1]) {
                if (bias) {
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) (*ctx.in[1])[j] += ctx.out[r * n + j];
                } else {
                    for (std::size_t i = 0; i < rows * n; ++i) (*ctx.in[1])[i] += ctx.out[i];
                }
            }
        });
    }

    T scale(const T& a, Real c) {
        T out = T::zeros(a.shape);
        for (std::size_t i = 0; i < a.size(); ++i) (*out.data)[i] = (*a.data)[i] * c;
        detail::check_finite(*out.data, "scale");
        return record(out, {&a}, [c](Ctx ctx) {
            if (ctx.in[0])
                for (std::size_t i = 0; i < ctx.out.size(); ++i) (*ctx.in[0])[i] += c * ctx.out[i];
        });
    }

    /// Exact-erf GELU: x·Φ(x) with Φ the standard normal CDF.
    T gelu(const T& a) {
        constexpr double inv_sqrt2 = 0.7071067811865476;
        T out = T::zeros(a.shape);
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double x = static_cast<double>((*a.data)[i]);
            (*out.data)[i] = static_cast<Real>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
        }
        detail::check_finite(*out.data, "gelu");
        return record(out, {&a}, [a = a.data](Ctx ctx) {
            if (!ctx.in[0]) return;
            constexpr double inv_sqrt2 = 0.7071067811865476;
            constexpr double inv_sqrt2pi = 0.3989422804014327;
            for (std::size_t i = 0; i < ctx.out.size(); ++i) {
                const double x = static_cast<double>((*a)[i]);
                const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                (*ctx.in[0])[i] += static_cast<Real>(cdf + x * pdf) * ctx.out[i];
            }
        });
    }

    T softmax_rows(const T& a) {
        require_2d(a, "softmax_rows");
        const std::size_t m = a.shape[0], n = a.shape[1];
        T out = T::zeros(a.shape);
        for (std::size_t r = 0; r < m; ++r) {
            const Real* x = a.data->data() + r * n;
            Real* y = out.data->data() + r * n;
            Real mx = x[0];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
            Real sum = 0;
            for (std::size_t j = 0; j < n; ++j) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            }
            const Real inv = Real(1) / sum;
            for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
        }
        detail::check_finite(*out.data, "softmax_rows");
        return record(out, {&a}, [y = out.data, m, n](Ctx ctx) {
            if (!ctx.in[0]) return;
            for (std::size_t r = 0; r < m; ++r) {
                const Real* yr = y->data() + r * n;
                const Real* gr = ctx.out.data() + r * n;
                Real dot = 0;
                for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
                Real* dx = ctx.in[0]->data() + r * n;
                for (std::size_t j = 0; j < n; ++j) dx[j] += yr[j] * (gr[j] - dot);
            }
        });
    }

    /// Per-row normalization over the last axis with learned gain/bias.
    T layer_norm(const T& a, const T& gain, const T& bias, Real eps = Real(1e-5)) {
        require_2d(a, "layer_norm");
        const std::size_t m = a.shape[0], n = a.shape[1];
        if (gain.shape != Shape{n} || bias.shape != Shape{n})
            throw InvalidArgument("layer_norm: gain/bias must be " + shape_str({n}) + ", got " +
                                  shape_str(gain.shape) + " and " + shape_str(bias.shape));
        T out = T::zeros(a.shape);
        auto xhat = std::make_shared<std::vector<Real>>(m * n);
        auto inv_std = std::make_shared<std::vector<Real>>(m);
        for (std::size_t r = 0; r < m; ++r) {
            const Real* x = a.data->data() + r * n;
            Real mu = 0;
            for (std::size_t j = 0; j < n; ++j) mu += x[j];
            mu /= static_cast<Real>(n);
            Real var = 0;
            for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
            var /= static_cast<Real>(n);
            const Real inv = Real(1) / std::sqrt(var + eps);
            (*inv_std)[r] = inv;
            for (std::size_t j = 0; j < n; ++j) {
                const Real xh = (x[j] - mu) * inv;
                (*xhat)[r * n + j] = xh;
                (*out.data)[r * n + j] = (*gain.data)[j] * xh + (*bias.data)[j];
            }
        }
        detail::check_finite(*out.data, "layer_norm");
        return record(out, {&a, &gain, &bias},
                      [xhat, inv_std, g = gain.data, m, n](Ctx ctx) {
                          for (std::size_t r = 0; r < m; ++r) {
                              const Real* gr = ctx.out.data() + r * n;
                              const Real* xh = xhat->data() + r * n;
                              if (ctx.in[1])
                                  for (std::size_t j = 0; j < n; ++j)
                                      (*ctx.in[1])[j] += gr[j] * xh[j];
                              if (ctx.in[2])
                                  for (std::size_t j = 0; j < n; ++j) (*ctx.in[2])[j] += gr[j];
                              if (ctx.in[0]) {
                                  Real mean_g = 0, mean_gx = 0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      const Real gj = gr[j] * (*g)[j];
                                      mean_g += gj;
                                      mean_gx += gj * xh[j];
                                  }
                                  mean_g /= static_cast<Real>(n);
                                  mean_gx /= static_cast<Real>(n);
                                  Real* dx = ctx.in[0]->data() + r * n;
                                  const Real inv = (*inv_std)[r];
                                  for (std::size_t j = 0; j < n; ++j) {
                                      const Real gj = gr[j] * (*g)[j];
                                      dx[j] += inv * (gj - mean_g - xh[j] * mean_gx);
                                  }
                              }
                          }
                      });
    }

    T mean(const T& a) {
        if (a.size() == 0) throw InvalidArgument("mean: empty tensor");
        Real s = 0;
        for (const Real x : *a.data) s += x;
        T out({}, {s / static_cast<Real>(a.size())});
        detail::check_finite(*out.data, "mean");
        return record(out, {&a}, [n = a.size()](Ctx ctx) {
            if (!ctx.in[0]) return;
            const Real d = ctx.out[0] / static_cast<Real>(n);
            for (std::size_t i = 0; i < n; ++i) (*ctx.in[0])[i] += d;
        });
    }

    T transpose(const T& a) {
        require_2d(a, "transpose");
        const std::size_t m = a.shape[0], n = a.shape[1];
        T out = T::zeros({n, m});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*out.data)[j * m + i] = (*a.data)[i * n + j];
        return record(out, {&a}, [m, n](Ctx ctx) {
            if (!ctx.in[0]) return;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*ctx.in[0])[i * n + j] += ctx.out[j * m + i];
        });
    }

    T reshape(const T& a, Shape s) {
        if (shape_size(s) != a.size())
            throw InvalidArgument("reshape: cannot view " + shape_str(a.shape) + " as " +
                                  shape_str(s));
        T out(std::move(s), *a.data);
        return record(out, {&a}, [](Ctx ctx) {
            if (!ctx.in[0]) return;
            for (std::size_t i = 0; i < ctx.out.size(); ++i) (*ctx.in[0])[i] += ctx.out[i];
        });
    }

    /// 2-D window copy: rows [r0, r0+rn), columns [c0, c0+cn).
    T slice(const T& a, std::size_t r0, std::size_t rn, std::size_t c0, std::size_t cn) {
        require_2d(a, "slice");
        const std::size_t m = a.shape[0], n = a.shape[1];
        if (r0 + rn > m || c0 + cn > n || rn == 0 || cn == 0)
            throw InvalidArgument("slice: window [" + std::to_string(r0) + "+" +
                                  std::to_string(rn) + ", " + std::to_string(c0) + "+" +
                                  std::to_string(cn) + ") outside " + shape_str(a.shape));
        T out = T::zeros({rn, cn});
        for (std::size_t i = 0; i < rn; ++i)
            for (std::size_t j = 0; j < cn; ++j)
                (*out.data)[i * cn + j] = (*a.data)[(r0 + i) * n + c0 + j];
        return record(out, {&a}, [r0, rn, c0, cn, n](Ctx ctx) {
            if (!ctx.in[0]) return;
            for (std::size_t i = 0; i < rn; ++i)
                for (std::size_t j = 0; j < cn; ++j)
                    (*ctx.in[0])[(r0 + i) * n + c0 + j] += ctx.out[i * cn + j];
        });
    }

    /// Concatenates 2-D tensors along axis 0 (rows) or 1 (columns).
    T concat(const std::vector<T>& parts, std::size_t axis) {
        if (parts.empty()) throw InvalidArgument("concat: no inputs");
        if (axis > 1) throw InvalidArgument("concat: axis must be 0 or 1");
        for (const T& p : parts) require_2d(p, "concat");
        const std::size_t other = axis == 0 ? 1 : 0;
        std::size_t total = 0;
        for (const T& p : parts) {
            if (p.shape[other] != parts[0].shape[other])
                throw InvalidArgument("concat: mismatched shapes " + shape_str(parts[0].shape) +
                                      " vs " + shape_str(p.shape));
            total += p.shape[axis];
        }
        Shape os = parts[0].shape;
        os[axis] = total;
        T out = T::zeros(os);
        const std::size_t n = os[1];
        std::size_t off = 0;
        std::vector<std::size_t> offs;
        for (const T& p : parts) {
            offs.push_back(off);
            const std::size_t pm = p.shape[0], pn = p.shape[1];
            for (std::size_t i = 0; i < pm; ++i)
                for (std::size_t j = 0; j < pn; ++j) {
                    const std::size_t oi = axis == 0 ? off + i : i;
                    const std::size_t oj = axis == 0 ? j : off + j;
                    (*out.data)[oi * n + oj] = (*p.data)[i * pn + j];
                }
            off += p.shape[axis];
        }
        std::vector<const T*> ins;
        std::vector<Shape> in_shapes;
        for (const T& p : parts) {
            ins.push_back(&p);
            in_shapes.push_back(p.shape);
        }
        return record_multi(out, ins, [offs, in_shapes, axis, n](MultiCtx ctx) {
            for (std::size_t p = 0; p < ctx.in.size(); ++p) {
                if (!ctx.in[p]) continue;
                const std::size_t pm = in_shapes[p][0], pn = in_shapes[p][1];
                for (std::size_t i = 0; i < pm; ++i)
                    for (std::size_t j = 0; j < pn; ++j) {
                        const std::size_t oi = axis == 0 ? offs[p] + i : i;
                        const std::size_t oj = axis == 0 ? j : offs[p] + j;
                        (*ctx.in[p])[i * pn + j] += ctx.out[oi * n + oj];
                    }
            }
        });
    }

    /// Mean over the batch of −log softmax(logits)[label], max-stabilized.
    T cross_entropy_with_logits(const T& logits, const std::vector<int>& labels) {
        require_2d(logits, "cross_entropy_with_logits");
        const std::size_t b = logits.shape[0], c = logits.shape[1];
        if (labels.size() != b)
            throw InvalidArgument("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                                  " labels for batch " + std::to_string(b));
        auto probs = std::make_shared<std::vector<Real>>(b * c);
        Real total = 0;
        for (std::size_t r = 0; r < b; ++r) {
            if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c)
                throw InvalidArgument("cross_entropy_with_logits: label " +
                                      std::to_string(labels[r]) + " out of range for " +
                                      std::to_string(c) + " classes");
            const Real* x = logits.data->data() + r * c;
            Real mx = x[0];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
            Real sum = 0;
            for (std::size_t j = 0; j < c; ++j) sum += std::exp(x[j] - mx);
            const Real lse = mx + std::log(sum);
            total += lse - x[labels[r]];
            for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(x[j] - lse);
        }
        T out({}, {total / static_cast<Real>(b)});
        detail::check_finite(*out.data, "cross_entropy_with_logits");
        return record(out, {&logits}, [probs, labels, b, c](Ctx ctx) {
            if (!ctx.in[0]) return;
            const Real g = ctx.out[0] / static_cast<Real>(b);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t j = 0; j < c; ++j) {
                    Real d = (*probs)[r * c + j];
                    if (static_cast<std::size_t>(labels[r]) == j) d -= Real(1);
                    (*ctx.in[0])[r * c + j] += g * d;
                }
        });
    }

    // ----- backward ---------------------------------------------------------

    void backward(const T& loss) {
        if (consumed_) throw Error("backward on a consumed tape");
        if (loss.node < 0 || loss.tape != this)
            throw InvalidArgument("backward: loss is not recorded on this tape");
        if (loss.size() != 1)
            throw InvalidArgument("backward: loss must be scalar, got " + shape_str(loss.shape));
        consumed_ = true;
        grads_.assign(nodes_.size(), {});
        grads_[loss.node] = {Real(1)};
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (grads_[i].empty() || !nodes_[i].back) continue;
            nodes_[i].back(i);
        }
    }

    /// Gradient of a tracked tensor; zeros if it never received one.
    const std::vector<Real>& grad(const T& t) {
        if (!consumed_) throw Error("grad() before backward()");
        if (t.node < 0 || t.tape != this)
            throw InvalidArgument("grad: tensor is not recorded on this tape");
        auto& g = grads_[t.node];
        if (g.empty()) g.assign(t.size(), Real(0));
        return g;
    }

    bool consumed() const { return consumed_; }

private:
    struct Node {
        std::function<void(std::size_t)> back;
        std::size_t size = 0;
        std::vector<std::int64_t> inputs;
    };

    struct Ctx {
        const std::vector<Real>& out;
        std::vector<Real>* in[3];
    };
    struct MultiCtx {
        const std::vector<Real>& out;
        std::vector<std::vector<Real>*> in;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<Real>> grads_;
    bool consumed_ = false;

    std::int64_t new_node(std::size_t size, std::function<void(std::size_t)> back) {
        nodes_.push_back(Node{std::move(back), size, {}});
        return static_cast<std::int64_t>(nodes_.size() - 1);
    }

    void require_2d(const T& t, const char* kind) {
        if (t.shape.size() != 2)
            throw InvalidArgument(std::string(kind) + ": expected 2-D tensor, got " +
                                  shape_str(t.shape));
        check_tape(t, kind);
    }

    void check_tape(const T& t, const char* kind) {
        if (t.node >= 0 && t.tape != this)
            throw InvalidArgument(std::string(kind) + ": input belongs to a different tape");
    }

    std::vector<Real>* grad_in(std::int64_t node, std::size_t size) {
        if (node < 0) return nullptr;
        auto& g = grads_[node];
        if (g.empty()) g.assign(size, Real(0));
        return &g;
    }

    template <typename F>
    T record(T out, std::initializer_list<const T*> ins, F&& backf) {
        bool tracked = false;
        for (const T* p : ins) {
            check_tape(*p, "primitive");
            tracked = tracked || p->node >= 0;
        }
        if (!tracked) return out;
        std::vector<std::int64_t> in_nodes;
        std::vector<std::size_t> in_sizes;
        for (const T* p : ins) {
            in_nodes.push_back(p->node);
            in_sizes.push_back(p->size());
        }
        out.tape = this;
        out.node = new_node(
            out.size(),
            [this, in_nodes, in_sizes, f = std::forward<F>(backf)](std::size_t self) {
                Ctx ctx{grads_[self], {nullptr, nullptr, nullptr}};
                for (std::size_t i = 0; i < in_nodes.size() && i < 3; ++i)
                    ctx.in[i] = grad_in(in_nodes[i], in_sizes[i]);
                f(ctx);
            });
        return out;
    }

    template <typename F>
    T record_multi(T out, const std::vector<const T*>& ins, F&& backf) {
        bool tracked = false;
        for (const T* p : ins) {
            check_tape(*p, "primitive");
            tracked = tracked || p->node >= 0;
        }
        if (!tracked) return out;
        std::vector<std::int64_t> in_nodes;
        std::vector<std::size_t> in_sizes;
        for (const T* p : ins) {
            in_nodes.push_back(p->node);
            in_sizes.push_back(p->size());
        }
        out.tape = this;
        out.node = new_node(
            out.size(),
            [this, in_nodes, in_sizes, f = std::forward<F>(backf)](std::size_t self) {
                MultiCtx ctx{grads_[self], {}};
                ctx.in.resize(in_nodes.size());
                for (std::size_t i = 0; i < in_nodes.size(); ++i)
                    ctx.in[i] = grad_in(in_nodes[i], in_sizes[i]);
                f(ctx);
            });
        return out;
    }
};

}  // namespace semanti

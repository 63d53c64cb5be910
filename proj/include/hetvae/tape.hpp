#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hetvae/array.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/params.hpp"

namespace hetvae {

enum class PrimitiveKind { sin, exp, softplus, relu };
enum class ReduceKind { sum, max, logsumexp };

constexpr int kAllAxes = -1;

namespace detail {

// C += A[m,k] * B[k,n]
inline void mm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = ai[l];
            const double* bl = b + l * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

// C += A[m,k] * B[n,k]^T
inline void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
            c[i * n + j] += acc;
        }
    }
}

// C += A[m,k]^T * B[m,n]
inline void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = ai[l];
            double* cl = c + l * n;
            for (std::size_t j = 0; j < n; ++j) cl[j] += av * bi[j];
        }
    }
}

inline double softplus_stable(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Broadcast plan between two shapes, trailing-dimension alignment. The
// patterns that occur on the hot paths (same shape, matrix + row, matrix +
// column, scalar) get dedicated loops; anything else goes through the
// general odometer.
struct BcPlan {
    enum class Kind { same, row_b, col_b, scalar_a, scalar_b, general };
    Kind kind = Kind::general;
    Shape out;
    std::vector<std::size_t> dims;     // out extents
    std::vector<std::size_t> ostride;  // out strides (row-major)
    std::vector<std::size_t> sa, sb;   // operand strides per out dim (0 where broadcast)
    std::size_t numel = 1;
    std::size_t rows = 0, cols = 0;    // for row_b / col_b
    bool same = false;                 // shapes identical: fast path
};

inline BcPlan make_bc_plan(const Shape& a, const Shape& b, const char* opname) {
    BcPlan p;
    if (a == b) {
        p.out = a;
        p.numel = shape_numel(a);
        p.same = true;
        p.kind = BcPlan::Kind::same;
        return p;
    }
    if (shape_numel(b) == 1) {
        p.out = a;
        p.numel = shape_numel(a);
        p.kind = BcPlan::Kind::scalar_b;
        return p;
    }
    if (shape_numel(a) == 1) {
        p.out = b;
        p.numel = shape_numel(b);
        p.kind = BcPlan::Kind::scalar_a;
        return p;
    }
    if (a.size() == 2 &&
        ((b.size() == 1 && b[0] == a[1]) || (b.size() == 2 && b[0] == 1 && b[1] == a[1]))) {
        p.out = a;
        p.numel = shape_numel(a);
        p.rows = a[0];
        p.cols = a[1];
        p.kind = BcPlan::Kind::row_b;
        return p;
    }
    if (a.size() == 2 && b.size() == 2 && b[0] == a[0] && b[1] == 1) {
        p.out = a;
        p.numel = shape_numel(a);
        p.rows = a[0];
        p.cols = a[1];
        p.kind = BcPlan::Kind::col_b;
        return p;
    }
    const std::size_t nd = std::max(a.size(), b.size());
    p.dims.resize(nd);
    p.sa.resize(nd);
    p.sb.resize(nd);
    std::vector<std::size_t> stra(a.size()), strb(b.size());
    for (std::size_t i = a.size(); i-- > 0;)
        stra[i] = (i + 1 < a.size()) ? stra[i + 1] * a[i + 1] : 1;
    for (std::size_t i = b.size(); i-- > 0;)
        strb[i] = (i + 1 < b.size()) ? strb[i + 1] * b[i + 1] : 1;
    for (std::size_t i = 0; i < nd; ++i) {
        const std::size_t ea = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        const std::size_t eb = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            throw dim_error(std::string(opname) + ": cannot broadcast " + shape_str(a) + " with " +
                            shape_str(b));
        p.dims[i] = std::max(ea, eb);
        p.sa[i] = (ea == 1) ? 0 : stra[i - (nd - a.size())];
        p.sb[i] = (eb == 1) ? 0 : strb[i - (nd - b.size())];
        p.numel *= p.dims[i];
    }
    p.out = p.dims;
    p.ostride.resize(nd);
    for (std::size_t i = nd; i-- > 0;)
        p.ostride[i] = (i + 1 < nd) ? p.ostride[i + 1] * p.dims[i + 1] : 1;
    return p;
}

inline std::pair<std::size_t, std::size_t> bc_offsets(const BcPlan& p, std::size_t o) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t k = 0; k < p.dims.size(); ++k) {
        const std::size_t idx = (o / p.ostride[k]) % p.dims[k];
        oa += idx * p.sa[k];
        ob += idx * p.sb[k];
    }
    return {oa, ob};
}

// Slice layout for one-axis reductions over rank <= 2 inputs.
struct SlicePlan {
    std::size_t nslices, len, stride, base_stride;
    Shape out_shape;
};

inline SlicePlan make_slice_plan(const Shape& in, int axis, bool keepdims, const char* name) {
    SlicePlan p;
    if (axis == kAllAxes) {
        p = {1, shape_numel(in), 1, 0, Shape{}};
    } else if (in.size() == 1) {
        if (axis != 0) throw dim_error(std::string(name) + ": axis out of range for rank 1");
        p = {1, in[0], 1, 0, keepdims ? Shape{1} : Shape{}};
    } else if (in.size() == 2) {
        if (axis == 0)
            p = {in[1], in[0], in[1], 1, keepdims ? Shape{1, in[1]} : Shape{in[1]}};
        else if (axis == 1)
            p = {in[0], in[1], 1, in[1], keepdims ? Shape{in[0], 1} : Shape{in[0]}};
        else
            throw dim_error(std::string(name) + ": axis out of range for rank 2");
    } else {
        throw dim_error(std::string(name) + ": unsupported rank " + std::to_string(in.size()));
    }
    if (p.len == 0) throw dim_error(std::string(name) + ": empty reduction axis");
    return p;
}

}  // namespace detail

// Reverse-mode tape over Arrays. Node granularity is whole-array operations;
// backward walks nodes in reverse creation order, so gradient accumulation is
// deterministic in single-threaded use.
class Tape {
  public:
    explicit Tape(const ParamStore* store = nullptr) : store_(store) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int constant(Array v) { return push(std::move(v), nullptr); }
    int constant_scalar(double v) { return push(Array::scalar(v), nullptr); }

    // Leaf bound to a named parameter; repeated requests share one node so
    // gradients from all uses accumulate.
    int param(const std::string& name) {
        if (!store_) throw config_error("tape has no parameter store bound");
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) return it->second;
        int id = push(store_->at(name), nullptr);
        nodes_[id].param_name = name;
        param_nodes_[name] = id;
        return id;
    }

    const Array& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }

    double scalar(int id) const {
        const Array& v = value(id);
        if (v.size() != 1)
            throw dim_error("scalar() on non-scalar node of shape " + shape_str(v.shape));
        return v.data[0];
    }

    std::size_t num_nodes() const { return nodes_.size(); }

    // ---- elementwise (broadcasting) ----

    int add(int a, int b) {
        return binary_bc(a, b, "add", [](double x, double y) { return x + y; },
                         [](double, double, double g, double& ga, double& gb) {
                             ga += g;
                             gb += g;
                         });
    }
    int sub(int a, int b) {
        return binary_bc(a, b, "sub", [](double x, double y) { return x - y; },
                         [](double, double, double g, double& ga, double& gb) {
                             ga += g;
                             gb -= g;
                         });
    }
    int mul(int a, int b) {
        return binary_bc(a, b, "mul", [](double x, double y) { return x * y; },
                         [](double x, double y, double g, double& ga, double& gb) {
                             ga += g * y;
                             gb += g * x;
                         });
    }
    int div(int a, int b) {
        return binary_bc(a, b, "div", [](double x, double y) { return x / y; },
                         [](double x, double y, double g, double& ga, double& gb) {
                             ga += g / y;
                             gb -= g * x / (y * y);
                         });
    }

    int neg(int a) {
        return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
    }
    int scale(int a, double c) {
        return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
    }
    int add_scalar(int a, double c) {
        return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
    }

    int sin(int a) {
        return unary(a, [](double x) { return std::sin(x); },
                     [](double x, double) { return std::cos(x); });
    }
    int exp(int a) {
        return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    }
    int log(int a) {
        return unary(a, [](double x) { return std::log(x); },
                     [](double x, double) { return 1.0 / x; });
    }
    int sqrt(int a) {
        return unary(a, [](double x) { return std::sqrt(x); },
                     [](double, double y) { return 0.5 / y; });
    }
    int square(int a) {
        return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
    }
    int relu(int a) {
        return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    }
    int softplus(int a) {
        return unary(a, [](double x) { return detail::softplus_stable(x); },
                     [](double x, double) { return detail::sigmoid(x); });
    }

    int primitive(PrimitiveKind k, int a) {
        switch (k) {
            case PrimitiveKind::sin: return sin(a);
            case PrimitiveKind::exp: return exp(a);
            case PrimitiveKind::softplus: return softplus(a);
            case PrimitiveKind::relu: return relu(a);
        }
        throw config_error("unknown primitive kind");
    }

    // ---- linear algebra ----

    int matmul(int ia, int ib) {
        const Array& a = value(ia);
        const Array& b = value(ib);
        if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
            throw dim_error("matmul: incompatible shapes " + shape_str(a.shape) + " x " +
                            shape_str(b.shape));
        const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
        Array out = Array::zeros({m, n});
        detail::mm(a.data.data(), b.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), [ia, ib, m, k, n](Tape& t, const Array& g) {
            const Array& a = t.value(ia);
            const Array& b = t.value(ib);
            Array ga = Array::zeros({m, k});
            Array gb = Array::zeros({k, n});
            detail::mm_nt(g.data.data(), b.data.data(), ga.data.data(), m, n, k);
            detail::mm_tn(a.data.data(), g.data.data(), gb.data.data(), m, k, n);
            t.accum_grad(ia, std::move(ga));
            t.accum_grad(ib, std::move(gb));
        });
    }

    // a * b^T with b stored row-major [n, k]
    int matmul_nt(int ia, int ib) {
        const Array& a = value(ia);
        const Array& b = value(ib);
        if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1])
            throw dim_error("matmul_nt: incompatible shapes " + shape_str(a.shape) + " x " +
                            shape_str(b.shape) + "^T");
        const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
        Array out = Array::zeros({m, n});
        detail::mm_nt(a.data.data(), b.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), [ia, ib, m, k, n](Tape& t, const Array& g) {
            const Array& a = t.value(ia);
            const Array& b = t.value(ib);
            Array ga = Array::zeros({m, k});
            Array gb = Array::zeros({n, k});
            detail::mm(g.data.data(), b.data.data(), ga.data.data(), m, n, k);
            detail::mm_tn(g.data.data(), a.data.data(), gb.data.data(), m, n, k);
            t.accum_grad(ia, std::move(ga));
            t.accum_grad(ib, std::move(gb));
        });
    }

    // x [.., n_in] * w [n_in, n_out] (+ bias [n_out]); rank-1 x is one row
    int linear(int x, int w, int bias = -1) {
        const Shape xs = value(x).shape;   // copies: push() below may reallocate nodes
        const Shape ws = value(w).shape;
        if (ws.size() != 2)
            throw dim_error("linear: weight must be rank 2, got " + shape_str(ws));
        if (xs.empty() || xs.back() != ws[0])
            throw dim_error("linear: input " + shape_str(xs) + " incompatible with weight " +
                            shape_str(ws));
        const bool vec_in = xs.size() == 1;
        int xm = vec_in ? reshape(x, {1, xs[0]}) : x;
        int y = matmul(xm, w);
        if (bias >= 0) y = add(y, bias);
        if (vec_in) y = reshape(y, {ws[1]});
        return y;
    }

    // ---- reductions ----

    int reduce(ReduceKind k, int a, int axis = kAllAxes, bool keepdims = false) {
        switch (k) {
            case ReduceKind::sum: return reduce_sum(a, axis, keepdims);
            case ReduceKind::max: return reduce_max(a, axis, keepdims);
            case ReduceKind::logsumexp: return logsumexp(a, axis, keepdims);
        }
        throw config_error("unknown reduce kind");
    }

    int reduce_sum(int a, int axis = kAllAxes, bool keepdims = false) {
        return reduction(a, axis, keepdims, "sum",
                         [](const double* x, std::size_t n, std::size_t st) {
                             double s = 0.0;
                             for (std::size_t i = 0; i < n; ++i) s += x[i * st];
                             return s;
                         },
                         [](const double*, std::size_t n, std::size_t st, double, double g,
                            double* gx) {
                             for (std::size_t i = 0; i < n; ++i) gx[i * st] += g;
                         });
    }

    // gradient flows to the first argmax (lowest index)
    int reduce_max(int a, int axis = kAllAxes, bool keepdims = false) {
        return reduction(a, axis, keepdims, "max",
                         [](const double* x, std::size_t n, std::size_t st) {
                             double m = x[0];
                             for (std::size_t i = 1; i < n; ++i)
                                 if (x[i * st] > m) m = x[i * st];
                             return m;
                         },
                         [](const double* x, std::size_t n, std::size_t st, double y, double g,
                            double* gx) {
                             for (std::size_t i = 0; i < n; ++i) {
                                 if (x[i * st] == y) {
                                     gx[i * st] += g;
                                     break;
                                 }
                             }
                         });
    }

    // max-shifted stable form; gradient is the softmax of the slice
    int logsumexp(int a, int axis = kAllAxes, bool keepdims = false) {
        return reduction(a, axis, keepdims, "logsumexp",
                         [](const double* x, std::size_t n, std::size_t st) {
                             double m = x[0];
                             for (std::size_t i = 1; i < n; ++i)
                                 if (x[i * st] > m) m = x[i * st];
                             double s = 0.0;
                             for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * st] - m);
                             return m + std::log(s);
                         },
                         [](const double* x, std::size_t n, std::size_t st, double y, double g,
                            double* gx) {
                             for (std::size_t i = 0; i < n; ++i)
                                 gx[i * st] += g * std::exp(x[i * st] - y);
                         });
    }

    // ---- structure ----

    int reshape(int a, Shape s) {
        const Array& av = value(a);
        if (shape_numel(s) != av.size())
            throw dim_error("reshape: " + shape_str(av.shape) + " to " + shape_str(s));
        Array out(s, av.data);
        Shape orig = av.shape;
        return push(std::move(out), [a, orig](Tape& t, const Array& g) {
            t.accum_grad(a, Array(orig, g.data));
        });
    }

    int concat_cols(const std::vector<int>& ids) {
        if (ids.empty()) throw dim_error("concat_cols: no inputs");
        std::size_t m = value(ids[0]).shape.at(0), total = 0;
        for (int id : ids) {
            const Array& v = value(id);
            if (v.rank() != 2 || v.shape[0] != m)
                throw dim_error("concat_cols: row mismatch, got " + shape_str(v.shape));
            total += v.shape[1];
        }
        Array out = Array::zeros({m, total});
        std::size_t col = 0;
        std::vector<std::size_t> widths;
        for (int id : ids) {
            const Array& v = value(id);
            const std::size_t w = v.shape[1];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j) out.at(i, col + j) = v.at(i, j);
            widths.push_back(w);
            col += w;
        }
        std::vector<int> parents = ids;
        return push(std::move(out), [parents, widths, m](Tape& t, const Array& g) {
            std::size_t col = 0;
            for (std::size_t p = 0; p < parents.size(); ++p) {
                Array gp = Array::zeros({m, widths[p]});
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < widths[p]; ++j) gp.at(i, j) = g.at(i, col + j);
                t.accum_grad(parents[p], std::move(gp));
                col += widths[p];
            }
        });
    }

    int slice_cols(int a, std::size_t start, std::size_t n) {
        const Array& av = value(a);
        if (av.rank() != 2 || start + n > av.shape[1])
            throw dim_error("slice_cols: [" + std::to_string(start) + "," +
                            std::to_string(start + n) + ") out of " + shape_str(av.shape));
        const std::size_t m = av.shape[0];
        Array out = Array::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, start + j);
        Shape orig = av.shape;
        return push(std::move(out), [a, start, n, orig](Tape& t, const Array& g) {
            Array ga = Array::zeros(orig);
            for (std::size_t i = 0; i < orig[0]; ++i)
                for (std::size_t j = 0; j < n; ++j) ga.at(i, start + j) = g.at(i, j);
            t.accum_grad(a, std::move(ga));
        });
    }

    // ---- backward ----

    // Gradients of a scalar loss w.r.t. every trainable parameter in the
    // bound store; untouched trainables get zeros. Resets accumulators, so
    // repeated calls are identical.
    GradMap backward(int loss) {
        const Array& lv = value(loss);
        if (lv.size() != 1)
            throw dim_error("backward: loss must be scalar, got shape " + shape_str(lv.shape));
        grads_.assign(nodes_.size(), Array{});
        grads_[static_cast<std::size_t>(loss)] = Array::full(lv.shape, 1.0);
        for (int i = loss; i >= 0; --i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            if (grads_[static_cast<std::size_t>(i)].data.empty() || !n.back) continue;
            n.back(*this, grads_[static_cast<std::size_t>(i)]);
        }
        GradMap out;
        if (store_) {
            for (const auto& [name, entry] : store_->entries()) {
                if (!entry.trainable) continue;
                auto it = param_nodes_.find(name);
                if (it != param_nodes_.end() &&
                    !grads_[static_cast<std::size_t>(it->second)].data.empty())
                    out[name] = grads_[static_cast<std::size_t>(it->second)];
                else
                    out[name] = Array::zeros(entry.value.shape);
            }
        }
        return out;
    }

    // raw gradient of the last backward() for any node (empty if untouched)
    const Array& grad(int id) const { return grads_.at(static_cast<std::size_t>(id)); }

    void accum_grad(int id, Array g) {
        Array& slot = grads_[static_cast<std::size_t>(id)];
        if (slot.data.empty()) {
            slot = std::move(g);
        } else {
            for (std::size_t i = 0; i < slot.size(); ++i) slot.data[i] += g.data[i];
        }
    }

  private:
    struct Node {
        Array value;
        std::string param_name;
        std::function<void(Tape&, const Array&)> back;
    };

    int push(Array v, std::function<void(Tape&, const Array&)> back) {
        nodes_.push_back(Node{std::move(v), {}, std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    template <typename Fwd, typename Dfdx>
    int unary(int a, Fwd f, Dfdx df) {
        const Array& av = value(a);
        Array out = Array::zeros(av.shape);
        for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = f(av.data[i]);
        const int self = static_cast<int>(nodes_.size());
        return push(std::move(out), [a, self, df](Tape& t, const Array& g) {
            const Array& x = t.value(a);
            const Array& y = t.value(self);
            Array ga = Array::zeros(x.shape);
            for (std::size_t i = 0; i < x.size(); ++i)
                ga.data[i] = g.data[i] * df(x.data[i], y.data[i]);
            t.accum_grad(a, std::move(ga));
        });
    }

    // walks output positions with the operand index mapping of the plan;
    // shared by the forward and backward passes of every binary op
    template <typename Visit>
    static void bc_walk(const detail::BcPlan& plan, Visit v) {
        using K = detail::BcPlan::Kind;
        switch (plan.kind) {
            case K::same:
                for (std::size_t i = 0; i < plan.numel; ++i) v(i, i, i);
                break;
            case K::scalar_b:
                for (std::size_t i = 0; i < plan.numel; ++i) v(i, i, 0);
                break;
            case K::scalar_a:
                for (std::size_t i = 0; i < plan.numel; ++i) v(i, 0, i);
                break;
            case K::row_b:
                for (std::size_t r = 0; r < plan.rows; ++r)
                    for (std::size_t c = 0; c < plan.cols; ++c)
                        v(r * plan.cols + c, r * plan.cols + c, c);
                break;
            case K::col_b:
                for (std::size_t r = 0; r < plan.rows; ++r)
                    for (std::size_t c = 0; c < plan.cols; ++c)
                        v(r * plan.cols + c, r * plan.cols + c, r);
                break;
            case K::general:
                for (std::size_t o = 0; o < plan.numel; ++o) {
                    auto [oa, ob] = detail::bc_offsets(plan, o);
                    v(o, oa, ob);
                }
                break;
        }
    }

    template <typename Fwd, typename Back>
    int binary_bc(int ia, int ib, const char* name, Fwd f, Back bk) {
        const Array& a = value(ia);
        const Array& b = value(ib);
        detail::BcPlan plan = detail::make_bc_plan(a.shape, b.shape, name);
        Array out = Array::zeros(plan.out);
        {
            const double* ad = a.data.data();
            const double* bd = b.data.data();
            double* od = out.data.data();
            bc_walk(plan, [&](std::size_t o, std::size_t oa, std::size_t ob) {
                od[o] = f(ad[oa], bd[ob]);
            });
        }
        return push(std::move(out), [ia, ib, plan, bk](Tape& t, const Array& g) {
            const Array& a = t.value(ia);
            const Array& b = t.value(ib);
            Array ga = Array::zeros(a.shape);
            Array gb = Array::zeros(b.shape);
            const double* ad = a.data.data();
            const double* bd = b.data.data();
            const double* gd = g.data.data();
            double* gad = ga.data.data();
            double* gbd = gb.data.data();
            bc_walk(plan, [&](std::size_t o, std::size_t oa, std::size_t ob) {
                bk(ad[oa], bd[ob], gd[o], gad[oa], gbd[ob]);
            });
            t.accum_grad(ia, std::move(ga));
            t.accum_grad(ib, std::move(gb));
        });
    }

    template <typename SliceFwd, typename SliceBack>
    int reduction(int a, int axis, bool keepdims, const char* name, SliceFwd f, SliceBack bk) {
        const Array& av = value(a);
        detail::SlicePlan p = detail::make_slice_plan(av.shape, axis, keepdims, name);
        Array out = Array::zeros(p.out_shape);
        for (std::size_t s = 0; s < p.nslices; ++s)
            out.data[s] = f(av.data.data() + s * p.base_stride, p.len, p.stride);
        const int self = static_cast<int>(nodes_.size());
        return push(std::move(out), [a, self, p, bk](Tape& t, const Array& g) {
            const Array& x = t.value(a);
            const Array& y = t.value(self);
            Array ga = Array::zeros(x.shape);
            for (std::size_t s = 0; s < p.nslices; ++s)
                bk(x.data.data() + s * p.base_stride, p.len, p.stride, y.data[s], g.data[s],
                   ga.data.data() + s * p.base_stride);
            t.accum_grad(a, std::move(ga));
        });
    }

    std::vector<Node> nodes_;
    std::vector<Array> grads_;
    std::map<std::string, int> param_nodes_;
    const ParamStore* store_;
};

}  // namespace hetvae

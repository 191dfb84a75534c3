#include "bdan/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "bdan/kernels.hpp"

namespace bdan {

namespace {

std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

std::shared_ptr<detail::Node> new_node(Shape shape, std::shared_ptr<const std::vector<Real>> values,
                                       bool requires_grad) {
    if (numel(shape) != values->size())
        throw std::invalid_argument("tensor: shape " + shape_string(shape) + " does not match " +
                                    std::to_string(values->size()) + " elements");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    node->id = next_id();
    return node;
}

void require_nonempty(const Tensor& t, const char* what) {
    if (!t.valid() || t.size() == 0) throw std::invalid_argument(std::string(what) + ": empty tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                                    " vs " + shape_string(b.shape()));
}

}  // namespace

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() = default;

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
    for (std::size_t d : shape)
        if (d == 0) throw std::invalid_argument("tensor: zero-length axis in " + shape_string(shape));
    if (shape.empty()) throw std::invalid_argument("tensor: rank must be at least 1");
    auto buf = std::make_shared<const std::vector<Real>>(std::move(values));
    return Tensor(new_node(std::move(shape), std::move(buf), requires_grad));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), Real(0)); }

Tensor Tensor::full(Shape shape, Real value) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<Real>(n, value));
}

Tensor Tensor::scalar(Real value) { return from({1}, {value}); }

const Shape& Tensor::shape() const {
    static const Shape empty;
    return node_ ? node_->shape : empty;
}

std::size_t Tensor::size() const { return node_ ? node_->values->size() : 0; }

std::span<const Real> Tensor::data() const {
    if (!node_) return {};
    return {node_->values->data(), node_->values->size()};
}

std::vector<Real> Tensor::to_vector() const {
    auto d = data();
    return {d.begin(), d.end()};
}

Real Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(size()) + " elements");
    return (*node_->values)[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Tensor::detach() const { return Tensor(new_node(shape(), node_->values, false)); }

Tensor Tensor::as_leaf() const { return Tensor(new_node(shape(), node_->values, true)); }

std::uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

namespace detail {

Tensor make_result(Shape shape, std::vector<Real> values, std::vector<Tensor> parents, BackwardFn fn) {
    auto buf = std::make_shared<const std::vector<Real>>(std::move(values));
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
    auto node = new_node(std::move(shape), std::move(buf), any);
    if (any) {
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(fn);
    }
    return Tensor(std::move(node));
}

Tensor make_view(Shape shape, const Tensor& source, BackwardFn fn) {
    auto node = new_node(std::move(shape), source.node()->values, source.requires_grad());
    if (source.requires_grad()) {
        node->parents.push_back(source.node());
        node->backward = std::move(fn);
    }
    return Tensor(std::move(node));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reverse mode

std::optional<Tensor> Gradients::of(const Tensor& t) const {
    auto it = by_id_.find(t.id());
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

GradRecord GradRecord::trace(const Tensor& loss) {
    if (!loss.valid() || loss.size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_string(loss.shape()));
    GradRecord rec;
    rec.loss_ = loss;
    if (!loss.requires_grad()) return rec;

    // Iterative post-order DFS; order_ ends up with parents before children.
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            rec.order_.push_back(node);
            stack.pop_back();
        }
    }
    return rec;
}

Gradients GradRecord::replay() const {
    Gradients out;
    if (order_.empty()) return out;

    std::unordered_map<detail::Node*, std::vector<Real>> grads;
    grads[order_.back()] = std::vector<Real>(1, Real(1));

    std::vector<std::vector<Real>*> sinks;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node* node = *it;
        auto g = grads.find(node);
        if (g == grads.end()) continue;
        if (node->parents.empty()) {
            out.insert(node->id, Tensor::from(node->shape, std::move(g->second)));
            grads.erase(g);
            continue;
        }
        sinks.assign(node->parents.size(), nullptr);
        for (std::size_t i = 0; i < node->parents.size(); ++i) {
            detail::Node* p = node->parents[i].get();
            if (!p->requires_grad) continue;
            auto& buf = grads[p];
            if (buf.empty()) buf.assign(p->values->size(), Real(0));
            sinks[i] = &buf;
        }
        // `grads` may rehash while inserting parents; look the node up again.
        const std::vector<Real> gout = std::move(grads[node]);
        grads.erase(node);
        node->backward(gout, sinks);
    }
    return out;
}

Gradients backward(const Tensor& loss) { return GradRecord::trace(loss).replay(); }

// ---------------------------------------------------------------------------
// Shape operations

Tensor permute(const Tensor& t, const std::vector<std::size_t>& axes) {
    const Shape& in = t.shape();
    const std::size_t r = in.size();
    if (axes.size() != r) throw std::invalid_argument("permute: axes length does not match rank");
    std::vector<bool> hit(r, false);
    for (std::size_t a : axes) {
        if (a >= r || hit[a]) throw std::invalid_argument("permute: axes are not a permutation");
        hit[a] = true;
    }

    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[axes[i]];

    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
    // stride in the input for each output axis
    std::vector<std::size_t> step(r);
    for (std::size_t i = 0; i < r; ++i) step[i] = in_stride[axes[i]];

    // gather[j] = input offset of output element j
    const std::size_t n = t.size();
    auto gather = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t j = 0; j < n; ++j) {
        (*gather)[j] = off;
        for (std::size_t ax = r; ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                off += step[ax];
                break;
            }
            off -= step[ax] * (out_shape[ax] - 1);
            idx[ax] = 0;
        }
    }

    auto src = t.data();
    std::vector<Real> values(n);
    for (std::size_t j = 0; j < n; ++j) values[j] = src[(*gather)[j]];

    return detail::make_result(std::move(out_shape), std::move(values), {t},
                               [gather](std::span<const Real> gout, std::span<std::vector<Real>* const> gin) {
                                   auto& dst = *gin[0];
                                   for (std::size_t j = 0; j < gout.size(); ++j) dst[(*gather)[j]] += gout[j];
                               });
}

Tensor reshape(const Tensor& t, Shape new_shape) {
    if (numel(new_shape) != t.size() || new_shape.empty())
        throw std::invalid_argument("reshape: cannot view " + shape_string(t.shape()) + " as " +
                                    shape_string(new_shape));
    for (std::size_t d : new_shape)
        if (d == 0) throw std::invalid_argument("reshape: zero-length axis");
    return detail::make_view(std::move(new_shape), t,
                             [](std::span<const Real> gout, std::span<std::vector<Real>* const> gin) {
                                 auto& dst = *gin[0];
                                 for (std::size_t j = 0; j < gout.size(); ++j) dst[j] += gout[j];
                             });
}

Tensor expand(const Tensor& t) {
    Shape s = t.shape();
    s.insert(s.begin(), 1);
    return reshape(t, std::move(s));
}

Tensor squeeze_leading(const Tensor& t) {
    if (t.rank() < 2 || t.dim(0) != 1)
        throw std::invalid_argument("squeeze_leading: leading axis is not a unit axis");
    Shape s(t.shape().begin() + 1, t.shape().end());
    return reshape(t, std::move(s));
}

Tensor broadcast_sub(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 4 || b.dim(0) != 1)
        throw std::invalid_argument("broadcast_sub: expected (e,n,t) and (1,e,n,t), got " +
                                    shape_string(a.shape()) + " and " + shape_string(b.shape()));
    if (a.dim(1) != b.dim(2) || a.dim(2) != b.dim(3))
        throw std::invalid_argument("broadcast_sub: trailing axes differ");
    const std::size_t ea = a.dim(0), eb = b.dim(1), m = a.dim(1) * a.dim(2);
    auto av = a.data();
    auto bv = b.data();
    std::vector<Real> out(ea * eb * m);
    for (std::size_t i = 0; i < ea; ++i)
        for (std::size_t j = 0; j < eb; ++j) {
            Real* o = out.data() + (i * eb + j) * m;
            for (std::size_t k = 0; k < m; ++k) o[k] = av[i * m + k] - bv[j * m + k];
        }
    return detail::make_result({ea, eb, a.dim(1), a.dim(2)}, std::move(out), {a, b},
                               [ea, eb, m](std::span<const Real> gout, std::span<std::vector<Real>* const> gin) {
                                   for (std::size_t i = 0; i < ea; ++i)
                                       for (std::size_t j = 0; j < eb; ++j) {
                                           const Real* g = gout.data() + (i * eb + j) * m;
                                           if (gin[0]) {
                                               Real* da = gin[0]->data() + i * m;
                                               for (std::size_t k = 0; k < m; ++k) da[k] += g[k];
                                           }
                                           if (gin[1]) {
                                               Real* db = gin[1]->data() + j * m;
                                               for (std::size_t k = 0; k < m; ++k) db[k] -= g[k];
                                           }
                                       }
                               });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <class Fwd, class Bwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* what, Fwd fwd, Bwd bwd) {
    require_same_shape(a, b, what);
    auto av = a.data();
    auto bv = b.data();
    std::vector<Real> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return detail::make_result(a.shape(), std::move(out), {a, b},
                               [a, b, bwd](std::span<const Real> gout, std::span<std::vector<Real>* const> gin) {
                                   bwd(a.data(), b.data(), gout, gin[0], gin[1]);
                               });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](Real x, Real y) { return x + y; },
        [](auto, auto, std::span<const Real> g, std::vector<Real>* ga, std::vector<Real>* gb) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (ga) (*ga)[i] += g[i];
                if (gb) (*gb)[i] += g[i];
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](Real x, Real y) { return x - y; },
        [](auto, auto, std::span<const Real> g, std::vector<Real>* ga, std::vector<Real>* gb) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (ga) (*ga)[i] += g[i];
                if (gb) (*gb)[i] -= g[i];
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](Real x, Real y) { return x * y; },
        [](std::span<const Real> av, std::span<const Real> bv, std::span<const Real> g, std::vector<Real>* ga,
           std::vector<Real>* gb) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (ga) (*ga)[i] += g[i] * bv[i];
                if (gb) (*gb)[i] += g[i] * av[i];
            }
        });
}

Tensor scale(const Tensor& t, Real factor) {
    auto v = t.data();
    std::vector<Real> out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * factor;
    return detail::make_result(t.shape(), std::move(out), {t},
                               [factor](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   auto& d = *gin[0];
                                   for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
                               });
}

Tensor add_scalar(const Tensor& t, Real offset) {
    auto v = t.data();
    std::vector<Real> out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] + offset;
    return detail::make_result(t.shape(), std::move(out), {t},
                               [](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   auto& d = *gin[0];
                                   for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                               });
}

Tensor exp(const Tensor& t) {
    auto v = t.data();
    auto out = std::make_shared<std::vector<Real>>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) (*out)[i] = std::exp(v[i]);
    std::vector<Real> copy = *out;
    return detail::make_result(t.shape(), std::move(copy), {t},
                               [out](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   auto& d = *gin[0];
                                   for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*out)[i];
                               });
}

Tensor relu(const Tensor& t) {
    auto v = t.data();
    std::vector<Real> out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0 ? v[i] : Real(0);
    return detail::make_result(t.shape(), std::move(out), {t},
                               [t](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   const Real* v = t.data().data();
                                   Real* d = gin[0]->data();
                                   for (std::size_t i = 0; i < g.size(); ++i) d[i] += v[i] > 0 ? g[i] : Real(0);
                               });
}

Tensor clamp(const Tensor& t, Real lo, Real hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    auto v = t.data();
    std::vector<Real> out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(v[i], lo, hi);
    return detail::make_result(t.shape(), std::move(out), {t},
                               [t, lo, hi](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   auto v = t.data();
                                   auto& d = *gin[0];
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                       if (v[i] > lo && v[i] < hi) d[i] += g[i];
                               });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(const Tensor& t, ReduceKind kind) {
    require_nonempty(t, "reduce");
    auto v = t.data();
    const std::size_t n = v.size();
    const Real inv_n = Real(1) / static_cast<Real>(n);
    switch (kind) {
        case ReduceKind::sum:
            return detail::make_result({1}, {kernels::sum(v)}, {t},
                                       [](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                           for (auto& d : *gin[0]) d += g[0];
                                       });
        case ReduceKind::mean:
            return detail::make_result({1}, {kernels::sum(v) * inv_n}, {t},
                                       [inv_n](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                           for (auto& d : *gin[0]) d += g[0] * inv_n;
                                       });
        case ReduceKind::sq_sum:
            return detail::make_result({1}, {kernels::sq_sum(v)}, {t},
                                       [t](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                           auto v = t.data();
                                           auto& d = *gin[0];
                                           const Real s = 2 * g[0];
                                           for (std::size_t i = 0; i < v.size(); ++i) d[i] += s * v[i];
                                       });
        case ReduceKind::std: {
            if (n < 2) throw std::invalid_argument("reduce(std): need at least 2 elements");
            const Real mu = kernels::sum(v) * inv_n;
            Real ss = 0;
            for (Real x : v) ss += (x - mu) * (x - mu);
            const Real sd = std::sqrt(ss * inv_n);
            return detail::make_result(
                {1}, {sd}, {t}, [t, mu, sd, inv_n](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                    // d sd / d x_i = (x_i - mu) / (n sd); undefined at sd == 0, where we
                    // return zero.
                    if (sd == 0) return;
                    auto v = t.data();
                    auto& d = *gin[0];
                    const Real s = g[0] * inv_n / sd;
                    for (std::size_t i = 0; i < v.size(); ++i) d[i] += s * (v[i] - mu);
                });
        }
    }
    throw std::invalid_argument("reduce: unknown kind");
}

Tensor reduce_median(const Tensor& t) {
    require_nonempty(t, "reduce_median");
    std::vector<Real> v = t.to_vector();
    if (std::any_of(v.begin(), v.end(), [](Real x) { return std::isnan(x); }))
        throw std::invalid_argument("reduce_median: NaN present");
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    Real med = v[mid];
    if (n % 2 == 0) {
        const Real lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        med = (lower + med) / 2;
    }
    return Tensor::scalar(med);
}

Tensor gram_sum(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("gram_sum: operands must be 2-D");
    if (a.dim(1) != b.dim(1))
        throw std::invalid_argument("gram_sum: inner lengths differ (" + std::to_string(a.dim(1)) + " vs " +
                                    std::to_string(b.dim(1)) + ")");
    // sum_{i,j} <a_i, b_j> = <sum_i a_i, sum_j b_j>
    const std::size_t m = a.dim(1);
    auto col_sums = [m](const Tensor& x) {
        auto v = x.data();
        auto s = std::make_shared<std::vector<Real>>(m, Real(0));
        for (std::size_t r = 0; r < x.dim(0); ++r) {
            const Real* row = v.data() + r * m;
            for (std::size_t k = 0; k < m; ++k) (*s)[k] += row[k];
        }
        return s;
    };
    auto sa = col_sums(a);
    auto sb = col_sums(b);
    const Real value = kernels::dot(*sa, *sb);
    return detail::make_result({1}, {value}, {a, b},
                               [sa, sb, m](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   if (gin[0]) {
                                       auto& d = *gin[0];
                                       for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * (*sb)[i % m];
                                   }
                                   if (gin[1]) {
                                       auto& d = *gin[1];
                                       for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * (*sa)[i % m];
                                   }
                               });
}

}  // namespace bdan

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bdan {

#ifdef BDAN_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major array with an optional link into the reverse-mode trace.
///
/// A Tensor is a cheap handle: copies share the same immutable buffer and
/// trace node. Operations never modify their inputs; they produce new
/// tensors whose nodes remember how to push cotangents back to the parents.
class Tensor {
public:
    Tensor();

    static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, Real value);
    static Tensor scalar(Real value);

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t dim(std::size_t axis) const { return shape().at(axis); }

    std::span<const Real> data() const;
    std::vector<Real> to_vector() const;
    Real item() const;

    /// Leaf that participates in differentiation.
    bool requires_grad() const;
    /// Same values, constant-marked: no gradient flows through the result.
    Tensor detach() const;
    /// Same values as a fresh differentiable leaf.
    Tensor as_leaf() const;

    std::uint64_t id() const;
    bool valid() const { return node_ != nullptr; }

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Receives the output cotangent and accumulates into the parents' gradient
/// buffers. A null parent buffer means that parent is constant.
using BackwardFn =
    std::function<void(std::span<const Real> grad_out, std::span<std::vector<Real>* const> grad_in)>;

struct Node {
    Shape shape;
    std::shared_ptr<const std::vector<Real>> values;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
    std::uint64_t id = 0;
};

/// Creates an op result. Parents and the backward closure are dropped when
/// no parent requires a gradient.
Tensor make_result(Shape shape, std::vector<Real> values, std::vector<Tensor> parents, BackwardFn fn);
Tensor make_view(Shape shape, const Tensor& source, BackwardFn fn);

}  // namespace detail

class Gradients {
public:
    std::optional<Tensor> of(const Tensor& t) const;
    bool contains(const Tensor& t) const { return by_id_.count(t.id()) != 0; }
    std::size_t size() const { return by_id_.size(); }
    bool empty() const { return by_id_.empty(); }

    void insert(std::uint64_t id, Tensor grad) { by_id_.insert_or_assign(id, std::move(grad)); }

private:
    std::unordered_map<std::uint64_t, Tensor> by_id_;
};

/// Topologically ordered trace from a scalar loss back to its leaves.
class GradRecord {
public:
    static GradRecord trace(const Tensor& loss);

    /// Replays the trace with a unit seed and returns one gradient per
    /// differentiable leaf.
    Gradients replay() const;

    std::size_t node_count() const { return order_.size(); }

private:
    Tensor loss_;
    std::vector<detail::Node*> order_;
};

/// Throws std::invalid_argument if `loss` is not a single element. A loss
/// with no differentiable ancestry yields an empty map.
Gradients backward(const Tensor& loss);

// Shape operations.
Tensor permute(const Tensor& t, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& t, Shape new_shape);
Tensor expand(const Tensor& t);
Tensor squeeze_leading(const Tensor& t);

/// out[e1,e2,i,k] = a[e1,i,k] - b[0,e2,i,k]
Tensor broadcast_sub(const Tensor& a, const Tensor& b);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, Real factor);
Tensor add_scalar(const Tensor& t, Real offset);
Tensor exp(const Tensor& t);
Tensor relu(const Tensor& t);
/// Saturated elements get zero gradient.
Tensor clamp(const Tensor& t, Real lo, Real hi);

// Reductions to a shape-(1) tensor.
enum class ReduceKind { sum, mean, std, sq_sum };

Tensor reduce(const Tensor& t, ReduceKind kind);
inline Tensor sum(const Tensor& t) { return reduce(t, ReduceKind::sum); }
inline Tensor mean(const Tensor& t) { return reduce(t, ReduceKind::mean); }
inline Tensor std_pop(const Tensor& t) { return reduce(t, ReduceKind::std); }
inline Tensor sq_sum(const Tensor& t) { return reduce(t, ReduceKind::sq_sum); }

/// Constant-marked median over all elements (mean of the two middle values
/// for an even count).
Tensor reduce_median(const Tensor& t);

/// Sum over every row pair of <a[i,:], b[j,:]> for 2-D operands.
Tensor gram_sum(const Tensor& a, const Tensor& b);

}  // namespace bdan

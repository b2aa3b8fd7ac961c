#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// Ops are recorded on a Tape in topological order and evaluated eagerly when
// their inputs are known. Gradients are themselves recorded as tape nodes, so
// a gradient (for example the input gradient of a critic) can be
// differentiated again by a later backward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "ganselect/tensor.hpp"

namespace ganselect::ad {

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

enum class Op : std::uint8_t {
    leaf,
    constant,
    add,
    sub,
    mul,
    neg,
    scale,
    add_scalar,
    matmul,
    relu,
    leaky_relu,
    tanh,
    sigmoid,
    exp,
    log,
    pow,
    softplus,
    sum,
    sum_cols,
    sum_to,
    broadcast_to,
    step_mask,
    leaky_mask,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = npos;

    bool valid() const noexcept { return tape != nullptr && id != npos; }
    const Tensor& value() const;
    const Shape& shape() const;
};

/// Gradient per differentiable leaf, keyed by leaf node index.
struct Gradients {
    std::map<std::size_t, Tensor> by_leaf;

    const Tensor& at(Var leaf) const;
    const Tensor& at(std::size_t leaf) const;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf with a known value.
    Var leaf(Tensor value, bool differentiable = true);
    /// Leaf whose value is bound later through forward().
    Var placeholder(Shape shape, bool differentiable = true);
    /// Non-differentiable input.
    Var constant(Tensor value);

    Var record(Op op, std::vector<std::size_t> inputs, double attr = 0.0, Shape target = {});

    std::size_t size() const noexcept { return nodes_.size(); }
    Op op(std::size_t id) const { return nodes_.at(id).op; }
    const Tensor& value(std::size_t id) const;
    const Shape& shape(std::size_t id) const { return nodes_.at(id).shape; }
    bool evaluated(std::size_t id) const { return nodes_.at(id).evaluated; }
    /// Differentiable leaves in creation order.
    std::vector<std::size_t> roots() const;

    /// Rebinds the given leaves and replays every node in order. Returns the
    /// value of `output`.
    const Tensor& forward(const std::map<std::size_t, Tensor>& leaves, Var output);

    /// d(seed . output)/d(leaf) for every differentiable leaf. Scratch nodes
    /// used by the reverse pass are discarded afterwards.
    Gradients backward(Var output, const Tensor& seed);
    Gradients backward(Var output);

    /// Records the reverse pass of `output` w.r.t. `wrt` as new tape nodes and
    /// returns one gradient node per entry of `wrt`. The result stays
    /// differentiable. Entries that do not influence `output` yield zero
    /// constants.
    std::vector<Var> grad(Var output, std::span<const Var> wrt, Var seed);

    /// Gradient of a per-row scalar output w.r.t. an input leaf, as a node.
    Var input_grad(Var output, Var wrt);

    /// Drops every node with index >= size.
    void truncate(std::size_t size);

private:
    struct Node {
        Op op = Op::leaf;
        std::vector<std::size_t> inputs;
        double attr = 0.0;
        Shape shape;
        Tensor value;
        bool evaluated = false;
        bool differentiable = false;
    };

    void evaluate(std::size_t id);
    Var vjp(std::size_t id, std::size_t input_slot, Var g);

    std::vector<Node> nodes_;
};

// Primitive builders. All operands must live on the same tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);

Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var relu(Var x);
Var leaky_relu(Var x, double slope = 0.2);
Var tanh(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var pow(Var x, double p);
Var softplus(Var x);
/// Sum over all elements, rank-0 result.
Var sum(Var x);
/// Sum along the last axis; [n, m] -> [n, 1].
Var sum_cols(Var x);
Var mean(Var x);
Var sum_to(Var x, Shape shape);
Var broadcast_to(Var x, Shape shape);
/// 1 where x > 0 else 0; constant w.r.t. x.
Var step_mask(Var x);
/// 1 where x > 0 else slope; constant w.r.t. x.
Var leaky_mask(Var x, double slope);

Shape broadcast_shape(const Shape& a, const Shape& b);

/// Gradient of a scalar function of a flat parameter vector.
using GradFn = std::function<std::vector<double>(std::span<const double>)>;

/// Hessian-vector product by central differences of gradients along v/|v|,
/// rescaled by |v|.
std::vector<double> hvp_findiff(const GradFn& grad, std::span<const double> params,
                                std::span<const double> v, double eps);

}  // namespace ganselect::ad

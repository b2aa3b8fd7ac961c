#include "ganselect/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ganselect/error.hpp"

namespace ganselect::ad {

namespace {

struct View {
    std::size_t rows;
    std::size_t cols;
};

View view_of(const Shape& s) {
    if (s.empty()) return {1, 1};
    if (s.size() == 1) return {1, s[0]};
    if (s.size() == 2) return {s[0], s[1]};
    throw ConfigError("autodiff: rank " + std::to_string(s.size()) + " tensors are not supported");
}

bool is_unary(Op op) {
    switch (op) {
        case Op::neg:
        case Op::scale:
        case Op::add_scalar:
        case Op::relu:
        case Op::leaky_relu:
        case Op::tanh:
        case Op::sigmoid:
        case Op::exp:
        case Op::log:
        case Op::pow:
        case Op::softplus:
        case Op::step_mask:
        case Op::leaky_mask:
            return true;
        default:
            return false;
    }
}

double apply_unary(Op op, double x, double attr) {
    switch (op) {
        case Op::neg: return -x;
        case Op::scale: return attr * x;
        case Op::add_scalar: return x + attr;
        case Op::relu: return x > 0.0 ? x : 0.0;
        case Op::leaky_relu: return x > 0.0 ? x : attr * x;
        case Op::tanh: return std::tanh(x);
        case Op::sigmoid: return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        case Op::exp: return std::exp(x);
        case Op::log: return std::log(x);
        case Op::pow: return std::pow(x, attr);
        case Op::softplus: return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        case Op::step_mask: return x > 0.0 ? 1.0 : 0.0;
        case Op::leaky_mask: return x > 0.0 ? 1.0 : attr;
        default: return 0.0;
    }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-major product of the 2-D views with optional transposes.
Tensor matmul_kernel(const Tensor& a, const Tensor& b, bool ta, bool tb, const Shape& out_shape) {
    const View va = view_of(a.shape());
    const View vb = view_of(b.shape());
    const Eigen::Map<const RowMat> ma(a.values().data(), va.rows, va.cols);
    const Eigen::Map<const RowMat> mb(b.values().data(), vb.rows, vb.cols);
    Tensor out(out_shape);
    Eigen::Map<RowMat> mo(out.values().data(), out_shape[0], out_shape[1]);
    if (ta && tb) mo.noalias() = ma.transpose() * mb.transpose();
    else if (ta) mo.noalias() = ma.transpose() * mb;
    else if (tb) mo.noalias() = ma * mb.transpose();
    else mo.noalias() = ma * mb;
    return out;
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::constant: return "constant";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::neg: return "neg";
        case Op::scale: return "scale";
        case Op::add_scalar: return "add_scalar";
        case Op::matmul: return "matmul";
        case Op::relu: return "relu";
        case Op::leaky_relu: return "leaky_relu";
        case Op::tanh: return "tanh";
        case Op::sigmoid: return "sigmoid";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::pow: return "pow";
        case Op::softplus: return "softplus";
        case Op::sum: return "sum";
        case Op::sum_cols: return "sum_cols";
        case Op::sum_to: return "sum_to";
        case Op::broadcast_to: return "broadcast_to";
        case Op::step_mask: return "step_mask";
        case Op::leaky_mask: return "leaky_mask";
    }
    return "?";
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    view_of(a);
    view_of(b);
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ConfigError("autodiff: cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = da == 1 ? db : da;
    }
    return out;
}

const Tensor& Var::value() const { return tape->value(id); }
const Shape& Var::shape() const { return tape->shape(id); }

const Tensor& Gradients::at(Var leaf) const { return at(leaf.id); }

const Tensor& Gradients::at(std::size_t leaf) const {
    auto it = by_leaf.find(leaf);
    if (it == by_leaf.end()) throw UsageError("gradients: node " + std::to_string(leaf) + " is not a differentiable leaf");
    return it->second;
}

Var Tape::leaf(Tensor value, bool differentiable) {
    view_of(value.shape());
    Node n;
    n.op = Op::leaf;
    n.shape = value.shape();
    n.value = std::move(value);
    n.evaluated = true;
    n.differentiable = differentiable;
    nodes_.push_back(std::move(n));
    const std::size_t id = nodes_.size() - 1;
    if (!nodes_[id].value.all_finite())
        throw NumericError("autodiff: non-finite leaf value at node " + std::to_string(id), id);
    return {this, id};
}

Var Tape::placeholder(Shape shape, bool differentiable) {
    view_of(shape);
    Node n;
    n.op = Op::leaf;
    n.shape = std::move(shape);
    n.differentiable = differentiable;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    Var v = leaf(std::move(value), false);
    nodes_[v.id].op = Op::constant;
    return v;
}

const Tensor& Tape::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (!n.evaluated)
        throw UsageError("autodiff: node " + std::to_string(id) + " has not been evaluated; call forward() first");
    return n.value;
}

std::vector<std::size_t> Tape::roots() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].op == Op::leaf && nodes_[i].differentiable) out.push_back(i);
    return out;
}

Var Tape::record(Op op, std::vector<std::size_t> inputs, double attr, Shape target) {
    for (std::size_t in : inputs)
        if (in >= nodes_.size()) throw UsageError("autodiff: input node does not precede the recorded op");

    Shape shape;
    auto in_shape = [&](std::size_t slot) -> const Shape& { return nodes_[inputs.at(slot)].shape; };
    switch (op) {
        case Op::leaf:
        case Op::constant:
            throw UsageError("autodiff: use leaf()/constant() to create inputs");
        case Op::add:
        case Op::sub:
        case Op::mul:
            shape = broadcast_shape(in_shape(0), in_shape(1));
            break;
        case Op::matmul: {
            const View a = view_of(in_shape(0));
            const View b = view_of(in_shape(1));
            const bool ta = (static_cast<int>(attr) & 1) != 0;
            const bool tb = (static_cast<int>(attr) & 2) != 0;
            const std::size_t ka = ta ? a.rows : a.cols;
            const std::size_t kb = tb ? b.cols : b.rows;
            if (in_shape(0).size() != 2 || in_shape(1).size() != 2 || ka != kb)
                throw ConfigError("autodiff: matmul shape mismatch " + shape_str(in_shape(0)) + " x " +
                                  shape_str(in_shape(1)));
            shape = {ta ? a.cols : a.rows, tb ? b.rows : b.cols};
            break;
        }
        case Op::sum:
            view_of(in_shape(0));
            shape = {};
            break;
        case Op::sum_cols: {
            const View v = view_of(in_shape(0));
            shape = {v.rows, 1};
            break;
        }
        case Op::sum_to:
            if (broadcast_shape(in_shape(0), target) != in_shape(0))
                throw ConfigError("autodiff: cannot reduce " + shape_str(in_shape(0)) + " to " + shape_str(target));
            shape = std::move(target);
            break;
        case Op::broadcast_to:
            if (broadcast_shape(in_shape(0), target) != target)
                throw ConfigError("autodiff: cannot broadcast " + shape_str(in_shape(0)) + " to " + shape_str(target));
            shape = std::move(target);
            break;
        default:
            shape = in_shape(0);
            break;
    }

    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.attr = attr;
    n.shape = std::move(shape);
    nodes_.push_back(std::move(n));
    const std::size_t id = nodes_.size() - 1;

    bool ready = true;
    for (std::size_t in : nodes_[id].inputs) ready = ready && nodes_[in].evaluated;
    if (ready) evaluate(id);
    return {this, id};
}

void Tape::evaluate(std::size_t id) {
    Node& n = nodes_[id];
    const Op op = n.op;
    auto in = [&](std::size_t slot) -> const Tensor& { return nodes_[n.inputs[slot]].value; };

    Tensor out(n.shape);
    if (is_unary(op)) {
        const auto src = in(0).values();
        auto dst = out.values();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = apply_unary(op, src[i], n.attr);
    } else {
        switch (op) {
            case Op::add:
            case Op::sub:
            case Op::mul:
            case Op::broadcast_to: {
                const View vo = view_of(n.shape);
                const Tensor& a = in(0);
                const View va = view_of(a.shape());
                const Tensor* b = op == Op::broadcast_to ? nullptr : &in(1);
                const View vb = b ? view_of(b->shape()) : View{1, 1};
                auto dst = out.values();
                for (std::size_t r = 0; r < vo.rows; ++r) {
                    const std::size_t ra = va.rows == 1 ? 0 : r;
                    const std::size_t rb = vb.rows == 1 ? 0 : r;
                    for (std::size_t c = 0; c < vo.cols; ++c) {
                        const double x = a[ra * va.cols + (va.cols == 1 ? 0 : c)];
                        double y = 0.0;
                        if (b) y = (*b)[rb * vb.cols + (vb.cols == 1 ? 0 : c)];
                        double v = x;
                        if (op == Op::add) v = x + y;
                        else if (op == Op::sub) v = x - y;
                        else if (op == Op::mul) v = x * y;
                        dst[r * vo.cols + c] = v;
                    }
                }
                break;
            }
            case Op::matmul: {
                const int flags = static_cast<int>(n.attr);
                out = matmul_kernel(in(0), in(1), (flags & 1) != 0, (flags & 2) != 0, n.shape);
                break;
            }
            case Op::sum: {
                double s = 0.0;
                for (double v : in(0).values()) s += v;
                out[0] = s;
                break;
            }
            case Op::sum_cols: {
                const View v = view_of(in(0).shape());
                const auto src = in(0).values();
                for (std::size_t r = 0; r < v.rows; ++r) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < v.cols; ++c) s += src[r * v.cols + c];
                    out[r] = s;
                }
                break;
            }
            case Op::sum_to: {
                const View vi = view_of(in(0).shape());
                const View vo = view_of(n.shape);
                const auto src = in(0).values();
                for (std::size_t r = 0; r < vi.rows; ++r) {
                    const std::size_t ro = vo.rows == 1 ? 0 : r;
                    for (std::size_t c = 0; c < vi.cols; ++c)
                        out[ro * vo.cols + (vo.cols == 1 ? 0 : c)] += src[r * vi.cols + c];
                }
                break;
            }
            default:
                throw UsageError(std::string("autodiff: cannot evaluate op ") + op_name(op));
        }
    }
    if (!out.all_finite())
        throw NumericError("autodiff: non-finite value produced by " + std::string(op_name(op)) + " at node " +
                               std::to_string(id),
                           id);
    n.value = std::move(out);
    n.evaluated = true;
}

const Tensor& Tape::forward(const std::map<std::size_t, Tensor>& leaves, Var output) {
    for (const auto& [id, value] : leaves) {
        Node& n = nodes_.at(id);
        if (n.op != Op::leaf && n.op != Op::constant)
            throw UsageError("autodiff: node " + std::to_string(id) + " is not a leaf");
        if (value.shape() != n.shape)
            throw ConfigError("autodiff: leaf " + std::to_string(id) + " expects shape " + shape_str(n.shape) +
                              ", got " + shape_str(value.shape()));
        if (!value.all_finite()) throw NumericError("autodiff: non-finite leaf value at node " + std::to_string(id), id);
        n.value = value;
        n.evaluated = true;
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        if (n.op == Op::leaf || n.op == Op::constant) {
            if (!n.evaluated) throw UsageError("autodiff: leaf " + std::to_string(i) + " has no value");
            continue;
        }
        evaluate(i);
    }
    return value(output.id);
}

Var Tape::vjp(std::size_t id, std::size_t slot, Var g) {
    // Copies, since recording new nodes may reallocate nodes_.
    const Op op = nodes_[id].op;
    const std::vector<std::size_t> ins = nodes_[id].inputs;
    const double attr = nodes_[id].attr;
    const Var x{this, ins[0]};
    const Var y{this, id};
    auto reduce = [&](Var v, std::size_t input) {
        const Shape& target = nodes_[input].shape;
        return nodes_[v.id].shape == target ? v : sum_to(v, target);
    };

    switch (op) {
        case Op::add: return reduce(g, ins[slot]);
        case Op::sub: return slot == 0 ? reduce(g, ins[0]) : -reduce(g, ins[1]);
        case Op::mul: {
            const Var other{this, ins[1 - slot]};
            return reduce(g * other, ins[slot]);
        }
        case Op::neg: return -g;
        case Op::scale: return g * attr;
        case Op::add_scalar: return g;
        case Op::matmul: {
            const int flags = static_cast<int>(attr);
            const bool ta = (flags & 1) != 0;
            const bool tb = (flags & 2) != 0;
            const Var a{this, ins[0]};
            const Var b{this, ins[1]};
            if (slot == 0) return ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
            return tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
        }
        case Op::relu: return g * step_mask(x);
        case Op::leaky_relu: return g * leaky_mask(x, attr);
        case Op::tanh: return g * (1.0 - y * y);
        case Op::sigmoid: return g * (y * (1.0 - y));
        case Op::exp: return g * y;
        case Op::log: return g * pow(x, -1.0);
        case Op::pow: return g * (pow(x, attr - 1.0) * attr);
        case Op::softplus: return g * sigmoid(x);
        case Op::sum:
        case Op::sum_cols:
        case Op::sum_to: return broadcast_to(g, nodes_[ins[0]].shape);
        case Op::broadcast_to: return sum_to(g, nodes_[ins[0]].shape);
        default: return {};
    }
}

std::vector<Var> Tape::grad(Var output, std::span<const Var> wrt, Var seed) {
    if (output.tape != this || !seed.valid() || seed.tape != this) throw UsageError("autodiff: grad across tapes");
    if (seed.shape() != output.shape())
        throw ConfigError("autodiff: seed shape " + shape_str(seed.shape()) + " does not match output " +
                          shape_str(output.shape()));
    const std::size_t end = output.id + 1;
    for (std::size_t i = 0; i < end; ++i)
        if (!nodes_[i].evaluated) throw UsageError("autodiff: backward before forward (node " + std::to_string(i) + ")");

    std::vector<bool> depends(end, false);
    for (const Var& w : wrt)
        if (w.id < end) depends[w.id] = true;
    for (std::size_t i = 0; i < end; ++i) {
        if (depends[i]) continue;
        for (std::size_t in : nodes_[i].inputs) depends[i] = depends[i] || depends[in];
    }

    std::vector<std::size_t> acc(end, npos);
    acc[output.id] = seed.id;
    for (std::size_t i = end; i-- > 0;) {
        if (acc[i] == npos || !depends[i]) continue;
        const Op op = nodes_[i].op;
        if (op == Op::leaf || op == Op::constant || op == Op::step_mask || op == Op::leaky_mask) continue;
        const std::vector<std::size_t> ins = nodes_[i].inputs;
        for (std::size_t slot = 0; slot < ins.size(); ++slot) {
            const std::size_t in = ins[slot];
            if (!depends[in]) continue;
            Var contrib = vjp(i, slot, Var{this, acc[i]});
            if (!contrib.valid()) continue;
            acc[in] = acc[in] == npos ? contrib.id : (Var{this, acc[in]} + contrib).id;
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        if (w.id < end && acc[w.id] != npos) out.push_back({this, acc[w.id]});
        else out.push_back(constant(Tensor(nodes_.at(w.id).shape)));
    }
    return out;
}

Gradients Tape::backward(Var output, const Tensor& seed) {
    if (output.tape != this) throw UsageError("autodiff: backward on a foreign node");
    if (!nodes_.at(output.id).evaluated) throw UsageError("autodiff: backward before forward");
    const std::size_t mark = nodes_.size();
    const std::vector<std::size_t> leaf_ids = roots();
    std::vector<Var> wrt;
    wrt.reserve(leaf_ids.size());
    for (std::size_t id : leaf_ids) wrt.push_back({this, id});

    Gradients out;
    {
        const Var s = constant(seed);
        const std::vector<Var> g = grad(output, wrt, s);
        for (std::size_t i = 0; i < wrt.size(); ++i) out.by_leaf.emplace(wrt[i].id, g[i].value());
    }
    truncate(mark);
    return out;
}

Gradients Tape::backward(Var output) { return backward(output, Tensor(shape(output.id), 1.0)); }

Var Tape::input_grad(Var output, Var wrt) {
    const Shape& s = output.shape();
    const bool per_row = s.empty() || (s.size() == 1) || (s.size() == 2 && s[1] == 1);
    if (!per_row) throw UsageError("autodiff: input_grad needs a scalar output per row, got " + shape_str(s));
    const Node& w = nodes_.at(wrt.id);
    if (w.op != Op::leaf) throw UsageError("autodiff: input_grad target must be a leaf");
    const Var seed = constant(Tensor(s, 1.0));
    const Var targets[] = {wrt};
    return grad(output, targets, seed).front();
}

void Tape::truncate(std::size_t size) {
    if (size < nodes_.size()) nodes_.resize(size);
}

namespace {

Tape& same_tape(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape != b.tape) throw UsageError("autodiff: operands live on different tapes");
    return *a.tape;
}

Tape& tape_of(Var a) {
    if (!a.valid()) throw UsageError("autodiff: invalid operand");
    return *a.tape;
}

}  // namespace

Var operator+(Var a, Var b) { return same_tape(a, b).record(Op::add, {a.id, b.id}); }
Var operator-(Var a, Var b) { return same_tape(a, b).record(Op::sub, {a.id, b.id}); }
Var operator*(Var a, Var b) { return same_tape(a, b).record(Op::mul, {a.id, b.id}); }
Var operator-(Var a) { return tape_of(a).record(Op::neg, {a.id}); }
Var operator*(Var a, double c) { return tape_of(a).record(Op::scale, {a.id}, c); }
Var operator*(double c, Var a) { return a * c; }
Var operator+(Var a, double c) { return tape_of(a).record(Op::add_scalar, {a.id}, c); }
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-a) + c; }

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
    return same_tape(a, b).record(Op::matmul, {a.id, b.id}, static_cast<double>((trans_a ? 1 : 0) | (trans_b ? 2 : 0)));
}
Var relu(Var x) { return tape_of(x).record(Op::relu, {x.id}); }
Var leaky_relu(Var x, double slope) { return tape_of(x).record(Op::leaky_relu, {x.id}, slope); }
Var tanh(Var x) { return tape_of(x).record(Op::tanh, {x.id}); }
Var sigmoid(Var x) { return tape_of(x).record(Op::sigmoid, {x.id}); }
Var exp(Var x) { return tape_of(x).record(Op::exp, {x.id}); }
Var log(Var x) { return tape_of(x).record(Op::log, {x.id}); }
Var pow(Var x, double p) { return tape_of(x).record(Op::pow, {x.id}, p); }
Var softplus(Var x) { return tape_of(x).record(Op::softplus, {x.id}); }
Var sum(Var x) { return tape_of(x).record(Op::sum, {x.id}); }
Var sum_cols(Var x) { return tape_of(x).record(Op::sum_cols, {x.id}); }
Var mean(Var x) { return sum(x) * (1.0 / static_cast<double>(numel(x.shape()))); }
Var sum_to(Var x, Shape shape) { return tape_of(x).record(Op::sum_to, {x.id}, 0.0, std::move(shape)); }
Var broadcast_to(Var x, Shape shape) { return tape_of(x).record(Op::broadcast_to, {x.id}, 0.0, std::move(shape)); }
Var step_mask(Var x) { return tape_of(x).record(Op::step_mask, {x.id}); }
Var leaky_mask(Var x, double slope) { return tape_of(x).record(Op::leaky_mask, {x.id}, slope); }

std::vector<double> hvp_findiff(const GradFn& grad, std::span<const double> params, std::span<const double> v,
                                double eps) {
    if (params.size() != v.size()) throw UsageError("hvp_findiff: direction length does not match parameters");
    if (!(eps > 0.0)) throw UsageError("hvp_findiff: eps must be positive");
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    const double norm = std::sqrt(norm2);
    if (!(norm > 0.0)) throw UsageError("hvp_findiff: zero direction");

    std::vector<double> plus(params.begin(), params.end());
    std::vector<double> minus(params.begin(), params.end());
    for (std::size_t i = 0; i < v.size(); ++i) {
        plus[i] += eps * v[i] / norm;
        minus[i] -= eps * v[i] / norm;
    }
    const std::vector<double> gp = grad(plus);
    const std::vector<double> gm = grad(minus);
    std::vector<double> out(params.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * eps) * norm;
    return out;
}

}  // namespace ganselect::ad

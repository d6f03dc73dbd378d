#pragma once

#include "popcast/errors.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace popcast::ad {

/// Scalar reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the array order is already a
/// topological order and backward passes are single reverse sweeps. Two
/// backward flavours exist:
///   - backward():       numeric adjoints into a grad buffer
///   - backward_graph(): adjoints built as tape nodes, so derivatives (e.g.
///                       the transport terms of a PDE residual) stay
///                       differentiable with respect to everything upstream
///
/// A tape is single-owner: one evaluation context per tape, independent tapes
/// may run concurrently.
class Tape {
  public:
    enum class Op : std::uint8_t {
        Const,
        Leaf,
        Add,
        Sub,
        Mul,
        Div,
        Neg,
        Tanh,
        Sigmoid,
        Exp,
        Log,
        PowC,
        Softplus,
        Square,
        Sum,
    };

    struct NodeId {
        std::uint32_t v = kInvalid;
        bool valid() const { return v != kInvalid; }
    };

    static constexpr std::uint32_t kInvalid = 0xffffffffu;

    Tape() { reserve(1024); }

    void reserve(std::size_t n) {
        value_.reserve(n);
        op_.reserve(n);
        pa_.reserve(n);
        pb_.reserve(n);
    }

    void clear() {
        value_.clear();
        op_.clear();
        pa_.clear();
        pb_.clear();
        aux_.clear();
        sum_args_.clear();
        grads_.clear();
    }

    std::size_t size() const { return value_.size(); }

    double value(NodeId n) const { return value_[n.v]; }

    /// Gradient of the last backward() root with respect to node n.
    double grad(NodeId n) const { return n.v < grads_.size() ? grads_[n.v] : 0.0; }

    NodeId constant(double v) { return push(Op::Const, v, kInvalid, kInvalid); }

    NodeId leaf(double v) { return push(Op::Leaf, v, kInvalid, kInvalid); }

    NodeId add(NodeId x, NodeId y) { return push(Op::Add, value_[x.v] + value_[y.v], x.v, y.v); }

    NodeId sub(NodeId x, NodeId y) { return push(Op::Sub, value_[x.v] - value_[y.v], x.v, y.v); }

    NodeId mul(NodeId x, NodeId y) { return push(Op::Mul, value_[x.v] * value_[y.v], x.v, y.v); }

    NodeId div(NodeId x, NodeId y) {
        if (value_[y.v] == 0.0) {
            throw eval_error("autodiff: division by zero");
        }
        return push(Op::Div, value_[x.v] / value_[y.v], x.v, y.v);
    }

    NodeId neg(NodeId x) { return push(Op::Neg, -value_[x.v], x.v, kInvalid); }

    NodeId tanh(NodeId x) { return push(Op::Tanh, std::tanh(value_[x.v]), x.v, kInvalid); }

    NodeId sigmoid(NodeId x) {
        const double v = value_[x.v];
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return push(Op::Sigmoid, s, x.v, kInvalid);
    }

    NodeId exp(NodeId x) { return push(Op::Exp, std::exp(value_[x.v]), x.v, kInvalid); }

    NodeId log(NodeId x) {
        if (!(value_[x.v] > 0.0)) {
            throw eval_error("autodiff: log of nonpositive value");
        }
        return push(Op::Log, std::log(value_[x.v]), x.v, kInvalid);
    }

    /// x^c for a fixed real exponent.
    NodeId pow(NodeId x, double c) {
        const double v = value_[x.v];
        if (v < 0.0 && c != std::floor(c)) {
            throw eval_error("autodiff: fractional power of negative value");
        }
        if (v == 0.0 && c < 1.0) {
            throw eval_error("autodiff: power would differentiate 0^c with c < 1");
        }
        const NodeId n = push(Op::PowC, std::pow(v, c), x.v, static_cast<std::uint32_t>(aux_.size()));
        aux_.push_back(c);
        return n;
    }

    /// log(1 + e^x), evaluated stably.
    NodeId softplus(NodeId x) {
        const double v = value_[x.v];
        const double s = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
        return push(Op::Softplus, s, x.v, kInvalid);
    }

    NodeId square(NodeId x) {
        return push(Op::Square, value_[x.v] * value_[x.v], x.v, kInvalid);
    }

    NodeId sum(std::span<const NodeId> xs) {
        double acc = 0.0;
        const std::uint32_t offset = static_cast<std::uint32_t>(sum_args_.size());
        for (const NodeId x : xs) {
            acc += value_[x.v];
            sum_args_.push_back(x.v);
        }
        return push(Op::Sum, acc, offset, static_cast<std::uint32_t>(xs.size()));
    }

    /// Numeric reverse sweep seeding d(root)/d(root) = 1. Clears previous
    /// adjoints, so repeated calls on the same graph are reproducible.
    void backward(NodeId root) {
        grads_.assign(root.v + 1, 0.0);
        grads_[root.v] = 1.0;
        for (std::uint32_t i = root.v + 1; i-- > 0;) {
            const double g = grads_[i];
            if (g == 0.0) {
                continue;
            }
            const std::uint32_t a = pa_[i];
            const std::uint32_t b = pb_[i];
            switch (op_[i]) {
            case Op::Const:
            case Op::Leaf:
                break;
            case Op::Add:
                grads_[a] += g;
                grads_[b] += g;
                break;
            case Op::Sub:
                grads_[a] += g;
                grads_[b] -= g;
                break;
            case Op::Mul:
                grads_[a] += g * value_[b];
                grads_[b] += g * value_[a];
                break;
            case Op::Div:
                grads_[a] += g / value_[b];
                grads_[b] -= g * value_[i] / value_[b];
                break;
            case Op::Neg:
                grads_[a] -= g;
                break;
            case Op::Tanh:
                grads_[a] += g * (1.0 - value_[i] * value_[i]);
                break;
            case Op::Sigmoid:
                grads_[a] += g * value_[i] * (1.0 - value_[i]);
                break;
            case Op::Exp:
                grads_[a] += g * value_[i];
                break;
            case Op::Log:
                grads_[a] += g / value_[a];
                break;
            case Op::PowC: {
                const double c = aux_[b];
                grads_[a] += g * c * std::pow(value_[a], c - 1.0);
                break;
            }
            case Op::Softplus: {
                const double v = value_[a];
                const double s =
                    v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                grads_[a] += g * s;
                break;
            }
            case Op::Square:
                grads_[a] += g * 2.0 * value_[a];
                break;
            case Op::Sum:
                for (std::uint32_t k = 0; k < b; ++k) {
                    grads_[sum_args_[a + k]] += g;
                }
                break;
            }
        }
    }

    /// Reverse sweep that materialises adjoints as tape nodes. Returns one
    /// gradient node per requested id (a zero constant where the root does not
    /// depend on it). The new nodes extend this tape, so a later numeric
    /// backward() differentiates through them.
    std::vector<NodeId> backward_graph(NodeId root, std::span<const NodeId> wrt) {
        return backward_graph(root, wrt, NodeId{0});
    }

    /// Range-limited variant: the sweep only visits nodes in
    /// [range_start, root]. Adjoint flow into older nodes is discarded, which
    /// is only legal when those are leaves or constants (shared parameters),
    /// so anything else throws. Keeps per-point sweeps O(subgraph) when many
    /// evaluation points share one tape.
    std::vector<NodeId> backward_graph(NodeId root, std::span<const NodeId> wrt,
                                       NodeId range_start) {
        const std::uint32_t lo = range_start.v;
        const std::uint32_t n = root.v + 1;
        if (lo >= n) {
            throw eval_error("autodiff: empty backward range");
        }
        std::vector<std::uint32_t> adj(n - lo, kInvalid);
        const NodeId one = constant(1.0);
        adj[root.v - lo] = one.v;

        auto accumulate = [&](std::uint32_t target, NodeId contrib) {
            if (target >= n) {
                throw eval_error("autodiff: corrupt graph");
            }
            if (target < lo) {
                if (op_[target] != Op::Leaf && op_[target] != Op::Const) {
                    throw eval_error("autodiff: backward range cuts through a non-leaf node");
                }
                return;
            }
            adj[target - lo] =
                adj[target - lo] == kInvalid ? contrib.v : add(NodeId{adj[target - lo]}, contrib).v;
        };

        for (std::uint32_t i = n; i-- > lo;) {
            if (adj[i - lo] == kInvalid) {
                continue;
            }
            const NodeId g{adj[i - lo]};
            const std::uint32_t a = pa_[i];
            const std::uint32_t b = pb_[i];
            switch (op_[i]) {
            case Op::Const:
            case Op::Leaf:
                break;
            case Op::Add:
                accumulate(a, g);
                accumulate(b, g);
                break;
            case Op::Sub:
                accumulate(a, g);
                accumulate(b, neg(g));
                break;
            case Op::Mul:
                accumulate(a, mul(g, NodeId{b}));
                accumulate(b, mul(g, NodeId{a}));
                break;
            case Op::Div:
                accumulate(a, div(g, NodeId{b}));
                accumulate(b, neg(div(mul(g, NodeId{i}), NodeId{b})));
                break;
            case Op::Neg:
                accumulate(a, neg(g));
                break;
            case Op::Tanh:
                accumulate(a, mul(g, sub(one, square(NodeId{i}))));
                break;
            case Op::Sigmoid:
                accumulate(a, mul(g, mul(NodeId{i}, sub(one, NodeId{i}))));
                break;
            case Op::Exp:
                accumulate(a, mul(g, NodeId{i}));
                break;
            case Op::Log:
                accumulate(a, div(g, NodeId{a}));
                break;
            case Op::PowC: {
                const double c = aux_[b];
                accumulate(a, mul(g, mul(constant(c), pow(NodeId{a}, c - 1.0))));
                break;
            }
            case Op::Softplus:
                accumulate(a, mul(g, sigmoid(NodeId{a})));
                break;
            case Op::Square:
                accumulate(a, mul(g, add(NodeId{a}, NodeId{a})));
                break;
            case Op::Sum:
                for (std::uint32_t k = 0; k < b; ++k) {
                    accumulate(sum_args_[a + k], g);
                }
                break;
            }
        }

        std::vector<NodeId> out;
        out.reserve(wrt.size());
        for (const NodeId w : wrt) {
            out.push_back(w.v < n && adj[w.v] != kInvalid ? NodeId{adj[w.v]} : constant(0.0));
        }
        return out;
    }

  private:
    NodeId push(Op op, double v, std::uint32_t a, std::uint32_t b) {
        const std::uint32_t id = static_cast<std::uint32_t>(value_.size());
        value_.push_back(v);
        op_.push_back(op);
        pa_.push_back(a);
        pb_.push_back(b);
        return NodeId{id};
    }

    std::vector<double> value_;
    std::vector<Op> op_;
    std::vector<std::uint32_t> pa_;
    std::vector<std::uint32_t> pb_;
    std::vector<double> aux_;            // PowC exponents
    std::vector<std::uint32_t> sum_args_;
    std::vector<double> grads_;
};

using NodeId = Tape::NodeId;

/// Lightweight value handle so expressions read like arithmetic.
struct Ad {
    Tape* tape = nullptr;
    NodeId id{};

    double value() const { return tape->value(id); }
    double grad() const { return tape->grad(id); }
};

inline void check_same_tape(Ad x, Ad y) {
    if (x.tape != y.tape) {
        throw eval_error("autodiff: operands on different tapes");
    }
}

inline Ad operator+(Ad x, Ad y) {
    check_same_tape(x, y);
    return {x.tape, x.tape->add(x.id, y.id)};
}
inline Ad operator-(Ad x, Ad y) {
    check_same_tape(x, y);
    return {x.tape, x.tape->sub(x.id, y.id)};
}
inline Ad operator*(Ad x, Ad y) {
    check_same_tape(x, y);
    return {x.tape, x.tape->mul(x.id, y.id)};
}
inline Ad operator/(Ad x, Ad y) {
    check_same_tape(x, y);
    return {x.tape, x.tape->div(x.id, y.id)};
}
inline Ad operator-(Ad x) { return {x.tape, x.tape->neg(x.id)}; }

inline Ad operator+(Ad x, double c) { return {x.tape, x.tape->add(x.id, x.tape->constant(c))}; }
inline Ad operator+(double c, Ad x) { return {x.tape, x.tape->add(x.tape->constant(c), x.id)}; }
inline Ad operator-(Ad x, double c) { return {x.tape, x.tape->sub(x.id, x.tape->constant(c))}; }
inline Ad operator-(double c, Ad x) { return {x.tape, x.tape->sub(x.tape->constant(c), x.id)}; }
inline Ad operator*(Ad x, double c) { return {x.tape, x.tape->mul(x.id, x.tape->constant(c))}; }
inline Ad operator*(double c, Ad x) { return {x.tape, x.tape->mul(x.tape->constant(c), x.id)}; }
inline Ad operator/(Ad x, double c) { return {x.tape, x.tape->div(x.id, x.tape->constant(c))}; }
inline Ad operator/(double c, Ad x) { return {x.tape, x.tape->div(x.tape->constant(c), x.id)}; }

inline Ad tanh(Ad x) { return {x.tape, x.tape->tanh(x.id)}; }
inline Ad sigmoid(Ad x) { return {x.tape, x.tape->sigmoid(x.id)}; }
inline Ad exp(Ad x) { return {x.tape, x.tape->exp(x.id)}; }
inline Ad log(Ad x) { return {x.tape, x.tape->log(x.id)}; }
inline Ad pow(Ad x, double c) { return {x.tape, x.tape->pow(x.id, c)}; }
inline Ad softplus(Ad x) { return {x.tape, x.tape->softplus(x.id)}; }
inline Ad square(Ad x) { return {x.tape, x.tape->square(x.id)}; }

inline Ad sum(Tape& tape, std::span<const NodeId> xs) { return {&tape, tape.sum(xs)}; }

} // namespace popcast::ad

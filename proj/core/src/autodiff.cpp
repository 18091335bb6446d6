// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "flexdup/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace flexdup::ad {

namespace {

constexpr double kInvLn2 = 1.4426950408889634; // 1/ln(2)

std::string shape_str(int rows, int cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

} // namespace

const Tape::Node& Tape::node_of(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw IndexOutOfRange("tape: variable id " + std::to_string(v.id) + " out of range");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(Op op, int rows, int cols, std::span<const Var> args) {
    Node node;
    node.op = op;
    node.rows = rows;
    node.cols = cols;
    node.val_off = vals_.size();
    node.arg_off = args_.size();
    node.n_args = static_cast<int>(args.size());
    node.aux_off = 0;
    node.scale_factor = 0.0;

    const std::size_t len = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    vals_.resize(vals_.size() + len);
    grads_.resize(grads_.size() + len);
    for (Var a : args) {
        node_of(a); // range check
        args_.push_back(a.id);
    }
    nodes_.push_back(node);
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(int rows, int cols) {
    if (rows < 1 || cols < 1) {
        throw ShapeMismatch("leaf: shape " + shape_str(rows, cols) + " must be positive");
    }
    Var v = push(Op::leaf, rows, cols, {});
    value(v).setZero();
    return v;
}

Var Tape::leaf(const Eigen::MatrixXd& init) {
    Var v = leaf(static_cast<int>(init.rows()), static_cast<int>(init.cols()));
    value(v) = init;
    return v;
}

Var Tape::scalar_leaf(double x) {
    Var v = leaf(1, 1);
    value(v)(0, 0) = x;
    return v;
}

Eigen::Map<Eigen::MatrixXd> Tape::value(Var v) {
    const Node& n = node_of(v);
    return {vals_.data() + n.val_off, n.rows, n.cols};
}

Eigen::Map<const Eigen::MatrixXd> Tape::value(Var v) const {
    const Node& n = node_of(v);
    return {vals_.data() + n.val_off, n.rows, n.cols};
}

Eigen::Map<Eigen::MatrixXd> Tape::grad(Var v) {
    const Node& n = node_of(v);
    return {grads_.data() + n.val_off, n.rows, n.cols};
}

Eigen::Map<const Eigen::MatrixXd> Tape::grad(Var v) const {
    const Node& n = node_of(v);
    return {grads_.data() + n.val_off, n.rows, n.cols};
}

double Tape::scalar(Var v) const {
    const Node& n = node_of(v);
    if (n.rows != 1 || n.cols != 1) {
        throw ShapeMismatch("scalar: variable is " + shape_str(n.rows, n.cols) + ", expected 1x1");
    }
    return vals_[n.val_off];
}

int Tape::rows(Var v) const { return node_of(v).rows; }
int Tape::cols(Var v) const { return node_of(v).cols; }

void Tape::check_same_shape(const char* op, Var a, Var b) const {
    const Node& na = node_of(a);
    const Node& nb = node_of(b);
    if (na.rows != nb.rows || na.cols != nb.cols) {
        throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(na.rows, na.cols) + " and " +
                            shape_str(nb.rows, nb.cols) + " differ");
    }
}

Var Tape::matmul(Var a, Var b) {
    const Node& na = node_of(a);
    const Node& nb = node_of(b);
    if (na.cols != nb.rows) {
        throw ShapeMismatch("matmul: inner dimensions " + shape_str(na.rows, na.cols) + " * " +
                            shape_str(nb.rows, nb.cols) + " do not agree");
    }
    const Var args[] = {a, b};
    Var out = push(Op::matmul, na.rows, nb.cols, args);
    value(out).noalias() = value(a) * value(b);
    return out;
}

Var Tape::add(Var a, Var b) {
    check_same_shape("add", a, b);
    const Var args[] = {a, b};
    Var out = push(Op::add, rows(a), cols(a), args);
    value(out) = value(a) + value(b);
    return out;
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::scale(Var a, double s) {
    const Var args[] = {a};
    Var out = push(Op::scale, rows(a), cols(a), args);
    nodes_.back().scale_factor = s;
    value(out) = s * value(a);
    return out;
}

Var Tape::concat(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeMismatch("concat: empty part list");
    }
    int total = 0;
    for (Var p : parts) {
        const Node& n = node_of(p);
        if (n.cols != 1) {
            throw ShapeMismatch("concat: part is " + shape_str(n.rows, n.cols) + ", expected a column vector");
        }
        total += n.rows;
    }
    Var out = push(Op::concat, total, 1, parts);
    auto dst = value(out);
    int at = 0;
    for (Var p : parts) {
        dst.block(at, 0, rows(p), 1) = value(p);
        at += rows(p);
    }
    return out;
}

Var Tape::relu(Var a) {
    const Var args[] = {a};
    Var out = push(Op::relu, rows(a), cols(a), args);
    value(out) = value(a).cwiseMax(0.0);
    return out;
}

Var Tape::sigmoid(Var a) {
    const Var args[] = {a};
    Var out = push(Op::sigmoid, rows(a), cols(a), args);
    value(out) = value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return out;
}

Var Tape::log2_1p(Var a) {
    const Var args[] = {a};
    Var out = push(Op::log2_1p, rows(a), cols(a), args);
    value(out) = value(a).unaryExpr([](double x) { return std::log1p(x) * kInvLn2; });
    return out;
}

Var Tape::mul(Var a, Var b) {
    check_same_shape("mul", a, b);
    const Var args[] = {a, b};
    Var out = push(Op::mul, rows(a), cols(a), args);
    value(out) = value(a).cwiseProduct(value(b));
    return out;
}

Var Tape::sum_pool(std::span<const Var> set) {
    if (set.empty()) {
        throw ShapeMismatch("sum_pool: empty set");
    }
    for (Var v : set) {
        check_same_shape("sum_pool", set[0], v);
    }
    Var out = push(Op::sum_pool, rows(set[0]), cols(set[0]), set);
    auto dst = value(out);
    dst.setZero();
    for (Var v : set) {
        dst += value(v);
    }
    return out;
}

Var Tape::max_pool(std::span<const Var> set) {
    if (set.empty()) {
        throw ShapeMismatch("max_pool: empty set");
    }
    for (Var v : set) {
        check_same_shape("max_pool", set[0], v);
    }
    Var out = push(Op::max_pool, rows(set[0]), cols(set[0]), set);
    Node& node = nodes_.back();
    node.aux_off = aux_.size();
    const std::size_t len =
        static_cast<std::size_t>(node.rows) * static_cast<std::size_t>(node.cols);
    aux_.resize(aux_.size() + len, 0);

    auto dst = value(out);
    dst = value(set[0]);
    for (std::size_t m = 1; m < set.size(); ++m) {
        auto candidate = value(set[m]);
        for (std::size_t e = 0; e < len; ++e) {
            // Strict > keeps the lowest member index on ties.
            if (candidate(static_cast<Eigen::Index>(e)) > dst(static_cast<Eigen::Index>(e))) {
                dst(static_cast<Eigen::Index>(e)) = candidate(static_cast<Eigen::Index>(e));
                aux_[node.aux_off + e] = static_cast<int>(m);
            }
        }
    }
    return out;
}

void Tape::backward(Var loss) {
    const Node& top = node_of(loss);
    if (top.rows != 1 || top.cols != 1) {
        throw NonScalarLoss("backward: loss is " + shape_str(top.rows, top.cols) + ", expected 1x1");
    }
    std::fill(grads_.begin(), grads_.end(), 0.0);
    grads_[top.val_off] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const Var v{id};
        auto g = grad(v);
        switch (n.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            const Var a{args_[n.arg_off]};
            const Var b{args_[n.arg_off + 1]};
            grad(a).noalias() += g * value(b).transpose();
            grad(b).noalias() += value(a).transpose() * g;
            break;
        }
        case Op::add: {
            grad(Var{args_[n.arg_off]}) += g;
            grad(Var{args_[n.arg_off + 1]}) += g;
            break;
        }
        case Op::scale:
            grad(Var{args_[n.arg_off]}) += n.scale_factor * g;
            break;
        case Op::concat: {
            int at = 0;
            for (int i = 0; i < n.n_args; ++i) {
                const Var p{args_[n.arg_off + static_cast<std::size_t>(i)]};
                grad(p) += g.block(at, 0, rows(p), 1);
                at += rows(p);
            }
            break;
        }
        case Op::relu: {
            const Var a{args_[n.arg_off]};
            // Subgradient 0 at the kink.
            grad(a).array() += g.array() * (value(a).array() > 0.0).cast<double>();
            break;
        }
        case Op::sigmoid: {
            const Var a{args_[n.arg_off]};
            grad(a).array() += g.array() * value(v).array() * (1.0 - value(v).array());
            break;
        }
        case Op::log2_1p: {
            const Var a{args_[n.arg_off]};
            grad(a).array() += g.array() * kInvLn2 / (1.0 + value(a).array());
            break;
        }
        case Op::mul: {
            const Var a{args_[n.arg_off]};
            const Var b{args_[n.arg_off + 1]};
            grad(a).array() += g.array() * value(b).array();
            grad(b).array() += g.array() * value(a).array();
            break;
        }
        case Op::sum_pool: {
            for (int i = 0; i < n.n_args; ++i) {
                grad(Var{args_[n.arg_off + static_cast<std::size_t>(i)]}) += g;
            }
            break;
        }
        case Op::max_pool: {
            const std::size_t len =
                static_cast<std::size_t>(n.rows) * static_cast<std::size_t>(n.cols);
            for (std::size_t e = 0; e < len; ++e) {
                const Var winner{args_[n.arg_off + static_cast<std::size_t>(aux_[n.aux_off + e])]};
                grad(winner)(static_cast<Eigen::Index>(e)) += g(static_cast<Eigen::Index>(e));
            }
            break;
        }
        }
    }
}

void Tape::reset() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    args_.clear();
    aux_.clear();
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw ShapeMismatch("adam_step: " + std::to_string(params.size()) + " parameters vs " +
                            std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) {
        throw ShapeMismatch("adam_step: state sized for " + std::to_string(state.m.size()) +
                            " parameters, got " + std::to_string(params.size()));
    }
    ++state.step;
    const AdamConfig& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

} // namespace flexdup::ad

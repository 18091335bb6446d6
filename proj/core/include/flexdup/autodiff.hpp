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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "flexdup/errors.hpp"

namespace flexdup::ad {

struct ShapeMismatch : Error {
    using Error::Error;
};
struct NonScalarLoss : Error {
    using Error::Error;
};

/// Handle to a node on a Tape.  Only meaningful with the tape that issued it.
struct Var {
    int id = -1;
};

/// Define-by-run reverse-mode tape.
///
/// Nodes live in contiguous arenas (values, gradients, argument lists), so a
/// forward pass allocates nothing once capacity has been reached and reset()
/// recycles the storage for the next sample.  Tensors are rank <= 2, column
/// major, 64-bit.  A tape belongs to one thread; create one per worker.
///
/// value()/grad() return Eigen maps into the arena; like vector iterators
/// they are invalidated by any subsequent tape mutation, so re-fetch after
/// recording more nodes.
class Tape {
  public:
    /// New variable with uninitialized storage; fill through value().
    Var leaf(int rows, int cols);
    /// New variable initialized from a matrix.
    Var leaf(const Eigen::MatrixXd& init);
    /// 1x1 variable holding a scalar.
    Var scalar_leaf(double x);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    /// add(a, scale(b, -1)) spelled out for readability.
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    /// Stack column vectors top to bottom.
    Var concat(std::span<const Var> parts);
    Var relu(Var a);
    Var sigmoid(Var a);
    /// log2(1 + x), elementwise; requires x > -1.
    Var log2_1p(Var a);
    /// Elementwise (Hadamard) product.
    Var mul(Var a, Var b);
    /// Elementwise sum over a non-empty set of same-shaped variables.
    Var sum_pool(std::span<const Var> set);
    /// Elementwise max over a non-empty set; gradients route to the argmax
    /// member, ties resolved toward the lowest set index.
    Var max_pool(std::span<const Var> set);

    Eigen::Map<Eigen::MatrixXd> value(Var v);
    Eigen::Map<const Eigen::MatrixXd> value(Var v) const;
    Eigen::Map<Eigen::MatrixXd> grad(Var v);
    Eigen::Map<const Eigen::MatrixXd> grad(Var v) const;
    double scalar(Var v) const;

    int rows(Var v) const;
    int cols(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss.  All gradients are zeroed first, so
    /// repeated calls yield identical results.
    void backward(Var loss);

    /// Drop every node but keep arena capacity for the next pass.
    void reset();

  private:
    enum class Op : std::uint8_t {
        leaf,
        matmul,
        add,
        scale,
        concat,
        relu,
        sigmoid,
        log2_1p,
        mul,
        sum_pool,
        max_pool,
    };

    struct Node {
        Op op;
        int rows;
        int cols;
        std::size_t val_off;  ///< into vals_ / grads_
        std::size_t arg_off;  ///< into args_
        int n_args;
        std::size_t aux_off;  ///< into aux_ (max_pool argmax records)
        double scale_factor;  ///< Op::scale only
    };

    Var push(Op op, int rows, int cols, std::span<const Var> args);
    void check_same_shape(const char* op, Var a, Var b) const;
    const Node& node_of(Var v) const;

    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> grads_;
    std::vector<int> args_;
    std::vector<int> aux_;
};

/// Adam with bias correction; defaults follow the training setup.
struct AdamConfig {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment accumulators sized to the flat parameter vector on first use.
struct AdamState {
    AdamConfig config;
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

/// One bias-corrected Adam update of params in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

} // namespace flexdup::ad

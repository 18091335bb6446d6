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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flexdup/autodiff.hpp"
#include "flexdup/channel.hpp"
#include "flexdup/graph.hpp"
#include "flexdup/solvers.hpp"

namespace flexdup {

struct DimensionMismatch : Error {
    using Error::Error;
};
struct EmptyDataset : Error {
    using Error::Error;
};
struct SchemaMismatch : Error {
    using Error::Error;
};

enum class Pooling { sum, max };

std::string to_string(Pooling pooling);
Pooling pooling_from_string(const std::string& name);

/// Two-hidden-layer perceptron with rectified-linear activations.
/// Biases are stored as column matrices so every parameter is a matrix.
struct Mlp {
    Eigen::MatrixXd w1, b1; // H x in, H x 1
    Eigen::MatrixXd w2, b2; // H x H,  H x 1
    Eigen::MatrixXd w3, b3; // 1 x H,  1 x 1
};

/// Aggregation weights of one message-passing layer (no biases).
struct LayerWeights {
    Eigen::MatrixXd wu_intf; // H x in_l
    Eigen::MatrixXd wv_intf; // H x in_l
    Eigen::MatrixXd we_intf; // H x 1
    Eigen::MatrixXd wu_dsr;  // H x (1+H)
    Eigen::MatrixXd wv_dsr;  // H x (1+H)
};

/// All model state needed to reproduce inference.
///
/// in_l is 1 for the first layer (scalar vertex feature) and 1+H afterwards:
/// every layer re-concatenates the first-layer feature (skip connection), so
/// embeddings stay at 1+H for any depth.
struct ModelParams {
    int layers = 3;
    int hidden = 64;
    double t_p = 0.1;
    double t_d = 0.1;
    Pooling pooling = Pooling::sum;
    double norm_p_max = 1.0;   ///< feature/loss scaling, copied from the channel
    double norm_noise = 1e-13; ///< feature/loss scaling, copied from the channel
    std::vector<LayerWeights> layer;
    Mlp power_head;     // input 1+H
    Mlp direction_head; // input 2(1+H)
};

struct TrainConfig {
    double learning_rate = 0.002;
    int batch_size = 64;
    int epochs = 50;
    std::uint64_t seed = 0;
    int layers = 3;
    int hidden = 64;
    double t_p = 0.1;
    double t_d = 0.1;
    Pooling pooling = Pooling::sum;
    int n_threads = 1; ///< batch workers; results are thread-count independent
};

struct TrainResult {
    ModelParams params;          ///< best epoch by mean training loss
    std::vector<double> history; ///< mean training loss per epoch
    int best_epoch = 0;          ///< 0-based index into history
};

struct ForwardOutput {
    std::vector<double> p_relaxed; ///< per node, in (0, p_max)
    std::vector<double> d_relaxed; ///< per node, pair-consistent in (0, 1)
};

/// Uniform init in (-1/sqrt(fan_in), 1/sqrt(fan_in)); deterministic in seed.
ModelParams init_params(const TrainConfig& config, std::uint64_t seed);

/// Relaxed power/direction outputs for one network.
ForwardOutput forward(const FlexGraph& graph, const ModelParams& params);

/// Negated relaxed sum-rate of the forward outputs (the training objective).
double loss(const GainMatrix& G, const ForwardOutput& out);

/// Mini-batch Adam on -relaxed_sum_rate; deterministic given config.seed.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// Forward pass plus direction thresholding at 0.5 (ties: lower index
/// transmits).  Receiver powers are zeroed; transmit powers stay continuous.
SolverResult infer(const GainMatrix& G, const ModelParams& params);
/// Same, with a pre-built graph (lets callers time the network in isolation).
SolverResult infer(const GainMatrix& G, const FlexGraph& graph, const ModelParams& params);

void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

// --- training internals, exposed for gradient verification ---------------

/// Tape handles produced by run_forward: parameter leaves in flatten order
/// plus per-node relaxed outputs (q = p/p_max and d, each a 1x1 variable).
struct TapeForward {
    std::vector<ad::Var> weight_leaves;
    std::vector<ad::Var> q;
    std::vector<ad::Var> d;
};

/// Records the full model on the tape.  Throws DimensionMismatch if params
/// shapes are inconsistent with (layers, hidden) or the graph.
TapeForward run_forward(ad::Tape& tape, const FlexGraph& graph, const ModelParams& params);

/// Appends -relaxed_sum_rate(G, p, d) to the tape, computed in the scaled
/// domain g * p_max / noise so no term suffers catastrophic cancellation.
ad::Var attach_loss(ad::Tape& tape, const GainMatrix& G, const TapeForward& fwd);

/// Canonical parameter order: per layer wu_intf, wv_intf, we_intf, wu_dsr,
/// wv_dsr; then power head w1,b1,w2,b2,w3,b3; then direction head likewise.
/// Matrices are laid out column-major within the flat vector.
std::vector<double> flatten_params(const ModelParams& params);
void unflatten_params(std::span<const double> flat, ModelParams& params);
std::size_t param_count(const ModelParams& params);

} // namespace flexdup

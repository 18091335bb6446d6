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

#ifndef FLEXDUP_SOLVERS_HPP
#define FLEXDUP_SOLVERS_HPP

#include <cstdint>
#include <vector>

#include "flexdup/channel.hpp"
#include "flexdup/objective.hpp"

namespace flexdup {

struct TooManyPairs : Error {
    using Error::Error;
};

struct SolverResult {
    Allocation alloc;          // binary mode
    double achieved_rate = 0;  // bits
    int iterations = 0;        // inner iterations / restarts, solver specific
    double wall_time = 0.0;    // seconds spent inside the solver
};

struct WmmseResult {
    std::vector<double> power;            // per node; receivers get 0
    int iterations = 0;
    std::vector<double> objective_trace;  // fixed-direction sum-rate after each iteration
};

inline constexpr int kWmmseMaxIters = 100;
inline constexpr double kWmmseTol = 1e-6;     // bits
inline constexpr double kHeuristicEps = 1e-3; // bits
inline constexpr int kExhaustiveMaxPairs = 16;

/// Power control for a fixed binary direction vector, reconstructed for
/// scalar real channels from the classical weighted-MMSE reformulation.
///
/// Per transmitter i with intended receiver r(i), iterate
///   u_i = sqrt(g[r,i]) v_i / (sigma^2 + sum_j g[r,j] v_j^2)
///   w_i = 1 / (1 - u_i sqrt(g[r,i]) v_i)
///   v_i = w_i u_i sqrt(g[r,i]) / sum_j w_j u_j^2 g[r(j),i],  clamped to [0, sqrt(p_max)]
/// with p_i = v_i^2. The fixed-direction sum-rate is non-decreasing across
/// iterations; stops when it improves by less than tol or at max_iters.
WmmseResult wmmse(const GainMatrix& G,
                  const std::vector<double>& directions,
                  const std::vector<double>& p_init,
                  int max_iters = kWmmseMaxIters,
                  double tol = kWmmseTol);

/// Greedy best-improvement single-pair flips at fixed powers until no flip
/// increases the sum-rate. A flip swaps the roles (direction and power) of
/// the two nodes of a pair.
std::vector<double> direct_search_directions(const GainMatrix& G,
                                             const std::vector<double>& p,
                                             const std::vector<double>& d_init);

/// Coordinate descent: alternate direct search over directions (at current
/// powers) and WMMSE over powers (at current directions), starting from full
/// power, until a full round improves the rate by less than epsilon. Best
/// result over n_restarts random direction initializations.
SolverResult heuristic_search(const GainMatrix& G,
                              double epsilon = kHeuristicEps,
                              int n_restarts = 0, // 0: N restarts
                              std::uint64_t seed = 0);

/// WMMSE on all 2^N direction vectors; argmax with ties broken toward the
/// lexicographically smallest direction vector. Throws TooManyPairs above
/// kExhaustiveMaxPairs.
SolverResult exhaustive_search(const GainMatrix& G);

/// Each pair transmits in the direction with the larger gain (tie: lower
/// index transmits), at full power.
SolverResult max_power_baseline(const GainMatrix& G);

/// max_power_baseline, then a transmitter is silenced when some other
/// active receiver hears it at twice (or more) the gain of its own receiver.
/// All silencing decisions are taken from the initial assignment, then
/// applied together.
SolverResult max_power_silent_baseline(const GainMatrix& G);

} // namespace flexdup

#endif // FLEXDUP_SOLVERS_HPP

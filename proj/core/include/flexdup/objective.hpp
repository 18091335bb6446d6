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

#ifndef FLEXDUP_OBJECTIVE_HPP
#define FLEXDUP_OBJECTIVE_HPP

#include <span>
#include <vector>

#include "flexdup/channel.hpp"
#include "flexdup/errors.hpp"

namespace flexdup {

/// Index of the node paired with n (adjacent-index convention: n XOR 1).
/// Throws IndexOutOfRange unless 0 <= n < n_nodes.
int partner(int n, int n_nodes);

enum class DirectionMode { binary, relaxed };

/// Per-node transmit power and direction indicator. Directions are
/// pair-consistent: the two nodes of a pair always sum to exactly 1, so a
/// node and its partner are never both transmitting.
struct Allocation {
    std::vector<double> power;      // watts, each in [0, p_max]
    std::vector<double> direction;  // {0,1} in binary mode, [0,1] relaxed
    DirectionMode mode = DirectionMode::binary;
};

/// Validates the Allocation invariants against G; throws InvalidArgument.
void validate(const Allocation& alloc, const GainMatrix& G);

/// SINR of node n: the partner's powered-and-directed gain over noise plus
/// all other nodes' powered-and-directed gains into n. Accepts binary or
/// relaxed directions.
double sinr(const GainMatrix& G, const Allocation& alloc, int n);

/// Sum over all nodes of log2(1 + sinr). With binary directions only
/// receiving nodes contribute.
double sum_rate(const GainMatrix& G, const Allocation& alloc);

/// Same objective with continuous directions in [0,1]; coincides with
/// sum_rate when d is binary.
double relaxed_sum_rate(const GainMatrix& G, std::span<const double> p, std::span<const double> d);

} // namespace flexdup

#endif // FLEXDUP_OBJECTIVE_HPP

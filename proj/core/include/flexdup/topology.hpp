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

#ifndef FLEXDUP_TOPOLOGY_HPP
#define FLEXDUP_TOPOLOGY_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "flexdup/errors.hpp"

namespace flexdup {

struct InfeasiblePacking : Error {
    using Error::Error;
};
struct OddNodeCount : Error {
    using Error::Error;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Node placement plus pairing for a 2N-node network. Nodes are stored in
/// adjacent-index order: pair k occupies indices (2k, 2k+1), so a node's
/// partner is always index XOR 1.
struct NetworkTopology {
    std::vector<Point> positions;              // size 2N, coordinates in [0, area_side]
    std::vector<std::pair<int, int>> pairs;    // {(0,1), (2,3), ...}
    double area_side = 0.0;                    // meters
    double min_distance = 0.0;                 // spacing enforced at generation time

    int n_nodes() const { return static_cast<int>(positions.size()); }
    int n_pairs() const { return static_cast<int>(pairs.size()); }
};

/// Draws `count` points uniformly in a square of side `area_side` with all
/// pairwise distances >= min_distance (dart throwing with a bounded
/// rejection budget per point).
///
/// Throws InfeasiblePacking when the points cannot be placed, either because
/// the disk-packing bound rules the request out up front or because the
/// rejection budget is exhausted.
std::vector<Point> sample_poisson_disk(double area_side,
                                       double min_distance,
                                       int count,
                                       std::uint64_t seed);

/// Uniformly random perfect matching on indices 0..count-1.
/// Throws OddNodeCount when count is odd or < 2.
std::vector<std::pair<int, int>> pair_nodes(int count, std::uint64_t seed);

/// Samples positions, pairs them, and relabels nodes into adjacent-index
/// order so that partner(n) == n XOR 1 downstream.
NetworkTopology make_topology(double area_side,
                              double min_distance,
                              int n_pairs,
                              std::uint64_t seed);

double distance(const Point& a, const Point& b);

} // namespace flexdup

#endif // FLEXDUP_TOPOLOGY_HPP

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

#include <utility>
#include <vector>

#include "flexdup/channel.hpp"

namespace flexdup {

/// Directed interference edge (src interferes with dst).
struct IntfEdge {
    int src = 0;
    int dst = 0;
    double feature = 0.0; ///< normalize(g[dst][src])
};

/// Dual-edge graph view of a flexible duplex network.
///
/// Vertices are the 2N nodes.  Undirected desired edges connect the N
/// communication pairs; directed interference edges connect every ordered
/// (u, v) with u outside {v, partner(v)}, so |intf_edges| = 2N(2N-2).
/// All gain features share one transform: log10(1 + g * p_max / noise).
struct FlexGraph {
    int n_vertices = 0;
    std::vector<double> vertex_feature;             ///< normalize(g[v][partner(v)])
    std::vector<std::pair<int, int>> desired_edges; ///< {(2k, 2k+1)}
    std::vector<IntfEdge> intf_edges;               ///< sorted by dst, then src
    /// CSR-style offsets into intf_edges: edges targeting vertex v occupy
    /// [intf_offsets[v], intf_offsets[v+1]).  Lets aggregation walk each
    /// destination's in-edges without a scan.
    std::vector<int> intf_offsets;
    double norm_constant = 0.0; ///< p_max / noise used by the feature transform
};

/// log10(1 + gain * p_max / noise): a dimensionless SNR-like feature.
double normalize_gain(double gain, double p_max, double noise);

FlexGraph build_graph(const GainMatrix& G);

} // namespace flexdup

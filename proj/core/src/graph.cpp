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

#include "flexdup/graph.hpp"

#include <cmath>

namespace flexdup {

double normalize_gain(double gain, double p_max, double noise) {
    return std::log10(1.0 + gain * p_max / noise);
}

FlexGraph build_graph(const GainMatrix& G) {
    const int n = G.n_nodes;
    FlexGraph graph;
    graph.n_vertices = n;
    graph.norm_constant = G.p_max / G.noise;

    graph.vertex_feature.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        graph.vertex_feature[static_cast<std::size_t>(v)] = normalize_gain(G.g(v, v ^ 1), G.p_max, G.noise);
    }

    graph.desired_edges.reserve(static_cast<std::size_t>(n / 2));
    for (int k = 0; k < n / 2; ++k) {
        graph.desired_edges.emplace_back(2 * k, 2 * k + 1);
    }

    graph.intf_edges.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n >= 2 ? n - 2 : 0));
    graph.intf_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int dst = 0; dst < n; ++dst) {
        for (int src = 0; src < n; ++src) {
            if (src == dst || src == (dst ^ 1)) {
                continue;
            }
            graph.intf_edges.push_back({src, dst, normalize_gain(G.g(dst, src), G.p_max, G.noise)});
        }
        graph.intf_offsets[static_cast<std::size_t>(dst) + 1] = static_cast<int>(graph.intf_edges.size());
    }
    return graph;
}

} // namespace flexdup

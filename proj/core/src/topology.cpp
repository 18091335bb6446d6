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

#include "flexdup/topology.hpp"

#include <cmath>
#include <string>

#include "flexdup/rng.hpp"

namespace flexdup {

namespace {
constexpr int kRejectionsPerPoint = 10000;
}

double distance(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

std::vector<Point> sample_poisson_disk(double area_side,
                                       double min_distance,
                                       int count,
                                       std::uint64_t seed) {
    if (count < 1) {
        throw InvalidArgument("sample_poisson_disk: count must be >= 1");
    }
    if (min_distance <= 0.0 || area_side <= 0.0) {
        throw NonPositiveInput("sample_poisson_disk: area_side and min_distance must be > 0");
    }
    // Disk-packing bound: each accepted point claims a disk of radius
    // min_distance/2 that no other point's disk may overlap.
    const double claimed = static_cast<double>(count) * M_PI * (min_distance / 2.0) * (min_distance / 2.0);
    if (claimed >= area_side * area_side) {
        throw InfeasiblePacking("sample_poisson_disk: " + std::to_string(count) +
                                " points cannot keep spacing " + std::to_string(min_distance) +
                                " m inside a " + std::to_string(area_side) + " m square");
    }

    Rng rng(seed);
    std::vector<Point> points;
    points.reserve(static_cast<std::size_t>(count));
    while (static_cast<int>(points.size()) < count) {
        bool placed = false;
        for (int attempt = 0; attempt < kRejectionsPerPoint; ++attempt) {
            const Point candidate{rng.uniform(0.0, area_side), rng.uniform(0.0, area_side)};
            bool ok = true;
            for (const Point& p : points) {
                if (distance(candidate, p) < min_distance) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                points.push_back(candidate);
                placed = true;
                break;
            }
        }
        if (!placed) {
            throw InfeasiblePacking("sample_poisson_disk: rejection budget exhausted after placing " +
                                    std::to_string(points.size()) + " of " + std::to_string(count) + " points");
        }
    }
    return points;
}

std::vector<std::pair<int, int>> pair_nodes(int count, std::uint64_t seed) {
    if (count < 2 || count % 2 != 0) {
        throw OddNodeCount("pair_nodes: count must be even and >= 2, got " + std::to_string(count));
    }
    // A uniform permutation grouped into consecutive pairs is a uniform
    // perfect matching (every matching corresponds to N! * 2^N orderings).
    std::vector<int> order(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        order[static_cast<std::size_t>(i)] = i;
    }
    Rng rng(seed);
    for (int i = count - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(count / 2));
    for (int k = 0; k < count / 2; ++k) {
        pairs.emplace_back(order[static_cast<std::size_t>(2 * k)], order[static_cast<std::size_t>(2 * k + 1)]);
    }
    return pairs;
}

NetworkTopology make_topology(double area_side,
                              double min_distance,
                              int n_pairs,
                              std::uint64_t seed) {
    if (n_pairs < 1) {
        throw InvalidArgument("make_topology: n_pairs must be >= 1");
    }
    const int count = 2 * n_pairs;
    auto raw = sample_poisson_disk(area_side, min_distance, count, derive_seed(seed, 0));
    auto matching = pair_nodes(count, derive_seed(seed, 1));

    NetworkTopology topo;
    topo.area_side = area_side;
    topo.min_distance = min_distance;
    topo.positions.resize(static_cast<std::size_t>(count));
    topo.pairs.reserve(static_cast<std::size_t>(n_pairs));
    // Relabel so that matched nodes land on adjacent indices (2k, 2k+1).
    for (int k = 0; k < n_pairs; ++k) {
        const auto [a, b] = matching[static_cast<std::size_t>(k)];
        topo.positions[static_cast<std::size_t>(2 * k)] = raw[static_cast<std::size_t>(a)];
        topo.positions[static_cast<std::size_t>(2 * k + 1)] = raw[static_cast<std::size_t>(b)];
        topo.pairs.emplace_back(2 * k, 2 * k + 1);
    }
    return topo;
}

} // namespace flexdup

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

#include <algorithm>
#include <array>
#include <limits>
#include <set>

#include <doctest.h>

#include "flexdup/topology.hpp"

using namespace flexdup;

namespace {

double min_pairwise_distance(const std::vector<Point>& points)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            best = std::min(best, distance(points[i], points[j]));
        }
    }
    return best;
}

bool inside_square(const std::vector<Point>& points, double side)
{
    return std::all_of(points.begin(), points.end(), [side](const Point& p) {
        return p.x >= 0.0 && p.x <= side && p.y >= 0.0 && p.y <= side;
    });
}

} // namespace

TEST_CASE("poisson disk sampling respects spacing and bounds")
{
    const auto points = sample_poisson_disk(4000.0, 100.0, 8, 42);
    REQUIRE(points.size() == 8);
    CHECK(inside_square(points, 4000.0));
    CHECK(min_pairwise_distance(points) >= 100.0);
}

TEST_CASE("poisson disk sampling handles a single point")
{
    const auto points = sample_poisson_disk(4000.0, 100.0, 1, 7);
    REQUIRE(points.size() == 1);
    CHECK(inside_square(points, 4000.0));
}

TEST_CASE("poisson disk sampling is deterministic in the seed")
{
    const auto a = sample_poisson_disk(4000.0, 100.0, 12, 3);
    const auto b = sample_poisson_disk(4000.0, 100.0, 12, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
    }
    const auto c = sample_poisson_disk(4000.0, 100.0, 12, 4);
    bool any_different = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        any_different = any_different || a[i].x != c[i].x || a[i].y != c[i].y;
    }
    CHECK(any_different);
}

TEST_CASE("poisson disk sampling rejects infeasible packings")
{
    CHECK_THROWS_AS(sample_poisson_disk(100.0, 100.0, 1000, 1), InfeasiblePacking);
    CHECK_THROWS_AS(sample_poisson_disk(4000.0, 100.0, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(sample_poisson_disk(-1.0, 100.0, 4, 1), NonPositiveInput);
}

TEST_CASE("pair_nodes covers indices exactly once")
{
    const auto forced = pair_nodes(2, 99);
    REQUIRE(forced.size() == 1);
    CHECK(std::min(forced[0].first, forced[0].second) == 0);
    CHECK(std::max(forced[0].first, forced[0].second) == 1);

    const auto pairs = pair_nodes(10, 5);
    REQUIRE(pairs.size() == 5);
    std::set<int> seen;
    for (const auto& [a, b] : pairs) {
        seen.insert(a);
        seen.insert(b);
    }
    REQUIRE(seen.size() == 10);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 9);

    CHECK_THROWS_AS(pair_nodes(3, 1), OddNodeCount);
    CHECK_THROWS_AS(pair_nodes(0, 1), OddNodeCount);
}

TEST_CASE("pair_nodes draws matchings close to uniformly")
{
    // Four nodes admit three matchings, keyed by the partner of node 0.
    std::array<int, 4> partner_counts{};
    const int trials = 3000;
    for (int seed = 0; seed < trials; ++seed) {
        const auto pairs = pair_nodes(4, static_cast<std::uint64_t>(seed));
        for (const auto& [a, b] : pairs) {
            if (a == 0) {
                ++partner_counts[static_cast<std::size_t>(b)];
            }
            if (b == 0) {
                ++partner_counts[static_cast<std::size_t>(a)];
            }
        }
    }
    CHECK(partner_counts[0] == 0);
    for (int p = 1; p < 4; ++p) {
        const double share = partner_counts[static_cast<std::size_t>(p)] / static_cast<double>(trials);
        CHECK(share == doctest::Approx(1.0 / 3.0).epsilon(0.15));
    }
}

TEST_CASE("make_topology relabels pairs onto adjacent indices")
{
    const auto topo = make_topology(4000.0, 100.0, 5, 11);
    REQUIRE(topo.n_nodes() == 10);
    REQUIRE(topo.n_pairs() == 5);
    for (int k = 0; k < topo.n_pairs(); ++k) {
        CHECK(topo.pairs[static_cast<std::size_t>(k)].first == 2 * k);
        CHECK(topo.pairs[static_cast<std::size_t>(k)].second == 2 * k + 1);
    }
    CHECK(min_pairwise_distance(topo.positions) >= 100.0);
    CHECK(inside_square(topo.positions, 4000.0));
    CHECK(topo.area_side == 4000.0);
    CHECK(topo.min_distance == 100.0);
}

TEST_CASE("distance is the planar euclidean metric")
{
    CHECK(distance({0.0, 0.0}, {3.0, 4.0}) == doctest::Approx(5.0));
    CHECK(distance({1.0, 1.0}, {1.0, 1.0}) == 0.0);
}

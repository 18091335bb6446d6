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

#include "flexdup/objective.hpp"

#include <cmath>
#include <string>

namespace flexdup {

namespace {

const double kInvLn2 = 1.0 / std::log(2.0);

double node_sinr(const GainMatrix& G, std::span<const double> p, std::span<const double> d, int n) {
    const int m = n ^ 1;
    const double signal = p[static_cast<std::size_t>(m)] * d[static_cast<std::size_t>(m)] * G.g(n, m);
    double interference = 0.0;
    for (int k = 0; k < G.n_nodes; ++k) {
        if (k == m || k == n) {
            continue;
        }
        interference += p[static_cast<std::size_t>(k)] * d[static_cast<std::size_t>(k)] * G.g(n, k);
    }
    return signal / (G.noise + interference);
}

double total_rate(const GainMatrix& G, std::span<const double> p, std::span<const double> d) {
    double rate = 0.0;
    for (int n = 0; n < G.n_nodes; ++n) {
        rate += std::log1p(node_sinr(G, p, d, n)) * kInvLn2;
    }
    return rate;
}

void check_directions(std::span<const double> d, bool binary) {
    for (std::size_t n = 0; n < d.size(); ++n) {
        if (!(d[n] >= 0.0 && d[n] <= 1.0)) {
            throw InvalidArgument("direction[" + std::to_string(n) + "] outside [0,1]");
        }
        if (binary && d[n] != 0.0 && d[n] != 1.0) {
            throw InvalidArgument("direction[" + std::to_string(n) + "] not binary");
        }
    }
    // d_partner = 1 - d_n; one rounded add of complements lands on 1.0
    // exactly, so this comparison is not tolerance-based.
    for (std::size_t k = 0; k + 1 < d.size(); k += 2) {
        if (d[k] + d[k + 1] != 1.0) {
            throw InvalidArgument("pair " + std::to_string(k / 2) + " directions are not complementary");
        }
    }
}

} // namespace

int partner(int n, int n_nodes) {
    if (n < 0 || n >= n_nodes) {
        throw IndexOutOfRange("partner: node " + std::to_string(n) + " outside [0, " + std::to_string(n_nodes) + ")");
    }
    return n ^ 1;
}

void validate(const Allocation& alloc, const GainMatrix& G) {
    const auto n = static_cast<std::size_t>(G.n_nodes);
    if (G.n_nodes < 2 || G.n_nodes % 2 != 0) {
        throw InvalidArgument("gain matrix must describe an even number >= 2 of nodes");
    }
    if (G.g.rows() != G.n_nodes || G.g.cols() != G.n_nodes) {
        throw InvalidArgument("gain matrix shape does not match n_nodes");
    }
    if (!(G.noise > 0.0)) {
        throw InvalidArgument("noise power must be > 0");
    }
    if (alloc.power.size() != n || alloc.direction.size() != n) {
        throw InvalidArgument("allocation size does not match n_nodes");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(alloc.power[i] >= 0.0 && alloc.power[i] <= G.p_max)) {
            throw InvalidArgument("power[" + std::to_string(i) + "] outside [0, p_max]");
        }
    }
    check_directions(alloc.direction, alloc.mode == DirectionMode::binary);
}

double sinr(const GainMatrix& G, const Allocation& alloc, int n) {
    validate(alloc, G);
    if (n < 0 || n >= G.n_nodes) {
        throw IndexOutOfRange("sinr: node index out of range");
    }
    return node_sinr(G, alloc.power, alloc.direction, n);
}

double sum_rate(const GainMatrix& G, const Allocation& alloc) {
    validate(alloc, G);
    return total_rate(G, alloc.power, alloc.direction);
}

double relaxed_sum_rate(const GainMatrix& G, std::span<const double> p, std::span<const double> d) {
    if (p.size() != static_cast<std::size_t>(G.n_nodes) || d.size() != static_cast<std::size_t>(G.n_nodes)) {
        throw InvalidArgument("relaxed_sum_rate: vector sizes do not match n_nodes");
    }
    check_directions(d, /*binary=*/false);
    return total_rate(G, p, d);
}

} // namespace flexdup

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

#include "flexdup/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "flexdup/rng.hpp"

namespace flexdup {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double rate_of(const GainMatrix& G, const std::vector<double>& p, const std::vector<double>& d) {
    return relaxed_sum_rate(G, p, d);
}

std::vector<double> full_power(const GainMatrix& G) {
    return std::vector<double>(static_cast<std::size_t>(G.n_nodes), G.p_max);
}

/// Zero the power of every node currently in receive mode.
void zero_receivers(std::vector<double>& p, const std::vector<double>& d) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (d[i] == 0.0) {
            p[i] = 0.0;
        }
    }
}

SolverResult make_result(const GainMatrix& G, std::vector<double> p, std::vector<double> d, int iterations,
                         Clock::time_point start) {
    SolverResult res;
    res.alloc.power = std::move(p);
    res.alloc.direction = std::move(d);
    res.alloc.mode = DirectionMode::binary;
    res.achieved_rate = sum_rate(G, res.alloc);
    res.iterations = iterations;
    res.wall_time = seconds_since(start);
    return res;
}

/// Applies the silent-node rule to direction vector d: transmitter t serving
/// receiver r goes to zero power when some other receiver r' would overhear
/// it at >= twice the desired gain.  Decisions are simultaneous, from the
/// assignment in which every pair is active.  Returns full power elsewhere.
std::vector<double> silenced_powers(const GainMatrix& G, const std::vector<double>& d) {
    const int pairs = G.n_pairs();
    std::vector<double> p(static_cast<std::size_t>(G.n_nodes), 0.0);
    for (int k = 0; k < pairs; ++k) {
        const int t = d[static_cast<std::size_t>(2 * k)] == 1.0 ? 2 * k : 2 * k + 1;
        const int r = t ^ 1;
        bool silenced = false;
        for (int other = 0; other < G.n_nodes && !silenced; ++other) {
            if (other == r || d[static_cast<std::size_t>(other)] != 0.0) {
                continue; // only receivers of other pairs are compared
            }
            if (G.g(other, t) >= 2.0 * G.g(r, t)) {
                silenced = true;
            }
        }
        p[static_cast<std::size_t>(t)] = silenced ? 0.0 : G.p_max;
    }
    return p;
}

} // namespace

WmmseResult wmmse(const GainMatrix& G,
                  const std::vector<double>& directions,
                  const std::vector<double>& p_init,
                  int max_iters,
                  double tol) {
    const int n = G.n_nodes;
    Allocation check{p_init, directions, DirectionMode::binary};
    validate(check, G);
    if (max_iters < 1) {
        throw InvalidArgument("wmmse: max_iters must be >= 1");
    }

    std::vector<int> tx;
    tx.reserve(static_cast<std::size_t>(n / 2));
    for (int i = 0; i < n; ++i) {
        if (directions[static_cast<std::size_t>(i)] == 1.0) {
            tx.push_back(i);
        }
    }
    const std::size_t t = tx.size();
    const double v_cap = std::sqrt(G.p_max);

    std::vector<double> v(t), u(t), w(t), root_gain(t);
    for (std::size_t i = 0; i < t; ++i) {
        v[i] = std::sqrt(p_init[static_cast<std::size_t>(tx[i])]);
        root_gain[i] = std::sqrt(G.g(tx[i] ^ 1, tx[i]));
    }

    auto powers_of = [&](const std::vector<double>& amp) {
        std::vector<double> p(static_cast<std::size_t>(n), 0.0);
        for (std::size_t i = 0; i < t; ++i) {
            p[static_cast<std::size_t>(tx[i])] = amp[i] * amp[i];
        }
        return p;
    };

    WmmseResult res;
    double obj = rate_of(G, powers_of(v), directions);
    res.objective_trace.push_back(obj);

    int iter = 0;
    for (; iter < max_iters; ++iter) {
        // MMSE receive scalar per link.
        for (std::size_t i = 0; i < t; ++i) {
            const int rx = tx[i] ^ 1;
            double received = G.noise;
            for (std::size_t j = 0; j < t; ++j) {
                received += G.g(rx, tx[j]) * v[j] * v[j];
            }
            u[i] = root_gain[i] * v[i] / received;
        }
        // MSE weight; u is the MMSE scalar so u*h*v < 1 and w >= 1.
        for (std::size_t i = 0; i < t; ++i) {
            w[i] = 1.0 / (1.0 - u[i] * root_gain[i] * v[i]);
        }
        // Transmit amplitude: the surrogate is separable in v, so the
        // clamped closed form is the exact box-constrained minimizer.
        for (std::size_t i = 0; i < t; ++i) {
            double denom = 0.0;
            for (std::size_t j = 0; j < t; ++j) {
                denom += w[j] * u[j] * u[j] * G.g(tx[j] ^ 1, tx[i]);
            }
            const double numer = w[i] * u[i] * root_gain[i];
            v[i] = numer > 0.0 ? std::clamp(numer / denom, 0.0, v_cap) : 0.0;
        }
        const double new_obj = rate_of(G, powers_of(v), directions);
        res.objective_trace.push_back(new_obj);
        if (new_obj - obj < tol) {
            obj = std::max(obj, new_obj);
            ++iter;
            break;
        }
        obj = new_obj;
    }
    res.iterations = iter;
    res.power = powers_of(v);
    return res;
}

std::vector<double> direct_search_directions(const GainMatrix& G,
                                             const std::vector<double>& p,
                                             const std::vector<double>& d_init) {
    Allocation check{p, d_init, DirectionMode::binary};
    validate(check, G);

    std::vector<double> d = d_init;
    std::vector<double> q = p;
    const int pairs = G.n_pairs();
    double cur = rate_of(G, q, d);

    auto flip = [&](int k) {
        std::swap(d[static_cast<std::size_t>(2 * k)], d[static_cast<std::size_t>(2 * k + 1)]);
        std::swap(q[static_cast<std::size_t>(2 * k)], q[static_cast<std::size_t>(2 * k + 1)]);
    };

    for (;;) {
        int best_pair = -1;
        double best_rate = cur;
        for (int k = 0; k < pairs; ++k) {
            flip(k);
            const double candidate = rate_of(G, q, d);
            flip(k);
            if (candidate > best_rate) {
                best_rate = candidate;
                best_pair = k;
            }
        }
        if (best_pair < 0) {
            break;
        }
        flip(best_pair);
        cur = best_rate;
    }
    return d;
}

SolverResult heuristic_search(const GainMatrix& G, double epsilon, int n_restarts, std::uint64_t seed) {
    const auto start = Clock::now();
    if (!(epsilon > 0.0)) {
        throw InvalidArgument("heuristic_search: epsilon must be > 0");
    }
    const int pairs = G.n_pairs();
    if (n_restarts <= 0) {
        n_restarts = pairs;
    }

    const auto p_full = full_power(G);
    double best_rate = -1.0;
    std::vector<double> best_p, best_d;
    int rounds_total = 0;

    for (int restart = 0; restart < n_restarts; ++restart) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(restart)));
        std::vector<double> d(static_cast<std::size_t>(G.n_nodes), 0.0);
        for (int k = 0; k < pairs; ++k) {
            const bool low_tx = rng.uniform() < 0.5;
            d[static_cast<std::size_t>(2 * k)] = low_tx ? 1.0 : 0.0;
            d[static_cast<std::size_t>(2 * k + 1)] = low_tx ? 0.0 : 1.0;
        }

        std::vector<double> p = p_full;
        double prev = rate_of(G, p, d);
        for (int round = 0; round < 100; ++round) {
            ++rounds_total;
            d = direct_search_directions(G, p, d);
            p = wmmse(G, d, p_full).power;
            const double cur = rate_of(G, p, d);
            if (cur > best_rate) {
                best_rate = cur;
                best_p = p;
                best_d = d;
            }
            if (cur - prev < epsilon) {
                break;
            }
            prev = cur;
        }
    }
    return make_result(G, std::move(best_p), std::move(best_d), rounds_total, start);
}

SolverResult exhaustive_search(const GainMatrix& G) {
    const auto start = Clock::now();
    const int pairs = G.n_pairs();
    if (pairs > kExhaustiveMaxPairs) {
        throw TooManyPairs("exhaustive_search: " + std::to_string(pairs) + " pairs exceeds the 2^N guard of " +
                           std::to_string(kExhaustiveMaxPairs));
    }
    const auto p_full = full_power(G);

    double best_rate = -1.0;
    std::vector<double> best_p, best_d;
    const std::uint64_t combos = 1ULL << pairs;
    // Index bits are consumed most-significant-first so ascending index
    // enumerates direction vectors in lexicographic order; keeping the first
    // strict improvement then breaks ties toward the smallest vector.
    for (std::uint64_t idx = 0; idx < combos; ++idx) {
        std::vector<double> d(static_cast<std::size_t>(G.n_nodes));
        for (int k = 0; k < pairs; ++k) {
            const bool low_tx = ((idx >> (pairs - 1 - k)) & 1ULL) == 0ULL;
            d[static_cast<std::size_t>(2 * k)] = low_tx ? 1.0 : 0.0;
            d[static_cast<std::size_t>(2 * k + 1)] = low_tx ? 0.0 : 1.0;
        }
        // Each direction is evaluated from a small deterministic family of
        // WMMSE initializations, not just full power.  Zero amplitude is
        // absorbing in the WMMSE update, so a cold start can stall in a dense
        // local optimum and miss sparse allocations -- which would let the
        // silent-node baseline beat the enumeration.  Seeding additionally
        // from the silent-node pattern and from every solo pair covers those
        // basins and keeps exhaustive an upper bound for all baselines.
        double cur = -1.0;
        std::vector<double> p_best;
        auto try_init = [&](const std::vector<double>& p_init) {
            auto wm = wmmse(G, d, p_init);
            const double rate = rate_of(G, wm.power, d);
            if (rate > cur) {
                cur = rate;
                p_best = std::move(wm.power);
            }
        };
        try_init(p_full);
        const std::vector<double> p_silent = silenced_powers(G, d);
        bool any_silenced = false;
        for (std::size_t i = 0; i < p_silent.size(); ++i) {
            any_silenced = any_silenced || (d[i] == 1.0 && p_silent[i] == 0.0);
        }
        if (any_silenced) {
            try_init(p_silent);
        }
        if (pairs > 1) {
            for (int k = 0; k < pairs; ++k) {
                std::vector<double> p_solo(static_cast<std::size_t>(G.n_nodes), 0.0);
                const int t = d[static_cast<std::size_t>(2 * k)] == 1.0 ? 2 * k : 2 * k + 1;
                p_solo[static_cast<std::size_t>(t)] = G.p_max;
                try_init(p_solo);
            }
        }
        if (cur > best_rate) {
            best_rate = cur;
            best_p = std::move(p_best);
            best_d = std::move(d);
        }
    }
    return make_result(G, std::move(best_p), std::move(best_d), static_cast<int>(combos), start);
}

SolverResult max_power_baseline(const GainMatrix& G) {
    const auto start = Clock::now();
    const int pairs = G.n_pairs();
    std::vector<double> d(static_cast<std::size_t>(G.n_nodes), 0.0);
    std::vector<double> p(static_cast<std::size_t>(G.n_nodes), 0.0);
    for (int k = 0; k < pairs; ++k) {
        const int a = 2 * k;
        const int b = 2 * k + 1;
        // Transmit over the stronger link; equal gains go to the lower index.
        const int tx = G.g(b, a) >= G.g(a, b) ? a : b;
        d[static_cast<std::size_t>(tx)] = 1.0;
        p[static_cast<std::size_t>(tx)] = G.p_max;
    }
    return make_result(G, std::move(p), std::move(d), 0, start);
}

SolverResult max_power_silent_baseline(const GainMatrix& G) {
    const auto start = Clock::now();
    SolverResult base = max_power_baseline(G);
    base.alloc.power = silenced_powers(G, base.alloc.direction);
    base.achieved_rate = sum_rate(G, base.alloc);
    base.wall_time = seconds_since(start);
    return base;
}

} // namespace flexdup

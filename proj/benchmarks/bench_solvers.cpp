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

#include <vector>

#include <benchmark/benchmark.h>

#include "flexdup/channel.hpp"
#include "flexdup/rng.hpp"
#include "flexdup/solvers.hpp"

using namespace flexdup;

namespace {

GainMatrix instance_of(int n_pairs)
{
    ChannelConfig config;
    config.n_pairs = n_pairs;
    return generate_sample(config, derive_seed(42, static_cast<std::uint64_t>(n_pairs)));
}

void wmmse_fixed_direction(benchmark::State& state)
{
    const GainMatrix G = instance_of(static_cast<int>(state.range(0)));
    std::vector<double> d(static_cast<std::size_t>(G.n_nodes), 0.0);
    for (int k = 0; k < G.n_nodes; k += 2) {
        d[static_cast<std::size_t>(k)] = 1.0;
    }
    const std::vector<double> p_full(static_cast<std::size_t>(G.n_nodes), G.p_max);
    for (auto _ : state) {
        benchmark::DoNotOptimize(wmmse(G, d, p_full));
    }
}

void heuristic(benchmark::State& state)
{
    const GainMatrix G = instance_of(static_cast<int>(state.range(0)));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(heuristic_search(G, kHeuristicEps, 0, seed++));
    }
}

void exhaustive(benchmark::State& state)
{
    const GainMatrix G = instance_of(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(exhaustive_search(G));
    }
}

void channel_sample(benchmark::State& state)
{
    ChannelConfig config;
    config.n_pairs = static_cast<int>(state.range(0));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(generate_sample(config, seed++));
    }
}

} // namespace

BENCHMARK(wmmse_fixed_direction)->Arg(2)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(heuristic)->Arg(2)->Arg(4)->Arg(8);
BENCHMARK(exhaustive)->Arg(2)->Arg(4)->Arg(8);
BENCHMARK(channel_sample)->Arg(4)->Arg(16);

BENCHMARK_MAIN();

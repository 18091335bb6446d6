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

#include <benchmark/benchmark.h>

#include "flexdup/autodiff.hpp"
#include "flexdup/channel.hpp"
#include "flexdup/flexnet.hpp"
#include "flexdup/graph.hpp"
#include "flexdup/rng.hpp"

using namespace flexdup;

namespace {

GainMatrix instance_of(int n_pairs)
{
    ChannelConfig config;
    config.n_pairs = n_pairs;
    return generate_sample(config, derive_seed(42, static_cast<std::uint64_t>(n_pairs)));
}

ModelParams default_model(const GainMatrix& G)
{
    ModelParams params = init_params(TrainConfig{}, 1);
    params.norm_p_max = G.p_max;
    params.norm_noise = G.noise;
    return params;
}

void graph_construction(benchmark::State& state)
{
    const GainMatrix G = instance_of(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_graph(G));
    }
}

void vectorized_forward(benchmark::State& state)
{
    const GainMatrix G = instance_of(static_cast<int>(state.range(0)));
    const FlexGraph graph = build_graph(G);
    const ModelParams params = default_model(G);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(graph, params));
    }
}

void tape_forward_backward(benchmark::State& state)
{
    const GainMatrix G = instance_of(static_cast<int>(state.range(0)));
    const FlexGraph graph = build_graph(G);
    const ModelParams params = default_model(G);
    ad::Tape tape;
    for (auto _ : state) {
        tape.reset();
        const TapeForward fwd = run_forward(tape, graph, params);
        tape.backward(attach_loss(tape, G, fwd));
        benchmark::DoNotOptimize(tape.grad(fwd.weight_leaves.front()));
    }
}

void end_to_end_infer(benchmark::State& state)
{
    const GainMatrix G = instance_of(static_cast<int>(state.range(0)));
    const ModelParams params = default_model(G);
    for (auto _ : state) {
        benchmark::DoNotOptimize(infer(G, params));
    }
}

} // namespace

BENCHMARK(graph_construction)->Arg(4)->Arg(16);
BENCHMARK(vectorized_forward)->Arg(2)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(tape_forward_backward)->Arg(2)->Arg(4)->Arg(8);
BENCHMARK(end_to_end_infer)->Arg(4)->Arg(16);

/*
 * Copyright 2026 granary authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "granary/ilp.hpp"

using namespace granary;

namespace {

// Instances big enough for the search to dominate, still under the enumeration cap.
std::vector<ilp::Instance> corpus(int machines, int granules) {
    std::mt19937_64 rng(42);
    ilp::RandomParams p;
    p.max_machines = machines;
    p.max_granules = granules;
    std::vector<ilp::Instance> out;
    while (out.size() < 8) {
        auto inst = ilp::random_instance(rng, p);
        inst.machines = machines;
        for (auto& g : inst.granules) {
            g.b.resize(static_cast<std::size_t>(machines), 0);
        }
        try {
            (void)ilp::solve_exact_serial(inst);
            out.push_back(std::move(inst));
        } catch (const Error&) {
        }
    }
    return out;
}

template <ilp::Solution (*Solve)(const ilp::Instance&)>
void run(benchmark::State& state) {
    const auto instances = corpus(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        for (const auto& inst : instances) {
            benchmark::DoNotOptimize(Solve(inst));
        }
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(instances.size()));
}

}  // namespace

BENCHMARK(run<ilp::solve_exact_serial>)->Name("solve_exact_serial")->Args({4, 6})->Args({5, 8})->Args({6, 9});
BENCHMARK(run<ilp::solve_exact>)->Name("solve_exact")->Args({4, 6})->Args({5, 8})->Args({6, 9});

BENCHMARK_MAIN();

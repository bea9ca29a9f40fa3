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
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "granary/types.hpp"

namespace granary::ilp {

struct GranuleInput {
    int job = 0;
    std::vector<Bytes> b;  ///< existing bytes per machine
    Bytes e = 0;  ///< expected remaining bytes
    std::vector<int> i0;  ///< machines holding preceding-stage data
    bool f = false;  ///< same-stage data already shares machines with ancestors
};

struct Weights {
    double w1 = 1.0;
    double w2 = 1.0;
    double w3 = 1.0;
};

struct Instance {
    int machines = 0;
    std::vector<GranuleInput> granules;
    std::map<int, Bytes> quotas;  ///< per job
    Weights weights;

    /// (1, 1, largest P^k).
    [[nodiscard]] Weights default_weights() const;
    /// Throws invalid_spec on shape errors or negative sizes.
    void validate() const;
};

/// x[k] = machine chosen for granule k.
using Placement = std::vector<int>;

[[nodiscard]] Bytes total_mass(const GranuleInput& g);  ///< P^k
[[nodiscard]] int primary_machine(const GranuleInput& g);  ///< argmax b, lowest index on ties
[[nodiscard]] Bytes primary_mass(const GranuleInput& g, int chosen);
/// P^k - primary_mass: the bytes of granule k that do not sit on its primary machine.
[[nodiscard]] Bytes spread_penalty(const GranuleInput& g, int chosen);

[[nodiscard]] Bytes objective_o1(const Instance& inst, const Placement& x);
[[nodiscard]] Bytes objective_o2(const Instance& inst, const Placement& x);
[[nodiscard]] std::int64_t objective_o3(const Instance& inst, const Placement& x);
[[nodiscard]] bool feasible(const Instance& inst, const Placement& x);
[[nodiscard]] double weighted_objective(const Instance& inst, const Placement& x);

struct Solution {
    Placement x;
    double objective = 0.0;
    Bytes o1 = 0;
    Bytes o2 = 0;
    std::int64_t o3 = 0;
    std::uint64_t nodes = 0;  ///< search nodes visited
};

inline constexpr double kMaxEnumeration = 1e7;

/// Exhaustive branch-and-bound, OpenMP-parallel over the first granule's machine.
/// Ties resolve to the lexicographically smallest placement.
/// Throws too_large when machines^granules > 1e7 and infeasible when nothing satisfies C1.
Solution solve_exact(const Instance& inst);

/// Single-threaded reference for solve_exact; identical results.
Solution solve_exact_serial(const Instance& inst);

/// Placement produced by the datastore's h2-h4 rules on the same instance.
Placement heuristic_placement(const Instance& inst);

struct RandomParams {
    int max_machines = 4;
    int max_granules = 6;
    int max_jobs = 2;
    Bytes unit = 1;  ///< byte scale of generated sizes
};

/// Uniform e^k within an instance, as the oracle-dominance check requires.
Instance random_instance(std::mt19937_64& rng, const RandomParams& params = {});

}  // namespace granary::ilp

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
#include <gtest/gtest.h>

#include <random>

#include "granary/ilp.hpp"
#include "granary/workload.hpp"
#include "ilp_oracle.hpp"

using namespace granary;
using namespace granary::ilp;

namespace {

GranuleInput granule(std::vector<Bytes> b, Bytes e, std::vector<int> i0 = {}, bool f = false, int job = 0) {
    GranuleInput g;
    g.job = job;
    g.b = std::move(b);
    g.e = e;
    g.i0 = std::move(i0);
    g.f = f;
    return g;
}

/// g1 (b=(2,0), e=1) and g2 (b=(0,1), e=1) on two machines.
Instance two_by_two() {
    Instance in;
    in.machines = 2;
    in.granules = {granule({2, 0}, 1), granule({0, 1}, 1)};
    in.quotas[0] = 100;
    in.weights = {1, 1, 1};
    return in;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::io;
}

}  // namespace

TEST(Objectives, LoadBalance) {
    Instance one;
    one.machines = 1;
    one.granules = {granule({2}, 1)};
    one.quotas[0] = 10;
    EXPECT_EQ(objective_o1(one, {0}), 3);
    const auto in = two_by_two();
    EXPECT_EQ(objective_o1(in, {0, 1}), 3);
    EXPECT_EQ(objective_o1(in, {0, 0}), 4);
}

TEST(Objectives, SpreadPenalty) {
    const auto whole = granule({3, 0}, 1);
    EXPECT_EQ(spread_penalty(whole, 0), 0);
    const auto split = granule({2, 1}, 1);
    EXPECT_EQ(spread_penalty(split, 1), 2);
    EXPECT_EQ(spread_penalty(split, 0), 1);
    const auto done = granule({4, 1, 2}, 0);
    for (int m = 0; m < 3; ++m) {
        EXPECT_EQ(spread_penalty(done, m), 3);
    }
    // overtaking the current primary makes the chosen machine the primary
    const auto overtake = granule({2, 1}, 5);
    EXPECT_EQ(spread_penalty(overtake, 1), 2);
    EXPECT_EQ(primary_machine(granule({1, 1}, 0)), 0);
}

TEST(Objectives, FaultTolerance) {
    Instance in;
    in.machines = 2;
    in.quotas[0] = 10;
    in.granules = {granule({0, 0}, 1, {1}, true)};
    EXPECT_EQ(objective_o3(in, {1}), 0);
    in.granules = {granule({0, 0}, 1, {1}, false)};
    EXPECT_EQ(objective_o3(in, {1}), 1);
    EXPECT_EQ(objective_o3(in, {0}), 0);
}

TEST(Feasibility, QuotaBoundaryIsInclusive) {
    Instance in;
    in.machines = 2;
    in.granules = {granule({2, 0}, 1)};
    in.quotas[0] = 10;
    EXPECT_TRUE(feasible(in, {0}));
    in.quotas[0] = 3;
    EXPECT_TRUE(feasible(in, {0}));
    in.granules = {granule({2, 0}, 1), granule({1, 0}, 0)};
    EXPECT_FALSE(feasible(in, {0, 0}));
}

TEST(Solve, TwoByTwoOptimumIsThree) {
    const auto s = solve_exact(two_by_two());
    EXPECT_EQ(s.x, (Placement{0, 1}));
    EXPECT_DOUBLE_EQ(s.objective, 3.0);
    EXPECT_EQ(s.o1, 3);
    EXPECT_EQ(s.o2, 0);
    EXPECT_EQ(s.o3, 0);
}

TEST(Solve, Errors) {
    Instance in;
    in.machines = 1;
    in.granules = {granule({2}, 1)};
    in.quotas[0] = 2;
    EXPECT_EQ(code_of([&] { (void)solve_exact(in); }), ErrorCode::infeasible);

    Instance big;
    big.machines = 10;
    for (int k = 0; k < 8; ++k) {
        big.granules.push_back(granule(std::vector<Bytes>(10, 0), 1));
    }
    big.quotas[0] = 100;
    EXPECT_EQ(code_of([&] { (void)solve_exact(big); }), ErrorCode::too_large);

    Instance bad = two_by_two();
    bad.granules[0].b = {1};
    EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::invalid_spec);
}

TEST(Solve, DefaultWeights) {
    Instance in = two_by_two();
    const auto w = in.default_weights();
    EXPECT_DOUBLE_EQ(w.w1, 1.0);
    EXPECT_DOUBLE_EQ(w.w2, 1.0);
    EXPECT_DOUBLE_EQ(w.w3, 3.0);
}

TEST(Solve, MatchesBruteForceOracle) {
    std::mt19937_64 rng(404);
    for (int i = 0; i < 150; ++i) {
        const auto in = random_instance(rng);
        const auto oracle = granary::testing::brute_force(in);
        if (oracle.feasible_count == 0) {
            EXPECT_EQ(code_of([&] { (void)solve_exact(in); }), ErrorCode::infeasible);
            continue;
        }
        const auto s = solve_exact(in);
        bool ok = false;
        EXPECT_NEAR(granary::testing::oracle_value(in, s.x, &ok), oracle.value, 1e-9 * std::max(1.0, oracle.value));
        EXPECT_TRUE(ok);
        EXPECT_NEAR(s.objective, weighted_objective(in, s.x), 1e-9 * std::max(1.0, s.objective));
    }
}

TEST(Solve, NeverBeatenByRandomPlacements) {
    std::mt19937_64 rng(1000);
    for (int i = 0; i < 20; ++i) {
        const auto in = random_instance(rng);
        Solution s;
        try {
            s = solve_exact(in);
        } catch (const Error&) {
            continue;
        }
        for (int r = 0; r < 1000; ++r) {
            Placement x(in.granules.size());
            for (auto& v : x) {
                v = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(in.machines)));
            }
            if (feasible(in, x)) {
                EXPECT_LE(s.objective, weighted_objective(in, x) + 1e-9);
            }
        }
    }
}

TEST(Solve, SerialAndParallelAgree) {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100; ++i) {
        const auto in = random_instance(rng);
        Solution a;
        Solution b;
        bool a_ok = true;
        bool b_ok = true;
        try {
            a = solve_exact(in);
        } catch (const Error&) {
            a_ok = false;
        }
        try {
            b = solve_exact_serial(in);
        } catch (const Error&) {
            b_ok = false;
        }
        ASSERT_EQ(a_ok, b_ok);
        if (a_ok) {
            EXPECT_EQ(a.x, b.x);
            EXPECT_DOUBLE_EQ(a.objective, b.objective);
        }
    }
}

TEST(Solve, ScaleInvariance) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 40; ++i) {
        auto in = random_instance(rng);
        Solution base;
        try {
            base = solve_exact(in);
        } catch (const Error&) {
            continue;
        }
        const Bytes c = 7;
        Instance scaled = in;
        for (auto& g : scaled.granules) {
            for (auto& b : g.b) {
                b *= c;
            }
            g.e *= c;
        }
        for (auto& [j, q] : scaled.quotas) {
            q *= c;
        }
        // the FT weight is in byte units, so it scales with the data
        scaled.weights.w3 *= static_cast<double>(c);
        EXPECT_EQ(objective_o1(scaled, base.x), c * base.o1);
        EXPECT_EQ(objective_o2(scaled, base.x), c * base.o2);
        EXPECT_EQ(objective_o3(scaled, base.x), base.o3);
        const auto s = solve_exact(scaled);
        EXPECT_NEAR(s.objective, static_cast<double>(c) * base.objective, 1e-9 * s.objective + 1e-9);
        EXPECT_EQ(s.x, base.x);
    }
}

TEST(Objectives, SpreadPenaltyNonNegativeAndZeroOnlyAtFullPrimary) {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 300; ++i) {
        const auto in = random_instance(rng);
        Placement x(in.granules.size());
        for (auto& v : x) {
            v = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(in.machines)));
        }
        EXPECT_GE(objective_o2(in, x), 0);
        bool all_full = true;
        for (std::size_t k = 0; k < x.size(); ++k) {
            all_full = all_full && primary_mass(in.granules[k], x[k]) == total_mass(in.granules[k]);
        }
        EXPECT_EQ(objective_o2(in, x) == 0, all_full);
    }
}

TEST(Heuristic, FeasibleWheneverQuotasLeaveSlack) {
    std::mt19937_64 rng(2026);
    int compared = 0;
    for (int i = 0; i < 200; ++i) {
        const auto in = random_instance(rng);
        Solution s;
        try {
            s = solve_exact(in);
        } catch (const Error&) {
            continue;
        }
        const auto h = heuristic_placement(in);
        ASSERT_EQ(h.size(), in.granules.size());
        ASSERT_TRUE(feasible(in, h));
        EXPECT_GE(weighted_objective(in, h) + 1e-9, s.objective);
        ++compared;
    }
    EXPECT_GT(compared, 100);
}

TEST(InstanceJson, RoundTrip) {
    std::mt19937_64 rng(3);
    const auto in = random_instance(rng);
    const auto back = ilp_instance_from_json(ilp_instance_to_json(in));
    EXPECT_EQ(ilp_instance_to_json(back).dump(), ilp_instance_to_json(in).dump());
}

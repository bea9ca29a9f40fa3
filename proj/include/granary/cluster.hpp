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

#include <map>
#include <vector>

#include "granary/types.hpp"

namespace granary {

struct Machine {
    MachineId id = 0;
    Bytes storage_capacity = 0;
    double compute_capacity = 0.0;  ///< resource units
    std::map<int, Bytes> per_job_stored;
    std::map<int, double> per_job_units;
    double used_units = 0.0;
    bool failed = false;

    [[nodiscard]] Bytes stored() const noexcept {
        Bytes total = 0;
        for (const auto& [j, b] : per_job_stored) {
            total += b;
        }
        return total;
    }

    [[nodiscard]] Bytes job_stored(int job) const {
        auto it = per_job_stored.find(job);
        return it == per_job_stored.end() ? 0 : it->second;
    }

    [[nodiscard]] double free_units() const noexcept { return failed ? 0.0 : compute_capacity - used_units; }
};

struct ClusterState {
    std::vector<Machine> machines;
    SimTime clock = 0.0;

    static ClusterState uniform(int count, Bytes storage_capacity, double compute_capacity);

    [[nodiscard]] int live_count() const noexcept;
    Machine& at(MachineId id) { return machines.at(static_cast<std::size_t>(id)); }
    [[nodiscard]] const Machine& at(MachineId id) const { return machines.at(static_cast<std::size_t>(id)); }
};

inline ClusterState ClusterState::uniform(int count, Bytes storage_capacity, double compute_capacity) {
    ClusterState c;
    for (int i = 0; i < count; ++i) {
        Machine m;
        m.id = i;
        m.storage_capacity = storage_capacity;
        m.compute_capacity = compute_capacity;
        c.machines.push_back(m);
    }
    return c;
}

inline int ClusterState::live_count() const noexcept {
    int n = 0;
    for (const auto& m : machines) {
        n += m.failed ? 0 : 1;
    }
    return n;
}

}  // namespace granary

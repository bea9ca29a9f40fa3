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

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "granary/model.hpp"

namespace granary {

/// One handed-off piece of a granule: (granule, data_ready epoch).
struct EntryKey {
    GranuleRef granule;
    int epoch = 0;

    friend auto operator<=>(const EntryKey&, const EntryKey&) = default;
};

struct PoolEntry {
    EntryKey key;
    Bytes bytes = 0;
    std::int64_t records = 0;
    std::vector<std::pair<MachineId, Bytes>> locations;  ///< resident bytes per machine, ascending id
    std::string logic_id = "default";
    int retries = 0;
    Aggregate content;
    bool final = false;
    StatsSnapshot stats;
};

struct ReadyPool {
    int job = 0;
    int stage = 0;  ///< consuming stage
    std::vector<PoolEntry> entries;  ///< kept sorted by key
    std::set<std::pair<EntryKey, EntryKey>> conflicts;  ///< stored in both orders
    std::set<EntryKey> troublesome;
    int skipped = 0;
    Bytes skipped_bytes = 0;

    void add(PoolEntry e);
    [[nodiscard]] bool empty() const noexcept { return entries.empty(); }
    [[nodiscard]] const PoolEntry* find(const EntryKey& k) const;
    PoolEntry* find(const EntryKey& k);
    void add_conflict(const EntryKey& a, const EntryKey& b);
    [[nodiscard]] bool in_conflict(const EntryKey& a, const EntryKey& b) const;
    void remove(const EntryKey& k);
};

struct Subset {
    std::vector<EntryKey> members;  ///< ascending
    Bytes bytes = 0;
    bool troublesome = false;
    std::string logic_id = "default";
};

struct Grouping {
    Bytes gr_max = 0;
    std::vector<Subset> subsets;
};

/// h7. GrMax = 2 x largest entry, lowered to `max_input` (never below the largest entry).
Grouping group_granules(const ReadyPool& pool, std::optional<Bytes> max_input = std::nullopt);

/// h8. nullopt for the troublesome subset.
std::vector<std::optional<MachineId>> preferred_machines(std::span<const Subset> subsets, const ReadyPool& pool);

struct ResourceView {
    std::vector<double> available;  ///< units for this job, indexed by machine id
    std::vector<double> capacity;
};

struct TaskAssignment {
    int task_id = -1;
    std::vector<EntryKey> granules;
    MachineId machine = 0;
    double resources = 0.0;
    Bytes input_bytes = 0;
    std::string logic_id = "default";
    bool troublesome = false;
};

struct Allocation {
    std::vector<TaskAssignment> assigned;
    std::vector<std::size_t> deferred;  ///< subset indices
    double f = 0.0;  ///< units per GB
};

/// h9. F = min over used machines of available / GB assigned there; every subset
/// gets F x its GB. `max_units_per_task` caps the largest subset's share.
/// Throws all_deferred when no chosen machine has availability.
Allocation altruistic_allocation(std::span<const Subset> subsets, std::span<const std::optional<MachineId>> choices,
                                 const ResourceView& view, std::optional<double> max_units_per_task = std::nullopt);

struct ScheduleOptions {
    int retry_limit = 3;
    std::optional<Bytes> max_input;
    std::optional<double> max_units_per_task;
};

struct IterationResult {
    std::vector<TaskAssignment> assignments;
    std::vector<EntryKey> newly_troublesome;
    std::vector<std::pair<EntryKey, EntryKey>> new_conflicts;
    int deferred_subsets = 0;
};

/// h7 -> h8 -> h9 once; assigned entries leave the pool.
IterationResult schedule_iteration(ReadyPool& pool, const ResourceView& view, const ScheduleOptions& options = {});

struct TaskRate {
    int task_id = 0;
    double rate = 0.0;  ///< bytes processed per second
};

/// Tasks slower than theta x the mean rate of their peers. Needs >= 2 tasks.
std::vector<int> detect_straggler(std::span<const TaskRate> tasks, double theta = 0.5);

struct SplitResult {
    std::vector<EntryKey> kept;
    std::vector<EntryKey> reassigned;
};

/// `unprocessed` starts with the granule currently being processed, which is always kept.
/// Throws nothing_to_split with <= 1 unprocessed granule.
SplitResult split_straggler(std::span<const EntryKey> unprocessed, double speed_ratio);

/// Throws unknown_granule when no pool entry matches.
void apply_status_decision(ReadyPool& pool, const EntryKey& key, const StatusDecision& decision);

/// First matching rule wins; a counter that was never incremented reads as 0.
StatusDecision evaluate_status_rules(std::span<const StatusRule> rules, const StatsSnapshot& stats);

}  // namespace granary

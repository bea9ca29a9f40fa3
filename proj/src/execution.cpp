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
#include "granary/execution.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace granary {

void ReadyPool::add(PoolEntry e) {
    auto it = std::lower_bound(entries.begin(), entries.end(), e.key,
                               [](const PoolEntry& a, const EntryKey& k) { return a.key < k; });
    entries.insert(it, std::move(e));
}

const PoolEntry* ReadyPool::find(const EntryKey& k) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), k,
                               [](const PoolEntry& a, const EntryKey& key) { return a.key < key; });
    return it != entries.end() && it->key == k ? &*it : nullptr;
}

PoolEntry* ReadyPool::find(const EntryKey& k) {
    return const_cast<PoolEntry*>(std::as_const(*this).find(k));
}

void ReadyPool::add_conflict(const EntryKey& a, const EntryKey& b) {
    if (a == b) {
        return;
    }
    conflicts.insert({a, b});
    conflicts.insert({b, a});
}

bool ReadyPool::in_conflict(const EntryKey& a, const EntryKey& b) const { return conflicts.contains({a, b}); }

void ReadyPool::remove(const EntryKey& k) {
    std::erase_if(entries, [&](const PoolEntry& e) { return e.key == k; });
    troublesome.erase(k);
}

namespace {

std::optional<MachineId> primary_of(const PoolEntry& e) {
    std::optional<MachineId> best;
    Bytes best_bytes = 0;
    for (const auto& [m, b] : e.locations) {
        if (b > best_bytes) {
            best = m;
            best_bytes = b;
        }
    }
    return best;
}

std::size_t live_locations(const PoolEntry& e) {
    return static_cast<std::size_t>(
        std::count_if(e.locations.begin(), e.locations.end(), [](const auto& l) { return l.second > 0; }));
}

struct Packer {
    const ReadyPool& pool;
    Bytes gr_max;

    bool fits(const Subset& s, const PoolEntry& e) const {
        if (s.bytes + e.bytes > gr_max || s.logic_id != e.logic_id) {
            return false;
        }
        return std::none_of(s.members.begin(), s.members.end(),
                            [&](const EntryKey& m) { return pool.in_conflict(m, e.key); });
    }

    // First fit over `open`; opens a new subset when nothing fits.
    void place(std::vector<Subset>& open, const PoolEntry& e) const {
        for (auto& s : open) {
            if (fits(s, e)) {
                s.members.push_back(e.key);
                s.bytes += e.bytes;
                return;
            }
        }
        Subset s;
        s.members.push_back(e.key);
        s.bytes = e.bytes;
        s.logic_id = e.logic_id;
        open.push_back(std::move(s));
    }
};

}  // namespace

Grouping group_granules(const ReadyPool& pool, std::optional<Bytes> max_input) {
    Grouping out;
    Bytes largest = 0;
    for (const auto& e : pool.entries) {
        largest = std::max(largest, e.bytes);
    }
    out.gr_max = 2 * largest;
    if (max_input) {
        out.gr_max = std::min(out.gr_max, std::max(*max_input, largest));
    }

    std::map<std::string, Subset> trouble;
    std::map<MachineId, std::vector<const PoolEntry*>> local;
    std::map<MachineId, std::vector<const PoolEntry*>> spread;
    std::vector<const PoolEntry*> leftovers;
    for (const auto& e : pool.entries) {
        if (pool.troublesome.contains(e.key)) {
            auto& s = trouble[e.logic_id];
            s.members.push_back(e.key);
            s.bytes += e.bytes;
            s.troublesome = true;
            s.logic_id = e.logic_id;
            continue;
        }
        auto p = primary_of(e);
        if (!p) {
            leftovers.push_back(&e);
        } else if (live_locations(e) == 1) {
            local[*p].push_back(&e);
        } else {
            spread[*p].push_back(&e);
        }
    }

    Packer packer{pool, out.gr_max};
    std::set<MachineId> machines;
    for (const auto& [m, v] : local) {
        machines.insert(m);
    }
    for (const auto& [m, v] : spread) {
        machines.insert(m);
    }
    std::vector<Subset> released;
    for (MachineId m : machines) {
        std::vector<Subset> open;
        for (const auto* e : local[m]) {
            packer.place(open, *e);
        }
        for (const auto* e : spread[m]) {
            packer.place(open, *e);
        }
        // A partial tail can still pair up with other machines' tails.
        if (open.size() > 1 && open.back().bytes < out.gr_max) {
            released.push_back(std::move(open.back()));
            open.pop_back();
        }
        for (auto& s : open) {
            out.subsets.push_back(std::move(s));
        }
    }

    std::vector<const PoolEntry*> rest;
    for (const auto& s : released) {
        for (const auto& k : s.members) {
            rest.push_back(pool.find(k));
        }
    }
    rest.insert(rest.end(), leftovers.begin(), leftovers.end());
    std::sort(rest.begin(), rest.end(), [](const PoolEntry* a, const PoolEntry* b) { return a->key < b->key; });
    std::vector<Subset> tail;
    for (const auto* e : rest) {
        packer.place(tail, *e);
    }
    for (auto& s : tail) {
        std::sort(s.members.begin(), s.members.end());
        out.subsets.push_back(std::move(s));
    }
    for (auto& [id, s] : trouble) {
        out.subsets.push_back(std::move(s));
    }
    return out;
}

std::vector<std::optional<MachineId>> preferred_machines(std::span<const Subset> subsets, const ReadyPool& pool) {
    std::vector<std::optional<MachineId>> out;
    out.reserve(subsets.size());
    for (const auto& s : subsets) {
        if (s.troublesome) {
            out.emplace_back();
            continue;
        }
        std::map<MachineId, Bytes> held;
        for (const auto& k : s.members) {
            if (const auto* e = pool.find(k)) {
                for (const auto& [m, b] : e->locations) {
                    held[m] += b;
                }
            }
        }
        std::optional<MachineId> best;
        Bytes best_bytes = 0;
        for (const auto& [m, b] : held) {
            if (b > best_bytes) {
                best = m;
                best_bytes = b;
            }
        }
        out.push_back(best);
    }
    return out;
}

namespace {

std::optional<MachineId> most_available(const ResourceView& view) {
    std::optional<MachineId> best;
    for (std::size_t m = 0; m < view.available.size(); ++m) {
        if (view.available[m] > 0.0 && (!best || view.available[m] > view.available[static_cast<std::size_t>(*best)])) {
            best = static_cast<MachineId>(m);
        }
    }
    return best;
}

double avail(const ResourceView& view, MachineId m) {
    const auto i = static_cast<std::size_t>(m);
    return i < view.available.size() ? view.available[i] : 0.0;
}

}  // namespace

Allocation altruistic_allocation(std::span<const Subset> subsets, std::span<const std::optional<MachineId>> choices,
                                 const ResourceView& view, std::optional<double> max_units_per_task) {
    Allocation out;
    std::vector<std::optional<MachineId>> where(choices.begin(), choices.end());
    where.resize(subsets.size());
    for (auto& w : where) {
        if (!w) {
            w = most_available(view);
        }
    }

    std::map<MachineId, double> demand_gb;
    double largest_gb = 0.0;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        if (!where[i] || avail(view, *where[i]) <= 0.0) {
            out.deferred.push_back(i);
            continue;
        }
        const double gb = to_gb(subsets[i].bytes);
        demand_gb[*where[i]] += gb;
        largest_gb = std::max(largest_gb, gb);
    }
    if (demand_gb.empty()) {
        throw Error(ErrorCode::all_deferred, "no chosen machine has available resources");
    }

    double f = std::numeric_limits<double>::infinity();
    for (const auto& [m, gb] : demand_gb) {
        if (gb > 0.0) {
            f = std::min(f, avail(view, m) / gb);
        }
    }
    if (max_units_per_task && largest_gb > 0.0) {
        f = std::min(f, *max_units_per_task / largest_gb);
    }
    out.f = std::isfinite(f) ? f : 0.0;

    for (std::size_t i = 0; i < subsets.size(); ++i) {
        if (std::find(out.deferred.begin(), out.deferred.end(), i) != out.deferred.end()) {
            continue;
        }
        TaskAssignment t;
        t.granules = subsets[i].members;
        t.machine = *where[i];
        t.input_bytes = subsets[i].bytes;
        t.logic_id = subsets[i].logic_id;
        t.troublesome = subsets[i].troublesome;
        t.resources = out.f * to_gb(subsets[i].bytes);
        if (t.resources <= 0.0) {
            // Zero-byte input still needs a slot to run; give it the smallest share in play.
            t.resources = std::min(avail(view, t.machine), max_units_per_task.value_or(avail(view, t.machine)));
        }
        out.assigned.push_back(std::move(t));
    }
    return out;
}

IterationResult schedule_iteration(ReadyPool& pool, const ResourceView& view, const ScheduleOptions& options) {
    IterationResult out;
    if (pool.empty()) {
        return out;
    }
    auto grouping = group_granules(pool, options.max_input);
    auto choices = preferred_machines(grouping.subsets, pool);
    for (std::size_t i = 0; i < choices.size(); ++i) {
        if (!choices[i]) {
            choices[i] = most_available(view);
        }
    }

    Allocation alloc;
    try {
        alloc = altruistic_allocation(grouping.subsets, choices, view, options.max_units_per_task);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::all_deferred) {
            throw;
        }
        for (std::size_t i = 0; i < grouping.subsets.size(); ++i) {
            alloc.deferred.push_back(i);
        }
    }

    // Waiting only counts against locality when some other machine could have run the work.
    const bool capacity_elsewhere = most_available(view).has_value();
    out.deferred_subsets = static_cast<int>(alloc.deferred.size());
    for (std::size_t i : alloc.deferred) {
        const auto& s = grouping.subsets[i];
        if (!capacity_elsewhere || s.troublesome) {
            continue;
        }
        bool exhausted = false;
        for (const auto& k : s.members) {
            auto* e = pool.find(k);
            e->retries += 1;
            exhausted = exhausted || e->retries >= options.retry_limit;
        }
        if (!exhausted) {
            continue;
        }
        if (s.members.size() > 1) {
            for (std::size_t a = 0; a < s.members.size(); ++a) {
                for (std::size_t b = a + 1; b < s.members.size(); ++b) {
                    pool.add_conflict(s.members[a], s.members[b]);
                    out.new_conflicts.emplace_back(s.members[a], s.members[b]);
                }
            }
            for (const auto& k : s.members) {
                pool.find(k)->retries = 0;
            }
        } else {
            pool.troublesome.insert(s.members.front());
            out.newly_troublesome.push_back(s.members.front());
        }
    }

    for (auto& t : alloc.assigned) {
        for (const auto& k : t.granules) {
            pool.remove(k);
        }
        out.assignments.push_back(std::move(t));
    }
    return out;
}

std::vector<int> detect_straggler(std::span<const TaskRate> tasks, double theta) {
    std::vector<int> out;
    if (tasks.size() < 2) {
        return out;
    }
    double total = 0.0;
    for (const auto& t : tasks) {
        total += t.rate;
    }
    const auto peers = static_cast<double>(tasks.size() - 1);
    for (const auto& t : tasks) {
        const double mean_others = (total - t.rate) / peers;
        if (t.rate < theta * mean_others) {
            out.push_back(t.task_id);
        }
    }
    return out;
}

SplitResult split_straggler(std::span<const EntryKey> unprocessed, double speed_ratio) {
    const auto u = static_cast<std::int64_t>(unprocessed.size());
    if (u <= 1) {
        throw Error(ErrorCode::nothing_to_split, "task has " + std::to_string(u) + " unprocessed granules");
    }
    auto keep = static_cast<std::int64_t>(std::ceil(speed_ratio * static_cast<double>(u)));
    keep = std::clamp<std::int64_t>(keep, 1, u - 1);
    SplitResult out;
    out.kept.assign(unprocessed.begin(), unprocessed.begin() + keep);
    out.reassigned.assign(unprocessed.begin() + keep, unprocessed.end());
    return out;
}

void apply_status_decision(ReadyPool& pool, const EntryKey& key, const StatusDecision& decision) {
    auto* e = pool.find(key);
    if (e == nullptr) {
        throw Error(ErrorCode::unknown_granule, "granule " + std::to_string(key.granule.index) + " is not pending");
    }
    switch (decision.kind) {
        case DecisionKind::no_new_action:
            break;
        case DecisionKind::ignore:
            pool.skipped += 1;
            pool.skipped_bytes += e->bytes;
            pool.remove(key);
            break;
        case DecisionKind::replace:
            e->logic_id = decision.logic_id;
            break;
    }
}

StatusDecision evaluate_status_rules(std::span<const StatusRule> rules, const StatsSnapshot& stats) {
    for (const auto& r : rules) {
        auto it = stats.custom_counters.find(r.counter_id);
        const std::int64_t value = it == stats.custom_counters.end() ? 0 : it->second;
        if (compare(r.op, value, r.threshold)) {
            return r.decision;
        }
    }
    return {};
}

}  // namespace granary

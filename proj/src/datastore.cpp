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
#include "granary/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

namespace granary {

Bytes QuotaTable::of(int job) const {
    auto it = per_job.find(job);
    return it == per_job.end() ? 0 : it->second;
}

QuotaTable assign_quota(std::span<const int> jobs, const ClusterState& cluster, double pressure_threshold) {
    std::optional<Bytes> capacity;
    for (const auto& m : cluster.machines) {
        if (!m.failed && m.storage_capacity > 0) {
            capacity = capacity ? std::min(*capacity, m.storage_capacity) : m.storage_capacity;
        }
    }
    if (!capacity) {
        throw Error(ErrorCode::no_machines, "no live machine with storage capacity");
    }
    QuotaTable q;
    q.pressure_threshold = pressure_threshold;
    if (jobs.empty()) {
        return q;
    }
    const Bytes share = *capacity / static_cast<Bytes>(jobs.size());
    for (int j : jobs) {
        q.per_job[j] = share;
    }
    return q;
}

int target_machine_count(int machines, int lightly_loaded, int floor) {
    if (machines <= 0) {
        return floor;
    }
    const double raw = static_cast<double>(lightly_loaded) * static_cast<double>(machines - lightly_loaded) /
                       static_cast<double>(machines);
    int m_v = std::max(floor, static_cast<int>(std::floor(raw + 0.5)));
    if (lightly_loaded >= floor) {
        m_v = std::min(m_v, lightly_loaded);
    }
    return m_v;
}

int count_lightly_loaded(int job, const ClusterState& cluster, const QuotaTable& quota) {
    const double limit = quota.pressure_limit(job);
    int n = 0;
    for (const auto& m : cluster.machines) {
        if (!m.failed && static_cast<double>(m.job_stored(job)) < limit) {
            ++n;
        }
    }
    return n;
}

int target_machine_count(int job, const ClusterState& cluster, const QuotaTable& quota, int floor) {
    return target_machine_count(cluster.live_count(), count_lightly_loaded(job, cluster, quota), floor);
}

std::vector<MachineId> select_machines(int m_v, std::span<const MachineCandidate> candidates, double usage_limit) {
    std::vector<const MachineCandidate*> lb;
    for (const auto& c : candidates) {
        if (!c.failed && static_cast<double>(c.job_usage) < usage_limit) {
            lb.push_back(&c);
        }
    }
    if (lb.empty()) {
        throw Error(ErrorCode::no_eligible_machines, "every machine is at the pressure threshold");
    }
    std::sort(lb.begin(), lb.end(), [](const MachineCandidate* a, const MachineCandidate* b) {
        return a->load != b->load ? a->load < b->load : a->id < b->id;
    });
    const bool any_local = std::any_of(lb.begin(), lb.end(), [](auto* c) { return c->data_local; });
    auto local = [&](const MachineCandidate* c) { return !any_local || c->data_local; };

    std::vector<MachineId> picked;
    std::set<MachineId> taken;
    auto take = [&](const MachineCandidate* c) {
        if (static_cast<int>(picked.size()) < m_v && taken.insert(c->id).second) {
            picked.push_back(c->id);
        }
    };

    // LB ∩ DL ∩ FT, highest level first. Level 0 means "holds parent data": no FT.
    std::set<int, std::greater<>> levels;
    for (auto* c : lb) {
        if (local(c) && c->ft_level > 0) {
            levels.insert(c->ft_level);
        }
    }
    for (int k : levels) {
        for (auto* c : lb) {
            if (local(c) && c->ft_level >= k) {
                take(c);
            }
        }
    }
    for (auto* c : lb) {
        if (local(c)) {
            take(c);
        }
    }
    for (auto* c : lb) {
        take(c);
    }
    return picked;
}

PlacementPlan spread_uniform(std::size_t granule_count, std::span<const MachineId> machines) {
    if (machines.empty()) {
        throw Error(ErrorCode::no_eligible_machines, "cannot spread over an empty machine list");
    }
    PlacementPlan plan;
    plan.machines.assign(machines.begin(), machines.end());
    plan.assignment.resize(granule_count);
    for (auto m : machines) {
        plan.per_machine_granule_count[m] = 0;
    }
    for (std::size_t i = 0; i < granule_count; ++i) {
        const auto m = machines[i % machines.size()];
        plan.assignment[i] = m;
        ++plan.per_machine_granule_count[m];
    }
    return plan;
}

std::vector<MachineId> at_risk_machines(int job, const ClusterState& cluster, const QuotaTable& quota) {
    const double limit = quota.pressure_limit(job);
    std::vector<std::pair<Bytes, MachineId>> hits;
    for (const auto& m : cluster.machines) {
        const Bytes used = m.job_stored(job);
        if (used > 0 && static_cast<double>(used) >= limit) {
            hits.emplace_back(used, m.id);
        }
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<MachineId> out;
    out.reserve(hits.size());
    for (const auto& [u, m] : hits) {
        out.push_back(m);
    }
    return out;
}

std::vector<GranuleRef> select_hot_granules(std::span<const HotCandidate> candidates) {
    if (candidates.empty()) {
        return {};
    }
    const auto n = static_cast<double>(candidates.size());
    double mean_b = 0.0;
    double mean_r = 0.0;
    for (const auto& c : candidates) {
        mean_b += static_cast<double>(c.bytes);
        mean_r += c.growth_rate;
    }
    mean_b /= n;
    mean_r /= n;
    double var_b = 0.0;
    double var_r = 0.0;
    for (const auto& c : candidates) {
        var_b += (static_cast<double>(c.bytes) - mean_b) * (static_cast<double>(c.bytes) - mean_b);
        var_r += (c.growth_rate - mean_r) * (c.growth_rate - mean_r);
    }
    const double cut_b = mean_b + std::sqrt(var_b / n);
    const double cut_r = mean_r + std::sqrt(var_r / n);

    std::vector<GranuleRef> hot;
    for (const auto& c : candidates) {
        if (static_cast<double>(c.bytes) > cut_b || c.growth_rate > cut_r) {
            hot.push_back(c.granule);
        }
    }
    if (hot.empty()) {
        const auto* best = &candidates.front();
        for (const auto& c : candidates) {
            if (c.bytes > best->bytes || (c.bytes == best->bytes && c.granule < best->granule)) {
                best = &c;
            }
        }
        hot.push_back(best->granule);
    }
    std::sort(hot.begin(), hot.end());
    return hot;
}

void run_monitors(std::span<const MonitorSpec> monitors, std::map<std::string, std::int64_t>& counters,
                  std::span<const Record> records) {
    for (const auto& mon : monitors) {
        auto& counter = counters[mon.counter_id];
        for (const auto& r : records) {
            if (compare(mon.op, r.value, mon.threshold)) {
                ++counter;
            }
        }
    }
}

const char* to_string(ChangeReason r) noexcept {
    switch (r) {
        case ChangeReason::spread: return "spread";
        case ChangeReason::respread: return "respread";
        case ChangeReason::quota_guard: return "quota_guard";
        case ChangeReason::deferred: return "deferred";
        case ChangeReason::retry: return "retry";
        case ChangeReason::overflow: return "overflow";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// DataStore
// ---------------------------------------------------------------------------

DataStore::DataStore(DataStoreConfig config) : config_(config) {
    if (config_.granules_per_stage == 0 || config_.key_space % config_.granules_per_stage != 0) {
        throw Error(ErrorCode::config_invalid, "granules_per_stage must divide the key space");
    }
}

void DataStore::register_stage(StageInfo info) {
    StageState st;
    const auto n = config_.granules_per_stage;
    st.granules.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Granule g;
        g.id = {info.job, info.stage, static_cast<int>(i)};
        g.key_range = granule_key_range(i, n, config_.key_space);
        g.stats = GranuleStats(config_.growth_half_life_s);
        st.granules.push_back(std::move(g));
    }
    st.info = std::move(info);
    const auto key = std::make_pair(st.info.job, st.info.stage);
    stages_.insert_or_assign(key, std::move(st));
}

bool DataStore::has_stage(int job, int stage) const { return stages_.contains({job, stage}); }

DataStore::StageState& DataStore::state(int job, int stage) {
    auto it = stages_.find({job, stage});
    if (it == stages_.end()) {
        throw Error(ErrorCode::unknown_stage, "stage " + std::to_string(job) + "/" + std::to_string(stage));
    }
    return it->second;
}

const DataStore::StageState& DataStore::state(int job, int stage) const {
    auto it = stages_.find({job, stage});
    if (it == stages_.end()) {
        throw Error(ErrorCode::unknown_stage, "stage " + std::to_string(job) + "/" + std::to_string(stage));
    }
    return it->second;
}

const StageInfo& DataStore::stage_info(int job, int stage) const { return state(job, stage).info; }

std::vector<Granule>& DataStore::granules(int job, int stage) { return state(job, stage).granules; }

const std::vector<Granule>& DataStore::granules(int job, int stage) const { return state(job, stage).granules; }

const PlacementPlan* DataStore::plan(int job, int stage) const {
    const auto& st = state(job, stage);
    return st.plan ? &*st.plan : nullptr;
}

std::vector<MachineCandidate> DataStore::candidates(int job, int stage, const ClusterState& cluster) const {
    const auto& st = state(job, stage);
    std::set<MachineId> local;
    auto mark_local = [&](const StageState& s) {
        for (const auto& g : s.granules) {
            for (const auto& [m, b] : g.resident) {
                if (b > 0) {
                    local.insert(m);
                }
            }
        }
    };
    mark_local(st);
    for (int sib : st.info.siblings) {
        if (auto it = stages_.find({job, sib}); it != stages_.end()) {
            mark_local(it->second);
        }
    }

    // machine -> nearest ancestor level holding data there
    std::map<MachineId, int> nearest;
    for (std::size_t level = 0; level < st.info.ancestor_levels.size(); ++level) {
        for (int anc : st.info.ancestor_levels[level]) {
            auto it = stages_.find({job, anc});
            if (it == stages_.end()) {
                continue;
            }
            for (const auto& g : it->second.granules) {
                for (const auto& [m, b] : g.resident) {
                    if (b > 0 && !nearest.contains(m)) {
                        nearest[m] = static_cast<int>(level);
                    }
                }
            }
        }
    }

    std::vector<MachineCandidate> out;
    out.reserve(cluster.machines.size());
    for (const auto& m : cluster.machines) {
        MachineCandidate c;
        c.id = m.id;
        c.load = m.stored();
        c.job_usage = m.job_stored(job);
        c.data_local = local.contains(m.id);
        auto it = nearest.find(m.id);
        c.ft_level = it == nearest.end() ? kFullFaultTolerance : it->second;
        c.failed = m.failed;
        out.push_back(c);
    }
    return out;
}

std::vector<MachineId> DataStore::select_machines(int job, int stage, int m_v, const ClusterState& cluster,
                                                  const QuotaTable& quota, std::optional<MachineId> exclude) const {
    auto cands = candidates(job, stage, cluster);
    if (exclude) {
        std::erase_if(cands, [&](const MachineCandidate& c) { return c.id == *exclude; });
    }
    return granary::select_machines(m_v, cands, quota.pressure_limit(job));
}

std::optional<MachineId> DataStore::pick_one(const StageState& st, const ClusterState& cluster,
                                             const QuotaTable& quota, std::optional<MachineId> exclude) const {
    try {
        auto picked = select_machines(st.info.job, st.info.stage, 1, cluster, quota, exclude);
        if (!picked.empty()) {
            return picked.front();
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::no_eligible_machines) {
            throw;
        }
    }
    return std::nullopt;
}

const PlacementPlan& DataStore::place_new_stage(int job, int stage, ClusterState& cluster, const QuotaTable& quota) {
    auto& st = state(job, stage);
    if (st.plan) {
        return *st.plan;
    }
    const int m_v = target_machine_count(job, cluster, quota, config_.min_stage_machines);
    std::vector<MachineId> machines;
    try {
        machines = select_machines(job, stage, m_v, cluster, quota);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::no_eligible_machines) {
            throw;
        }
        // Every machine is under pressure: start on the lightest live machines and
        // let the quota guard move data as it arrives.
        std::vector<std::pair<Bytes, MachineId>> live;
        for (const auto& m : cluster.machines) {
            if (!m.failed) {
                live.emplace_back(m.stored(), m.id);
            }
        }
        if (live.empty()) {
            throw Error(ErrorCode::no_machines, "no live machines");
        }
        std::sort(live.begin(), live.end());
        for (int i = 0; i < m_v && i < static_cast<int>(live.size()); ++i) {
            machines.push_back(live[static_cast<std::size_t>(i)].second);
        }
    }
    st.plan = spread_uniform(st.granules.size(), machines);
    for (std::size_t i = 0; i < st.granules.size(); ++i) {
        st.granules[i].open_machine = st.plan->assignment[i];
        st.granules[i].open_bytes = 0;
    }
    return *st.plan;
}

void DataStore::place_bytes(StageState& st, Granule& g, MachineId m, Bytes bytes, ClusterState& cluster) {
    g.materializations[m] += bytes;
    g.resident[m] += bytes;
    g.open_bytes += bytes;
    cluster.at(m).per_job_stored[st.info.job] += bytes;
}

MachineId DataStore::route(StageState& st, Granule& g, Bytes bytes, ClusterState& cluster, const QuotaTable& quota,
                           SimTime now, IngestResult& out) {
    const int job = st.info.job;
    auto reopen = [&](ChangeReason reason) {
        auto from = g.open_machine;
        if (from) {
            g.closed_at[*from] = now;
        }
        auto to = pick_one(st, cluster, quota, from);
        g.open_machine = to;
        g.open_bytes = 0;
        out.changes.push_back({g.id, from, to, to ? reason : ChangeReason::deferred});
    };

    if (!g.open_machine) {
        auto to = pick_one(st, cluster, quota, std::nullopt);
        if (to) {
            g.open_machine = to;
            g.open_bytes = 0;
            out.changes.push_back({g.id, std::nullopt, to, ChangeReason::retry});
        }
    }

    // Unexpectedly large granule: continue on another machine.
    if (g.open_machine && st.info.expected_bytes > 0) {
        const double threshold = config_.spread_factor * static_cast<double>(st.info.expected_bytes) /
                                 static_cast<double>(config_.granules_per_stage);
        if (g.open_bytes > 0 && static_cast<double>(g.open_bytes + bytes) > threshold) {
            if (auto to = pick_one(st, cluster, quota, g.open_machine)) {
                g.closed_at[*g.open_machine] = now;
                out.changes.push_back({g.id, g.open_machine, to, ChangeReason::spread});
                g.open_machine = to;
                g.open_bytes = 0;
            }
        }
    }

    // Hard isolation: never push a job past Q_j on a machine while another has room.
    const Bytes q = quota.of(job);
    if (g.open_machine && cluster.at(*g.open_machine).job_stored(job) + bytes > q) {
        reopen(ChangeReason::quota_guard);
    }
    if (g.open_machine && cluster.at(*g.open_machine).failed) {
        reopen(ChangeReason::respread);
    }

    if (g.open_machine) {
        return *g.open_machine;
    }
    // Nowhere under quota: land on the machine where the job stores least.
    MachineId best = -1;
    for (const auto& m : cluster.machines) {
        if (m.failed) {
            continue;
        }
        if (best < 0 || m.job_stored(job) < cluster.at(best).job_stored(job) ||
            (m.job_stored(job) == cluster.at(best).job_stored(job) && m.stored() < cluster.at(best).stored())) {
            best = m.id;
        }
    }
    if (best < 0) {
        throw Error(ErrorCode::no_machines, "no live machines for overflow");
    }
    if (cluster.at(best).job_stored(job) + bytes > q) {
        out.overflow_bytes += bytes;
        out.changes.push_back({g.id, std::nullopt, best, ChangeReason::overflow});
    }
    return best;
}

IngestResult DataStore::ingest_spill(int job, int stage, std::span<const Record> records, ClusterState& cluster,
                                     const QuotaTable& quota, SimTime now) {
    auto& st = state(job, stage);
    if (!st.plan) {
        place_new_stage(job, stage, cluster, quota);
    }
    IngestResult out;
    std::map<std::pair<int, MachineId>, Bytes> chunks;
    std::set<int> touched;
    const auto n = config_.granules_per_stage;
    for (const auto& r : records) {
        const auto idx = granule_index_for_key(r.key, n, config_.key_space);
        auto& g = st.granules[idx];
        const MachineId m = route(st, g, r.bytes, cluster, quota, now, out);
        place_bytes(st, g, m, r.bytes, cluster);
        g.stats.record_ingest(r.bytes, 1, now);
        g.unconsumed.raw_records += 1;
        g.unconsumed.raw_bytes += r.bytes;
        g.unconsumed.raw.add(r.value);
        run_monitors(st.info.monitors, g.stats.custom_counters, std::span<const Record>(&r, 1));
        chunks[{static_cast<int>(idx), m}] += r.bytes;
        touched.insert(static_cast<int>(idx));
        out.bytes += r.bytes;
        out.records += 1;
    }
    for (const auto& [k, b] : chunks) {
        out.stored.push_back({k.first, k.second, b});
    }
    out.touched.assign(touched.begin(), touched.end());
    return out;
}

IngestResult DataStore::ingest_writeback(GranuleRef ref, Bytes bytes, ClusterState& cluster, const QuotaTable& quota,
                                         SimTime now) {
    auto& st = state(ref.job, ref.stage);
    auto& g = st.granules.at(static_cast<std::size_t>(ref.index));
    IngestResult out;
    const MachineId m = route(st, g, bytes, cluster, quota, now, out);
    place_bytes(st, g, m, bytes, cluster);
    g.stats.record_ingest(bytes, 1, now);
    out.stored.push_back({ref.index, m, bytes});
    out.touched.push_back(ref.index);
    out.bytes = bytes;
    out.records = 1;
    return out;
}

std::vector<PlacementChange> DataStore::rebalance(int job, ClusterState& cluster, const QuotaTable& quota,
                                                  SimTime now) {
    std::vector<PlacementChange> changes;

    // Deferred granules first: they have nowhere to put new bytes.
    for (auto& [key, st] : stages_) {
        if (key.first != job || st.sealed || st.freed || !st.plan) {
            continue;
        }
        for (auto& g : st.granules) {
            if (!g.open_machine) {
                if (auto to = pick_one(st, cluster, quota, std::nullopt)) {
                    g.open_machine = to;
                    g.open_bytes = 0;
                    changes.push_back({g.id, std::nullopt, to, ChangeReason::retry});
                }
            }
        }
    }

    std::vector<GranuleRef> hot_all;
    for (MachineId m : at_risk_machines(job, cluster, quota)) {
        std::vector<HotCandidate> cands;
        for (auto& [key, st] : stages_) {
            if (key.first != job || st.sealed || st.freed) {
                continue;
            }
            for (const auto& g : st.granules) {
                if (g.open_machine == m) {
                    auto it = g.resident.find(m);
                    const Bytes b = it == g.resident.end() ? 0 : it->second;
                    cands.push_back({g.id, b, g.stats.growth_rate(now)});
                }
            }
        }
        auto hot = select_hot_granules(cands);
        hot_all.insert(hot_all.end(), hot.begin(), hot.end());
    }
    if (!hot_all.empty()) {
        auto more = close_and_respread(hot_all, cluster, quota, now);
        changes.insert(changes.end(), more.begin(), more.end());
    }
    return changes;
}

std::vector<PlacementChange> DataStore::close_and_respread(std::span<const GranuleRef> hot, ClusterState& cluster,
                                                           const QuotaTable& quota, SimTime now) {
    std::map<std::pair<int, int>, std::vector<GranuleRef>> by_stage;
    for (const auto& ref : hot) {
        by_stage[{ref.job, ref.stage}].push_back(ref);
    }
    std::vector<PlacementChange> changes;
    for (auto& [key, refs] : by_stage) {
        auto& st = state(key.first, key.second);
        std::sort(refs.begin(), refs.end());
        std::set<MachineId> current;
        for (const auto& ref : refs) {
            auto& g = st.granules.at(static_cast<std::size_t>(ref.index));
            if (g.open_machine) {
                current.insert(*g.open_machine);
                g.closed_at[*g.open_machine] = now;
            }
        }
        std::optional<MachineId> target;
        auto cands = candidates(key.first, key.second, cluster);
        std::erase_if(cands, [&](const MachineCandidate& c) { return current.contains(c.id); });
        try {
            auto picked = granary::select_machines(1, cands, quota.pressure_limit(key.first));
            if (!picked.empty()) {
                target = picked.front();
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::no_eligible_machines) {
                throw;
            }
        }
        for (const auto& ref : refs) {
            auto& g = st.granules.at(static_cast<std::size_t>(ref.index));
            const auto from = g.open_machine;
            g.open_machine = target;
            g.open_bytes = 0;
            changes.push_back({ref, from, target, target ? ChangeReason::respread : ChangeReason::deferred});
        }
    }
    return changes;
}

void DataStore::seal_stage(int job, int stage) { state(job, stage).sealed = true; }

std::map<MachineId, Bytes> DataStore::free_stage(int job, int stage, ClusterState& cluster) {
    auto& st = state(job, stage);
    std::map<MachineId, Bytes> freed;
    for (auto& g : st.granules) {
        for (auto& [m, b] : g.resident) {
            if (b > 0) {
                freed[m] += b;
                cluster.at(m).per_job_stored[job] -= b;
                b = 0;
            }
        }
        g.open_machine.reset();
    }
    st.freed = true;
    st.sealed = true;
    return freed;
}

std::map<MachineId, Bytes> DataStore::remove_resident(GranuleRef ref, Bytes bytes, ClusterState& cluster) {
    auto& g = granule(ref);
    std::map<MachineId, Bytes> removed;
    for (auto& [m, b] : g.resident) {
        if (bytes <= 0) {
            break;
        }
        const Bytes take = std::min(b, bytes);
        if (take > 0) {
            b -= take;
            bytes -= take;
            removed[m] += take;
            cluster.at(m).per_job_stored[ref.job] -= take;
        }
    }
    return removed;
}

std::vector<std::pair<GranuleRef, Bytes>> DataStore::evacuate(MachineId machine, ClusterState& cluster,
                                                              const QuotaTable& quota, SimTime now) {
    std::vector<std::pair<GranuleRef, Bytes>> moved;
    for (auto& [key, st] : stages_) {
        if (st.freed) {
            continue;
        }
        for (auto& g : st.granules) {
            auto it = g.resident.find(machine);
            const bool open_here = g.open_machine == machine;
            if (open_here) {
                g.closed_at[machine] = now;
                g.open_machine = pick_one(st, cluster, quota, machine);
                g.open_bytes = 0;
            }
            if (it == g.resident.end() || it->second == 0) {
                continue;
            }
            const Bytes b = it->second;
            it->second = 0;
            cluster.at(machine).per_job_stored[key.first] -= b;
            auto to = g.open_machine ? g.open_machine : pick_one(st, cluster, quota, machine);
            if (!to) {
                for (const auto& m : cluster.machines) {
                    if (!m.failed) {
                        to = m.id;
                        break;
                    }
                }
            }
            if (to) {
                g.materializations[*to] += b;
                g.resident[*to] += b;
                cluster.at(*to).per_job_stored[key.first] += b;
            }
            moved.emplace_back(g.id, b);
        }
    }
    return moved;
}

void DataStore::dump_catalog(std::ostream& os, SimTime now) const {
    for (const auto& [key, st] : stages_) {
        for (const auto& g : st.granules) {
            nlohmann::ordered_json line;
            line["granule_id"] = st.info.job_name + "/" + st.info.stage_name + "/" + std::to_string(g.id.index);
            line["bytes"] = g.stats.bytes;
            auto machines = nlohmann::ordered_json::array();
            for (const auto& [m, b] : g.materializations) {
                nlohmann::ordered_json e;
                e["id"] = m;
                e["bytes"] = b;
                e["closed"] = g.closed_at.contains(m);
                machines.push_back(std::move(e));
            }
            line["machines"] = std::move(machines);
            nlohmann::ordered_json stats;
            stats["bytes"] = g.stats.bytes;
            stats["kv_pairs"] = g.stats.kv_pairs;
            stats["growth_rate"] = g.stats.growth_rate(now);
            stats["custom_counters"] = g.stats.custom_counters;
            line["stats"] = std::move(stats);
            os << line.dump() << '\n';
        }
    }
}

}  // namespace granary

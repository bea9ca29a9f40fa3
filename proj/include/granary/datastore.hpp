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

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "granary/cluster.hpp"
#include "granary/model.hpp"

namespace granary {

// ---------------------------------------------------------------------------
// Quotas (h1) and machine-count sizing (h2)
// ---------------------------------------------------------------------------

struct QuotaTable {
    std::map<int, Bytes> per_job;
    double pressure_threshold = 0.75;

    [[nodiscard]] Bytes of(int job) const;
    /// Usage strictly below this is "lightly loaded" for the job.
    [[nodiscard]] double pressure_limit(int job) const { return pressure_threshold * static_cast<double>(of(job)); }
};

/// Equal share of the smallest live machine's storage among the runnable jobs.
QuotaTable assign_quota(std::span<const int> jobs, const ClusterState& cluster, double pressure_threshold = 0.75);

/// M_v = max(floor, round_half_up(M_j75 * (M - M_j75) / M)), clamped to M_j75 when M_j75 >= floor.
[[nodiscard]] int target_machine_count(int machines, int lightly_loaded, int floor = 2);

/// Number of live machines where `job` uses < pressure_threshold * Q_j.
[[nodiscard]] int count_lightly_loaded(int job, const ClusterState& cluster, const QuotaTable& quota);

[[nodiscard]] int target_machine_count(int job, const ClusterState& cluster, const QuotaTable& quota, int floor = 2);

// ---------------------------------------------------------------------------
// Machine selection (h3) and spreading (h4)
// ---------------------------------------------------------------------------

/// ft_level for a machine holding no ancestor data at all.
inline constexpr int kFullFaultTolerance = 1 << 20;

struct MachineCandidate {
    MachineId id = 0;
    Bytes load = 0;  ///< total bytes stored, all jobs
    Bytes job_usage = 0;  ///< bytes stored by the job being placed
    bool data_local = false;  ///< holds granules of this stage or of a sibling stage
    /// Number of nearest ancestor levels the machine holds no data from
    /// (0 = holds parent data); kFullFaultTolerance when it holds none.
    int ft_level = kFullFaultTolerance;
    bool failed = false;
};

/// Load-balance first, then locality, then as much fault tolerance as possible.
/// When no candidate is data-local, locality imposes no constraint.
/// Throws no_eligible_machines when every live machine is at or above `usage_limit`.
std::vector<MachineId> select_machines(int m_v, std::span<const MachineCandidate> candidates, double usage_limit);

struct PlacementPlan {
    std::vector<MachineId> machines;
    std::vector<MachineId> assignment;  ///< granule index -> machine
    std::map<MachineId, int> per_machine_granule_count;
};

/// Round-robin in granule-index order.
PlacementPlan spread_uniform(std::size_t granule_count, std::span<const MachineId> machines);

// ---------------------------------------------------------------------------
// Runtime re-spreading (h5, h6) and monitors
// ---------------------------------------------------------------------------

/// Machines where the job stores >= pressure_threshold * Q_j, heaviest first.
std::vector<MachineId> at_risk_machines(int job, const ClusterState& cluster, const QuotaTable& quota);

struct HotCandidate {
    GranuleRef granule;
    Bytes bytes = 0;
    double growth_rate = 0.0;
};

/// Candidates whose size or growth exceeds mean + 1 stddev; falls back to the single
/// largest (lowest id on ties) so an at-risk machine always sheds something.
std::vector<GranuleRef> select_hot_granules(std::span<const HotCandidate> candidates);

/// One pass over `records`, O(1) state per monitor.
void run_monitors(std::span<const MonitorSpec> monitors, std::map<std::string, std::int64_t>& counters,
                  std::span<const Record> records);

// ---------------------------------------------------------------------------
// Data service state
// ---------------------------------------------------------------------------

struct DataStoreConfig {
    std::uint32_t granules_per_stage = 64;
    std::uint64_t key_space = kDefaultKeySpace;
    double pressure_threshold = 0.75;
    double spread_factor = 2.0;  ///< granule spreads beyond spread_factor * expected_bytes / N
    int min_stage_machines = 2;
    double growth_half_life_s = 5.0;
};

struct StageInfo {
    int job = 0;
    int stage = 0;
    std::string job_name;
    std::string stage_name;
    std::vector<std::vector<int>> ancestor_levels;
    std::vector<int> siblings;
    Bytes expected_bytes = 0;
    std::vector<MonitorSpec> monitors;
};

struct StoredChunk {
    int granule = 0;
    MachineId machine = 0;
    Bytes bytes = 0;

    friend bool operator==(const StoredChunk&, const StoredChunk&) = default;
};

enum class ChangeReason { spread, respread, quota_guard, deferred, retry, overflow };

struct PlacementChange {
    GranuleRef granule;
    std::optional<MachineId> closed;
    std::optional<MachineId> opened;
    ChangeReason reason = ChangeReason::respread;
};

struct IngestResult {
    std::vector<StoredChunk> stored;  ///< aggregated per (granule, machine)
    std::vector<int> touched;  ///< granule indices that received data, ascending
    std::vector<PlacementChange> changes;
    Bytes bytes = 0;
    std::int64_t records = 0;
    Bytes overflow_bytes = 0;  ///< bytes that landed above quota because no machine had room
};

const char* to_string(ChangeReason r) noexcept;

class DataStore {
public:
    explicit DataStore(DataStoreConfig config);

    [[nodiscard]] const DataStoreConfig& config() const noexcept { return config_; }

    void register_stage(StageInfo info);
    [[nodiscard]] bool has_stage(int job, int stage) const;
    [[nodiscard]] const StageInfo& stage_info(int job, int stage) const;

    /// h2 -> h3 -> h4 for a stage that starts producing. Idempotent.
    const PlacementPlan& place_new_stage(int job, int stage, ClusterState& cluster, const QuotaTable& quota);
    [[nodiscard]] const PlacementPlan* plan(int job, int stage) const;

    /// Routes each record to its granule's open machine. Throws unknown_stage.
    IngestResult ingest_spill(int job, int stage, std::span<const Record> records, ClusterState& cluster,
                              const QuotaTable& quota, SimTime now);

    /// Places a pipelined partial aggregate back into the granule it came from.
    IngestResult ingest_writeback(GranuleRef granule, Bytes bytes, ClusterState& cluster, const QuotaTable& quota,
                                  SimTime now);

    /// Catalog-aware h3: candidates built from current storage state.
    std::vector<MachineId> select_machines(int job, int stage, int m_v, const ClusterState& cluster,
                                           const QuotaTable& quota, std::optional<MachineId> exclude = {}) const;

    [[nodiscard]] std::vector<MachineCandidate> candidates(int job, int stage, const ClusterState& cluster) const;

    /// h5 + h6 + close_and_respread for one job, plus retries of deferred granules.
    std::vector<PlacementChange> rebalance(int job, ClusterState& cluster, const QuotaTable& quota, SimTime now);

    /// Closes each hot granule's open materialization; groups by stage and opens
    /// one h3-chosen machine per group. Granules with no eligible target stay closed
    /// and are retried by rebalance().
    std::vector<PlacementChange> close_and_respread(std::span<const GranuleRef> hot, ClusterState& cluster,
                                                    const QuotaTable& quota, SimTime now);

    /// Stops treating the stage as growing (no more hot-granule selection).
    void seal_stage(int job, int stage);

    /// Drops resident bytes of a stage; returns freed bytes per machine.
    std::map<MachineId, Bytes> free_stage(int job, int stage, ClusterState& cluster);

    /// Removes `bytes` of resident data from a granule, lowest machine id first.
    std::map<MachineId, Bytes> remove_resident(GranuleRef granule, Bytes bytes, ClusterState& cluster);

    /// Moves every resident byte off `machine` (used after a failure).
    std::vector<std::pair<GranuleRef, Bytes>> evacuate(MachineId machine, ClusterState& cluster,
                                                       const QuotaTable& quota, SimTime now);

    std::vector<Granule>& granules(int job, int stage);
    [[nodiscard]] const std::vector<Granule>& granules(int job, int stage) const;
    Granule& granule(GranuleRef ref) { return granules(ref.job, ref.stage).at(static_cast<std::size_t>(ref.index)); }

    /// JSON lines, one granule per line.
    void dump_catalog(std::ostream& os, SimTime now) const;

private:
    struct StageState {
        StageInfo info;
        std::vector<Granule> granules;
        std::optional<PlacementPlan> plan;
        bool sealed = false;
        bool freed = false;
    };

    StageState& state(int job, int stage);
    [[nodiscard]] const StageState& state(int job, int stage) const;
    void place_bytes(StageState& st, Granule& g, MachineId m, Bytes bytes, ClusterState& cluster);
    MachineId route(StageState& st, Granule& g, Bytes bytes, ClusterState& cluster, const QuotaTable& quota,
                    SimTime now, IngestResult& out);
    std::optional<MachineId> pick_one(const StageState& st, const ClusterState& cluster, const QuotaTable& quota,
                                      std::optional<MachineId> exclude) const;

    DataStoreConfig config_;
    std::map<std::pair<int, int>, StageState> stages_;
};

}  // namespace granary

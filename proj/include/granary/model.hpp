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
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "granary/types.hpp"

namespace granary {

// ---------------------------------------------------------------------------
// Stage description
// ---------------------------------------------------------------------------

enum class ComputeType { stateless, stateful_ca, stateful_non_ca };

enum class TriggerKind { default_batch, default_streaming, pipelining, custom_counter };

struct TriggerSpec {
    TriggerKind kind = TriggerKind::default_batch;
    std::int64_t x = 100;  ///< record threshold for streaming / pipelining
    std::string counter_id;  ///< custom_counter only
    std::int64_t threshold = 0;  ///< custom_counter only
};

enum class CompareOp { less, equal, greater };

[[nodiscard]] bool compare(CompareOp op, std::int64_t value, std::int64_t threshold) noexcept;

/// Value-threshold monitor: counts records whose value satisfies `op threshold`.
/// Built-in statistics (bytes, kv pairs, growth) are always collected and need no spec.
struct MonitorSpec {
    std::string counter_id;
    CompareOp op = CompareOp::greater;
    std::int64_t threshold = 0;
};

enum class KeyDistribution { zipf, even };

/// Fractions of the key space [lo, hi) with a relative record weight.
struct KeyBand {
    double lo = 0.0;
    double hi = 1.0;
    double weight = 1.0;
};

/// Records whose key falls in [lo, hi) of the key space draw values from [min, max).
struct ValueBand {
    double lo = 0.0;
    double hi = 1.0;
    std::int64_t min = 0;
    std::int64_t max = 1024;
};

struct DataModel {
    std::int64_t records = 0;
    Bytes per_record_bytes = 0;
    double zipf = 0.0;
    KeyDistribution distribution = KeyDistribution::zipf;
    std::int64_t distinct_keys = 4096;
    std::vector<KeyBand> key_bands;
    std::vector<ValueBand> value_bands;

    [[nodiscard]] Bytes total_bytes() const noexcept { return records * per_record_bytes; }

    /// Throws invalid_spec unless `bytes` is an exact multiple of `records`.
    static DataModel from_total(Bytes bytes, std::int64_t records, double zipf);
};

enum class DecisionKind { no_new_action, ignore, replace };

struct StatusDecision {
    DecisionKind kind = DecisionKind::no_new_action;
    std::string logic_id;  ///< replace only
};

/// Declarative stand-in for the client-side modify action: first matching rule wins.
struct StatusRule {
    std::string counter_id;
    CompareOp op = CompareOp::equal;
    std::int64_t threshold = 0;
    StatusDecision decision;
};

struct StageSpec {
    std::string id;
    ComputeType compute_type = ComputeType::stateless;
    TriggerSpec trigger;
    DataModel output;
    std::string logic_id = "default";
    std::vector<MonitorSpec> monitors;
    std::vector<StatusRule> status_rules;  ///< evaluated against this stage's input granules
    int partitions = 1;  ///< fixed task count used by root stages and the compute-centric baseline
    Bytes input_bytes = 0;  ///< external input read by a root stage; 0 means "same as output"
};

struct JobSpec {
    std::string id;
    SimTime arrival_time = 0.0;
    std::vector<StageSpec> stages;
    std::vector<std::pair<std::string, std::string>> edges;
};

/// Validated DAG. Stage indices follow the order of the spec.
class JobGraph {
public:
    JobGraph() = default;

    [[nodiscard]] const std::string& job_id() const noexcept { return job_id_; }
    [[nodiscard]] SimTime arrival_time() const noexcept { return arrival_; }
    [[nodiscard]] const std::vector<StageSpec>& stages() const noexcept { return stages_; }
    [[nodiscard]] const StageSpec& stage(std::size_t i) const { return stages_.at(i); }
    [[nodiscard]] std::size_t size() const noexcept { return stages_.size(); }
    [[nodiscard]] const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }
    [[nodiscard]] const std::vector<std::size_t>& producers(std::size_t i) const { return producers_.at(i); }
    [[nodiscard]] const std::vector<std::size_t>& consumers(std::size_t i) const { return consumers_.at(i); }
    [[nodiscard]] const std::vector<std::size_t>& topo_order() const noexcept { return topo_; }
    [[nodiscard]] std::vector<std::size_t> roots() const;
    [[nodiscard]] std::optional<std::size_t> index_of(const std::string& stage_id) const;

    /// Ancestors grouped by distance: [0] = parents, [1] = grandparents, ...
    /// A stage appears only at its shortest distance.
    [[nodiscard]] std::vector<std::vector<std::size_t>> ancestor_levels(std::size_t i) const;

    /// Other producers feeding any consumer of stage i.
    [[nodiscard]] std::vector<std::size_t> siblings(std::size_t i) const;

    [[nodiscard]] std::vector<std::string> topo_stage_ids() const;

    friend JobGraph build_job_graph(const JobSpec& spec);

private:
    std::string job_id_;
    SimTime arrival_ = 0.0;
    std::vector<StageSpec> stages_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> producers_;
    std::vector<std::vector<std::size_t>> consumers_;
    std::vector<std::size_t> topo_;
};

/// Errors: duplicate_stage, dangling_edge, cycle_detected, illegal_pipelining_trigger,
/// unsupported_fan_out (threshold triggers on a stage with several consumers), invalid_spec.
JobGraph build_job_graph(const JobSpec& spec);

// ---------------------------------------------------------------------------
// Keys and granules
// ---------------------------------------------------------------------------

/// floor(key / (key_space / n)); n must divide key_space.
[[nodiscard]] std::uint32_t granule_index_for_key(std::uint64_t key, std::uint32_t n,
                                                  std::uint64_t key_space = kDefaultKeySpace);

struct KeyRange {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;  ///< exclusive

    [[nodiscard]] std::uint64_t width() const noexcept { return hi - lo; }
    [[nodiscard]] bool contains(std::uint64_t k) const noexcept { return k >= lo && k < hi; }
};

[[nodiscard]] KeyRange granule_key_range(std::uint32_t index, std::uint32_t n,
                                         std::uint64_t key_space = kDefaultKeySpace);

/// One intermediate record: a hashed key, its size and an integer payload value.
struct Record {
    std::uint64_t key = 0;
    Bytes bytes = 0;
    std::int64_t value = 0;
};

/// Commutative + associative fold carried through pipelined consumption.
struct Aggregate {
    std::int64_t count = 0;
    std::int64_t sum = 0;
    std::int64_t min = std::numeric_limits<std::int64_t>::max();
    std::int64_t max = std::numeric_limits<std::int64_t>::min();

    void add(std::int64_t value) noexcept;
    void merge(const Aggregate& other) noexcept;
    [[nodiscard]] bool empty() const noexcept { return count == 0; }
    friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct GranuleRef {
    int job = 0;
    int stage = 0;
    int index = 0;

    friend auto operator<=>(const GranuleRef&, const GranuleRef&) = default;
};

struct StatsSnapshot {
    Bytes bytes = 0;
    std::int64_t kv_pairs = 0;
    double growth_rate = 0.0;
    std::map<std::string, std::int64_t> custom_counters;
};

/// Built-in and custom statistics. `bytes` and `kv_pairs` count everything ever
/// ingested (monotone); growth is an exponentially weighted bytes/second rate.
class GranuleStats {
public:
    GranuleStats() = default;
    explicit GranuleStats(double half_life_s) : half_life_(half_life_s) {}

    void record_ingest(Bytes bytes, std::int64_t records, SimTime now);
    [[nodiscard]] double growth_rate(SimTime now) const;
    [[nodiscard]] StatsSnapshot snapshot(SimTime now) const;

    Bytes bytes = 0;
    std::int64_t kv_pairs = 0;
    std::map<std::string, std::int64_t> custom_counters;

private:
    double half_life_ = 5.0;
    double decayed_bytes_ = 0.0;
    SimTime last_update_ = 0.0;
};

/// Data not yet handed to a consumer. Written-back partial aggregates count as records.
struct Unconsumed {
    std::int64_t raw_records = 0;
    Bytes raw_bytes = 0;
    Aggregate raw;
    std::int64_t partial_records = 0;
    Bytes partial_bytes = 0;
    Aggregate partial;

    [[nodiscard]] std::int64_t records() const noexcept { return raw_records + partial_records; }
    [[nodiscard]] Bytes bytes() const noexcept { return raw_bytes + partial_bytes; }
    [[nodiscard]] Aggregate content() const noexcept;
};

struct Granule {
    GranuleRef id;
    KeyRange key_range;
    std::map<MachineId, Bytes> materializations;  ///< bytes ever placed per machine
    std::map<MachineId, Bytes> resident;  ///< bytes currently stored per machine
    std::map<MachineId, SimTime> closed_at;
    std::optional<MachineId> open_machine;
    Bytes open_bytes = 0;  ///< bytes placed on open_machine since it was opened
    GranuleStats stats;
    Unconsumed unconsumed;
    int ready_epoch = 0;  ///< number of data_ready events emitted so far

    [[nodiscard]] Bytes resident_bytes() const noexcept;
    [[nodiscard]] std::vector<std::pair<MachineId, Bytes>> locations() const;
};

// ---------------------------------------------------------------------------
// Protocol events
// ---------------------------------------------------------------------------

struct DataSpill {
    GranuleRef stage;  ///< index unused
    std::vector<Record> records;
};

struct DataReady {
    GranuleRef granule;
    int epoch = 0;
    std::vector<std::pair<MachineId, Bytes>> machines;
    StatsSnapshot stats;
    Bytes bytes = 0;  ///< consumable bytes handed off
    std::int64_t records = 0;
    Aggregate content;
    bool final = false;
};

struct DataGenerated {
    GranuleRef stage;
};

struct DataReadyAll {
    GranuleRef stage;
};

struct StatusQuery {
    GranuleRef granule;
    int epoch = 0;
    StatsSnapshot stats;
};

struct StatusReply {
    GranuleRef granule;
    int epoch = 0;
    StatusDecision decision;
};

using Event = std::variant<DataSpill, DataReady, DataGenerated, DataReadyAll, StatusQuery, StatusReply>;

const char* to_string(ComputeType t) noexcept;
const char* to_string(TriggerKind k) noexcept;
const char* to_string(CompareOp op) noexcept;
const char* to_string(DecisionKind k) noexcept;
ComputeType compute_type_from_string(const std::string& s);
TriggerKind trigger_kind_from_string(const std::string& s);
CompareOp compare_op_from_string(const std::string& s);
DecisionKind decision_kind_from_string(const std::string& s);

}  // namespace granary

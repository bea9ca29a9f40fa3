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
#include "granary/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace granary {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::cycle_detected: return "CycleDetected";
        case ErrorCode::dangling_edge: return "DanglingEdge";
        case ErrorCode::duplicate_stage: return "DuplicateStage";
        case ErrorCode::illegal_pipelining_trigger: return "IllegalPipeliningTrigger";
        case ErrorCode::unsupported_fan_out: return "UnsupportedFanOut";
        case ErrorCode::invalid_spec: return "InvalidSpec";
        case ErrorCode::no_machines: return "NoMachines";
        case ErrorCode::no_eligible_machines: return "NoEligibleMachines";
        case ErrorCode::unknown_stage: return "UnknownStage";
        case ErrorCode::duplicate_data_generated: return "DuplicateDataGenerated";
        case ErrorCode::not_commutative_associative: return "NotCommutativeAssociative";
        case ErrorCode::infeasible: return "Infeasible";
        case ErrorCode::too_large: return "TooLarge";
        case ErrorCode::all_deferred: return "AllDeferred";
        case ErrorCode::nothing_to_split: return "NothingToSplit";
        case ErrorCode::unknown_granule: return "UnknownGranule";
        case ErrorCode::config_invalid: return "ConfigInvalid";
        case ErrorCode::incomplete_trace: return "IncompleteTrace";
        case ErrorCode::workload_mismatch: return "WorkloadMismatch";
        case ErrorCode::unknown_template: return "UnknownTemplate";
        case ErrorCode::io: return "IoError";
    }
    return "Unknown";
}

bool compare(CompareOp op, std::int64_t value, std::int64_t threshold) noexcept {
    switch (op) {
        case CompareOp::less: return value < threshold;
        case CompareOp::equal: return value == threshold;
        case CompareOp::greater: return value > threshold;
    }
    return false;
}

DataModel DataModel::from_total(Bytes bytes, std::int64_t records, double zipf) {
    if (records < 0 || bytes < 0) {
        throw Error(ErrorCode::invalid_spec, "negative output size");
    }
    if (zipf < 0.0) {
        throw Error(ErrorCode::invalid_spec, "zipf exponent must be >= 0");
    }
    DataModel m;
    m.zipf = zipf;
    if (records == 0) {
        if (bytes != 0) {
            throw Error(ErrorCode::invalid_spec, "bytes without records");
        }
        return m;
    }
    if (bytes % records != 0) {
        throw Error(ErrorCode::invalid_spec,
                    "output bytes " + std::to_string(bytes) + " not divisible by records " + std::to_string(records));
    }
    m.records = records;
    m.per_record_bytes = bytes / records;
    return m;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> JobGraph::roots() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        if (producers_[i].empty()) {
            out.push_back(i);
        }
    }
    return out;
}

std::optional<std::size_t> JobGraph::index_of(const std::string& stage_id) const {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        if (stages_[i].id == stage_id) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::vector<std::size_t>> JobGraph::ancestor_levels(std::size_t i) const {
    std::vector<std::vector<std::size_t>> levels;
    std::set<std::size_t> seen{i};
    std::vector<std::size_t> frontier{i};
    while (true) {
        std::set<std::size_t> next;
        for (auto s : frontier) {
            for (auto p : producers_[s]) {
                if (!seen.contains(p)) {
                    next.insert(p);
                }
            }
        }
        if (next.empty()) {
            break;
        }
        seen.insert(next.begin(), next.end());
        frontier.assign(next.begin(), next.end());
        levels.push_back(frontier);
    }
    return levels;
}

std::vector<std::size_t> JobGraph::siblings(std::size_t i) const {
    std::set<std::size_t> out;
    for (auto c : consumers_[i]) {
        for (auto p : producers_[c]) {
            if (p != i) {
                out.insert(p);
            }
        }
    }
    return {out.begin(), out.end()};
}

std::vector<std::string> JobGraph::topo_stage_ids() const {
    std::vector<std::string> out;
    out.reserve(topo_.size());
    for (auto i : topo_) {
        out.push_back(stages_[i].id);
    }
    return out;
}

JobGraph build_job_graph(const JobSpec& spec) {
    if (spec.stages.empty()) {
        throw Error(ErrorCode::invalid_spec, "job '" + spec.id + "' has no stages");
    }
    JobGraph g;
    g.job_id_ = spec.id;
    g.arrival_ = spec.arrival_time;
    g.stages_ = spec.stages;

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < g.stages_.size(); ++i) {
        const auto& s = g.stages_[i];
        if (!index.emplace(s.id, i).second) {
            throw Error(ErrorCode::duplicate_stage, "stage '" + s.id + "' defined twice");
        }
        if (s.partitions < 1) {
            throw Error(ErrorCode::invalid_spec, "stage '" + s.id + "' needs partitions >= 1");
        }
        const auto k = s.trigger.kind;
        if ((k == TriggerKind::default_streaming || k == TriggerKind::pipelining) && s.trigger.x < 1) {
            throw Error(ErrorCode::invalid_spec, "stage '" + s.id + "' trigger needs x >= 1");
        }
        for (const auto& r : s.status_rules) {
            if (r.decision.kind == DecisionKind::replace && r.decision.logic_id == s.logic_id) {
                throw Error(ErrorCode::invalid_spec, "replace rule on '" + s.id + "' must name a different logic");
            }
        }
    }

    g.producers_.assign(g.stages_.size(), {});
    g.consumers_.assign(g.stages_.size(), {});
    std::set<std::pair<std::size_t, std::size_t>> seen_edges;
    for (const auto& [from, to] : spec.edges) {
        auto a = index.find(from);
        auto b = index.find(to);
        if (a == index.end() || b == index.end()) {
            throw Error(ErrorCode::dangling_edge, from + " -> " + to);
        }
        if (a->second == b->second) {
            throw Error(ErrorCode::cycle_detected, "self edge on " + from);
        }
        if (!seen_edges.emplace(a->second, b->second).second) {
            continue;
        }
        g.edges_.emplace_back(a->second, b->second);
        g.producers_[b->second].push_back(a->second);
        g.consumers_[a->second].push_back(b->second);
    }

    // Kahn; lowest index first among ready stages keeps the order stable.
    std::vector<std::size_t> indeg(g.stages_.size());
    for (std::size_t i = 0; i < g.stages_.size(); ++i) {
        indeg[i] = g.producers_[i].size();
    }
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < indeg.size(); ++i) {
        if (indeg[i] == 0) {
            ready.insert(i);
        }
    }
    while (!ready.empty()) {
        auto n = *ready.begin();
        ready.erase(ready.begin());
        g.topo_.push_back(n);
        for (auto c : g.consumers_[n]) {
            if (--indeg[c] == 0) {
                ready.insert(c);
            }
        }
    }
    if (g.topo_.size() != g.stages_.size()) {
        throw Error(ErrorCode::cycle_detected, "job '" + spec.id + "' has a dependency cycle");
    }

    for (std::size_t i = 0; i < g.stages_.size(); ++i) {
        const auto& t = g.stages_[i].trigger;
        if (t.kind == TriggerKind::pipelining) {
            for (auto c : g.consumers_[i]) {
                if (g.stages_[c].compute_type != ComputeType::stateful_ca) {
                    throw Error(ErrorCode::illegal_pipelining_trigger,
                                "stage '" + g.stages_[i].id + "' pipelines into non-CA consumer '" +
                                    g.stages_[c].id + "'");
                }
            }
        }
        if (t.kind != TriggerKind::default_batch && g.consumers_[i].size() > 1) {
            throw Error(ErrorCode::unsupported_fan_out,
                        "threshold trigger on stage '" + g.stages_[i].id + "' with several consumers");
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

std::uint32_t granule_index_for_key(std::uint64_t key, std::uint32_t n, std::uint64_t key_space) {
    return static_cast<std::uint32_t>(key / (key_space / n));
}

KeyRange granule_key_range(std::uint32_t index, std::uint32_t n, std::uint64_t key_space) {
    const auto width = key_space / n;
    return {index * width, (index + 1) * width};
}

void Aggregate::add(std::int64_t value) noexcept {
    ++count;
    sum += value;
    min = std::min(min, value);
    max = std::max(max, value);
}

void Aggregate::merge(const Aggregate& other) noexcept {
    count += other.count;
    sum += other.sum;
    min = std::min(min, other.min);
    max = std::max(max, other.max);
}

Aggregate Unconsumed::content() const noexcept {
    Aggregate a = raw;
    a.merge(partial);
    return a;
}

void GranuleStats::record_ingest(Bytes b, std::int64_t records, SimTime now) {
    const double dt = std::max(0.0, now - last_update_);
    decayed_bytes_ = decayed_bytes_ * std::exp2(-dt / half_life_) + static_cast<double>(b);
    last_update_ = std::max(last_update_, now);
    bytes += b;
    kv_pairs += records;
}

double GranuleStats::growth_rate(SimTime now) const {
    const double dt = std::max(0.0, now - last_update_);
    const double lambda = std::log(2.0) / half_life_;
    return decayed_bytes_ * std::exp2(-dt / half_life_) * lambda;
}

StatsSnapshot GranuleStats::snapshot(SimTime now) const {
    return {bytes, kv_pairs, growth_rate(now), custom_counters};
}

Bytes Granule::resident_bytes() const noexcept {
    Bytes total = 0;
    for (const auto& [m, b] : resident) {
        total += b;
    }
    return total;
}

std::vector<std::pair<MachineId, Bytes>> Granule::locations() const {
    std::vector<std::pair<MachineId, Bytes>> out;
    for (const auto& [m, b] : materializations) {
        if (b > 0) {
            out.emplace_back(m, b);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

const char* to_string(ComputeType t) noexcept {
    switch (t) {
        case ComputeType::stateless: return "stateless";
        case ComputeType::stateful_ca: return "stateful_ca";
        case ComputeType::stateful_non_ca: return "stateful_non_ca";
    }
    return "?";
}

const char* to_string(TriggerKind k) noexcept {
    switch (k) {
        case TriggerKind::default_batch: return "default_batch";
        case TriggerKind::default_streaming: return "default_streaming";
        case TriggerKind::pipelining: return "pipelining";
        case TriggerKind::custom_counter: return "custom_counter";
    }
    return "?";
}

const char* to_string(CompareOp op) noexcept {
    switch (op) {
        case CompareOp::less: return "<";
        case CompareOp::equal: return "=";
        case CompareOp::greater: return ">";
    }
    return "?";
}

const char* to_string(DecisionKind k) noexcept {
    switch (k) {
        case DecisionKind::no_new_action: return "no_new_action";
        case DecisionKind::ignore: return "ignore";
        case DecisionKind::replace: return "replace";
    }
    return "?";
}

ComputeType compute_type_from_string(const std::string& s) {
    if (s == "stateless") return ComputeType::stateless;
    if (s == "stateful_ca") return ComputeType::stateful_ca;
    if (s == "stateful_non_ca") return ComputeType::stateful_non_ca;
    throw Error(ErrorCode::invalid_spec, "unknown compute_type '" + s + "'");
}

TriggerKind trigger_kind_from_string(const std::string& s) {
    if (s == "default_batch") return TriggerKind::default_batch;
    if (s == "default_streaming") return TriggerKind::default_streaming;
    if (s == "pipelining") return TriggerKind::pipelining;
    if (s == "custom_counter") return TriggerKind::custom_counter;
    throw Error(ErrorCode::invalid_spec, "unknown trigger kind '" + s + "'");
}

CompareOp compare_op_from_string(const std::string& s) {
    if (s == "<" || s == "lt") return CompareOp::less;
    if (s == "=" || s == "==" || s == "eq") return CompareOp::equal;
    if (s == ">" || s == "gt") return CompareOp::greater;
    throw Error(ErrorCode::invalid_spec, "unknown comparison '" + s + "'");
}

DecisionKind decision_kind_from_string(const std::string& s) {
    if (s == "no_new_action") return DecisionKind::no_new_action;
    if (s == "ignore") return DecisionKind::ignore;
    if (s == "replace") return DecisionKind::replace;
    throw Error(ErrorCode::invalid_spec, "unknown decision '" + s + "'");
}

}  // namespace granary

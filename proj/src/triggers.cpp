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
#include "granary/triggers.hpp"

namespace granary {

bool evaluate(const TriggerSpec& trigger, const Granule& granule, const StageProgress& progress,
              std::int64_t stage_counter) {
    switch (trigger.kind) {
        case TriggerKind::default_batch:
            return progress.producer_done;
        case TriggerKind::default_streaming:
            return granule.unconsumed.records() >= trigger.x;
        case TriggerKind::pipelining:
            // A granule holding only its own written-back fold has not grown back yet.
            return !progress.in_flight.contains(granule.id.index) && granule.unconsumed.raw_records > 0 &&
                   granule.unconsumed.records() >= trigger.x;
        case TriggerKind::custom_counter:
            return granule.unconsumed.records() > 0 && stage_counter - progress.custom_baseline >= trigger.threshold;
    }
    return false;
}

TriggerEngine::TriggerEngine(int job, int stage, TriggerSpec trigger, std::optional<ComputeType> consumer_type,
                             std::uint32_t granule_count)
    : trigger_(std::move(trigger)), consumer_type_(consumer_type) {
    progress_.job = job;
    progress_.stage = stage;
    progress_.granule_count = granule_count;
}

std::int64_t TriggerEngine::stage_counter(const std::vector<Granule>& granules) const {
    if (trigger_.kind != TriggerKind::custom_counter) {
        return 0;
    }
    std::int64_t total = 0;
    for (const auto& g : granules) {
        auto it = g.stats.custom_counters.find(trigger_.counter_id);
        if (it != g.stats.custom_counters.end()) {
            total += it->second;
        }
    }
    return total;
}

DataReady TriggerEngine::hand_off(Granule& g, SimTime now, bool final) {
    DataReady ev;
    ev.granule = g.id;
    ev.epoch = g.ready_epoch++;
    ev.machines = g.locations();
    ev.stats = g.stats.snapshot(now);
    ev.bytes = g.unconsumed.bytes();
    ev.records = g.unconsumed.records();
    ev.content = g.unconsumed.content();
    ev.final = final;
    g.unconsumed = Unconsumed{};
    progress_.granules_ready_sent.insert(g.id.index);
    if (trigger_.kind == TriggerKind::pipelining && !final && ev.records > 0) {
        progress_.in_flight.insert(g.id.index);
    }
    return ev;
}

std::vector<DataReady> TriggerEngine::on_ingest(std::vector<Granule>& granules, std::span<const int> touched,
                                                SimTime now) {
    std::vector<DataReady> out;
    if (progress_.producer_done) {
        return out;
    }
    switch (trigger_.kind) {
        case TriggerKind::default_batch:
            break;
        case TriggerKind::default_streaming:
        case TriggerKind::pipelining:
            for (int idx : touched) {
                auto& g = granules.at(static_cast<std::size_t>(idx));
                if (evaluate(trigger_, g, progress_)) {
                    out.push_back(hand_off(g, now, false));
                }
            }
            break;
        case TriggerKind::custom_counter: {
            const auto counter = stage_counter(granules);
            if (counter - progress_.custom_baseline >= trigger_.threshold) {
                for (auto& g : granules) {
                    if (evaluate(trigger_, g, progress_, counter)) {
                        out.push_back(hand_off(g, now, false));
                    }
                }
                progress_.custom_baseline = counter;
            }
            break;
        }
    }
    return out;
}

std::optional<DataReadyAll> TriggerEngine::maybe_ready_all() {
    if (progress_.ready_all_sent || !progress_.producer_done || !progress_.in_flight.empty() ||
        !progress_.final_pending.empty() || progress_.granules_ready_sent.size() != progress_.granule_count) {
        return std::nullopt;
    }
    progress_.ready_all_sent = true;
    return DataReadyAll{{progress_.job, progress_.stage, 0}};
}

FlushResult TriggerEngine::on_data_generated(std::vector<Granule>& granules, SimTime now) {
    if (progress_.producer_done) {
        throw Error(ErrorCode::duplicate_data_generated,
                    "stage " + std::to_string(progress_.job) + "/" + std::to_string(progress_.stage));
    }
    progress_.producer_done = true;
    FlushResult out;
    for (auto& g : granules) {
        const int idx = g.id.index;
        // The fold of an in-flight handoff still has to come back through here.
        if (progress_.in_flight.contains(idx)) {
            progress_.final_pending.insert(idx);
            continue;
        }
        const bool never_sent = !progress_.granules_ready_sent.contains(idx);
        if (!never_sent && g.unconsumed.records() == 0) {
            continue;
        }
        out.ready.push_back(hand_off(g, now, true));
    }
    out.ready_all = maybe_ready_all();
    return out;
}

void TriggerEngine::check_writeback_allowed() const {
    if (consumer_type_ != ComputeType::stateful_ca) {
        throw Error(ErrorCode::not_commutative_associative,
                    "partial results can only be written back for a commutative and associative consumer");
    }
}

FlushResult TriggerEngine::pipeline_writeback(std::vector<Granule>& granules, int granule, Bytes partial_bytes,
                                              const Aggregate& partial, SimTime now) {
    check_writeback_allowed();
    auto& g = granules.at(static_cast<std::size_t>(granule));
    g.unconsumed.partial_records += 1;
    g.unconsumed.partial_bytes += partial_bytes;
    g.unconsumed.partial.merge(partial);
    progress_.in_flight.erase(granule);

    FlushResult out;
    if (progress_.final_pending.erase(granule) > 0) {
        out.ready.push_back(hand_off(g, now, true));
    } else if (!progress_.producer_done && evaluate(trigger_, g, progress_)) {
        out.ready.push_back(hand_off(g, now, false));
    }
    out.ready_all = maybe_ready_all();
    return out;
}

FlushResult TriggerEngine::abandon(std::vector<Granule>& granules, int granule, SimTime now) {
    FlushResult out;
    if (progress_.in_flight.erase(granule) == 0) {
        return out;
    }
    if (progress_.final_pending.erase(granule) > 0) {
        out.ready.push_back(hand_off(granules.at(static_cast<std::size_t>(granule)), now, true));
    }
    out.ready_all = maybe_ready_all();
    return out;
}

}  // namespace granary

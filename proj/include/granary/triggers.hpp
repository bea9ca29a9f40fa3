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
#include <vector>

#include "granary/model.hpp"

namespace granary {

struct StageProgress {
    int job = 0;
    int stage = 0;
    std::uint32_t granule_count = 0;
    std::set<int> granules_ready_sent;
    bool producer_done = false;
    bool ready_all_sent = false;
    std::set<int> in_flight;  ///< pipelined handoffs awaiting their writeback
    std::set<int> final_pending;  ///< final flush postponed until writeback
    std::int64_t custom_baseline = 0;  ///< aggregated counter value at the last custom fire
};

/// Per-granule fire predicate. For custom_counter the stage-wide counter sum is
/// passed in `stage_counter`; when it fires, every granule holding data fires.
[[nodiscard]] bool evaluate(const TriggerSpec& trigger, const Granule& granule, const StageProgress& progress,
                            std::int64_t stage_counter = 0);

struct FlushResult {
    std::vector<DataReady> ready;
    std::optional<DataReadyAll> ready_all;
};

/// Ready-trigger state machine for one producing stage.
class TriggerEngine {
public:
    TriggerEngine(int job, int stage, TriggerSpec trigger, std::optional<ComputeType> consumer_type,
                  std::uint32_t granule_count);

    [[nodiscard]] const StageProgress& progress() const noexcept { return progress_; }
    [[nodiscard]] const TriggerSpec& trigger() const noexcept { return trigger_; }

    /// Evaluates thresholds after new bytes landed in `touched` granules.
    std::vector<DataReady> on_ingest(std::vector<Granule>& granules, std::span<const int> touched, SimTime now);

    /// Final flush, then data_ready_all once nothing is still in flight.
    /// Throws duplicate_data_generated on a second call.
    FlushResult on_data_generated(std::vector<Granule>& granules, SimTime now);

    /// A pipelined consumer returned its partial fold for `granule`. The caller has
    /// already placed the bytes; this re-arms the trigger and may emit the final flush.
    /// Throws not_commutative_associative unless the consumer is stateful_ca.
    FlushResult pipeline_writeback(std::vector<Granule>& granules, int granule, Bytes partial_bytes,
                                   const Aggregate& partial, SimTime now);

    /// The consumer dropped an in-flight handoff without producing a fold
    /// (for example an Ignore decision). Releases the granule for its final flush.
    FlushResult abandon(std::vector<Granule>& granules, int granule, SimTime now);

    /// Verifies the writeback precondition without changing state.
    void check_writeback_allowed() const;

private:
    DataReady hand_off(Granule& g, SimTime now, bool final);
    std::optional<DataReadyAll> maybe_ready_all();
    [[nodiscard]] std::int64_t stage_counter(const std::vector<Granule>& granules) const;

    TriggerSpec trigger_;
    std::optional<ComputeType> consumer_type_;
    StageProgress progress_;
};

}  // namespace granary

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
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "granary/model.hpp"

namespace granary {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

struct LoadStats {
    double min = 0.0;
    double max = 0.0;
    double avg = 0.0;
    double ideal = 0.0;  ///< total / machine count
};

struct StageMetrics {
    std::string job;
    std::string stage;
    double first_launch = 0.0;
    double last_finish = 0.0;
    double inputs_done = 0.0;  ///< last producer's data_ready_all, or the job arrival for a root
    int tasks = 0;  ///< completed, not killed
    Bytes processed = 0;  ///< includes killed tasks' work
    Bytes input = 0;  ///< input of completed tasks
    Aggregate result;

    /// Time from the stage's input being complete to its last task finishing.
    [[nodiscard]] double duration() const { return last_finish - inputs_done; }
};

struct MetricsReport {
    std::string mode;
    std::string workload_hash;
    std::map<std::string, double> jct;
    double makespan = 0.0;
    double mean_jct = 0.0;
    double dl_task_fraction = 0.0;
    std::map<std::string, double> dl_granule_fraction;
    std::map<std::string, double> ft_granule_fraction;
    LoadStats load;
    std::vector<std::pair<double, int>> launched;  ///< cumulative task launches
    Bytes bytes_shuffled = 0;
    Bytes bytes_processed = 0;
    int tasks_completed = 0;
    int tasks_killed = 0;
    int skipped_granules = 0;
    Bytes skipped_bytes = 0;
    Bytes overflow_bytes = 0;
    std::vector<StageMetrics> stages;

    [[nodiscard]] const StageMetrics* stage(const std::string& job, const std::string& stage) const;
    [[nodiscard]] double mean_dl_granule_fraction() const;
    [[nodiscard]] double mean_ft_granule_fraction() const;

    [[nodiscard]] Json to_json() const;
    static MetricsReport from_json(const Json& j);
};

/// Throws incomplete_trace when a job never finishes.
MetricsReport compute_metrics(const std::vector<Json>& trace);

struct CheckResult {
    bool ok = true;
    std::vector<std::string> violations;
};

/// Per stage: data_generated and every data_ready precede the single data_ready_all;
/// every non-ignored (granule, epoch) with bytes is covered by exactly one completed task.
CheckResult check_protocol(const std::vector<Json>& trace);

/// Stored bytes of a job on a machine never exceed its quota plus its largest spill.
CheckResult check_quota_isolation(const std::vector<Json>& trace, Bytes* worst_excess = nullptr);

/// Timestamps non-decreasing and seq strictly increasing.
CheckResult check_clock(const std::vector<Json>& trace);

}  // namespace granary

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
#include <string>
#include <vector>

#include "granary/metrics.hpp"
#include "granary/workload.hpp"

namespace granary {

enum class Mode { data_driven, compute_centric };

const char* to_string(Mode m) noexcept;
Mode mode_from_string(const std::string& s);

/// Slows one task down from `onset_s` seconds after its launch.
struct ScriptedStraggler {
    std::string job;
    std::string stage;
    int task_index = 0;  ///< launch order within the stage, clones excluded
    double onset_s = 0.0;
    double factor = 1.0;  ///< processing time multiplier
};

struct ScriptedFailure {
    MachineId machine = 0;
    double time_s = 0.0;
};

struct SimConfig {
    Mode mode = Mode::data_driven;
    std::uint64_t seed = 1;

    int machines = 8;
    double storage_capacity_gb = 64.0;
    double compute_units = 8.0;

    std::uint32_t granules = 64;
    std::uint64_t key_space = kDefaultKeySpace;
    double pressure_threshold = 0.75;
    double spread_factor = 2.0;
    int min_stage_machines = 2;
    double growth_half_life_s = 5.0;

    int retry_limit = 3;
    double straggler_theta = 0.5;
    double straggler_period_s = 1.0;
    std::optional<double> max_input_per_task_gb;

    double seconds_per_gb_unit = 10.0;  ///< one unit processes one GB in this many seconds
    double bandwidth_gb_s = 1.0;  ///< remote read rate
    double max_task_units = 1.0;
    double min_task_units = 0.05;
    int spills_per_task = 8;

    double cc_launch_fraction = 0.9;
    double cc_task_units = 1.0;
    double cc_streaming_interval_s = 0.0;  ///< 0 disables micro-batching in the baseline
    bool cc_speculation = true;

    std::optional<ilp::Weights> ilp_weights;

    std::vector<ScriptedStraggler> stragglers;
    std::vector<ScriptedFailure> failures;

    double max_sim_time_s = 1e7;

    /// Throws config_invalid.
    void validate() const;
    [[nodiscard]] Json to_json() const;
    /// Unknown keys are rejected; missing keys keep their defaults.
    static SimConfig from_json(const Json& j);
};

struct SimResult {
    std::vector<Json> trace;
    MetricsReport metrics;
};

/// Runs in `config.mode`. Throws config_invalid, or the model errors of an invalid workload.
SimResult run(const Workload& workload, const SimConfig& config);

/// The baseline regardless of `config.mode`.
SimResult run_compute_centric(const Workload& workload, SimConfig config);

[[nodiscard]] std::string trace_to_jsonl(const std::vector<Json>& trace);
std::vector<Json> trace_from_jsonl(const std::string& text);

}  // namespace granary

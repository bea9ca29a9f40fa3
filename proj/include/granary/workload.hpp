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
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "granary/ilp.hpp"
#include "granary/model.hpp"

namespace granary {

using Json = nlohmann::ordered_json;

struct Workload {
    std::vector<JobSpec> jobs;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. std:: distributions are implementation-defined, so
// anything that shapes a trace draws through these helpers instead.
// ---------------------------------------------------------------------------

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x) noexcept;
[[nodiscard]] std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept;
/// Uniform in [0, 1).
[[nodiscard]] double uniform01(std::mt19937_64& rng) noexcept;
[[nodiscard]] double exponential(std::mt19937_64& rng, double mean) noexcept;
/// Uniform integer in [0, n).
[[nodiscard]] std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) noexcept;

/// Records of one stage's output, in emission order.
std::vector<Record> generate_records(const DataModel& model, std::uint64_t seed,
                                     std::uint64_t key_space = kDefaultKeySpace);

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

/// Throws invalid_spec on schema errors.
Workload workload_from_json(const Json& j);
Json workload_to_json(const Workload& w);

/// FNV-1a over the canonical JSON dump.
[[nodiscard]] std::string workload_hash(const Workload& w);

ilp::Instance ilp_instance_from_json(const Json& j);
Json ilp_instance_to_json(const ilp::Instance& inst);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

struct GenParams {
    std::string template_name = "batch_chain";
    std::uint64_t seed = 1;
    int jobs = 1;
    int iterations = 5;  ///< graph_iterative chain length
    double mean_interarrival_s = 20.0;
    double scale = 1.0;  ///< multiplies every byte size
    std::int64_t records = 10000;  ///< records per stage before scaling
    double zipf = 1.2;
};

/// Throws unknown_template.
Workload generate_workload(const GenParams& params);

[[nodiscard]] const std::vector<std::string>& known_templates();

}  // namespace granary

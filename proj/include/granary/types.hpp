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
#include <limits>
#include <stdexcept>
#include <string>

namespace granary {

using Bytes = std::int64_t;
using MachineId = int;
using SimTime = double;

/// Decimal gigabyte; workload sizes are expressed in these.
inline constexpr Bytes kGB = 1'000'000'000;

/// Hashed keys live in [0, kDefaultKeySpace).
inline constexpr std::uint64_t kDefaultKeySpace = std::uint64_t{1} << 20;

enum class ErrorCode {
    cycle_detected,
    dangling_edge,
    duplicate_stage,
    illegal_pipelining_trigger,
    unsupported_fan_out,
    invalid_spec,
    no_machines,
    no_eligible_machines,
    unknown_stage,
    duplicate_data_generated,
    not_commutative_associative,
    infeasible,
    too_large,
    all_deferred,
    nothing_to_split,
    unknown_granule,
    config_invalid,
    incomplete_trace,
    workload_mismatch,
    unknown_template,
    io,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline double to_gb(Bytes b) { return static_cast<double>(b) / static_cast<double>(kGB); }

}  // namespace granary

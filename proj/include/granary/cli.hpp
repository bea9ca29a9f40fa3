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
#include <optional>
#include <string>
#include <vector>

#include "granary/metrics.hpp"
#include "granary/simulator.hpp"

namespace granary::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kInputError = 2, kSolverError = 3 };

struct RunOptions {
    std::string workload;
    std::optional<std::string> config;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int reps = 1;
};

struct IlpOptions {
    std::optional<std::string> instance;
    std::optional<int> random;
    std::uint64_t seed = 1;
    bool heuristic = true;
    std::optional<std::string> out;
};

struct GenOptions {
    GenParams params;
    std::string out;
};

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err);
int cmd_compare(const std::string& dir_a, const std::string& dir_b, std::optional<std::string> out_prefix,
                std::ostream& out, std::ostream& err);
int cmd_ilp(const IlpOptions& o, std::ostream& out, std::ostream& err);
int cmd_gen(const GenOptions& o, std::ostream& out, std::ostream& err);

/// Throws workload_mismatch when the hashes differ. `a` is the reference (numerator).
Json compare_reports(const MetricsReport& a, const MetricsReport& b);
std::string compare_csv(const MetricsReport& a, const MetricsReport& b);

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
double percentile(std::vector<double> xs, double p);

Json ilp_report(const ilp::Instance& inst, bool heuristic);

int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace granary::cli

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
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "granary/cli.hpp"
#include "scenarios.hpp"

using namespace granary;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("granary_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "granary");
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string small_workload(const TempDir& d) {
    const auto path = d / "w.json";
    write(path, workload_to_json(granary::testing::status_workload()).dump(2));
    return path;
}

}  // namespace

TEST(CliRun, WritesTraceAndMetrics) {
    TempDir d;
    const auto w = small_workload(d);
    const auto r = invoke({"run", "--workload", w, "--out", d / "out"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_TRUE(fs::exists(d / "out/trace.jsonl"));
    EXPECT_TRUE(fs::exists(d / "out/config.json"));
    EXPECT_TRUE(fs::exists(d / "out/manifest.json"));
    const auto metrics = Json::parse(slurp(d / "out/metrics.json"));
    EXPECT_EQ(metrics["mode"], "data_driven");
}

TEST(CliRun, MissingWorkloadIsAnInputError) {
    TempDir d;
    const auto r = invoke({"run", "--workload", d / "nope.json", "--out", d / "out"});
    EXPECT_EQ(r.code, cli::kInputError);
    EXPECT_FALSE(r.err.empty());
}

TEST(CliRun, ModeFlag) {
    TempDir d;
    const auto w = small_workload(d);
    ASSERT_EQ(invoke({"run", "--workload", w, "--mode", "compute_centric", "--out", d / "cc"}).code, cli::kOk);
    EXPECT_EQ(Json::parse(slurp(d / "cc/metrics.json"))["mode"], "compute_centric");
    EXPECT_EQ(invoke({"run", "--workload", w, "--mode", "sideways", "--out", d / "x"}).code, cli::kInputError);
}

TEST(CliRun, ConfigErrorsAreInputErrors) {
    TempDir d;
    const auto w = small_workload(d);
    write(d / "c.json", R"({"machines": 0})");
    EXPECT_EQ(invoke({"run", "--workload", w, "--config", d / "c.json", "--out", d / "o"}).code, cli::kInputError);
    write(d / "c2.json", R"({"granules": 8, "typo_key": 1})");
    EXPECT_EQ(invoke({"run", "--workload", w, "--config", d / "c2.json", "--out", d / "o"}).code, cli::kInputError);
}

TEST(CliRun, RerunsProduceIdenticalFiles) {
    TempDir d;
    const auto w = small_workload(d);
    ASSERT_EQ(invoke({"run", "--workload", w, "--seed", "4", "--out", d / "a"}).code, cli::kOk);
    ASSERT_EQ(invoke({"run", "--workload", w, "--seed", "4", "--out", d / "b"}).code, cli::kOk);
    for (const char* f : {"trace.jsonl", "metrics.json", "config.json"}) {
        EXPECT_EQ(slurp(d / (std::string("a/") + f)), slurp(d / (std::string("b/") + f))) << f;
    }
    EXPECT_EQ(slurp(d / "a/trace.jsonl").find("wall"), std::string::npos);
}

TEST(CliRun, Repetitions) {
    TempDir d;
    const auto w = small_workload(d);
    ASSERT_EQ(invoke({"run", "--workload", w, "--reps", "3", "--out", d / "r"}).code, cli::kOk);
    for (int i = 0; i < 3; ++i) {
        EXPECT_TRUE(fs::exists(d / ("r/rep_" + std::to_string(i) + "/metrics.json")));
    }
}

TEST(CliCompare, SelfComparisonGivesUnitRatios) {
    TempDir d;
    const auto w = small_workload(d);
    ASSERT_EQ(invoke({"run", "--workload", w, "--out", d / "a"}).code, cli::kOk);
    const auto r = invoke({"compare", d / "a", d / "a", "--out", d / "cmp"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto a = MetricsReport::from_json(Json::parse(slurp(d / "a/metrics.json")));
    const auto j = cli::compare_reports(a, a);
    EXPECT_DOUBLE_EQ(j["makespan"]["ratio"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(j["mean_jct"]["ratio"].get<double>(), 1.0);
    for (const auto& [job, row] : j["jobs"].items()) {
        EXPECT_DOUBLE_EQ(row["ratio"].get<double>(), 1.0) << job;
    }
    for (const auto& row : j["stage_duration"]) {
        EXPECT_DOUBLE_EQ(row["ratio"].get<double>(), 1.0);
    }
}

TEST(CliCompare, SkewScenarioRatio) {
    const auto w = granary::testing::skew_workload();
    const auto dd = run(w, granary::testing::skew_config(Mode::data_driven));
    const auto cc = run(w, granary::testing::skew_config(Mode::compute_centric));
    const auto j = cli::compare_reports(cc.metrics, dd.metrics);
    double v2 = 0.0;
    for (const auto& row : j["stage_duration"]) {
        if (row["stage"] == "v2") {
            v2 = row["ratio"].get<double>();
        }
    }
    EXPECT_GE(v2, 1.5);
}

TEST(CliCompare, WorkloadMismatch) {
    MetricsReport a;
    a.workload_hash = "aaaa";
    MetricsReport b;
    b.workload_hash = "bbbb";
    try {
        (void)cli::compare_reports(a, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::workload_mismatch);
    }
    TempDir d;
    write(d / "w2.json", workload_to_json(granary::testing::straggler_workload()).dump());
    ASSERT_EQ(invoke({"run", "--workload", small_workload(d), "--out", d / "a"}).code, cli::kOk);
    ASSERT_EQ(invoke({"run", "--workload", d / "w2.json", "--out", d / "b"}).code, cli::kOk);
    EXPECT_EQ(invoke({"compare", d / "a", d / "b"}).code, cli::kInputError);
}

TEST(CliIlp, TwoByTwoOptimum) {
    TempDir d;
    write(d / "i.json", R"({"machines": 2,
        "granules": [{"job": 0, "b": [2, 0], "e": 1}, {"job": 0, "b": [0, 1], "e": 1}],
        "quotas": {"0": 100}, "i0": [[], []], "f": [0, 0], "weights": [1, 1, 1]})");
    const auto r = invoke({"ilp", "--instance", d / "i.json"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto j = Json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["optimum"].get<double>(), 3.0);
    EXPECT_EQ(j["placement"], Json::parse("[0, 1]"));
}

TEST(CliIlp, InfeasibleIsASolverError) {
    TempDir d;
    write(d / "i.json", R"({"machines": 1, "granules": [{"job": 0, "b": [2], "e": 1}],
        "quotas": {"0": 2}, "i0": [[]], "f": [0], "weights": [1, 1, 1]})");
    const auto r = invoke({"ilp", "--instance", d / "i.json"});
    EXPECT_EQ(r.code, cli::kSolverError);
    EXPECT_NE(r.err.find("Infeasible"), std::string::npos);
}

TEST(CliIlp, RandomSweep) {
    const auto r = invoke({"ilp", "--random", "100", "--seed", "9"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto j = Json::parse(r.out);
    EXPECT_EQ(j["instances"], 100);
    EXPECT_EQ(j["rows"].size(), 100u);
    EXPECT_LT(j["infeasible"].get<int>(), 100);
    EXPECT_GE(j["max_ratio"].get<double>(), j["mean_ratio"].get<double>());
    EXPECT_GE(j["mean_ratio"].get<double>(), 1.0);
    EXPECT_EQ(invoke({"ilp", "--random", "100", "--seed", "9"}).out, r.out);
}

TEST(CliGen, DeterministicFiles) {
    TempDir d;
    ASSERT_EQ(invoke({"gen", "--template", "batch_chain", "--jobs", "10", "--seed", "1", "--out", d / "a.json"}).code,
              cli::kOk);
    ASSERT_EQ(invoke({"gen", "--template", "batch_chain", "--jobs", "10", "--seed", "1", "--out", d / "b.json"}).code,
              cli::kOk);
    EXPECT_EQ(slurp(d / "a.json"), slurp(d / "b.json"));
    EXPECT_EQ(workload_from_json(Json::parse(slurp(d / "a.json"))).jobs.size(), 10u);
}

TEST(CliGen, GraphIterativeChain) {
    TempDir d;
    ASSERT_EQ(invoke({"gen", "--template", "graph_iterative", "--iters", "5", "--out", d / "g.json"}).code, cli::kOk);
    const auto w = workload_from_json(Json::parse(slurp(d / "g.json")));
    const auto g = build_job_graph(w.jobs.at(0));
    EXPECT_EQ(g.size(), 5u);
    EXPECT_EQ(g.stage(0).trigger.kind, TriggerKind::pipelining);
}

TEST(CliGen, SkewedJoinScenario) {
    TempDir d;
    ASSERT_EQ(invoke({"gen", "--template", "skewed_join", "--out", d / "s.json"}).code, cli::kOk);
    const auto w = workload_from_json(Json::parse(slurp(d / "s.json")));
    EXPECT_EQ(w.jobs.at(0).stages.at(0).output.total_bytes(), 5 * kGB);
    EXPECT_EQ(invoke({"gen", "--template", "nope", "--out", d / "x.json"}).code, cli::kInputError);
}

TEST(CliMisc, Percentile) {
    EXPECT_DOUBLE_EQ(cli::percentile({}, 50), 0.0);
    EXPECT_DOUBLE_EQ(cli::percentile({5, 1, 3, 2, 4}, 50), 3.0);
    EXPECT_DOUBLE_EQ(cli::percentile({5, 1, 3, 2, 4}, 100), 5.0);
    EXPECT_DOUBLE_EQ(cli::percentile({5, 1, 3, 2, 4}, 1), 1.0);
}

TEST(CliMisc, UnknownSubcommand) { EXPECT_NE(invoke({"launch"}).code, cli::kOk); }

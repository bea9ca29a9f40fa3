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

#include <cmath>
#include <map>

#include "granary/metrics.hpp"
#include "granary/simulator.hpp"
#include "scenarios.hpp"

using namespace granary;
using namespace granary::testing;

namespace {

Workload two_stage(std::uint32_t granules_hint = 4) {
    (void)granules_hint;
    auto v1 = stage("v1", ComputeType::stateless, TriggerKind::default_batch, 40'000, 400, 2);
    auto v2 = stage("v2", ComputeType::stateful_ca, TriggerKind::default_batch, 4'000, 40, 2);
    Workload w;
    w.jobs.push_back(chain("j", {v1, v2}));
    return w;
}

SimConfig small(Mode mode = Mode::data_driven) {
    SimConfig c;
    c.mode = mode;
    c.machines = 4;
    c.granules = 8;
    return c;
}

std::vector<Workload> template_workloads() {
    std::vector<Workload> out;
    for (const auto& name : known_templates()) {
        GenParams p;
        p.template_name = name;
        p.jobs = 3;
        p.seed = 6;
        p.records = 2000;
        p.iterations = 3;
        p.mean_interarrival_s = 3.0;
        out.push_back(generate_workload(p));
    }
    return out;
}

using StageKey = std::pair<std::string, std::string>;

std::map<StageKey, Bytes> spilled(const std::vector<Json>& trace) {
    std::map<StageKey, Bytes> out;
    for (const auto& e : trace) {
        if (e["ev"] == "data_spill") {
            out[{e["job"].get<std::string>(), e["stage"].get<std::string>()}] += e["bytes"].get<Bytes>();
        }
    }
    return out;
}

// ---- hand-built traces -----------------------------------------------------

struct TraceBuilder {
    std::vector<Json> events;
    int seq = 0;

    Json& add(double t, const std::string& ev) {
        Json e;
        e["seq"] = seq++;
        e["t"] = t;
        e["ev"] = ev;
        events.push_back(std::move(e));
        return events.back();
    }
    void header(int machines) {
        auto& e = add(0.0, "header");
        e["format_version"] = kFormatVersion;
        e["mode"] = "data_driven";
        e["workload_hash"] = "h";
        e["seed"] = 1;
        e["machines"] = machines;
        e["granules"] = 2;
    }
    void job(double t, const std::string& id, bool two_stages) {
        auto& e = add(t, "job_arrived");
        e["job"] = id;
        Json stages = Json::array();
        stages.push_back({{"id", "v1"}, {"producers", Json::array()}, {"partitions", 1}});
        if (two_stages) {
            stages.push_back({{"id", "v2"}, {"producers", {"v1"}}, {"partitions", 1}});
        }
        e["stages"] = stages;
    }
    void spill(double t, const std::string& job, const std::string& stage, Json stored) {
        auto& e = add(t, "data_spill");
        e["job"] = job;
        e["stage"] = stage;
        e["task"] = 0;
        e["machine"] = 0;
        Bytes b = 0;
        for (const auto& c : stored) {
            b += c[2].get<Bytes>();
        }
        e["records"] = 1;
        e["bytes"] = b;
        e["stored"] = std::move(stored);
        e["overflow"] = 0;
    }
    void task(double t0, double t1, const std::string& job, const std::string& stage, Bytes input, Bytes local) {
        auto& l = add(t0, "task_launched");
        l["job"] = job;
        l["stage"] = stage;
        l["task"] = seq;
        auto& f = add(t1, "task_finished");
        f["job"] = job;
        f["stage"] = stage;
        f["task"] = seq;
        f["input"] = input;
        f["local"] = local;
        f["processed"] = input;
        f["granules"] = Json::array();
        f["killed"] = false;
        f["aggregate"] = {{"count", 0}, {"sum", 0}, {"min", 0}, {"max", 0}};
    }
    void finished(double t, const std::string& job) { add(t, "job_finished")["job"] = job; }
};

}  // namespace

TEST(Metrics, SingleJobJctEqualsMakespan) {
    TraceBuilder b;
    b.header(1);
    b.job(0.0, "j", false);
    b.spill(10.0, "j", "v1", {{0, 0, 5}});
    b.finished(100.0, "j");
    const auto m = compute_metrics(b.events);
    EXPECT_DOUBLE_EQ(m.jct.at("j"), 100.0);
    EXPECT_DOUBLE_EQ(m.makespan, 100.0);
    EXPECT_DOUBLE_EQ(m.mean_jct, 100.0);
    EXPECT_DOUBLE_EQ(m.dl_granule_fraction.at("j"), 1.0);
}

TEST(Metrics, HandComputedTwoMachineTrace) {
    TraceBuilder b;
    b.header(2);
    b.job(0.0, "j", true);
    // v1: granule 0 on m0 only; granule 1 split over m0 and m1
    b.spill(1.0, "j", "v1", {{0, 0, 100}, {1, 0, 50}, {1, 1, 50}});
    // v2 granule 0 lands on m1 next to resident v1 bytes
    b.spill(2.0, "j", "v2", {{0, 1, 30}});
    auto& freed = b.add(3.0, "data_freed");
    freed["job"] = "j";
    freed["stage"] = "v1";
    freed["freed"] = {{0, 150}};
    // m0 no longer holds v1 data: granule 1 is placed fault-tolerantly
    b.spill(4.0, "j", "v2", {{1, 0, 20}});
    b.task(2.0, 6.0, "j", "v2", 100, 60);
    b.task(2.0, 5.0, "j", "v2", 50, 50);
    b.finished(8.0, "j");
    const auto m = compute_metrics(b.events);
    EXPECT_DOUBLE_EQ(m.dl_granule_fraction.at("j"), 0.75);
    EXPECT_DOUBLE_EQ(m.ft_granule_fraction.at("j"), 0.5);
    EXPECT_DOUBLE_EQ(m.load.max, 170.0);
    EXPECT_DOUBLE_EQ(m.load.min, 80.0);
    EXPECT_DOUBLE_EQ(m.load.ideal, 125.0);
    EXPECT_EQ(m.bytes_shuffled, 40);
    EXPECT_EQ(m.tasks_completed, 2);
    EXPECT_DOUBLE_EQ(m.dl_task_fraction, 0.5);
    const auto* v2 = m.stage("j", "v2");
    ASSERT_NE(v2, nullptr);
    EXPECT_DOUBLE_EQ(v2->first_launch, 2.0);
    EXPECT_DOUBLE_EQ(v2->last_finish, 6.0);
}

TEST(Metrics, IncompleteTrace) {
    TraceBuilder b;
    b.header(1);
    b.job(0.0, "j", false);
    try {
        (void)compute_metrics(b.events);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::incomplete_trace);
    }
}

TEST(Metrics, JsonRoundTrip) {
    const auto r = run(two_stage(), small());
    const auto back = MetricsReport::from_json(r.metrics.to_json());
    EXPECT_EQ(back.to_json().dump(), r.metrics.to_json().dump());
}

TEST(Checks, ClockCatchesTimeTravel) {
    TraceBuilder b;
    b.header(1);
    b.job(5.0, "j", false);
    b.finished(4.0, "j");
    EXPECT_FALSE(check_clock(b.events).ok);
}

TEST(Checks, ProtocolCatchesDoubleCoverage) {
    auto r = run(two_stage(), small());
    ASSERT_TRUE(check_protocol(r.trace).ok);
    // replay one v2 task: its granules are now covered twice
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        if (r.trace[i]["ev"] == "task_finished" && r.trace[i]["stage"] == "v2") {
            auto dup = r.trace[i];
            r.trace.insert(r.trace.begin() + static_cast<long>(i) + 1, dup);
            break;
        }
    }
    EXPECT_FALSE(check_protocol(r.trace).ok);
}

TEST(Simulator, EmptyWorkload) {
    const auto r = run(Workload{}, small());
    EXPECT_TRUE(r.trace.empty());
    EXPECT_DOUBLE_EQ(r.metrics.makespan, 0.0);
}

TEST(Simulator, TwoStageTraceOrder) {
    const auto r = run(two_stage(), small());
    auto pos = [&](const std::function<bool(const Json&)>& pred, bool last) {
        long found = -1;
        for (std::size_t i = 0; i < r.trace.size(); ++i) {
            if (pred(r.trace[i])) {
                found = static_cast<long>(i);
                if (!last) {
                    break;
                }
            }
        }
        return found;
    };
    auto is = [](const char* ev, const char* st) {
        return [=](const Json& e) { return e["ev"] == ev && (st == nullptr || e["stage"] == st); };
    };
    const auto last_spill = pos(is("data_spill", "v1"), true);
    const auto generated = pos(is("data_generated", "v1"), false);
    const auto first_ready = pos(is("data_ready", "v1"), false);
    const auto last_ready = pos(is("data_ready", "v1"), true);
    const auto ready_all = pos(is("data_ready_all", "v1"), false);
    const auto first_v2 = pos(is("task_launched", "v2"), false);
    const auto done = pos(is("job_finished", nullptr), false);
    EXPECT_LT(last_spill, generated);
    EXPECT_LT(generated, first_ready);
    EXPECT_LT(last_ready, ready_all);
    EXPECT_LT(ready_all, first_v2);
    EXPECT_EQ(done, static_cast<long>(r.trace.size()) - 1);
    int readies = 0;
    for (const auto& e : r.trace) {
        readies += e["ev"] == "data_ready" && e["stage"] == "v1" ? 1 : 0;
    }
    EXPECT_EQ(readies, 8);
}

TEST(Simulator, DeterministicAcrossRuns) {
    for (const auto& w : template_workloads()) {
        for (auto mode : {Mode::data_driven, Mode::compute_centric}) {
            auto c = small(mode);
            c.seed = 99;
            EXPECT_EQ(trace_to_jsonl(run(w, c).trace), trace_to_jsonl(run(w, c).trace));
        }
    }
}

TEST(Simulator, SeedChangesData) {
    auto a = small();
    auto b = small();
    b.seed = 2;
    EXPECT_NE(trace_to_jsonl(run(two_stage(), a).trace), trace_to_jsonl(run(two_stage(), b).trace));
}

TEST(Simulator, TraceJsonlRoundTrip) {
    const auto r = run(two_stage(), small());
    const auto text = trace_to_jsonl(r.trace);
    EXPECT_EQ(trace_to_jsonl(trace_from_jsonl(text)), text);
    EXPECT_EQ(compute_metrics(trace_from_jsonl(text)).to_json().dump(), r.metrics.to_json().dump());
}

TEST(Simulator, ProtocolAndClockHoldForEveryTemplate) {
    for (const auto& w : template_workloads()) {
        for (auto mode : {Mode::data_driven, Mode::compute_centric}) {
            const auto r = run(w, small(mode));
            const auto p = check_protocol(r.trace);
            EXPECT_TRUE(p.ok) << (p.violations.empty() ? "" : p.violations.front());
            EXPECT_TRUE(check_clock(r.trace).ok);
            EXPECT_EQ(r.metrics.jct.size(), w.jobs.size());
        }
    }
}

TEST(Simulator, IngestedBytesMatchDeclaredOutput) {
    for (const auto& w : template_workloads()) {
        for (auto mode : {Mode::data_driven, Mode::compute_centric}) {
            const auto got = spilled(run(w, small(mode)).trace);
            for (const auto& j : w.jobs) {
                for (const auto& s : j.stages) {
                    EXPECT_EQ(got.at({j.id, s.id}), s.output.total_bytes()) << j.id << "/" << s.id;
                }
            }
        }
    }
}

TEST(Simulator, ConsumersProcessReadyMinusIgnored) {
    auto workloads = template_workloads();
    workloads.push_back(status_workload());
    for (const auto& w : workloads) {
        const auto r = run(w, small());
        std::map<StageKey, Bytes> ready;
        for (const auto& e : r.trace) {
            if (e["ev"] == "data_ready") {
                ready[{e["job"].get<std::string>(), e["stage"].get<std::string>()}] += e["bytes"].get<Bytes>();
            }
        }
        for (const auto& j : w.jobs) {
            const auto g = build_job_graph(j);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (g.producers(i).empty()) {
                    continue;
                }
                Bytes expect = 0;
                for (auto p : g.producers(i)) {
                    expect += ready[{j.id, g.stage(p).id}];
                }
                Bytes ignored = 0;
                std::map<std::tuple<std::string, int, int>, Bytes> sizes;
                for (const auto& e : r.trace) {
                    if (e["ev"] == "data_ready" && e["job"] == j.id) {
                        sizes[{e["stage"].get<std::string>(), e["granule"].get<int>(), e["epoch"].get<int>()}] =
                            e["bytes"].get<Bytes>();
                    }
                    if (e["ev"] == "status_decision" && e["job"] == j.id && e["stage"] == g.stage(i).id &&
                        e["decision"] == "ignore") {
                        ignored += sizes[{e["producer"].get<std::string>(), e["granule"].get<int>(),
                                          e["epoch"].get<int>()}];
                    }
                }
                const auto* m = r.metrics.stage(j.id, g.stage(i).id);
                ASSERT_NE(m, nullptr);
                EXPECT_EQ(m->processed, expect - ignored) << j.id << "/" << g.stage(i).id;
            }
        }
    }
}

TEST(Simulator, ModesAgreeOnStageOutput) {
    for (const auto& w : template_workloads()) {
        EXPECT_EQ(spilled(run(w, small(Mode::data_driven)).trace),
                  spilled(run(w, small(Mode::compute_centric)).trace));
    }
}

TEST(Simulator, CompositionIsOrderFree) {
    // pipelined and batch versions of the same job fold to the same result
    const auto a = run(pipeline_workload(true), pipeline_config());
    const auto b = run(pipeline_workload(false), pipeline_config());
    EXPECT_EQ(a.metrics.stage("agg", "v2")->result, b.metrics.stage("agg", "v2")->result);
    EXPECT_EQ(a.metrics.stage("agg", "v2")->result.count, 40000);
}

TEST(ComputeCentric, SkewLandsOnOneTask) {
    const auto r = run(skew_workload(), skew_config(Mode::compute_centric));
    std::vector<Bytes> inputs;
    for (const auto& e : r.trace) {
        if (e["ev"] == "task_finished" && e["stage"] == "v2" && !e["killed"].get<bool>()) {
            inputs.push_back(e["input"].get<Bytes>());
        }
    }
    std::sort(inputs.begin(), inputs.end());
    EXPECT_EQ(inputs, (std::vector<Bytes>{kGB, 4 * kGB}));
}

TEST(ComputeCentric, StragglerGetsAClone) {
    const auto r = run(straggler_workload(), straggler_config(Mode::compute_centric));
    bool clone = false;
    for (const auto& e : r.trace) {
        clone = clone || (e["ev"] == "task_launched" && e.contains("clone_of"));
    }
    EXPECT_TRUE(clone);
    EXPECT_GT(r.metrics.stage("j1", "v2")->processed, kGB);
}

TEST(ComputeCentric, ConsumersWaitForLaunchFraction) {
    auto v1 = stage("v1", ComputeType::stateless, TriggerKind::default_batch, 1'000'000, 1000, 10);
    auto v2 = stage("v2", ComputeType::stateful_ca, TriggerKind::default_batch, 1'000, 10, 2);
    Workload w;
    w.jobs.push_back(chain("j", {v1, v2}));
    auto c = small(Mode::compute_centric);
    c.compute_units = 2;  // producers run in waves
    const auto r = run(w, c);
    std::vector<double> finishes;
    double first_v2 = -1.0;
    for (const auto& e : r.trace) {
        if (e["ev"] == "task_finished" && e["stage"] == "v1") {
            finishes.push_back(e["t"].get<double>());
        }
        if (first_v2 < 0 && e["ev"] == "task_launched" && e["stage"] == "v2") {
            first_v2 = e["t"].get<double>();
        }
    }
    ASSERT_EQ(finishes.size(), 10u);
    std::sort(finishes.begin(), finishes.end());
    EXPECT_GE(first_v2, finishes[8]);
}

TEST(DataDriven, StragglerIsSplitWithoutDuplicateWork) {
    const auto r = run(straggler_workload(), straggler_config(Mode::data_driven));
    bool split = false;
    for (const auto& e : r.trace) {
        split = split || e["ev"] == "task_split";
    }
    EXPECT_TRUE(split);
    EXPECT_EQ(r.metrics.stage("j1", "v2")->processed, kGB);
}

TEST(DataDriven, QuotaIsolationUnderContention) {
    const auto r = run(contention_workload(), contention_config());
    EXPECT_TRUE(check_quota_isolation(r.trace).ok);
}

TEST(Failures, JobsStillFinishAndProtocolHolds) {
    auto c = contention_config();
    c.failures.push_back({2, 3.0});
    for (auto mode : {Mode::data_driven, Mode::compute_centric}) {
        c.mode = mode;
        const auto w = contention_workload();
        const auto r = run(w, c);
        bool failed = false;
        for (const auto& e : r.trace) {
            failed = failed || e["ev"] == "machine_failed";
        }
        EXPECT_TRUE(failed);
        EXPECT_EQ(r.metrics.jct.size(), w.jobs.size());
        const auto p = check_protocol(r.trace);
        EXPECT_TRUE(p.ok) << (p.violations.empty() ? "" : p.violations.front());
        EXPECT_TRUE(check_clock(r.trace).ok);
    }
}

TEST(Config, ValidationAndJson) {
    auto expect_invalid = [](const std::function<void(SimConfig&)>& mutate) {
        SimConfig c;
        mutate(c);
        try {
            c.validate();
        } catch (const Error& e) {
            return e.code() == ErrorCode::config_invalid;
        }
        return false;
    };
    EXPECT_TRUE(expect_invalid([](SimConfig& c) { c.machines = 0; }));
    EXPECT_TRUE(expect_invalid([](SimConfig& c) { c.granules = 3; }));
    EXPECT_TRUE(expect_invalid([](SimConfig& c) { c.pressure_threshold = 1.5; }));
    EXPECT_TRUE(expect_invalid([](SimConfig& c) { c.failures.push_back({99, 1.0}); }));
    EXPECT_NO_THROW(SimConfig{}.validate());

    auto c = straggler_config(Mode::compute_centric);
    c.ilp_weights = ilp::Weights{1, 2, 3};
    const auto back = SimConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
    try {
        (void)SimConfig::from_json(Json::parse(R"({"machiens": 4})"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::config_invalid);
    }
}

TEST(Workloads, InvalidGraphIsRejected) {
    auto w = two_stage();
    w.jobs[0].edges.emplace_back("v2", "v1");
    try {
        (void)run(w, small());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::cycle_detected);
    }
}

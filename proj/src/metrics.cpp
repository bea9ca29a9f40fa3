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
#include "granary/metrics.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <tuple>

namespace granary {

namespace {

using StageKey = std::pair<std::string, std::string>;

struct JobShape {
    double arrival = 0.0;
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> producers;
    std::map<std::string, std::vector<std::string>> consumers;
};

std::map<std::string, JobShape> job_shapes(const std::vector<Json>& trace) {
    std::map<std::string, JobShape> out;
    for (const auto& e : trace) {
        if (e.at("ev") != "job_arrived") {
            continue;
        }
        auto& js = out[e.at("job").get<std::string>()];
        js.arrival = e.at("t").get<double>();
        for (const auto& s : e.at("stages")) {
            const auto id = s.at("id").get<std::string>();
            js.order.push_back(id);
            js.producers[id];
            js.consumers[id];
            for (const auto& p : s.at("producers")) {
                js.producers[id].push_back(p.get<std::string>());
                js.consumers[p.get<std::string>()].push_back(id);
            }
        }
    }
    return out;
}

std::set<std::string> ancestors(const JobShape& js, const std::string& stage) {
    std::set<std::string> out;
    std::vector<std::string> stack(js.producers.at(stage).begin(), js.producers.at(stage).end());
    while (!stack.empty()) {
        auto s = stack.back();
        stack.pop_back();
        if (out.insert(s).second) {
            for (const auto& p : js.producers.at(s)) {
                stack.push_back(p);
            }
        }
    }
    return out;
}

std::string str(const Json& e, const char* key) { return e.at(key).get<std::string>(); }

Aggregate aggregate_from(const Json& j) {
    Aggregate a;
    a.count = j.at("count").get<std::int64_t>();
    a.sum = j.at("sum").get<std::int64_t>();
    if (a.count > 0) {
        a.min = j.at("min").get<std::int64_t>();
        a.max = j.at("max").get<std::int64_t>();
    }
    return a;
}

Json aggregate_to(const Aggregate& a) {
    return {{"count", a.count}, {"sum", a.sum}, {"min", a.empty() ? 0 : a.min}, {"max", a.empty() ? 0 : a.max}};
}

}  // namespace

const StageMetrics* MetricsReport::stage(const std::string& job, const std::string& stage) const {
    for (const auto& s : stages) {
        if (s.job == job && s.stage == stage) {
            return &s;
        }
    }
    return nullptr;
}

double MetricsReport::mean_dl_granule_fraction() const {
    if (dl_granule_fraction.empty()) {
        return 0.0;
    }
    double t = 0.0;
    for (const auto& [j, v] : dl_granule_fraction) {
        t += v;
    }
    return t / static_cast<double>(dl_granule_fraction.size());
}

double MetricsReport::mean_ft_granule_fraction() const {
    if (ft_granule_fraction.empty()) {
        return 0.0;
    }
    double t = 0.0;
    for (const auto& [j, v] : ft_granule_fraction) {
        t += v;
    }
    return t / static_cast<double>(ft_granule_fraction.size());
}

Json MetricsReport::to_json() const {
    Json j;
    j["format_version"] = kFormatVersion;
    j["mode"] = mode;
    j["workload_hash"] = workload_hash;
    j["jct"] = jct;
    j["makespan"] = makespan;
    j["mean_jct"] = mean_jct;
    j["dl_task_fraction"] = dl_task_fraction;
    j["dl_granule_fraction"] = dl_granule_fraction;
    j["ft_granule_fraction"] = ft_granule_fraction;
    j["load"] = {{"min", load.min}, {"max", load.max}, {"avg", load.avg}, {"ideal", load.ideal}};
    Json l = Json::array();
    for (const auto& [t, n] : launched) {
        l.push_back(Json::array({t, n}));
    }
    j["launched"] = l;
    j["bytes_shuffled"] = bytes_shuffled;
    j["bytes_processed"] = bytes_processed;
    j["tasks_completed"] = tasks_completed;
    j["tasks_killed"] = tasks_killed;
    j["skipped_granules"] = skipped_granules;
    j["skipped_bytes"] = skipped_bytes;
    j["overflow_bytes"] = overflow_bytes;
    Json st = Json::array();
    for (const auto& s : stages) {
        st.push_back({{"job", s.job},
                      {"stage", s.stage},
                      {"first_launch", s.first_launch},
                      {"last_finish", s.last_finish},
                      {"inputs_done", s.inputs_done},
                      {"duration", s.duration()},
                      {"tasks", s.tasks},
                      {"processed", s.processed},
                      {"input", s.input},
                      {"result", aggregate_to(s.result)}});
    }
    j["stages"] = st;
    return j;
}

MetricsReport MetricsReport::from_json(const Json& j) {
    MetricsReport r;
    try {
        r.mode = j.at("mode").get<std::string>();
        r.workload_hash = j.at("workload_hash").get<std::string>();
        r.jct = j.at("jct").get<std::map<std::string, double>>();
        r.makespan = j.at("makespan").get<double>();
        r.mean_jct = j.at("mean_jct").get<double>();
        r.dl_task_fraction = j.at("dl_task_fraction").get<double>();
        r.dl_granule_fraction = j.at("dl_granule_fraction").get<std::map<std::string, double>>();
        r.ft_granule_fraction = j.at("ft_granule_fraction").get<std::map<std::string, double>>();
        const auto& l = j.at("load");
        r.load = {l.at("min").get<double>(), l.at("max").get<double>(), l.at("avg").get<double>(),
                  l.at("ideal").get<double>()};
        for (const auto& p : j.at("launched")) {
            r.launched.emplace_back(p.at(0).get<double>(), p.at(1).get<int>());
        }
        r.bytes_shuffled = j.at("bytes_shuffled").get<Bytes>();
        r.bytes_processed = j.at("bytes_processed").get<Bytes>();
        r.tasks_completed = j.at("tasks_completed").get<int>();
        r.tasks_killed = j.at("tasks_killed").get<int>();
        r.skipped_granules = j.at("skipped_granules").get<int>();
        r.skipped_bytes = j.at("skipped_bytes").get<Bytes>();
        r.overflow_bytes = j.at("overflow_bytes").get<Bytes>();
        for (const auto& s : j.at("stages")) {
            StageMetrics m;
            m.job = s.at("job").get<std::string>();
            m.stage = s.at("stage").get<std::string>();
            m.first_launch = s.at("first_launch").get<double>();
            m.last_finish = s.at("last_finish").get<double>();
            m.inputs_done = s.at("inputs_done").get<double>();
            m.tasks = s.at("tasks").get<int>();
            m.processed = s.at("processed").get<Bytes>();
            m.input = s.at("input").get<Bytes>();
            m.result = aggregate_from(s.at("result"));
            r.stages.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_spec, std::string("metrics: ") + e.what());
    }
    return r;
}

MetricsReport compute_metrics(const std::vector<Json>& trace) {
    MetricsReport r;
    if (trace.empty() || trace.front().at("ev") != "header") {
        throw Error(ErrorCode::incomplete_trace, "trace has no header");
    }
    const auto& header = trace.front();
    r.mode = header.at("mode").get<std::string>();
    r.workload_hash = header.at("workload_hash").get<std::string>();
    const int machines = header.at("machines").get<int>();

    const auto shapes = job_shapes(trace);
    std::map<StageKey, StageMetrics> stage_metrics;
    std::map<StageKey, double> ready_all_at;
    std::map<std::string, double> finished;
    // (job, stage) -> granule -> machines that ever held bytes
    std::map<StageKey, std::map<int, std::set<MachineId>>> where;
    std::map<std::tuple<std::string, std::string, int, int>, Bytes> ready_bytes;
    std::vector<Bytes> load(static_cast<std::size_t>(machines), 0);
    int dl_tasks = 0;
    int launched = 0;

    for (const auto& [job, js] : shapes) {
        for (const auto& s : js.order) {
            auto& m = stage_metrics[{job, s}];
            m.job = job;
            m.stage = s;
            m.first_launch = std::numeric_limits<double>::infinity();
            m.inputs_done = js.arrival;
        }
    }

    // Fault tolerance is judged when a granule first lands on a machine, against
    // the ancestor data resident there at that moment.
    std::map<StageKey, std::map<MachineId, Bytes>> resident;
    std::map<StageKey, std::set<int>> shares_ancestor;
    std::map<StageKey, std::set<std::string>> ancestor_sets;
    for (const auto& [job, js] : shapes) {
        for (const auto& s : js.order) {
            ancestor_sets[{job, s}] = ancestors(js, s);
        }
    }

    auto record_stored = [&](const std::string& job, const std::string& stage, const Json& stored) {
        for (const auto& c : stored) {
            const auto g = c.at(0).get<int>();
            const auto m = c.at(1).get<MachineId>();
            const auto b = c.at(2).get<Bytes>();
            if (b <= 0) {
                continue;
            }
            if (where[{job, stage}][g].insert(m).second) {
                for (const auto& a : ancestor_sets[{job, stage}]) {
                    auto rit = resident.find({job, a});
                    if (rit != resident.end() && rit->second[m] > 0) {
                        shares_ancestor[{job, stage}].insert(g);
                        break;
                    }
                }
            }
            resident[{job, stage}][m] += b;
            if (m >= 0 && m < machines) {
                load[static_cast<std::size_t>(m)] += b;
            }
        }
    };

    for (const auto& e : trace) {
        const auto ev = e.at("ev").get<std::string>();
        const double t = e.at("t").get<double>();
        if (ev == "task_launched") {
            ++launched;
            r.launched.emplace_back(t, launched);
            auto& m = stage_metrics[{e.at("job").get<std::string>(), e.at("stage").get<std::string>()}];
            m.first_launch = std::min(m.first_launch, t);
        } else if (ev == "task_finished") {
            auto& m = stage_metrics[{e.at("job").get<std::string>(), e.at("stage").get<std::string>()}];
            const auto input = e.at("input").get<Bytes>();
            const auto local = e.at("local").get<Bytes>();
            const auto processed = e.at("processed").get<Bytes>();
            m.processed += processed;
            r.bytes_processed += processed;
            r.bytes_shuffled += std::max<Bytes>(0, input - local);
            if (e.at("killed").get<bool>()) {
                ++r.tasks_killed;
                continue;
            }
            ++r.tasks_completed;
            ++m.tasks;
            m.input += input;
            m.last_finish = std::max(m.last_finish, t);
            m.result.merge(aggregate_from(e.at("aggregate")));
            dl_tasks += local >= input ? 1 : 0;
        } else if (ev == "data_spill" || ev == "writeback") {
            if (e.contains("removed")) {
                auto& res = resident[{e.at("job").get<std::string>(), e.at("stage").get<std::string>()}];
                for (const auto& c : e.at("removed")) {
                    res[c.at(0).get<MachineId>()] -= c.at(1).get<Bytes>();
                }
            }
            record_stored(e.at("job").get<std::string>(), e.at("stage").get<std::string>(), e.at("stored"));
            r.overflow_bytes += e.value("overflow", Bytes{0});
        } else if (ev == "data_ready") {
            ready_bytes[{e.at("job").get<std::string>(), e.at("stage").get<std::string>(), e.at("granule").get<int>(),
                         e.at("epoch").get<int>()}] = e.at("bytes").get<Bytes>();
        } else if (ev == "status_decision") {
            if (e.at("decision") == "ignore") {
                ++r.skipped_granules;
                auto it = ready_bytes.find({e.at("job").get<std::string>(), e.at("producer").get<std::string>(),
                                            e.at("granule").get<int>(), e.at("epoch").get<int>()});
                r.skipped_bytes += it == ready_bytes.end() ? 0 : it->second;
            }
        } else if (ev == "data_freed") {
            auto& res = resident[{e.at("job").get<std::string>(), e.at("stage").get<std::string>()}];
            for (const auto& c : e.at("freed")) {
                res[c.at(0).get<MachineId>()] -= c.at(1).get<Bytes>();
            }
        } else if (ev == "data_ready_all") {
            ready_all_at[{e.at("job").get<std::string>(), e.at("stage").get<std::string>()}] = t;
        } else if (ev == "job_finished") {
            finished[e.at("job").get<std::string>()] = t;
        }
    }

    double first_arrival = std::numeric_limits<double>::infinity();
    double last_finish = 0.0;
    double jct_total = 0.0;
    for (const auto& [job, js] : shapes) {
        auto it = finished.find(job);
        if (it == finished.end()) {
            throw Error(ErrorCode::incomplete_trace, "job " + job + " has no job_finished event");
        }
        r.jct[job] = it->second - js.arrival;
        jct_total += r.jct[job];
        first_arrival = std::min(first_arrival, js.arrival);
        last_finish = std::max(last_finish, it->second);

        for (const auto& s : js.order) {
            auto& m = stage_metrics[{job, s}];
            for (const auto& p : js.producers.at(s)) {
                auto rit = ready_all_at.find({job, p});
                if (rit != ready_all_at.end()) {
                    m.inputs_done = std::max(m.inputs_done, rit->second);
                }
            }
            if (m.first_launch == std::numeric_limits<double>::infinity()) {
                m.first_launch = m.inputs_done;
                m.last_finish = std::max(m.last_finish, m.inputs_done);
            }
        }

        int granules = 0;
        int dl = 0;
        int ft_total = 0;
        int ft = 0;
        for (const auto& s : js.order) {
            auto wit = where.find({job, s});
            if (wit == where.end()) {
                continue;
            }
            const bool has_ancestors = !ancestor_sets[{job, s}].empty();
            const auto& shared = shares_ancestor[{job, s}];
            for (const auto& [g, ms] : wit->second) {
                ++granules;
                dl += ms.size() == 1 ? 1 : 0;
                if (!has_ancestors) {
                    continue;
                }
                ++ft_total;
                ft += shared.contains(g) ? 0 : 1;
            }
        }
        r.dl_granule_fraction[job] = granules == 0 ? 1.0 : static_cast<double>(dl) / granules;
        r.ft_granule_fraction[job] = ft_total == 0 ? 1.0 : static_cast<double>(ft) / ft_total;
    }
    if (!shapes.empty()) {
        r.makespan = last_finish - first_arrival;
        r.mean_jct = jct_total / static_cast<double>(shapes.size());
    }
    r.dl_task_fraction = r.tasks_completed == 0 ? 0.0 : static_cast<double>(dl_tasks) / r.tasks_completed;

    if (machines > 0) {
        Bytes total = 0;
        Bytes lo = std::numeric_limits<Bytes>::max();
        Bytes hi = 0;
        for (auto b : load) {
            total += b;
            lo = std::min(lo, b);
            hi = std::max(hi, b);
        }
        r.load.min = static_cast<double>(lo);
        r.load.max = static_cast<double>(hi);
        r.load.avg = static_cast<double>(total) / machines;
        r.load.ideal = r.load.avg;
    }
    for (const auto& [job, js] : shapes) {
        for (const auto& s : js.order) {
            r.stages.push_back(stage_metrics.at({job, s}));
        }
    }
    return r;
}

CheckResult check_protocol(const std::vector<Json>& trace) {
    CheckResult out;
    auto fail = [&](std::string what) {
        out.ok = false;
        out.violations.push_back(std::move(what));
    };
    const auto shapes = job_shapes(trace);
    const bool dd = !trace.empty() && trace.front().value("mode", std::string{}) == "data_driven";

    struct Seen {
        int generated = 0;
        int ready_all = 0;
        bool ready_after_all = false;
        bool generated_after_all = false;
    };
    std::map<StageKey, Seen> seen;
    // (job, producer, granule, epoch) -> consumers that still need it
    using ReadyKey = std::tuple<std::string, std::string, int, int>;
    std::map<ReadyKey, Bytes> ready;
    std::set<std::tuple<std::string, std::string, std::string, int, int>> ignored;  // consumer first
    std::map<std::tuple<std::string, std::string, std::string, int, int>, int> covered;

    for (const auto& e : trace) {
        const auto ev = e.at("ev").get<std::string>();
        if (ev == "data_generated") {
            auto& s = seen[{str(e, "job"), str(e, "stage")}];
            ++s.generated;
            s.generated_after_all = s.generated_after_all || s.ready_all > 0;
        } else if (ev == "data_ready_all") {
            ++seen[{str(e, "job"), str(e, "stage")}].ready_all;
        } else if (ev == "data_ready") {
            auto& s = seen[{str(e, "job"), str(e, "stage")}];
            s.ready_after_all = s.ready_after_all || s.ready_all > 0;
            ready[{str(e, "job"), str(e, "stage"), e.at("granule").get<int>(), e.at("epoch").get<int>()}] =
                e.at("bytes").get<Bytes>();
        } else if (ev == "status_decision") {
            if (e.at("decision") == "ignore") {
                ignored.insert({str(e, "job"), str(e, "stage"), str(e, "producer"), e.at("granule").get<int>(),
                                e.at("epoch").get<int>()});
            }
        } else if (ev == "task_finished") {
            if (e.at("killed").get<bool>()) {
                continue;
            }
            for (const auto& g : e.at("granules")) {
                ++covered[{str(e, "job"), str(e, "stage"), g.at(0).get<std::string>(), g.at(1).get<int>(),
                           g.at(2).get<int>()}];
            }
        }
    }

    for (const auto& [job, js] : shapes) {
        for (const auto& stage : js.order) {
            const auto& s = seen[{job, stage}];
            const std::string where = job + "/" + stage;
            if (s.ready_all != 1) {
                fail(where + ": " + std::to_string(s.ready_all) + " data_ready_all events");
            }
            if (s.generated != 1) {
                fail(where + ": " + std::to_string(s.generated) + " data_generated events");
            }
            if (s.generated_after_all) {
                fail(where + ": data_generated after data_ready_all");
            }
            if (s.ready_after_all) {
                fail(where + ": data_ready after data_ready_all");
            }
        }
    }
    if (!dd) {
        return out;
    }
    for (const auto& [key, bytes] : ready) {
        const auto& [job, producer, granule, epoch] = key;
        if (bytes <= 0) {
            continue;
        }
        const auto& js = shapes.at(job);
        for (const auto& consumer : js.consumers.at(producer)) {
            if (ignored.contains({job, consumer, producer, granule, epoch})) {
                continue;
            }
            auto it = covered.find({job, consumer, producer, granule, epoch});
            const int n = it == covered.end() ? 0 : it->second;
            if (n != 1) {
                fail(job + "/" + consumer + ": granule " + producer + "#" + std::to_string(granule) + "@" +
                     std::to_string(epoch) + " covered by " + std::to_string(n) + " completed tasks");
            }
        }
    }
    return out;
}

CheckResult check_quota_isolation(const std::vector<Json>& trace, Bytes* worst_excess) {
    CheckResult out;
    std::map<std::string, Bytes> quota;
    std::map<std::string, Bytes> largest_spill;
    std::map<std::pair<std::string, MachineId>, Bytes> stored;
    Bytes worst = std::numeric_limits<Bytes>::min();
    bool failed_machine = false;

    auto check = [&](const std::string& job, MachineId m, double t) {
        auto q = quota.find(job);
        if (q == quota.end()) {
            return;
        }
        const Bytes limit = q->second + largest_spill[job];
        const Bytes have = stored[{job, m}];
        worst = std::max(worst, have - limit);
        if (have > limit) {
            out.ok = false;
            out.violations.push_back(job + " on machine " + std::to_string(m) + " at t=" + std::to_string(t) +
                                     ": " + std::to_string(have) + " > " + std::to_string(limit));
        }
    };

    for (const auto& e : trace) {
        const auto ev = e.at("ev").get<std::string>();
        const double t = e.at("t").get<double>();
        if (ev == "header" && e.at("mode") != "data_driven") {
            break;
        }
        if (ev == "machine_failed") {
            // Evacuation targets are not traced; stop replaying.
            failed_machine = true;
        }
        if (failed_machine) {
            continue;
        }
        if (ev == "quota") {
            for (const auto& [job, q] : e.at("per_job").items()) {
                quota[job] = q.get<Bytes>();
            }
        } else if (ev == "data_spill" || ev == "writeback") {
            const auto job = e.at("job").get<std::string>();
            if (ev == "data_spill") {
                largest_spill[job] = std::max(largest_spill[job], e.at("bytes").get<Bytes>());
            }
            if (e.contains("removed")) {
                for (const auto& c : e.at("removed")) {
                    stored[{job, c.at(0).get<MachineId>()}] -= c.at(1).get<Bytes>();
                }
            }
            std::set<MachineId> touched;
            for (const auto& c : e.at("stored")) {
                const auto m = c.at(1).get<MachineId>();
                stored[{job, m}] += c.at(2).get<Bytes>();
                touched.insert(m);
            }
            for (auto m : touched) {
                check(job, m, t);
            }
        } else if (ev == "data_freed") {
            const auto job = e.at("job").get<std::string>();
            for (const auto& c : e.at("freed")) {
                stored[{job, c.at(0).get<MachineId>()}] -= c.at(1).get<Bytes>();
            }
        } else if (ev == "job_finished") {
            quota.erase(e.at("job").get<std::string>());
        }
    }
    if (worst_excess) {
        *worst_excess = worst == std::numeric_limits<Bytes>::min() ? 0 : worst;
    }
    return out;
}

CheckResult check_clock(const std::vector<Json>& trace) {
    CheckResult out;
    double last_t = -std::numeric_limits<double>::infinity();
    std::int64_t last_seq = -1;
    for (const auto& e : trace) {
        const double t = e.at("t").get<double>();
        const auto seq = e.at("seq").get<std::int64_t>();
        if (t < last_t) {
            out.ok = false;
            out.violations.push_back("time goes backwards at seq " + std::to_string(seq));
        }
        if (seq <= last_seq) {
            out.ok = false;
            out.violations.push_back("seq not increasing at " + std::to_string(seq));
        }
        last_t = t;
        last_seq = seq;
    }
    return out;
}

}  // namespace granary

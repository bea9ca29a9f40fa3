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
#include "granary/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include "granary/cluster.hpp"
#include "granary/datastore.hpp"
#include "granary/execution.hpp"
#include "granary/triggers.hpp"

namespace granary {

const char* to_string(Mode m) noexcept { return m == Mode::data_driven ? "data_driven" : "compute_centric"; }

Mode mode_from_string(const std::string& s) {
    if (s == "data_driven") {
        return Mode::data_driven;
    }
    if (s == "compute_centric") {
        return Mode::compute_centric;
    }
    throw Error(ErrorCode::config_invalid, "unknown mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void SimConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::config_invalid, what); };
    auto unit_interval = [&](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0)) {
            fail(std::string(name) + " must be in (0, 1]");
        }
    };
    unit_interval(pressure_threshold, "pressure_threshold");
    unit_interval(cc_launch_fraction, "cc_launch_fraction");
    unit_interval(straggler_theta, "straggler_theta");
    if (machines < 1) {
        fail("machines must be >= 1");
    }
    if (granules == 0 || key_space % granules != 0) {
        fail("granules must divide key_space");
    }
    if (!(storage_capacity_gb > 0.0) || !(compute_units > 0.0)) {
        fail("machine capacities must be positive");
    }
    if (!(spread_factor > 0.0) || retry_limit < 1 || !(straggler_period_s > 0.0)) {
        fail("spread_factor, retry_limit and straggler_period_s must be positive");
    }
    if (!(seconds_per_gb_unit > 0.0) || !(bandwidth_gb_s > 0.0)) {
        fail("processing and network rates must be positive");
    }
    if (!(max_task_units > 0.0) || min_task_units < 0.0 || !(cc_task_units > 0.0) || spills_per_task < 1) {
        fail("task sizing parameters must be positive");
    }
    if (max_input_per_task_gb && !(*max_input_per_task_gb > 0.0)) {
        fail("max_input_per_task_gb must be positive");
    }
    if (cc_streaming_interval_s < 0.0 || !(growth_half_life_s > 0.0) || min_stage_machines < 1) {
        fail("invalid interval or half-life");
    }
    for (const auto& s : stragglers) {
        if (!(s.factor >= 1.0) || s.onset_s < 0.0 || s.task_index < 0) {
            fail("straggler entries need factor >= 1, onset_s >= 0, task_index >= 0");
        }
    }
    for (const auto& f : failures) {
        if (f.machine < 0 || f.machine >= machines || f.time_s < 0.0) {
            fail("failure entries must name an existing machine and a time >= 0");
        }
    }
}

Json SimConfig::to_json() const {
    Json j;
    j["mode"] = granary::to_string(mode);
    j["seed"] = seed;
    j["machines"] = machines;
    j["storage_capacity_gb"] = storage_capacity_gb;
    j["compute_units"] = compute_units;
    j["granules"] = granules;
    j["key_space"] = key_space;
    j["pressure_threshold"] = pressure_threshold;
    j["spread_factor"] = spread_factor;
    j["min_stage_machines"] = min_stage_machines;
    j["growth_half_life_s"] = growth_half_life_s;
    j["retry_limit"] = retry_limit;
    j["straggler_theta"] = straggler_theta;
    j["straggler_period_s"] = straggler_period_s;
    j["max_input_per_task_gb"] = max_input_per_task_gb ? Json(*max_input_per_task_gb) : Json(nullptr);
    j["seconds_per_gb_unit"] = seconds_per_gb_unit;
    j["bandwidth_gb_s"] = bandwidth_gb_s;
    j["max_task_units"] = max_task_units;
    j["min_task_units"] = min_task_units;
    j["spills_per_task"] = spills_per_task;
    j["cc_launch_fraction"] = cc_launch_fraction;
    j["cc_task_units"] = cc_task_units;
    j["cc_streaming_interval_s"] = cc_streaming_interval_s;
    j["cc_speculation"] = cc_speculation;
    j["ilp_weights"] = ilp_weights ? Json::array({ilp_weights->w1, ilp_weights->w2, ilp_weights->w3}) : Json(nullptr);
    Json st = Json::array();
    for (const auto& s : stragglers) {
        st.push_back({{"job", s.job},
                      {"stage", s.stage},
                      {"task_index", s.task_index},
                      {"onset_s", s.onset_s},
                      {"factor", s.factor}});
    }
    j["stragglers"] = st;
    Json fl = Json::array();
    for (const auto& f : failures) {
        fl.push_back({{"machine", f.machine}, {"time_s", f.time_s}});
    }
    j["failures"] = fl;
    j["max_sim_time_s"] = max_sim_time_s;
    return j;
}

SimConfig SimConfig::from_json(const Json& j) {
    SimConfig c;
    if (!j.is_object()) {
        throw Error(ErrorCode::config_invalid, "config must be a JSON object");
    }
    const auto known = c.to_json();
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) {
            throw Error(ErrorCode::config_invalid, "unknown config key '" + k + "'");
        }
    }
    try {
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key) && !j.at(key).is_null()) {
                field = j.at(key).get<std::decay_t<decltype(field)>>();
            }
        };
        if (j.contains("mode")) {
            c.mode = mode_from_string(j.at("mode").get<std::string>());
        }
        take("seed", c.seed);
        take("machines", c.machines);
        take("storage_capacity_gb", c.storage_capacity_gb);
        take("compute_units", c.compute_units);
        take("granules", c.granules);
        take("key_space", c.key_space);
        take("pressure_threshold", c.pressure_threshold);
        take("spread_factor", c.spread_factor);
        take("min_stage_machines", c.min_stage_machines);
        take("growth_half_life_s", c.growth_half_life_s);
        take("retry_limit", c.retry_limit);
        take("straggler_theta", c.straggler_theta);
        take("straggler_period_s", c.straggler_period_s);
        if (j.contains("max_input_per_task_gb") && !j.at("max_input_per_task_gb").is_null()) {
            c.max_input_per_task_gb = j.at("max_input_per_task_gb").get<double>();
        }
        take("seconds_per_gb_unit", c.seconds_per_gb_unit);
        take("bandwidth_gb_s", c.bandwidth_gb_s);
        take("max_task_units", c.max_task_units);
        take("min_task_units", c.min_task_units);
        take("spills_per_task", c.spills_per_task);
        take("cc_launch_fraction", c.cc_launch_fraction);
        take("cc_task_units", c.cc_task_units);
        take("cc_streaming_interval_s", c.cc_streaming_interval_s);
        take("cc_speculation", c.cc_speculation);
        if (j.contains("ilp_weights") && !j.at("ilp_weights").is_null()) {
            const auto w = j.at("ilp_weights").get<std::vector<double>>();
            if (w.size() != 3) {
                throw Error(ErrorCode::config_invalid, "ilp_weights needs three values");
            }
            c.ilp_weights = ilp::Weights{w[0], w[1], w[2]};
        }
        if (j.contains("stragglers")) {
            for (const auto& s : j.at("stragglers")) {
                c.stragglers.push_back({s.at("job").get<std::string>(), s.at("stage").get<std::string>(),
                                        s.value("task_index", 0), s.value("onset_s", 0.0), s.value("factor", 1.0)});
            }
        }
        if (j.contains("failures")) {
            for (const auto& f : j.at("failures")) {
                c.failures.push_back({f.at("machine").get<int>(), f.at("time_s").get<double>()});
            }
        }
        take("max_sim_time_s", c.max_sim_time_s);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config_invalid, e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

namespace {

enum Priority : int { kFailure = 0, kTaskEvent = 1, kArrival = 2, kOnset = 3, kBatch = 4, kCheck = 5, kTick = 9 };

struct Queued {
    double t;
    int prio;
    std::uint64_t seq;
    std::function<void()> fn;
};

struct LaterFirst {
    bool operator()(const Queued& a, const Queued& b) const {
        return std::tie(a.t, a.prio, a.seq) > std::tie(b.t, b.prio, b.seq);
    }
};

struct TaskInput {
    EntryKey key;
    Bytes bytes = 0;
    Bytes local = 0;
    std::int64_t records = 0;
    Aggregate content;
    bool final = true;
    bool writeback = false;
    std::vector<std::pair<MachineId, Bytes>> locations;
    std::string logic_id;
    StatsSnapshot stats;
};

struct Task {
    int id = 0;
    int job = 0;
    int stage = 0;
    MachineId machine = 0;
    double units = 0.0;
    std::vector<TaskInput> inputs;
    Bytes input = 0;
    Bytes local = 0;
    double launch = 0.0;
    double compute_start = 0.0;
    Bytes processed = 0;
    double updated = 0.0;
    double slow = 1.0;
    int gen = 0;
    bool running = true;
    int logical = 0;
    int partner = -1;  ///< clone or original
    bool is_clone = false;
    bool root = false;
    int index = 0;  ///< root partition or baseline bucket
    std::string logic_id = "default";
    bool troublesome = false;
    Bytes check_bytes = 0;
    double check_time = 0.0;
    int next_milestone = 1;
    bool waiting = false;  ///< baseline consumer holding its slot until inputs are complete
    Aggregate content;  ///< baseline input fold
    std::map<int, std::pair<std::size_t, std::size_t>> ranges;  ///< baseline: producer -> stored record range
};

struct Stored {
    std::uint64_t key;
    Bytes bytes;
    std::int64_t value;
    MachineId machine;
};

struct StageRun {
    const StageSpec* spec = nullptr;
    int idx = 0;
    std::vector<Record> output;
    std::size_t emitted = 0;
    Bytes expected_input = 0;
    bool emit_at_end = false;
    std::map<int, Bytes> logical_progress;
    std::unique_ptr<TriggerEngine> engine;
    ReadyPool pool;
    std::set<int> running;
    int launched = 0;
    int completed = 0;
    int total_tasks = 0;  ///< root partitions or baseline buckets (per batch)
    std::deque<int> pending;  ///< root partitions or baseline buckets not yet launched
    bool done = false;
    bool freed = false;
    MachineId last_machine = 0;
    // baseline
    std::vector<Stored> stored;
    bool microbatch = false;
    std::map<int, std::size_t> cursor;
    bool launch_allowed = false;
    int outstanding = 0;  ///< baseline tasks created and not yet finished
    std::deque<Task> relaunch;  ///< baseline tasks lost to a failure
};

struct JobRun {
    const JobSpec* spec = nullptr;
    JobGraph graph;
    int idx = 0;
    bool arrived = false;
    bool finished = false;
    double paused_until = 0.0;
    std::vector<StageRun> stages;
};

class Simulation {
public:
    Simulation(const Workload& w, const SimConfig& c)
        : workload_(w),
          cfg_(c),
          store_(DataStoreConfig{c.granules, c.key_space, c.pressure_threshold, c.spread_factor, c.min_stage_machines,
                                 c.growth_half_life_s}) {
        cfg_.validate();
        cluster_ = ClusterState::uniform(cfg_.machines, static_cast<Bytes>(cfg_.storage_capacity_gb * kGB),
                                         cfg_.compute_units);
        for (std::size_t i = 0; i < w.jobs.size(); ++i) {
            JobRun jr;
            jr.spec = &w.jobs[i];
            jr.graph = build_job_graph(w.jobs[i]);
            jr.idx = static_cast<int>(i);
            jobs_.push_back(std::move(jr));
        }
    }

    SimResult run() {
        Json header;
        header["seq"] = seq_++;
        header["t"] = 0.0;
        header["ev"] = "header";
        header["format_version"] = kFormatVersion;
        header["mode"] = to_string(cfg_.mode);
        header["workload_hash"] = workload_hash(workload_);
        header["seed"] = cfg_.seed;
        header["machines"] = cfg_.machines;
        header["granules"] = cfg_.granules;
        trace_.push_back(std::move(header));

        for (auto& jr : jobs_) {
            const int j = jr.idx;
            push(jr.graph.arrival_time(), kArrival, [this, j] { on_arrival(j); });
        }
        for (const auto& f : cfg_.failures) {
            const auto m = f.machine;
            push(f.time_s, kFailure, [this, m] { on_failure(m); });
        }
        while (!queue_.empty()) {
            auto ev = queue_.top();
            queue_.pop();
            now_ = std::max(now_, ev.t);
            if (now_ > cfg_.max_sim_time_s) {
                throw Error(ErrorCode::incomplete_trace, "simulation exceeded max_sim_time_s");
            }
            ev.fn();
        }
        for (const auto& jr : jobs_) {
            if (!jr.finished) {
                throw Error(ErrorCode::incomplete_trace, "job " + jr.spec->id + " never finished (stuck schedule)");
            }
        }
        SimResult r;
        r.metrics = compute_metrics(trace_);
        r.trace = std::move(trace_);
        return r;
    }

private:
    bool dd() const { return cfg_.mode == Mode::data_driven; }

    void push(double t, int prio, std::function<void()> fn) { queue_.push({t, prio, qseq_++, std::move(fn)}); }

    Json& emit(const char* kind) {
        Json e;
        e["seq"] = seq_++;
        e["t"] = now_;
        e["ev"] = kind;
        trace_.push_back(std::move(e));
        return trace_.back();
    }

    const std::string& job_name(int j) const { return jobs_[static_cast<std::size_t>(j)].spec->id; }
    const std::string& stage_name(int j, int s) const {
        return jobs_[static_cast<std::size_t>(j)].graph.stage(static_cast<std::size_t>(s)).id;
    }
    JobRun& job(int j) { return jobs_[static_cast<std::size_t>(j)]; }
    StageRun& stage(int j, int s) { return job(j).stages[static_cast<std::size_t>(s)]; }

    void schedule_tick() {
        if (tick_at_ && *tick_at_ == now_) {
            return;
        }
        tick_at_ = now_;
        push(now_, kTick, [this] { tick(); });
    }

    // ---- resources -------------------------------------------------------

    double available(int j, MachineId m) const {
        const auto& mach = cluster_.at(m);
        if (mach.failed || active_.empty()) {
            return 0.0;
        }
        const double share = mach.compute_capacity / static_cast<double>(active_.size());
        auto it = mach.per_job_units.find(j);
        const double used = it == mach.per_job_units.end() ? 0.0 : it->second;
        const double a = std::min(share - used, mach.compute_capacity - mach.used_units);
        return a < cfg_.min_task_units - 1e-12 ? 0.0 : a;
    }

    ResourceView view(int j) const {
        ResourceView v;
        for (const auto& m : cluster_.machines) {
            v.available.push_back(available(j, m.id));
            v.capacity.push_back(m.compute_capacity);
        }
        return v;
    }

    std::optional<MachineId> most_available(int j, std::optional<MachineId> exclude = std::nullopt) const {
        std::optional<MachineId> best;
        double best_a = 0.0;
        for (const auto& m : cluster_.machines) {
            if (exclude && m.id == *exclude) {
                continue;
            }
            const double a = available(j, m.id);
            if (a > best_a + 1e-12) {
                best = m.id;
                best_a = a;
            }
        }
        return best;
    }

    void reserve(Task& t) {
        auto& m = cluster_.at(t.machine);
        m.used_units += t.units;
        m.per_job_units[t.job] += t.units;
    }

    void release(Task& t) {
        auto& m = cluster_.at(t.machine);
        m.used_units = std::max(0.0, m.used_units - t.units);
        auto& u = m.per_job_units[t.job];
        u = std::max(0.0, u - t.units);
    }

    void reassign_quota() {
        if (active_.empty()) {
            return;
        }
        std::vector<int> ids(active_.begin(), active_.end());
        quota_ = assign_quota(ids, cluster_, cfg_.pressure_threshold);
        auto& e = emit("quota");
        Json q = Json::object();
        for (const auto& [j, b] : quota_.per_job) {
            q[job_name(j)] = b;
        }
        e["per_job"] = q;
    }

    // ---- arrival ---------------------------------------------------------

    void on_arrival(int j) {
        auto& jr = job(j);
        jr.arrived = true;
        active_.insert(j);
        const auto& g = jr.graph;
        auto& e = emit("job_arrived");
        e["job"] = jr.spec->id;
        Json stages = Json::array();
        for (std::size_t s = 0; s < g.size(); ++s) {
            Json producers = Json::array();
            for (auto p : g.producers(s)) {
                producers.push_back(g.stage(p).id);
            }
            stages.push_back({{"id", g.stage(s).id}, {"producers", producers}, {"partitions", g.stage(s).partitions}});
        }
        e["stages"] = stages;

        jr.stages.resize(g.size());
        for (std::size_t s = 0; s < g.size(); ++s) {
            auto& st = jr.stages[s];
            st.spec = &g.stage(s);
            st.idx = static_cast<int>(s);
            st.output = generate_records(st.spec->output, mix_seed(cfg_.seed, static_cast<std::uint64_t>(j) + 1, s + 1),
                                         cfg_.key_space);
            st.pool.job = j;
            st.pool.stage = static_cast<int>(s);
            if (g.producers(s).empty()) {
                st.expected_input = st.spec->input_bytes > 0 ? st.spec->input_bytes : st.spec->output.total_bytes();
                st.total_tasks = std::max(1, st.spec->partitions);
                for (int p = 0; p < st.total_tasks; ++p) {
                    st.pending.push_back(p);
                }
            } else {
                for (auto p : g.producers(s)) {
                    st.expected_input += g.stage(p).output.total_bytes();
                    st.emit_at_end = st.emit_at_end || g.stage(p).trigger.kind == TriggerKind::pipelining;
                    st.cursor[static_cast<int>(p)] = 0;
                }
                if (!dd()) {
                    st.total_tasks = std::max(1, st.spec->partitions);
                    bool streaming_inputs = cfg_.cc_streaming_interval_s > 0.0;
                    for (auto p : g.producers(s)) {
                        streaming_inputs = streaming_inputs && g.stage(p).trigger.kind != TriggerKind::default_batch;
                    }
                    st.microbatch = streaming_inputs;
                    if (!st.microbatch) {
                        for (int b = 0; b < st.total_tasks; ++b) {
                            st.pending.push_back(b);
                        }
                    }
                }
            }
            if (dd()) {
                StageInfo info;
                info.job = j;
                info.stage = static_cast<int>(s);
                info.job_name = jr.spec->id;
                info.stage_name = st.spec->id;
                for (const auto& level : g.ancestor_levels(s)) {
                    info.ancestor_levels.emplace_back(level.begin(), level.end());
                }
                for (auto sib : g.siblings(s)) {
                    info.siblings.push_back(static_cast<int>(sib));
                }
                info.expected_bytes = st.spec->output.total_bytes();
                info.monitors = st.spec->monitors;
                store_.register_stage(std::move(info));
                std::optional<ComputeType> consumer;
                if (g.consumers(s).size() == 1) {
                    consumer = g.stage(g.consumers(s).front()).compute_type;
                }
                st.engine = std::make_unique<TriggerEngine>(j, static_cast<int>(s), st.spec->trigger, consumer,
                                                            cfg_.granules);
            }
        }
        reassign_quota();
        if (!dd()) {
            for (auto& st : jr.stages) {
                if (st.microbatch) {
                    const int s = st.idx;
                    push(now_ + cfg_.cc_streaming_interval_s, kBatch, [this, j, s] { on_microbatch(j, s); });
                }
            }
        }
        ensure_checks();
        schedule_tick();
    }

    // ---- ticks -----------------------------------------------------------

    void tick() {
        tick_at_.reset();
        for (int j : std::vector<int>(active_.begin(), active_.end())) {
            auto& jr = job(j);
            if (now_ < jr.paused_until) {
                continue;
            }
            for (auto s : jr.graph.topo_order()) {
                auto& st = jr.stages[s];
                if (st.done) {
                    continue;
                }
                if (jr.graph.producers(s).empty()) {
                    launch_roots(j, static_cast<int>(s));
                } else if (dd()) {
                    if (!st.pool.empty()) {
                        schedule_pool(j, static_cast<int>(s));
                    }
                } else {
                    launch_baseline(j, static_cast<int>(s));
                }
            }
            for (auto s : jr.graph.topo_order()) {
                check_stage_complete(j, static_cast<int>(s));
            }
        }
    }

    void launch_roots(int j, int s) {
        auto& st = stage(j, s);
        while (!st.pending.empty()) {
            auto m = most_available(j);
            if (!m) {
                return;
            }
            const double cap = dd() ? cfg_.max_task_units : cfg_.cc_task_units;
            Task t;
            t.job = j;
            t.stage = s;
            t.machine = *m;
            t.units = std::min(cap, available(j, *m));
            t.root = true;
            t.index = st.pending.front();
            st.pending.pop_front();
            const Bytes share = st.expected_input / st.total_tasks;
            t.input = t.index + 1 == st.total_tasks ? st.expected_input - share * (st.total_tasks - 1) : share;
            t.local = t.input;
            start_task(std::move(t), 0);
        }
    }

    // ---- task lifecycle ---------------------------------------------------

    double rate(const Task& t) const {
        return t.units * static_cast<double>(kGB) / cfg_.seconds_per_gb_unit / t.slow;
    }

    int start_task(Task t, Bytes remote) {
        t.id = next_task_++;
        if (!t.is_clone) {
            t.logical = t.id;
        }
        t.launch = now_;
        t.updated = now_;
        t.compute_start = now_ + to_gb(remote) / cfg_.bandwidth_gb_s;
        t.check_time = t.compute_start;
        reserve(t);
        auto& st = stage(t.job, t.stage);
        st.running.insert(t.id);
        st.last_machine = t.machine;
        const int ordinal = t.is_clone ? -1 : st.launched++;

        auto& e = emit("task_launched");
        e["job"] = job_name(t.job);
        e["stage"] = stage_name(t.job, t.stage);
        e["task"] = t.id;
        e["machine"] = t.machine;
        e["units"] = t.units;
        e["input"] = t.input;
        e["local"] = t.local;
        e["granules"] = granule_list(t);
        e["logic_id"] = t.logic_id;
        e["troublesome"] = t.troublesome;
        e["waiting"] = t.waiting;
        if (t.is_clone) {
            e["clone_of"] = t.partner;
        }
        ++launched_total_;

        const int id = t.id;
        for (const auto& sc : cfg_.stragglers) {
            if (ordinal >= 0 && sc.job == job_name(t.job) && sc.stage == stage_name(t.job, t.stage) &&
                sc.task_index == ordinal) {
                const double factor = sc.factor;
                push(now_ + sc.onset_s, kOnset, [this, id, factor] { on_onset(id, factor); });
            }
        }
        tasks_.emplace(id, std::move(t));
        schedule_next(tasks_.at(id));
        ensure_checks();
        return id;
    }

    Json granule_list(const Task& t) const {
        Json g = Json::array();
        for (const auto& in : t.inputs) {
            g.push_back(Json::array({stage_name(t.job, in.key.granule.stage), in.key.granule.index, in.key.epoch}));
        }
        return g;
    }

    void advance(Task& t) {
        const double from = std::max(t.updated, t.compute_start);
        if (!t.waiting && now_ > from) {
            const auto delta = static_cast<Bytes>(std::floor(rate(t) * (now_ - from)));
            t.processed = std::min(t.input, t.processed + delta);
        }
        t.updated = std::max(t.updated, now_);
    }

    void schedule_next(Task& t) {
        ++t.gen;
        if (t.waiting || !t.running) {
            return;
        }
        const int S = cfg_.spills_per_task;
        while (t.next_milestone < S &&
               static_cast<double>(t.input) * t.next_milestone / S <= static_cast<double>(t.processed)) {
            ++t.next_milestone;
        }
        const Bytes target = t.next_milestone >= S
                                 ? t.input
                                 : static_cast<Bytes>(std::ceil(static_cast<double>(t.input) * t.next_milestone / S));
        const double from = std::max(t.updated, t.compute_start);
        const double when = from + static_cast<double>(std::max<Bytes>(0, target - t.processed)) / rate(t);
        const int id = t.id;
        const int gen = t.gen;
        push(when, kTaskEvent, [this, id, gen, target] { on_task_event(id, gen, target); });
    }

    void on_task_event(int id, int gen, Bytes target) {
        auto it = tasks_.find(id);
        if (it == tasks_.end() || it->second.gen != gen || !it->second.running) {
            return;
        }
        auto& t = it->second;
        advance(t);
        t.processed = std::max(t.processed, std::min(target, t.input));
        progress_output(t);
        if (t.processed >= t.input) {
            finish_task(t, false);
        } else {
            ++t.next_milestone;
            schedule_next(t);
        }
    }

    void on_onset(int id, double factor) {
        auto it = tasks_.find(id);
        if (it == tasks_.end() || !it->second.running) {
            return;
        }
        auto& t = it->second;
        advance(t);
        t.slow = factor;
        schedule_next(t);
    }

    // Output records follow the stage's unique input progress.
    void progress_output(const Task& t) {
        auto& st = stage(t.job, t.stage);
        if (st.emit_at_end || st.expected_input <= 0) {
            return;
        }
        auto& p = st.logical_progress[t.logical];
        p = std::max(p, t.processed);
        Bytes total = 0;
        for (const auto& [k, v] : st.logical_progress) {
            total += v;
        }
        const auto n = st.output.size();
        const auto upto = static_cast<std::size_t>(std::min<long double>(
            static_cast<long double>(n),
            std::floor(static_cast<long double>(n) * total / static_cast<long double>(st.expected_input))));
        if (upto > st.emitted) {
            spill(t.job, t.stage, t.id, t.machine, upto);
        }
    }

    void finish_task(Task& t, bool killed) {
        advance(t);
        if (!killed) {
            t.processed = t.input;
        }
        t.running = false;
        ++t.gen;
        release(t);
        auto& st = stage(t.job, t.stage);
        st.running.erase(t.id);

        Aggregate agg = t.content;
        for (const auto& in : t.inputs) {
            if (!in.writeback) {
                agg.merge(in.content);
            }
        }
        auto& e = emit("task_finished");
        e["job"] = job_name(t.job);
        e["stage"] = stage_name(t.job, t.stage);
        e["task"] = t.id;
        e["machine"] = t.machine;
        e["input"] = t.input;
        e["local"] = t.local;
        e["processed"] = t.processed;
        e["granules"] = granule_list(t);
        e["killed"] = killed;
        e["aggregate"] = {{"count", agg.count}, {"sum", agg.sum}, {"min", agg.empty() ? 0 : agg.min},
                          {"max", agg.empty() ? 0 : agg.max}};
        const int tid = t.id;
        const int partner = t.partner;
        if (killed) {
            return;
        }
        if (partner >= 0) {
            auto pit = tasks_.find(partner);
            if (pit != tasks_.end() && pit->second.running) {
                finish_task(pit->second, true);
            }
        }
        auto& done_task = tasks_.at(tid);
        ++st.completed;
        if (!dd() && !done_task.root) {
            --st.outstanding;
        }
        if (dd()) {
            for (const auto& in : done_task.inputs) {
                if (in.writeback) {
                    writeback(done_task.job, in);
                }
            }
        }
        check_stage_complete(done_task.job, done_task.stage);
        schedule_tick();
    }

    // ---- data-driven path -------------------------------------------------

    void spill(int j, int s, int task, MachineId machine, std::size_t upto) {
        auto& st = stage(j, s);
        std::span<const Record> recs(st.output.data() + st.emitted, upto - st.emitted);
        st.emitted = upto;
        if (recs.empty()) {
            return;
        }
        if (dd()) {
            spill_dd(j, s, task, machine, recs);
        } else {
            spill_cc(j, s, task, machine, recs);
        }
    }

    void spill_dd(int j, int s, int task, MachineId machine, std::span<const Record> recs) {
        auto res = store_.ingest_spill(j, s, recs, cluster_, quota_, now_);
        auto& e = emit("data_spill");
        e["job"] = job_name(j);
        e["stage"] = stage_name(j, s);
        e["task"] = task;
        e["machine"] = machine;
        e["records"] = res.records;
        e["bytes"] = res.bytes;
        Json stored = Json::array();
        for (const auto& c : res.stored) {
            stored.push_back(Json::array({c.granule, c.machine, c.bytes}));
        }
        e["stored"] = stored;
        e["overflow"] = res.overflow_bytes;
        trace_changes(res.changes, res.overflow_bytes);
        trace_changes(store_.rebalance(j, cluster_, quota_, now_), 0);
        auto& st = stage(j, s);
        for (auto& ready : st.engine->on_ingest(store_.granules(j, s), res.touched, now_)) {
            route_ready(j, s, ready);
        }
    }

    void trace_changes(const std::vector<PlacementChange>& changes, Bytes overflow) {
        for (const auto& c : changes) {
            auto& e = emit(c.reason == ChangeReason::overflow ? "quota_overflow" : "granule_respread");
            e["job"] = job_name(c.granule.job);
            e["stage"] = stage_name(c.granule.job, c.granule.stage);
            e["granule"] = c.granule.index;
            e["closed"] = c.closed ? Json(*c.closed) : Json(nullptr);
            e["opened"] = c.opened ? Json(*c.opened) : Json(nullptr);
            e["reason"] = to_string(c.reason);
        }
        overflow_bytes_ += overflow;
    }

    void route_ready(int j, int producer, const DataReady& ev) {
        auto& e = emit("data_ready");
        e["job"] = job_name(j);
        e["stage"] = stage_name(j, producer);
        e["granule"] = ev.granule.index;
        e["epoch"] = ev.epoch;
        e["bytes"] = ev.bytes;
        e["records"] = ev.records;
        Json ms = Json::array();
        for (const auto& [m, b] : ev.machines) {
            ms.push_back(Json::array({m, b}));
        }
        e["machines"] = ms;
        e["final"] = ev.final;

        auto& jr = job(j);
        const bool pipelined = jr.stages[static_cast<std::size_t>(producer)].spec->trigger.kind ==
                               TriggerKind::pipelining;
        for (auto c : jr.graph.consumers(static_cast<std::size_t>(producer))) {
            if (ev.bytes == 0 && ev.records == 0) {
                continue;
            }
            auto& cs = jr.stages[c];
            PoolEntry pe;
            pe.key = {ev.granule, ev.epoch};
            pe.bytes = ev.bytes;
            pe.records = ev.records;
            pe.locations = ev.machines;
            pe.logic_id = cs.spec->logic_id;
            pe.content = ev.content;
            pe.final = ev.final || !pipelined;
            pe.stats = ev.stats;
            cs.pool.add(pe);
            if (!cs.spec->status_rules.empty()) {
                auto& q = emit("status_query");
                q["job"] = job_name(j);
                q["stage"] = cs.spec->id;
                q["producer"] = stage_name(j, producer);
                q["granule"] = ev.granule.index;
                q["epoch"] = ev.epoch;
                q["counters"] = ev.stats.custom_counters;
                const auto decision = evaluate_status_rules(cs.spec->status_rules, ev.stats);
                auto& d = emit("status_decision");
                d["job"] = job_name(j);
                d["stage"] = cs.spec->id;
                d["producer"] = stage_name(j, producer);
                d["granule"] = ev.granule.index;
                d["epoch"] = ev.epoch;
                d["decision"] = to_string(decision.kind);
                d["logic_id"] = decision.logic_id;
                apply_status_decision(cs.pool, pe.key, decision);
                if (decision.kind == DecisionKind::ignore && !pe.final) {
                    auto flush = jr.stages[static_cast<std::size_t>(producer)].engine->abandon(
                        store_.granules(j, producer), ev.granule.index, now_);
                    handle_flush(j, producer, flush);
                }
            }
        }
        schedule_tick();
    }

    void handle_flush(int j, int producer, const FlushResult& flush) {
        for (const auto& r : flush.ready) {
            route_ready(j, producer, r);
        }
        if (flush.ready_all) {
            auto& e = emit("data_ready_all");
            e["job"] = job_name(j);
            e["stage"] = stage_name(j, producer);
            on_ready_all(j, producer);
        }
    }

    void on_ready_all(int j, int producer) {
        auto& jr = job(j);
        for (auto c : jr.graph.consumers(static_cast<std::size_t>(producer))) {
            check_stage_complete(j, static_cast<int>(c));
        }
        check_job_finished(j);
        schedule_tick();
    }

    void schedule_pool(int j, int s) {
        auto& st = stage(j, s);
        std::map<EntryKey, PoolEntry> snapshot;
        for (const auto& pe : st.pool.entries) {
            snapshot.emplace(pe.key, pe);
        }
        ScheduleOptions opt;
        opt.retry_limit = cfg_.retry_limit;
        if (cfg_.max_input_per_task_gb) {
            opt.max_input = static_cast<Bytes>(*cfg_.max_input_per_task_gb * static_cast<double>(kGB));
        }
        opt.max_units_per_task = cfg_.max_task_units;
        auto res = schedule_iteration(st.pool, view(j), opt);
        for (const auto& k : res.newly_troublesome) {
            auto& e = emit("troublesome");
            e["job"] = job_name(j);
            e["stage"] = st.spec->id;
            e["granule"] = Json::array({stage_name(j, k.granule.stage), k.granule.index, k.epoch});
        }
        if (!res.new_conflicts.empty()) {
            auto& e = emit("regrouped");
            e["job"] = job_name(j);
            e["stage"] = st.spec->id;
            e["conflicts"] = res.new_conflicts.size();
        }
        const auto& producers = job(j).graph;
        for (auto& a : res.assignments) {
            Task t;
            t.job = j;
            t.stage = s;
            t.machine = a.machine;
            t.units = a.resources;
            t.logic_id = a.logic_id;
            t.troublesome = a.troublesome;
            Bytes remote = 0;
            for (const auto& k : a.granules) {
                const auto& pe = snapshot.at(k);
                TaskInput in;
                in.key = k;
                in.bytes = pe.bytes;
                in.records = pe.records;
                in.content = pe.content;
                in.final = pe.final;
                in.locations = pe.locations;
                in.logic_id = pe.logic_id;
                in.stats = pe.stats;
                in.writeback = !pe.final && producers.stage(static_cast<std::size_t>(k.granule.stage)).trigger.kind ==
                                                TriggerKind::pipelining;
                in.local = local_share(pe.bytes, pe.locations, a.machine);
                t.input += in.bytes;
                t.local += in.local;
                remote += in.bytes - in.local;
                t.inputs.push_back(std::move(in));
            }
            start_task(std::move(t), remote);
        }
    }

    static Bytes local_share(Bytes bytes, const std::vector<std::pair<MachineId, Bytes>>& locations, MachineId m) {
        Bytes total = 0;
        Bytes here = 0;
        for (const auto& [mm, b] : locations) {
            total += b;
            if (mm == m) {
                here += b;
            }
        }
        if (total <= 0) {
            return 0;
        }
        if (here >= total) {
            return bytes;
        }
        return static_cast<Bytes>(static_cast<long double>(bytes) * here / total);
    }

    void writeback(int j, const TaskInput& in) {
        const auto ref = in.key.granule;
        auto& producer = stage(j, ref.stage);
        const Bytes partial = std::max<Bytes>(1, producer.spec->output.per_record_bytes);
        const auto removed = store_.remove_resident(ref, in.bytes, cluster_);
        auto res = store_.ingest_writeback(ref, partial, cluster_, quota_, now_);
        auto& e = emit("writeback");
        e["job"] = job_name(j);
        e["stage"] = producer.spec->id;
        e["granule"] = ref.index;
        e["epoch"] = in.key.epoch;
        Json rm = Json::array();
        for (const auto& [m, b] : removed) {
            rm.push_back(Json::array({m, b}));
        }
        e["removed"] = rm;
        Json stored = Json::array();
        for (const auto& c : res.stored) {
            stored.push_back(Json::array({c.granule, c.machine, c.bytes}));
        }
        e["stored"] = stored;
        e["bytes"] = partial;
        e["overflow"] = res.overflow_bytes;
        trace_changes(res.changes, res.overflow_bytes);
        auto flush = producer.engine->pipeline_writeback(store_.granules(j, ref.stage), ref.index, partial,
                                                         in.content, now_);
        handle_flush(j, ref.stage, flush);
    }

    // ---- stage and job completion -----------------------------------------

    void check_stage_complete(int j, int s) {
        auto& jr = job(j);
        auto& st = jr.stages[static_cast<std::size_t>(s)];
        if (st.done || !jr.arrived) {
            return;
        }
        const auto& producers = jr.graph.producers(static_cast<std::size_t>(s));
        if (!st.running.empty()) {
            return;
        }
        if (producers.empty()) {
            if (!st.pending.empty() || st.completed < st.total_tasks) {
                return;
            }
        } else if (dd()) {
            for (auto p : producers) {
                if (!jr.stages[p].engine->progress().ready_all_sent) {
                    return;
                }
            }
            if (!st.pool.empty()) {
                return;
            }
        } else {
            for (auto p : producers) {
                if (!jr.stages[p].done) {
                    return;
                }
            }
            if (!st.pending.empty() || !st.relaunch.empty() || st.outstanding > 0) {
                return;
            }
            if (st.microbatch) {
                for (auto p : producers) {
                    if (st.cursor[static_cast<int>(p)] < jr.stages[p].stored.size()) {
                        return;
                    }
                }
            }
        }
        complete_stage(j, s);
    }

    void complete_stage(int j, int s) {
        auto& jr = job(j);
        auto& st = jr.stages[static_cast<std::size_t>(s)];
        st.done = true;
        if (st.emitted < st.output.size()) {
            spill(j, s, -1, st.last_machine, st.output.size());
        }
        auto& e = emit("data_generated");
        e["job"] = jr.spec->id;
        e["stage"] = st.spec->id;
        if (dd()) {
            store_.seal_stage(j, s);
            auto flush = st.engine->on_data_generated(store_.granules(j, s), now_);
            handle_flush(j, s, flush);
        } else {
            auto& r = emit("data_ready_all");
            r["job"] = jr.spec->id;
            r["stage"] = st.spec->id;
            for (auto c : jr.graph.consumers(static_cast<std::size_t>(s))) {
                check_stage_complete(j, static_cast<int>(c));
            }
        }
        // Inputs whose consumers are all done can go.
        for (auto p : jr.graph.producers(static_cast<std::size_t>(s))) {
            bool all_done = true;
            for (auto c : jr.graph.consumers(p)) {
                all_done = all_done && jr.stages[c].done;
            }
            if (all_done) {
                free_stage(j, static_cast<int>(p));
            }
        }
        check_job_finished(j);
        schedule_tick();
    }

    void free_stage(int j, int s) {
        auto& st = stage(j, s);
        if (st.freed) {
            return;
        }
        st.freed = true;
        std::map<MachineId, Bytes> freed;
        if (dd()) {
            freed = store_.free_stage(j, s, cluster_);
        } else {
            for (const auto& r : st.stored) {
                freed[r.machine] += r.bytes;
                cluster_.at(r.machine).per_job_stored[j] -= r.bytes;
            }
        }
        auto& e = emit("data_freed");
        e["job"] = job_name(j);
        e["stage"] = st.spec->id;
        Json f = Json::array();
        for (const auto& [m, b] : freed) {
            if (b > 0) {
                f.push_back(Json::array({m, b}));
            }
        }
        e["freed"] = f;
    }

    void check_job_finished(int j) {
        auto& jr = job(j);
        if (jr.finished || !jr.arrived) {
            return;
        }
        for (std::size_t s = 0; s < jr.stages.size(); ++s) {
            const auto& st = jr.stages[s];
            if (!st.done) {
                return;
            }
            if (dd() && !st.engine->progress().ready_all_sent) {
                return;
            }
        }
        for (std::size_t s = 0; s < jr.stages.size(); ++s) {
            free_stage(j, static_cast<int>(s));
        }
        jr.finished = true;
        auto& e = emit("job_finished");
        e["job"] = jr.spec->id;
        active_.erase(j);
        reassign_quota();
        schedule_tick();
    }

    // ---- compute-centric baseline ----------------------------------------

    int first_consumer_partitions(int j, int s) {
        const auto& g = job(j).graph;
        const auto& cs = g.consumers(static_cast<std::size_t>(s));
        return cs.empty() ? 1 : std::max(1, g.stage(cs.front()).partitions);
    }

    int bucket_of(std::uint64_t key, int partitions) const {
        return static_cast<int>((static_cast<unsigned __int128>(key) * static_cast<unsigned>(partitions)) /
                                cfg_.key_space);
    }

    void spill_cc(int j, int s, int task, MachineId machine, std::span<const Record> recs) {
        auto& st = stage(j, s);
        const int parts = first_consumer_partitions(j, s);
        std::map<std::pair<int, MachineId>, Bytes> chunks;
        Bytes bytes = 0;
        for (const auto& r : recs) {
            st.stored.push_back({r.key, r.bytes, r.value, machine});
            chunks[{bucket_of(r.key, parts), machine}] += r.bytes;
            bytes += r.bytes;
        }
        cluster_.at(machine).per_job_stored[j] += bytes;
        auto& e = emit("data_spill");
        e["job"] = job_name(j);
        e["stage"] = st.spec->id;
        e["task"] = task;
        e["machine"] = machine;
        e["records"] = recs.size();
        e["bytes"] = bytes;
        Json stored = Json::array();
        for (const auto& [k, b] : chunks) {
            stored.push_back(Json::array({k.first, k.second, b}));
        }
        e["stored"] = stored;
    }

    bool upstream_ready_for_launch(int j, int s) {
        auto& jr = job(j);
        int total = 0;
        int completed = 0;
        for (auto p : jr.graph.producers(static_cast<std::size_t>(s))) {
            const auto& ps = jr.stages[p];
            total += ps.total_tasks;
            completed += std::min(ps.completed, ps.total_tasks);
        }
        return total == 0 || static_cast<double>(completed) >= cfg_.cc_launch_fraction * total - 1e-9;
    }

    bool producers_done(int j, int s) {
        auto& jr = job(j);
        for (auto p : jr.graph.producers(static_cast<std::size_t>(s))) {
            if (!jr.stages[p].done) {
                return false;
            }
        }
        return true;
    }

    void launch_baseline(int j, int s) {
        auto& st = stage(j, s);
        while (!st.relaunch.empty()) {
            auto m = most_available(j);
            if (!m) {
                return;
            }
            Task t = std::move(st.relaunch.front());
            st.relaunch.pop_front();
            t.machine = *m;
            t.units = std::min(cfg_.cc_task_units, available(j, *m));
            t.waiting = !producers_done(j, s) && !st.microbatch;
            Bytes remote = 0;
            if (!t.waiting) {
                if (!st.microbatch) {
                    t.ranges.clear();
                    remote = bind_inputs(t, st.total_tasks, true);
                } else {
                    remote = bind_ranges(t, st.total_tasks);
                }
            }
            ++st.outstanding;
            start_task(std::move(t), remote);
        }
        if (st.microbatch) {
            return;
        }
        if (!st.launch_allowed) {
            st.launch_allowed = upstream_ready_for_launch(j, s);
        }
        if (!st.launch_allowed) {
            return;
        }
        const bool ready = producers_done(j, s);
        while (!st.pending.empty()) {
            auto m = most_available(j);
            if (!m) {
                break;
            }
            Task t;
            t.job = j;
            t.stage = s;
            t.machine = *m;
            t.units = std::min(cfg_.cc_task_units, available(j, *m));
            t.index = st.pending.front();
            st.pending.pop_front();
            t.waiting = !ready;
            Bytes remote = 0;
            if (ready) {
                remote = bind_inputs(t, st.total_tasks, true);
            }
            ++st.outstanding;
            start_task(std::move(t), remote);
        }
        if (ready) {
            for (int id : std::vector<int>(st.running.begin(), st.running.end())) {
                auto& t = tasks_.at(id);
                if (t.waiting) {
                    t.waiting = false;
                    const Bytes remote = bind_inputs(t, st.total_tasks, true);
                    t.updated = now_;
                    t.compute_start = now_ + to_gb(remote) / cfg_.bandwidth_gb_s;
                    t.check_time = t.compute_start;
                    auto& e = emit("task_inputs_bound");
                    e["job"] = job_name(j);
                    e["stage"] = st.spec->id;
                    e["task"] = t.id;
                    e["input"] = t.input;
                    e["local"] = t.local;
                    schedule_next(t);
                }
            }
        }
    }

    // Reads bucket `t.index` out of every producer's stored records, from the
    // stage cursor to the current end (or the whole range when `all`).
    Bytes bind_inputs(Task& t, int partitions, bool all) {
        auto& jr = job(t.job);
        auto& st = jr.stages[static_cast<std::size_t>(t.stage)];
        for (auto p : jr.graph.producers(static_cast<std::size_t>(t.stage))) {
            const std::size_t from = all ? 0 : st.cursor[static_cast<int>(p)];
            t.ranges[static_cast<int>(p)] = {from, jr.stages[p].stored.size()};
        }
        return bind_ranges(t, partitions);
    }

    Bytes bind_ranges(Task& t, int partitions) {
        auto& jr = job(t.job);
        t.input = 0;
        t.local = 0;
        t.content = Aggregate{};
        for (const auto& [p, range] : t.ranges) {
            const auto& ps = jr.stages[static_cast<std::size_t>(p)];
            for (std::size_t i = range.first; i < range.second; ++i) {
                const auto& r = ps.stored[i];
                if (bucket_of(r.key, partitions) != t.index) {
                    continue;
                }
                t.input += r.bytes;
                t.content.add(r.value);
                if (r.machine == t.machine) {
                    t.local += r.bytes;
                }
            }
        }
        return t.input - t.local;
    }

    void on_microbatch(int j, int s) {
        auto& jr = job(j);
        auto& st = jr.stages[static_cast<std::size_t>(s)];
        if (st.done || jr.finished) {
            return;
        }
        const bool final = producers_done(j, s);
        std::map<int, std::size_t> ends;
        bool any = false;
        for (auto p : jr.graph.producers(static_cast<std::size_t>(s))) {
            ends[static_cast<int>(p)] = jr.stages[p].stored.size();
            any = any || ends[static_cast<int>(p)] > st.cursor[static_cast<int>(p)];
        }
        if (any) {
            for (int b = 0; b < st.total_tasks; ++b) {
                auto m = most_available(j);
                if (!m) {
                    break;
                }
                Task t;
                t.job = j;
                t.stage = s;
                t.machine = *m;
                t.units = std::min(cfg_.cc_task_units, available(j, *m));
                t.index = b;
                const Bytes remote = bind_inputs(t, st.total_tasks, false);
                if (t.input == 0) {
                    continue;
                }
                ++st.outstanding;
                start_task(std::move(t), remote);
            }
            st.cursor = ends;
        }
        if (!final || any) {
            push(now_ + cfg_.cc_streaming_interval_s, kBatch, [this, j, s] { on_microbatch(j, s); });
        }
        check_stage_complete(j, s);
    }

    // ---- stragglers -------------------------------------------------------

    void ensure_checks() {
        if (check_scheduled_) {
            return;
        }
        bool any = false;
        for (const auto& [id, t] : tasks_) {
            any = any || t.running;
        }
        if (!any) {
            return;
        }
        check_scheduled_ = true;
        const double period = cfg_.straggler_period_s;
        const double next = (std::floor(now_ / period + 1e-9) + 1.0) * period;
        push(next, kCheck, [this] { on_check(); });
    }

    void on_check() {
        check_scheduled_ = false;
        const double period = cfg_.straggler_period_s;
        const double nominal = static_cast<double>(kGB) / cfg_.seconds_per_gb_unit;
        std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> by_stage;
        for (auto& [id, t] : tasks_) {
            if (!t.running || t.waiting) {
                continue;
            }
            advance(t);
            const double since = std::max(t.check_time, t.compute_start);
            if (now_ - since >= period - 1e-9 && t.processed < t.input) {
                const double r = static_cast<double>(t.processed - t.check_bytes) / (now_ - since) / t.units;
                by_stage[{t.job, t.stage}].emplace_back(id, r);
            }
            if (now_ >= t.compute_start) {
                t.check_bytes = t.processed;
                t.check_time = now_;
            }
        }
        for (const auto& [key, rates] : by_stage) {
            std::vector<TaskRate> tr;
            for (const auto& [id, r] : rates) {
                tr.push_back({id, r});
            }
            std::vector<int> flagged;
            std::map<int, double> ratio;
            if (tr.size() >= 2) {
                flagged = detect_straggler(tr, cfg_.straggler_theta);
                double total = 0.0;
                for (const auto& x : tr) {
                    total += x.rate;
                }
                for (const auto& x : tr) {
                    const double others = (total - x.rate) / static_cast<double>(tr.size() - 1);
                    ratio[x.task_id] = others > 0.0 ? x.rate / others : 1.0;
                }
            } else {
                // No peers in the window: compare against the nominal per-unit rate.
                if (tr.front().rate < cfg_.straggler_theta * nominal) {
                    flagged.push_back(tr.front().task_id);
                }
                ratio[tr.front().task_id] = tr.front().rate / nominal;
            }
            for (int id : flagged) {
                if (dd()) {
                    split(id, ratio[id]);
                } else if (cfg_.cc_speculation) {
                    clone(id);
                }
            }
        }
        ensure_checks();
    }

    void split(int id, double speed_ratio) {
        auto& t = tasks_.at(id);
        if (t.root || t.inputs.empty()) {
            return;
        }
        advance(t);
        std::size_t current = 0;
        Bytes acc = 0;
        while (current < t.inputs.size() && acc + t.inputs[current].bytes <= t.processed) {
            acc += t.inputs[current].bytes;
            ++current;
        }
        std::vector<EntryKey> unprocessed;
        for (std::size_t i = current; i < t.inputs.size(); ++i) {
            unprocessed.push_back(t.inputs[i].key);
        }
        SplitResult res;
        try {
            res = split_straggler(unprocessed, std::clamp(speed_ratio, 0.0, 0.999));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::nothing_to_split) {
                return;
            }
            throw;
        }
        std::set<EntryKey> moving(res.reassigned.begin(), res.reassigned.end());
        auto& st = stage(t.job, t.stage);
        std::vector<TaskInput> keep;
        Json moved = Json::array();
        for (auto& in : t.inputs) {
            if (!moving.contains(in.key)) {
                keep.push_back(std::move(in));
                continue;
            }
            t.input -= in.bytes;
            t.local -= in.local;
            moved.push_back(Json::array({stage_name(t.job, in.key.granule.stage), in.key.granule.index, in.key.epoch}));
            PoolEntry pe;
            pe.key = in.key;
            pe.bytes = in.bytes;
            pe.records = in.records;
            pe.locations = in.locations;
            pe.logic_id = in.logic_id;
            pe.content = in.content;
            pe.final = in.final;
            pe.stats = in.stats;
            st.pool.add(std::move(pe));
        }
        t.inputs = std::move(keep);
        auto& e = emit("task_split");
        e["job"] = job_name(t.job);
        e["stage"] = st.spec->id;
        e["task"] = t.id;
        e["speed_ratio"] = speed_ratio;
        e["kept"] = granule_list(t);
        e["reassigned"] = moved;
        schedule_next(t);
        schedule_tick();
    }

    void clone(int id) {
        auto& orig = tasks_.at(id);
        if (orig.partner >= 0 || orig.is_clone) {
            return;
        }
        auto m = most_available(orig.job, orig.machine);
        if (!m) {
            m = most_available(orig.job);
        }
        if (!m) {
            return;
        }
        Task c;
        c.job = orig.job;
        c.stage = orig.stage;
        c.machine = *m;
        c.units = std::min(cfg_.cc_task_units, available(orig.job, *m));
        c.is_clone = true;
        c.partner = orig.id;
        c.logical = orig.logical;
        c.root = orig.root;
        c.index = orig.index;
        Bytes remote = 0;
        if (orig.root) {
            c.input = orig.input;
            c.local = c.input;
        } else {
            c.ranges = orig.ranges;
            remote = bind_ranges(c, stage(orig.job, orig.stage).total_tasks);
        }
        const int cid = start_task(std::move(c), remote);
        tasks_.at(id).partner = cid;
    }

    // ---- failures -------------------------------------------------------

    void on_failure(MachineId m) {
        auto& mach = cluster_.at(m);
        if (mach.failed) {
            return;
        }
        std::vector<int> victims;
        for (auto& [id, t] : tasks_) {
            if (t.running && t.machine == m) {
                victims.push_back(id);
            }
        }
        for (int id : victims) {
            auto& t = tasks_.at(id);
            const int j = t.job;
            const int s = t.stage;
            finish_task(t, true);
            auto& st = stage(j, s);
            auto& tt = tasks_.at(id);
            if (tt.partner >= 0 && tasks_.at(tt.partner).running) {
                tasks_.at(tt.partner).partner = -1;
                continue;
            }
            if (tt.root) {
                st.pending.push_front(tt.index);
                st.logical_progress.erase(tt.logical);
            } else if (!dd()) {
                Task again;
                again.job = j;
                again.stage = s;
                again.index = tt.index;
                again.ranges = tt.ranges;
                again.waiting = tt.waiting;
                st.relaunch.push_back(std::move(again));
                --st.outstanding;
            } else {
                for (const auto& in : tt.inputs) {
                    PoolEntry pe;
                    pe.key = in.key;
                    pe.bytes = in.bytes;
                    pe.records = in.records;
                    pe.locations = in.locations;
                    pe.logic_id = in.logic_id;
                    pe.content = in.content;
                    pe.final = in.final;
                    pe.stats = in.stats;
                    st.pool.add(std::move(pe));
                }
            }
        }
        mach.failed = true;
        mach.used_units = 0.0;
        mach.per_job_units.clear();

        std::map<std::pair<int, int>, Bytes> lost;
        auto& e = emit("machine_failed");
        e["machine"] = m;
        Json moved = Json::array();
        if (dd()) {
            for (const auto& [ref, b] : store_.evacuate(m, cluster_, quota_, now_)) {
                lost[{ref.job, ref.stage}] += b;
                Json entry = Json::array({job_name(ref.job), stage_name(ref.job, ref.stage), ref.index, b});
                moved.push_back(entry);
            }
        } else {
            MachineId target = -1;
            for (const auto& mm : cluster_.machines) {
                if (!mm.failed && (target < 0 || mm.stored() < cluster_.at(target).stored())) {
                    target = mm.id;
                }
            }
            for (auto& jr : jobs_) {
                for (auto& st : jr.stages) {
                    if (st.freed) {
                        continue;
                    }
                    Bytes b = 0;
                    for (auto& r : st.stored) {
                        if (r.machine == m && target >= 0) {
                            r.machine = target;
                            b += r.bytes;
                        }
                    }
                    if (b > 0) {
                        cluster_.at(m).per_job_stored[jr.idx] -= b;
                        cluster_.at(target).per_job_stored[jr.idx] += b;
                        lost[{jr.idx, st.idx}] += b;
                        moved.push_back(Json::array({jr.spec->id, st.spec->id, -1, b}));
                    }
                }
            }
        }
        e["lost"] = moved;
        // Lost intermediate data is rebuilt by re-running the stages that produced it.
        std::map<int, double> pause;
        for (const auto& [key, b] : lost) {
            const auto& st = stage(key.first, key.second);
            pause[key.first] += stage_elapsed(key.first, key.second, st);
        }
        Json p = Json::object();
        for (const auto& [j, d] : pause) {
            auto& jr = job(j);
            jr.paused_until = std::max(jr.paused_until, now_ + d);
            p[job_name(j)] = d;
            push(jr.paused_until, kTick, [this] { schedule_tick(); });
        }
        e["pause"] = p;
        reassign_quota();
        schedule_tick();
    }

    double stage_elapsed(int j, int s, const StageRun&) const {
        double first = -1.0;
        double last = now_;
        for (const auto& [id, t] : tasks_) {
            if (t.job == j && t.stage == s) {
                first = first < 0.0 ? t.launch : std::min(first, t.launch);
            }
        }
        return first < 0.0 ? 0.0 : last - first;
    }

    const Workload& workload_;
    SimConfig cfg_;
    ClusterState cluster_;
    DataStore store_;
    QuotaTable quota_;
    std::vector<JobRun> jobs_;
    std::set<int> active_;
    std::map<int, Task> tasks_;
    std::vector<Json> trace_;
    std::priority_queue<Queued, std::vector<Queued>, LaterFirst> queue_;
    std::uint64_t qseq_ = 0;
    std::int64_t seq_ = 0;
    double now_ = 0.0;
    std::optional<double> tick_at_;
    bool check_scheduled_ = false;
    int next_task_ = 0;
    int launched_total_ = 0;
    Bytes overflow_bytes_ = 0;
};

}  // namespace

SimResult run(const Workload& workload, const SimConfig& config) {
    if (workload.jobs.empty()) {
        config.validate();
        SimResult r;
        r.metrics.mode = to_string(config.mode);
        r.metrics.workload_hash = workload_hash(workload);
        return r;
    }
    Simulation sim(workload, config);
    return sim.run();
}

SimResult run_compute_centric(const Workload& workload, SimConfig config) {
    config.mode = Mode::compute_centric;
    return run(workload, config);
}

std::string trace_to_jsonl(const std::vector<Json>& trace) {
    std::string out;
    for (const auto& e : trace) {
        out += e.dump();
        out += '\n';
    }
    return out;
}

std::vector<Json> trace_from_jsonl(const std::string& text) {
    std::vector<Json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(Json::parse(line));
        }
    }
    return out;
}

}  // namespace granary

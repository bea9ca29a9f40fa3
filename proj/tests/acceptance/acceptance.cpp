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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "../ilp_oracle.hpp"
#include "../scenarios.hpp"
#include "granary/cli.hpp"

using namespace granary;
using namespace granary::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<std::vector<Json>> g_traces;

SimResult keep(SimResult r) {
    g_traces.push_back(r.trace);
    return r;
}

int count_tasks(const std::vector<Json>& trace, const std::string& stage, std::vector<Bytes>* inputs = nullptr) {
    int n = 0;
    for (const auto& e : trace) {
        if (e["ev"] == "task_finished" && e["stage"] == stage && !e["killed"].get<bool>()) {
            ++n;
            if (inputs) {
                inputs->push_back(e["input"].get<Bytes>());
            }
        }
    }
    return n;
}

double first_launch(const std::vector<Json>& trace, const std::string& stage) {
    for (const auto& e : trace) {
        if (e["ev"] == "task_launched" && e["stage"] == stage) {
            return e["t"].get<double>();
        }
    }
    return -1.0;
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

Outcome skew() {
    const auto w = skew_workload();
    const auto dd = keep(run(w, skew_config(Mode::data_driven)));
    const auto cc = keep(run(w, skew_config(Mode::compute_centric)));
    std::vector<Bytes> inputs;
    const int tasks = count_tasks(dd.trace, "v2", &inputs);
    const bool equal = !inputs.empty() && std::all_of(inputs.begin(), inputs.end(),
                                                      [&](Bytes b) { return b == inputs.front(); });
    const double d_dd = dd.metrics.stage("join0", "v2")->duration();
    const double d_cc = cc.metrics.stage("join0", "v2")->duration();
    const double ratio = d_cc / d_dd;
    Outcome o;
    o.pass = tasks == 5 && equal && ratio >= 1.5;
    o.detail = "v2 tasks=" + std::to_string(tasks) + (equal ? " equal input " : " unequal input ") +
               fmt(inputs.empty() ? 0.0 : to_gb(inputs.front())) + " GB; v2 time CC " + fmt(d_cc) + "s / DD " +
               fmt(d_dd) + "s = " + fmt(ratio) + "x (need >= 1.5)";
    return o;
}

Outcome straggler() {
    const auto w = straggler_workload();
    const auto dd = keep(run(w, straggler_config(Mode::data_driven)));
    const auto cc = keep(run(w, straggler_config(Mode::compute_centric)));
    const auto* sd = dd.metrics.stage("j1", "v2");
    const auto* sc = cc.metrics.stage("j1", "v2");
    const Bytes input = w.jobs[0].stages[0].output.total_bytes();
    const double ratio = sc->duration() / sd->duration();
    int splits = 0;
    int clones = 0;
    for (const auto& e : dd.trace) {
        splits += e["ev"] == "task_split" ? 1 : 0;
    }
    for (const auto& e : cc.trace) {
        clones += e["ev"] == "task_launched" && e.contains("clone_of") ? 1 : 0;
    }
    Outcome o;
    o.pass = sd->processed == input && sc->processed > input && ratio >= 1.3 && splits > 0 && clones > 0;
    o.detail = std::to_string(splits) + " split(s) vs " + std::to_string(clones) + " clone(s); DD processed " + std::to_string(sd->processed) + " of " + std::to_string(input) + ", CC processed " +
               std::to_string(sc->processed) + "; v2 time CC " + fmt(sc->duration()) + "s / DD " +
               fmt(sd->duration()) + "s = " + fmt(ratio) + "x (need >= 1.3)";
    return o;
}

Outcome status() {
    const auto r = keep(run(status_workload(), status_config()));
    int launched = 0;
    int ready = 0;
    for (const auto& e : r.trace) {
        launched += e["ev"] == "task_launched" && e["stage"] == "v3" ? 1 : 0;
        ready += e["ev"] == "data_ready" && e["stage"] == "v2" ? 1 : 0;
    }
    Outcome o;
    o.pass = ready == 8 && launched == 6 && r.metrics.skipped_granules == 2;
    o.detail = "v2 ready granules=" + std::to_string(ready) + ", v3 tasks launched=" + std::to_string(launched) +
               ", skipped=" + std::to_string(r.metrics.skipped_granules);
    return o;
}

Outcome ilp_suite() {
    std::mt19937_64 rng(2026);
    int mismatches = 0;
    int c1 = 0;
    int heuristic_infeasible = 0;
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto inst = ilp::random_instance(rng);
        const auto oracle = brute_force(inst);
        const auto sol = ilp::solve_exact(inst);
        bool ok = false;
        const double mine = oracle_value(inst, sol.x, &ok);
        c1 += ok ? 0 : 1;
        if (std::abs(mine - oracle.value) > 1e-9 * std::max(1.0, std::abs(oracle.value)) ||
            std::abs(sol.objective - oracle.value) > 1e-9 * std::max(1.0, std::abs(oracle.value))) {
            ++mismatches;
        }
        const auto h = ilp::heuristic_placement(inst);
        bool h_ok = false;
        const double hv = oracle_value(inst, h, &h_ok);
        if (!h_ok) {
            ++heuristic_infeasible;
            continue;
        }
        worst = std::max(worst, oracle.value > 0 ? hv / oracle.value : 1.0);
    }
    Outcome o;
    o.pass = mismatches == 0 && c1 == 0;
    o.detail = "200 instances: C1 violations=" + std::to_string(c1) + ", optimum mismatches=" +
               std::to_string(mismatches) + "; heuristic infeasible=" + std::to_string(heuristic_infeasible) +
               ", max heuristic/optimum=" + fmt(worst) + (worst <= 3.0 ? " (within 3x)" : " (exceeds 3x: finding)");
    return o;
}

Outcome pipelining() {
    const auto piped = keep(run(pipeline_workload(true), pipeline_config()));
    const auto batch = keep(run(pipeline_workload(false), pipeline_config()));
    const auto& a = piped.metrics.stage("agg", "v2")->result;
    const auto& b = batch.metrics.stage("agg", "v2")->result;
    const double fp = first_launch(piped.trace, "v2");
    const double fb = first_launch(batch.trace, "v2");
    Outcome o;
    o.pass = a == b && a.count == 40000 && fp >= 0.0 && fp < fb;
    o.detail = "pipelined count/sum " + std::to_string(a.count) + "/" + std::to_string(a.sum) + " vs batch " +
               std::to_string(b.count) + "/" + std::to_string(b.sum) + "; first v2 launch " + fmt(fp) + "s vs " +
               fmt(fb) + "s";
    return o;
}

Outcome quota() {
    const auto r = keep(run(contention_workload(), contention_config()));
    Bytes worst = 0;
    const auto c = check_quota_isolation(r.trace, &worst);
    Outcome o;
    o.pass = c.ok;
    o.detail = "4 jobs, worst excess over Q_j + spill = " + std::to_string(worst) + " bytes, overflow bytes " +
               std::to_string(r.metrics.overflow_bytes) + (c.ok ? "" : "; " + c.violations.front());
    return o;
}

Outcome trends() {
    const auto w = sweep_workload();
    std::vector<double> pressures{0.6, 1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> dl;
    std::vector<double> ft;
    double load_ratio = 0.0;
    std::string series;
    for (double p : pressures) {
        const auto r = keep(run(w, sweep_config(p)));
        dl.push_back(r.metrics.mean_dl_granule_fraction());
        ft.push_back(r.metrics.mean_ft_granule_fraction());
        load_ratio = r.metrics.load.max / r.metrics.load.ideal;
        series += " p=" + fmt(p, 1) + ":DL " + fmt(dl.back()) + " FT " + fmt(ft.back()) + " LB " + fmt(load_ratio);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < pressures.size(); ++i) {
        monotone = monotone && dl[i] <= dl[i - 1] + 1e-12 && ft[i] <= ft[i - 1] + 1e-12;
    }
    Outcome o;
    o.pass = monotone && load_ratio < 1.5;
    o.detail = std::string(monotone ? "monotone" : "NOT monotone") + ";" + series;
    return o;
}

Outcome protocol() {
    int checked = 0;
    std::string first;
    for (const auto& t : g_traces) {
        ++checked;
        const auto p = check_protocol(t);
        const auto c = check_clock(t);
        if (!p.ok && first.empty()) {
            first = p.violations.front();
        }
        if (!c.ok && first.empty()) {
            first = c.violations.front();
        }
    }
    Outcome o;
    o.pass = checked > 0 && first.empty();
    o.detail = std::to_string(checked) + " traces checked" + (first.empty() ? "" : "; " + first);
    return o;
}

Outcome determinism() {
    const auto w = contention_workload();
    auto c = contention_config();
    c.seed = 77;
    const auto a = run(w, c);
    const auto b = run(w, c);
    auto cc = c;
    cc.mode = Mode::compute_centric;
    const auto x = run(w, cc);
    const auto y = run(w, cc);
    const bool same = trace_to_jsonl(a.trace) == trace_to_jsonl(b.trace) &&
                      a.metrics.to_json().dump(2) == b.metrics.to_json().dump(2) &&
                      trace_to_jsonl(x.trace) == trace_to_jsonl(y.trace) &&
                      x.metrics.to_json().dump(2) == y.metrics.to_json().dump(2);
    Outcome o;
    o.pass = same;
    o.detail = same ? "trace and metrics byte-identical across repeated runs (both modes)" : "outputs differ";
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> fn;
        double limit_s;
    };
    // Protocol runs last so it sees every trace produced above.
    std::vector<Criterion> order{
        {1, "skew and parallelism", skew, 5.0},
        {2, "straggler mitigation", straggler, 5.0},
        {3, "runtime logic change", status, 0.0},
        {4, "ILP oracle", ilp_suite, 60.0},
        {6, "pipelining equivalence", pipelining, 0.0},
        {7, "quota isolation", quota, 0.0},
        {8, "LB/DL/FT trends", trends, 0.0},
        {9, "determinism", determinism, 0.0},
        {5, "protocol invariants", protocol, 0.0},
    };
    std::map<int, std::string> lines;
    bool all = true;
    for (const auto& c : order) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_s > 0.0 && secs >= c.limit_s) {
            o.pass = false;
            o.detail += "; runtime " + fmt(secs) + "s exceeds " + fmt(c.limit_s, 0) + "s";
        }
        all = all && o.pass;
        lines[c.id] = std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " (" + c.name +
                      "): " + o.detail + " [" + fmt(secs, 2) + "s]";
    }
    for (const auto& [id, line] : lines) {
        std::cout << line << '\n';
    }
    return all ? 0 : 1;
}

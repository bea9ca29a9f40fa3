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
#include "granary/ilp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>

#include "granary/cluster.hpp"
#include "granary/datastore.hpp"
#include "granary/workload.hpp"

namespace granary::ilp {

Weights Instance::default_weights() const {
    Bytes largest = 0;
    for (const auto& g : granules) {
        largest = std::max(largest, total_mass(g));
    }
    return {1.0, 1.0, static_cast<double>(largest)};
}

void Instance::validate() const {
    if (machines <= 0) {
        throw Error(ErrorCode::invalid_spec, "instance needs at least one machine");
    }
    if (weights.w1 < 0 || weights.w2 < 0 || weights.w3 < 0) {
        throw Error(ErrorCode::invalid_spec, "objective weights must be non-negative");
    }
    for (std::size_t k = 0; k < granules.size(); ++k) {
        const auto& g = granules[k];
        if (static_cast<int>(g.b.size()) != machines) {
            throw Error(ErrorCode::invalid_spec, "granule " + std::to_string(k) + ": b needs one entry per machine");
        }
        if (g.e < 0 || std::any_of(g.b.begin(), g.b.end(), [](Bytes v) { return v < 0; })) {
            throw Error(ErrorCode::invalid_spec, "granule " + std::to_string(k) + ": negative bytes");
        }
        for (int m : g.i0) {
            if (m < 0 || m >= machines) {
                throw Error(ErrorCode::invalid_spec, "granule " + std::to_string(k) + ": i0 names unknown machine");
            }
        }
        if (!quotas.contains(g.job)) {
            throw Error(ErrorCode::invalid_spec, "no quota for job " + std::to_string(g.job));
        }
    }
}

Bytes total_mass(const GranuleInput& g) {
    Bytes p = g.e;
    for (Bytes v : g.b) {
        p += v;
    }
    return p;
}

int primary_machine(const GranuleInput& g) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(g.b.size()); ++i) {
        if (g.b[static_cast<std::size_t>(i)] > g.b[static_cast<std::size_t>(best)]) {
            best = i;
        }
    }
    return best;
}

Bytes primary_mass(const GranuleInput& g, int chosen) {
    const Bytes top = g.b.empty() ? 0 : g.b[static_cast<std::size_t>(primary_machine(g))];
    const Bytes here = g.b[static_cast<std::size_t>(chosen)];
    // I_- = {i : b_i <= b_top - e}: steering future bytes there cannot beat the current primary.
    if (here <= top - g.e) {
        return top;
    }
    return here + g.e;
}

Bytes spread_penalty(const GranuleInput& g, int chosen) { return total_mass(g) - primary_mass(g, chosen); }

Bytes objective_o1(const Instance& inst, const Placement& x) {
    std::vector<Bytes> load(static_cast<std::size_t>(inst.machines), 0);
    for (std::size_t k = 0; k < inst.granules.size(); ++k) {
        const auto& g = inst.granules[k];
        for (int i = 0; i < inst.machines; ++i) {
            load[static_cast<std::size_t>(i)] += g.b[static_cast<std::size_t>(i)];
        }
        load[static_cast<std::size_t>(x[k])] += g.e;
    }
    return load.empty() ? 0 : *std::max_element(load.begin(), load.end());
}

Bytes objective_o2(const Instance& inst, const Placement& x) {
    Bytes total = 0;
    for (std::size_t k = 0; k < inst.granules.size(); ++k) {
        total += spread_penalty(inst.granules[k], x[k]);
    }
    return total;
}

namespace {

bool in_i0(const GranuleInput& g, int m) { return std::find(g.i0.begin(), g.i0.end(), m) != g.i0.end(); }

std::int64_t ft_penalty(const GranuleInput& g, int m) { return !g.f && in_i0(g, m) ? 1 : 0; }

}  // namespace

std::int64_t objective_o3(const Instance& inst, const Placement& x) {
    std::int64_t total = 0;
    for (std::size_t k = 0; k < inst.granules.size(); ++k) {
        total += ft_penalty(inst.granules[k], x[k]);
    }
    return total;
}

bool feasible(const Instance& inst, const Placement& x) {
    if (x.size() != inst.granules.size()) {
        return false;
    }
    std::map<int, std::vector<Bytes>> load;
    for (std::size_t k = 0; k < inst.granules.size(); ++k) {
        const auto& g = inst.granules[k];
        if (x[k] < 0 || x[k] >= inst.machines) {
            return false;
        }
        auto& l = load[g.job];
        l.resize(static_cast<std::size_t>(inst.machines), 0);
        for (int i = 0; i < inst.machines; ++i) {
            l[static_cast<std::size_t>(i)] += g.b[static_cast<std::size_t>(i)];
        }
        l[static_cast<std::size_t>(x[k])] += g.e;
    }
    for (const auto& [job, l] : load) {
        const Bytes q = inst.quotas.at(job);
        if (std::any_of(l.begin(), l.end(), [&](Bytes v) { return v > q; })) {
            return false;
        }
    }
    return true;
}

double weighted_objective(const Instance& inst, const Placement& x) {
    return inst.weights.w1 * static_cast<double>(objective_o1(inst, x)) +
           inst.weights.w2 * static_cast<double>(objective_o2(inst, x)) +
           inst.weights.w3 * static_cast<double>(objective_o3(inst, x));
}

namespace {

struct Search {
    const Instance& inst;
    int machines;
    std::size_t granules;
    std::vector<int> job_slot;  ///< granule -> dense job index
    std::vector<Bytes> quota;  ///< dense job index -> Q
    std::vector<std::vector<double>> step_cost;  ///< w2*O2 + w3*O3 contribution per (k, i)
    std::vector<double> min_rest;  ///< lower bound on step costs of granules k..end

    explicit Search(const Instance& in)
        : inst(in), machines(in.machines), granules(in.granules.size()), min_rest(in.granules.size() + 1, 0.0) {
        std::map<int, int> dense;
        for (const auto& g : inst.granules) {
            if (!dense.contains(g.job)) {
                const int id = static_cast<int>(dense.size());
                dense[g.job] = id;
                quota.push_back(inst.quotas.at(g.job));
            }
            job_slot.push_back(dense[g.job]);
        }
        step_cost.assign(granules, std::vector<double>(static_cast<std::size_t>(machines), 0.0));
        for (std::size_t k = 0; k < granules; ++k) {
            for (int i = 0; i < machines; ++i) {
                step_cost[k][static_cast<std::size_t>(i)] =
                    inst.weights.w2 * static_cast<double>(spread_penalty(inst.granules[k], i)) +
                    inst.weights.w3 * static_cast<double>(ft_penalty(inst.granules[k], i));
            }
        }
        for (std::size_t k = granules; k-- > 0;) {
            const auto& row = step_cost[k];
            min_rest[k] = min_rest[k + 1] + *std::min_element(row.begin(), row.end());
        }
    }

    struct State {
        std::vector<Bytes> load;  ///< all jobs, per machine
        std::vector<std::vector<Bytes>> job_load;  ///< dense job, machine
        double partial = 0.0;  ///< step costs of assigned granules
        Placement x;
    };

    [[nodiscard]] State initial() const {
        State s;
        s.load.assign(static_cast<std::size_t>(machines), 0);
        s.job_load.assign(quota.size(), std::vector<Bytes>(static_cast<std::size_t>(machines), 0));
        for (std::size_t k = 0; k < granules; ++k) {
            for (int i = 0; i < machines; ++i) {
                const Bytes b = inst.granules[k].b[static_cast<std::size_t>(i)];
                s.load[static_cast<std::size_t>(i)] += b;
                s.job_load[static_cast<std::size_t>(job_slot[k])][static_cast<std::size_t>(i)] += b;
            }
        }
        s.x.assign(granules, 0);
        return s;
    }

    [[nodiscard]] bool base_feasible(const State& s) const {
        for (std::size_t j = 0; j < quota.size(); ++j) {
            for (Bytes v : s.job_load[j]) {
                if (v > quota[j]) {
                    return false;
                }
            }
        }
        return true;
    }

    static bool worse(double bound, double best) {
        return bound > best + 1e-9 * std::max(1.0, std::abs(best));
    }

    // Depth-first in lexicographic order; `best` may be tightened by other threads.
    template <typename BestRef>
    void dfs(State& s, std::size_t k, BestRef& best, Solution& found, bool& have) const {
        if (k == granules) {
            const double obj = weighted_objective(inst, s.x);
            if (!have || obj < found.objective) {
                found.x = s.x;
                found.objective = obj;
                have = true;
                best.offer(obj);
            }
            return;
        }
        const auto& g = inst.granules[k];
        const auto j = static_cast<std::size_t>(job_slot[k]);
        for (int i = 0; i < machines; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            if (s.job_load[j][ii] + g.e > quota[j]) {
                continue;
            }
            ++found.nodes;
            s.load[ii] += g.e;
            s.job_load[j][ii] += g.e;
            const double partial = s.partial + step_cost[k][ii];
            const Bytes max_load = *std::max_element(s.load.begin(), s.load.end());
            const double bound = inst.weights.w1 * static_cast<double>(max_load) + partial + min_rest[k + 1];
            if (!worse(bound, best.value())) {
                const double saved = s.partial;
                s.partial = partial;
                s.x[k] = i;
                dfs(s, k + 1, best, found, have);
                s.partial = saved;
            }
            s.load[ii] -= g.e;
            s.job_load[j][ii] -= g.e;
        }
    }
};

struct LocalBest {
    double v = std::numeric_limits<double>::infinity();
    void offer(double o) { v = std::min(v, o); }
    [[nodiscard]] double value() const { return v; }
};

struct SharedBest {
    std::atomic<double>* v;
    void offer(double o) {
        double cur = v->load(std::memory_order_relaxed);
        while (o < cur && !v->compare_exchange_weak(cur, o, std::memory_order_relaxed)) {
        }
    }
    [[nodiscard]] double value() const { return v->load(std::memory_order_relaxed); }
};

void check_size(const Instance& inst) {
    inst.validate();
    const double space = std::pow(static_cast<double>(inst.machines), static_cast<double>(inst.granules.size()));
    if (space > kMaxEnumeration) {
        throw Error(ErrorCode::too_large, std::to_string(inst.machines) + "^" +
                                              std::to_string(inst.granules.size()) + " placements exceed 1e7");
    }
}

Solution finish(const Instance& inst, Solution s) {
    s.o1 = objective_o1(inst, s.x);
    s.o2 = objective_o2(inst, s.x);
    s.o3 = objective_o3(inst, s.x);
    return s;
}

}  // namespace

Solution solve_exact_serial(const Instance& inst) {
    check_size(inst);
    Search search(inst);
    auto state = search.initial();
    if (!search.base_feasible(state)) {
        throw Error(ErrorCode::infeasible, "existing bytes already exceed a quota");
    }
    Solution found;
    bool have = false;
    LocalBest best;
    if (search.granules == 0) {
        found.objective = weighted_objective(inst, found.x);
        return finish(inst, found);
    }
    search.dfs(state, 0, best, found, have);
    if (!have) {
        throw Error(ErrorCode::infeasible, "no placement satisfies the quotas");
    }
    return finish(inst, found);
}

Solution solve_exact(const Instance& inst) {
    check_size(inst);
    Search search(inst);
    const auto root = search.initial();
    if (!search.base_feasible(root)) {
        throw Error(ErrorCode::infeasible, "existing bytes already exceed a quota");
    }
    if (search.granules == 0) {
        Solution s;
        s.objective = weighted_objective(inst, s.x);
        return finish(inst, s);
    }

    const int branches = inst.machines;
    std::vector<Solution> found(static_cast<std::size_t>(branches));
    std::vector<char> have(static_cast<std::size_t>(branches), 0);
    std::atomic<double> shared{std::numeric_limits<double>::infinity()};
    const auto& g0 = inst.granules.front();
    const auto j0 = static_cast<std::size_t>(search.job_slot.front());

#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < branches; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        auto s = root;
        if (s.job_load[j0][ii] + g0.e > search.quota[j0]) {
            continue;
        }
        s.load[ii] += g0.e;
        s.job_load[j0][ii] += g0.e;
        s.partial = search.step_cost[0][ii];
        s.x[0] = i;
        SharedBest best{&shared};
        bool ok = false;
        found[ii].nodes = 1;
        search.dfs(s, 1, best, found[ii], ok);
        have[ii] = ok ? 1 : 0;
    }

    std::optional<std::size_t> pick;
    std::uint64_t nodes = 0;
    for (std::size_t i = 0; i < found.size(); ++i) {
        nodes += found[i].nodes;
        if (have[i] && (!pick || found[i].objective < found[*pick].objective)) {
            pick = i;
        }
    }
    if (!pick) {
        throw Error(ErrorCode::infeasible, "no placement satisfies the quotas");
    }
    auto out = found[*pick];
    out.nodes = nodes;
    return finish(inst, out);
}

Placement heuristic_placement(const Instance& inst) {
    inst.validate();
    std::set<int> jobs;
    Bytes capacity = 0;
    for (const auto& [j, q] : inst.quotas) {
        jobs.insert(j);
        capacity += q;
    }
    auto cluster = ClusterState::uniform(inst.machines, std::max<Bytes>(capacity, 1), 1.0);
    for (const auto& g : inst.granules) {
        for (int i = 0; i < inst.machines; ++i) {
            cluster.at(i).per_job_stored[g.job] += g.b[static_cast<std::size_t>(i)];
        }
    }
    QuotaTable quota;
    quota.per_job = inst.quotas;

    auto candidates_for = [&](const std::vector<std::size_t>& ks, int job) {
        std::vector<MachineCandidate> out;
        for (const auto& m : cluster.machines) {
            MachineCandidate c;
            c.id = m.id;
            c.load = m.stored();
            c.job_usage = m.job_stored(job);
            for (auto k : ks) {
                const auto& g = inst.granules[k];
                c.data_local = c.data_local || g.b[static_cast<std::size_t>(m.id)] > 0;
                if (in_i0(g, m.id)) {
                    c.ft_level = 0;
                }
            }
            out.push_back(c);
        }
        return out;
    };
    auto least_used = [&](int job) {
        MachineId best = 0;
        for (const auto& m : cluster.machines) {
            if (m.job_stored(job) < cluster.at(best).job_stored(job)) {
                best = m.id;
            }
        }
        return best;
    };
    auto assign = [&](Placement& x, std::size_t k, MachineId m) {
        const auto& g = inst.granules[k];
        const Bytes q = quota.of(g.job);
        if (cluster.at(m).job_stored(g.job) + g.e > q) {
            // Quota guard, as on the ingest path: reopen where the bytes still fit.
            try {
                m = select_machines(1, candidates_for({k}, g.job), static_cast<double>(q - g.e) + 1.0).front();
            } catch (const Error&) {
                m = least_used(g.job);
            }
        }
        x[k] = m;
        cluster.at(m).per_job_stored[inst.granules[k].job] += inst.granules[k].e;
    };

    Placement x(inst.granules.size(), 0);
    std::map<int, std::vector<std::size_t>> fresh;
    for (std::size_t k = 0; k < inst.granules.size(); ++k) {
        const auto& g = inst.granules[k];
        if (total_mass(g) - g.e == 0) {
            fresh[g.job].push_back(k);
            continue;
        }
        // Existing granule: keep filling its primary unless that machine is at risk (h5).
        const int p = primary_machine(g);
        if (static_cast<double>(cluster.at(p).job_stored(g.job)) < quota.pressure_limit(g.job)) {
            assign(x, k, p);
            continue;
        }
        auto cands = candidates_for({k}, g.job);
        std::erase_if(cands, [&](const MachineCandidate& c) { return c.id == p; });
        try {
            assign(x, k, select_machines(1, cands, quota.pressure_limit(g.job)).front());
        } catch (const Error&) {
            assign(x, k, least_used(g.job));
        }
    }
    for (const auto& [job, ks] : fresh) {
        // New stage: h2 sizing, h3 selection, h4 round-robin.
        const int m_v = target_machine_count(job, cluster, quota);
        std::vector<MachineId> machines;
        try {
            machines = select_machines(m_v, candidates_for(ks, job), quota.pressure_limit(job));
        } catch (const Error&) {
            machines = {least_used(job)};
        }
        const auto plan = spread_uniform(ks.size(), machines);
        for (std::size_t n = 0; n < ks.size(); ++n) {
            assign(x, ks[n], plan.assignment[n]);
        }
    }
    return x;
}

Instance random_instance(std::mt19937_64& rng, const RandomParams& params) {
    auto uniform = [&](int lo, int hi) {
        return lo + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
    };
    auto chance = [&](double p) { return uniform01(rng) < p; };

    Instance inst;
    inst.machines = uniform(2, std::max(2, params.max_machines));
    const int granules = uniform(1, std::max(1, params.max_granules));
    const int jobs = uniform(1, std::max(1, params.max_jobs));
    const Bytes e = params.unit * uniform(1, 4);
    std::map<int, Bytes> mass;
    std::map<int, std::vector<Bytes>> base;
    for (int k = 0; k < granules; ++k) {
        GranuleInput g;
        g.job = uniform(0, jobs - 1);
        g.b.assign(static_cast<std::size_t>(inst.machines), 0);
        if (chance(0.5)) {
            const int holders = uniform(1, 2);
            for (int h = 0; h < holders; ++h) {
                g.b[static_cast<std::size_t>(uniform(0, inst.machines - 1))] += params.unit * uniform(1, 6);
            }
        }
        g.e = e;
        for (int i = 0; i < inst.machines; ++i) {
            if (chance(0.3)) {
                g.i0.push_back(i);
            }
        }
        g.f = chance(0.25);
        mass[g.job] += total_mass(g);
        auto& bj = base[g.job];
        bj.resize(static_cast<std::size_t>(inst.machines), 0);
        for (int i = 0; i < inst.machines; ++i) {
            bj[static_cast<std::size_t>(i)] += g.b[static_cast<std::size_t>(i)];
        }
        inst.granules.push_back(std::move(g));
    }
    for (const auto& [job, p] : mass) {
        const double factor = std::uniform_real_distribution<double>(1.0, 2.0)(rng);
        const Bytes even = static_cast<Bytes>(std::ceil(factor * static_cast<double>(p) / inst.machines));
        const auto& bj = base[job];
        inst.quotas[job] = std::max(even, *std::max_element(bj.begin(), bj.end()) + e);
    }
    inst.weights = inst.default_weights();
    return inst;
}

}  // namespace granary::ilp

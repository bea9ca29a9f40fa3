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
#include "granary/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace granary {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

double uniform01(std::mt19937_64& rng) noexcept { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(std::mt19937_64& rng, double mean) noexcept { return -mean * std::log1p(-uniform01(rng)); }

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) noexcept {
    return n == 0 ? 0 : static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n));
}

namespace {

// Largest-remainder apportionment of `total` by `weights`.
std::vector<std::int64_t> apportion(std::int64_t total, const std::vector<double>& weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::int64_t> out(weights.size(), 0);
    if (sum <= 0.0 || total <= 0) {
        return out;
    }
    std::vector<std::pair<double, std::size_t>> rem;
    std::int64_t given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / sum;
        out[i] = static_cast<std::int64_t>(std::floor(exact));
        given += out[i];
        rem.emplace_back(exact - static_cast<double>(out[i]), i);
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t r = 0; given < total; ++r, ++given) {
        ++out[rem[r % rem.size()].second];
    }
    return out;
}

std::int64_t draw_value(const DataModel& model, std::uint64_t key, std::uint64_t key_space, std::mt19937_64& rng) {
    const double frac = static_cast<double>(key) / static_cast<double>(key_space);
    for (const auto& band : model.value_bands) {
        if (frac >= band.lo && frac < band.hi) {
            return band.min + static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(band.max - band.min)));
        }
    }
    return static_cast<std::int64_t>(uniform_below(rng, 1024));
}

}  // namespace

std::vector<Record> generate_records(const DataModel& model, std::uint64_t seed, std::uint64_t key_space) {
    std::mt19937_64 rng(seed);
    std::vector<Record> out;
    out.reserve(static_cast<std::size_t>(model.records));
    std::vector<std::uint64_t> keys;
    keys.reserve(out.capacity());

    const auto n = model.records;
    if (!model.key_bands.empty()) {
        std::vector<double> w;
        for (const auto& b : model.key_bands) {
            w.push_back(b.weight);
        }
        if (model.distribution == KeyDistribution::even) {
            // Stratified: exact per-band counts, evenly spaced keys inside each band.
            const auto counts = apportion(n, w);
            for (std::size_t bi = 0; bi < counts.size(); ++bi) {
                const auto& band = model.key_bands[bi];
                const double lo = band.lo * static_cast<double>(key_space);
                const double width = (band.hi - band.lo) * static_cast<double>(key_space);
                for (std::int64_t i = 0; i < counts[bi]; ++i) {
                    const double pos = lo + (static_cast<double>(i) + 0.5) * width / static_cast<double>(counts[bi]);
                    keys.push_back(std::min<std::uint64_t>(static_cast<std::uint64_t>(pos), key_space - 1));
                }
            }
        } else {
            std::vector<double> cdf;
            double acc = 0.0;
            for (double x : w) {
                acc += x;
                cdf.push_back(acc);
            }
            for (std::int64_t i = 0; i < n; ++i) {
                const double u = uniform01(rng) * acc;
                const auto bi = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
                const auto& band = model.key_bands[std::min(bi, cdf.size() - 1)];
                const double pos = (band.lo + uniform01(rng) * (band.hi - band.lo)) * static_cast<double>(key_space);
                keys.push_back(std::min<std::uint64_t>(static_cast<std::uint64_t>(pos), key_space - 1));
            }
        }
    } else if (model.zipf > 0.0) {
        const auto ranks = std::max<std::int64_t>(1, model.distinct_keys);
        std::vector<double> cdf(static_cast<std::size_t>(ranks));
        double acc = 0.0;
        for (std::int64_t r = 0; r < ranks; ++r) {
            acc += 1.0 / std::pow(static_cast<double>(r + 1), model.zipf);
            cdf[static_cast<std::size_t>(r)] = acc;
        }
        const std::uint64_t salt = splitmix64(seed ^ 0x5a17ULL);
        for (std::int64_t i = 0; i < n; ++i) {
            const double u = uniform01(rng) * acc;
            const auto r = static_cast<std::uint64_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            keys.push_back(splitmix64(std::min<std::uint64_t>(r, static_cast<std::uint64_t>(ranks - 1)) ^ salt) %
                           key_space);
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            keys.push_back(uniform_below(rng, key_space));
        }
    }

    // Emission order is a seeded permutation so granules fill concurrently.
    for (std::size_t i = keys.size(); i > 1; --i) {
        std::swap(keys[i - 1], keys[uniform_below(rng, i)]);
    }
    for (auto k : keys) {
        out.push_back({k, model.per_record_bytes, draw_value(model, k, key_space, rng)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_spec, what); }

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        bad(std::string("field '") + key + "': " + e.what());
    }
}

const Json& need(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        bad(std::string("missing field '") + key + "'");
    }
    return j.at(key);
}

StatusDecision decision_from_json(const Json& j) {
    StatusDecision d;
    if (j.is_string()) {
        d.kind = decision_kind_from_string(j.get<std::string>());
    } else {
        d.kind = decision_kind_from_string(need(j, "kind").get<std::string>());
        d.logic_id = get_or<std::string>(j, "logic_id", "");
    }
    if (d.kind == DecisionKind::replace && d.logic_id.empty()) {
        bad("replace decision needs a logic_id");
    }
    return d;
}

Json decision_to_json(const StatusDecision& d) {
    Json j;
    j["kind"] = to_string(d.kind);
    if (d.kind == DecisionKind::replace) {
        j["logic_id"] = d.logic_id;
    }
    return j;
}

StageSpec stage_from_json(const Json& j) {
    StageSpec s;
    s.id = need(j, "id").get<std::string>();
    s.compute_type = compute_type_from_string(get_or<std::string>(j, "compute_type", "stateless"));
    if (j.contains("trigger")) {
        const auto& t = j.at("trigger");
        s.trigger.kind = trigger_kind_from_string(get_or<std::string>(t, "kind", "default_batch"));
        s.trigger.x = get_or<std::int64_t>(t, "x", 100);
        s.trigger.counter_id = get_or<std::string>(t, "counter_id", "");
        s.trigger.threshold = get_or<std::int64_t>(t, "threshold", 0);
    }
    const auto& o = need(j, "output");
    s.output = DataModel::from_total(get_or<Bytes>(o, "bytes", 0), get_or<std::int64_t>(o, "records", 0),
                                     get_or<double>(o, "zipf", 0.0));
    const auto dist = get_or<std::string>(o, "distribution", "zipf");
    if (dist == "even") {
        s.output.distribution = KeyDistribution::even;
    } else if (dist != "zipf") {
        bad("unknown distribution '" + dist + "'");
    }
    s.output.distinct_keys = get_or<std::int64_t>(o, "distinct_keys", 4096);
    if (o.contains("key_bands")) {
        for (const auto& b : o.at("key_bands")) {
            KeyBand kb{get_or<double>(b, "lo", 0.0), get_or<double>(b, "hi", 1.0), get_or<double>(b, "weight", 1.0)};
            if (!(kb.lo >= 0.0 && kb.lo < kb.hi && kb.hi <= 1.0 && kb.weight >= 0.0)) {
                bad("key band must satisfy 0 <= lo < hi <= 1");
            }
            s.output.key_bands.push_back(kb);
        }
    }
    if (o.contains("value_bands")) {
        for (const auto& b : o.at("value_bands")) {
            ValueBand vb{get_or<double>(b, "lo", 0.0), get_or<double>(b, "hi", 1.0),
                         get_or<std::int64_t>(b, "min", 0), get_or<std::int64_t>(b, "max", 1024)};
            if (vb.max <= vb.min) {
                bad("value band needs max > min");
            }
            s.output.value_bands.push_back(vb);
        }
    }
    s.logic_id = get_or<std::string>(j, "logic_id", "default");
    if (j.contains("monitors")) {
        for (const auto& m : j.at("monitors")) {
            s.monitors.push_back({need(m, "counter_id").get<std::string>(),
                                  compare_op_from_string(need(m, "op").get<std::string>()),
                                  get_or<std::int64_t>(m, "threshold", 0)});
        }
    }
    if (j.contains("status_rules")) {
        for (const auto& r : j.at("status_rules")) {
            s.status_rules.push_back({need(r, "counter_id").get<std::string>(),
                                      compare_op_from_string(need(r, "op").get<std::string>()),
                                      get_or<std::int64_t>(r, "threshold", 0), decision_from_json(need(r, "decision"))});
        }
    }
    s.partitions = get_or<int>(j, "partitions", 1);
    s.input_bytes = get_or<Bytes>(j, "input_bytes", 0);
    return s;
}

Json stage_to_json(const StageSpec& s) {
    Json j;
    j["id"] = s.id;
    j["compute_type"] = to_string(s.compute_type);
    Json t;
    t["kind"] = to_string(s.trigger.kind);
    t["x"] = s.trigger.x;
    if (s.trigger.kind == TriggerKind::custom_counter) {
        t["counter_id"] = s.trigger.counter_id;
        t["threshold"] = s.trigger.threshold;
    }
    j["trigger"] = t;
    Json o;
    o["bytes"] = s.output.total_bytes();
    o["records"] = s.output.records;
    o["zipf"] = s.output.zipf;
    o["distribution"] = s.output.distribution == KeyDistribution::even ? "even" : "zipf";
    o["distinct_keys"] = s.output.distinct_keys;
    if (!s.output.key_bands.empty()) {
        Json bands = Json::array();
        for (const auto& b : s.output.key_bands) {
            bands.push_back({{"lo", b.lo}, {"hi", b.hi}, {"weight", b.weight}});
        }
        o["key_bands"] = bands;
    }
    if (!s.output.value_bands.empty()) {
        Json bands = Json::array();
        for (const auto& b : s.output.value_bands) {
            bands.push_back({{"lo", b.lo}, {"hi", b.hi}, {"min", b.min}, {"max", b.max}});
        }
        o["value_bands"] = bands;
    }
    j["output"] = o;
    j["logic_id"] = s.logic_id;
    Json mons = Json::array();
    for (const auto& m : s.monitors) {
        mons.push_back({{"counter_id", m.counter_id}, {"op", to_string(m.op)}, {"threshold", m.threshold}});
    }
    j["monitors"] = mons;
    Json rules = Json::array();
    for (const auto& r : s.status_rules) {
        rules.push_back({{"counter_id", r.counter_id},
                         {"op", to_string(r.op)},
                         {"threshold", r.threshold},
                         {"decision", decision_to_json(r.decision)}});
    }
    j["status_rules"] = rules;
    j["partitions"] = s.partitions;
    j["input_bytes"] = s.input_bytes;
    return j;
}

}  // namespace

Workload workload_from_json(const Json& j) {
    Workload w;
    try {
        for (const auto& jj : need(j, "jobs")) {
            JobSpec job;
            job.id = need(jj, "id").get<std::string>();
            job.arrival_time = get_or<double>(jj, "arrival_time_s", 0.0);
            if (job.arrival_time < 0.0) {
                bad("job " + job.id + ": negative arrival time");
            }
            for (const auto& s : need(jj, "stages")) {
                job.stages.push_back(stage_from_json(s));
            }
            if (jj.contains("edges")) {
                for (const auto& e : jj.at("edges")) {
                    if (!e.is_array() || e.size() != 2) {
                        bad("job " + job.id + ": edges are [from, to] pairs");
                    }
                    job.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
                }
            }
            w.jobs.push_back(std::move(job));
        }
    } catch (const nlohmann::json::exception& e) {
        bad(e.what());
    }
    std::set<std::string> ids;
    for (const auto& job : w.jobs) {
        if (!ids.insert(job.id).second) {
            bad("duplicate job id " + job.id);
        }
    }
    return w;
}

Json workload_to_json(const Workload& w) {
    Json jobs = Json::array();
    for (const auto& job : w.jobs) {
        Json j;
        j["id"] = job.id;
        j["arrival_time_s"] = job.arrival_time;
        Json stages = Json::array();
        for (const auto& s : job.stages) {
            stages.push_back(stage_to_json(s));
        }
        j["stages"] = stages;
        Json edges = Json::array();
        for (const auto& [a, b] : job.edges) {
            edges.push_back(Json::array({a, b}));
        }
        j["edges"] = edges;
        jobs.push_back(j);
    }
    Json out;
    out["jobs"] = jobs;
    return out;
}

std::string workload_hash(const Workload& w) {
    const auto text = workload_to_json(w).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

ilp::Instance ilp_instance_from_json(const Json& j) {
    ilp::Instance inst;
    try {
        inst.machines = need(j, "machines").get<int>();
        const auto& gs = need(j, "granules");
        const Json i0 = j.contains("i0") ? j.at("i0") : Json::array();
        const Json f = j.contains("f") ? j.at("f") : Json::array();
        for (std::size_t k = 0; k < gs.size(); ++k) {
            ilp::GranuleInput g;
            g.job = get_or<int>(gs[k], "job", 0);
            g.b = need(gs[k], "b").get<std::vector<Bytes>>();
            g.e = get_or<Bytes>(gs[k], "e", 0);
            if (k < i0.size()) {
                g.i0 = i0[k].get<std::vector<int>>();
            }
            if (k < f.size()) {
                g.f = f[k].is_boolean() ? f[k].get<bool>() : f[k].get<int>() != 0;
            }
            inst.granules.push_back(std::move(g));
        }
        const auto& q = need(j, "quotas");
        if (q.is_array()) {
            for (std::size_t i = 0; i < q.size(); ++i) {
                inst.quotas[static_cast<int>(i)] = q[i].get<Bytes>();
            }
        } else if (q.is_object()) {
            for (const auto& [k, v] : q.items()) {
                inst.quotas[std::stoi(k)] = v.get<Bytes>();
            }
        } else {
            inst.quotas[0] = q.get<Bytes>();
        }
        if (j.contains("weights") && !j.at("weights").is_null()) {
            const auto& w = j.at("weights");
            if (w.is_array() && w.size() == 3) {
                inst.weights = {w[0].get<double>(), w[1].get<double>(), w[2].get<double>()};
            } else {
                inst.weights = {get_or<double>(w, "w1", 1.0), get_or<double>(w, "w2", 1.0),
                                get_or<double>(w, "w3", 1.0)};
            }
        } else {
            inst.weights = inst.default_weights();
        }
    } catch (const nlohmann::json::exception& e) {
        bad(e.what());
    } catch (const std::invalid_argument& e) {
        bad(std::string("quota key: ") + e.what());
    }
    inst.validate();
    return inst;
}

Json ilp_instance_to_json(const ilp::Instance& inst) {
    Json j;
    j["machines"] = inst.machines;
    Json gs = Json::array();
    Json i0 = Json::array();
    Json f = Json::array();
    for (const auto& g : inst.granules) {
        gs.push_back({{"job", g.job}, {"b", g.b}, {"e", g.e}});
        i0.push_back(g.i0);
        f.push_back(g.f ? 1 : 0);
    }
    j["granules"] = gs;
    Json q = Json::object();
    for (const auto& [job, v] : inst.quotas) {
        q[std::to_string(job)] = v;
    }
    j["quotas"] = q;
    j["i0"] = i0;
    j["f"] = f;
    j["weights"] = Json::array({inst.weights.w1, inst.weights.w2, inst.weights.w3});
    return j;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_spec, path + ": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write " + path);
    }
    out << text;
    if (!out) {
        throw Error(ErrorCode::io, "short write to " + path);
    }
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

namespace {

DataModel sized(double gb, std::int64_t records, double zipf) {
    const auto per_record = std::max<Bytes>(1, static_cast<Bytes>(std::llround(gb * static_cast<double>(kGB) /
                                                                                static_cast<double>(records))));
    return DataModel::from_total(per_record * records, records, zipf);
}

StageSpec make_stage(const std::string& id, ComputeType type, TriggerKind trigger, DataModel out, int partitions) {
    StageSpec s;
    s.id = id;
    s.compute_type = type;
    s.trigger.kind = trigger;
    s.output = std::move(out);
    s.partitions = partitions;
    return s;
}

std::vector<double> arrivals(std::mt19937_64& rng, int jobs, double mean) {
    std::vector<double> out;
    double t = 0.0;
    for (int i = 0; i < jobs; ++i) {
        if (i > 0) {
            t += exponential(rng, mean);
        }
        out.push_back(t);
    }
    return out;
}

JobSpec batch_chain_job(std::mt19937_64& rng, const GenParams& p, int idx) {
    JobSpec job;
    job.id = "job" + std::to_string(idx);
    const int length = 2 + static_cast<int>(uniform_below(rng, 3));
    double gb = p.scale * (1.0 + 3.0 * uniform01(rng));
    for (int s = 0; s < length; ++s) {
        const bool last = s + 1 == length;
        auto stage = make_stage("v" + std::to_string(s + 1), last ? ComputeType::stateful_ca : ComputeType::stateless,
                                TriggerKind::default_batch, sized(gb, p.records, p.zipf), 4);
        job.stages.push_back(std::move(stage));
        if (s > 0) {
            job.edges.emplace_back("v" + std::to_string(s), "v" + std::to_string(s + 1));
        }
        gb *= 0.5 + 0.5 * uniform01(rng);
    }
    return job;
}

JobSpec skewed_join_job(const GenParams& p, int idx) {
    JobSpec job;
    job.id = "join" + std::to_string(idx);
    auto v1 = make_stage("v1", ComputeType::stateless, TriggerKind::default_batch, sized(5.0 * p.scale, p.records, 0.0),
                         5);
    v1.output.distribution = KeyDistribution::even;
    // 1/5 of the bytes in the lower half of the key space, 4/5 in the upper half.
    v1.output.key_bands = {{0.0, 0.125, 1.0}, {0.5, 1.0, 4.0}};
    auto v2 = make_stage("v2", ComputeType::stateful_non_ca, TriggerKind::default_batch,
                         sized(1.0 * p.scale, p.records, 0.0), 2);
    auto v3 = make_stage("v3", ComputeType::stateful_ca, TriggerKind::default_batch,
                         sized(0.1 * p.scale, std::max<std::int64_t>(1, p.records / 10), 0.0), 12);
    job.stages = {v1, v2, v3};
    job.edges = {{"v1", "v2"}, {"v2", "v3"}};
    return job;
}

JobSpec streaming_job(const GenParams& p, int idx) {
    JobSpec job;
    job.id = "stream" + std::to_string(idx);
    auto src = make_stage("source", ComputeType::stateless, TriggerKind::default_streaming,
                          sized(1.0 * p.scale, p.records, p.zipf), 4);
    src.trigger.x = 100;
    auto win = make_stage("window", ComputeType::stateful_ca, TriggerKind::default_streaming,
                          sized(0.2 * p.scale, std::max<std::int64_t>(1, p.records / 5), p.zipf), 4);
    win.trigger.x = 100;
    auto sink = make_stage("sink", ComputeType::stateful_ca, TriggerKind::default_batch,
                           sized(0.01 * p.scale, std::max<std::int64_t>(1, p.records / 100), 0.0), 1);
    job.stages = {src, win, sink};
    job.edges = {{"source", "window"}, {"window", "sink"}};
    return job;
}

JobSpec graph_iterative_job(const GenParams& p, int idx) {
    JobSpec job;
    job.id = "graph" + std::to_string(idx);
    const int k = std::max(1, p.iterations);
    for (int i = 0; i < k; ++i) {
        const bool last = i + 1 == k;
        auto s = make_stage("it" + std::to_string(i + 1), i == 0 ? ComputeType::stateless : ComputeType::stateful_ca,
                            last ? TriggerKind::default_batch : TriggerKind::pipelining,
                            sized(1.0 * p.scale, p.records, p.zipf), 4);
        s.trigger.x = 1000;
        job.stages.push_back(std::move(s));
        if (i > 0) {
            job.edges.emplace_back("it" + std::to_string(i), "it" + std::to_string(i + 1));
        }
    }
    return job;
}

}  // namespace

const std::vector<std::string>& known_templates() {
    static const std::vector<std::string> names{"batch_chain", "skewed_join", "streaming", "graph_iterative"};
    return names;
}

Workload generate_workload(const GenParams& p) {
    if (std::find(known_templates().begin(), known_templates().end(), p.template_name) == known_templates().end()) {
        throw Error(ErrorCode::unknown_template, "'" + p.template_name + "'");
    }
    if (p.jobs < 1 || p.scale <= 0.0 || p.records < 1 || p.mean_interarrival_s <= 0.0) {
        throw Error(ErrorCode::invalid_spec, "scale parameters must be positive");
    }
    std::mt19937_64 rng(mix_seed(p.seed, 0x6e6e));
    const auto at = arrivals(rng, p.jobs, p.mean_interarrival_s);
    Workload w;
    for (int i = 0; i < p.jobs; ++i) {
        JobSpec job;
        if (p.template_name == "batch_chain") {
            job = batch_chain_job(rng, p, i);
        } else if (p.template_name == "skewed_join") {
            job = skewed_join_job(p, i);
        } else if (p.template_name == "streaming") {
            job = streaming_job(p, i);
        } else {
            job = graph_iterative_job(p, i);
        }
        job.arrival_time = at[static_cast<std::size_t>(i)];
        w.jobs.push_back(std::move(job));
    }
    return w;
}

}  // namespace granary

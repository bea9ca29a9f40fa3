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
#include "granary/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

namespace granary::cli {

namespace fs = std::filesystem;

namespace {

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::too_large:
        case ErrorCode::infeasible:
            return kSolverError;
        case ErrorCode::io:
        case ErrorCode::invalid_spec:
        case ErrorCode::config_invalid:
        case ErrorCode::unknown_template:
        case ErrorCode::workload_mismatch:
        case ErrorCode::cycle_detected:
        case ErrorCode::dangling_edge:
        case ErrorCode::duplicate_stage:
        case ErrorCode::illegal_pipelining_trigger:
        case ErrorCode::unsupported_fan_out:
            return kInputError;
        default:
            return kRuntimeError;
    }
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) {
        throw Error(ErrorCode::io, "cannot create " + p.string() + ": " + ec.message());
    }
}

double safe_ratio(double a, double b) {
    if (b == 0.0) {
        return a == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
    return a / b;
}

Json ratio_stats(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean = xs.empty() ? 0.0 : mean / static_cast<double>(xs.size());
    return {{"mean", mean}, {"p50", percentile(xs, 50.0)}, {"p95", percentile(xs, 95.0)}, {"count", xs.size()}};
}

}  // namespace

double percentile(std::vector<double> xs, double p) {
    if (xs.empty()) {
        return 0.0;
    }
    std::sort(xs.begin(), xs.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(xs.size())));
    return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
    Workload workload;
    SimConfig base;
    try {
        workload = workload_from_json(read_json_file(o.workload));
        for (const auto& job : workload.jobs) {
            (void)build_job_graph(job);
        }
        if (o.config) {
            base = SimConfig::from_json(read_json_file(*o.config));
        }
        if (o.mode) {
            base.mode = mode_from_string(*o.mode);
        }
        if (o.seed) {
            base.seed = *o.seed;
        }
        if (o.reps < 1) {
            throw Error(ErrorCode::config_invalid, "--reps must be >= 1");
        }
        base.validate();
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }

    const auto started = utc_now();
    std::vector<std::optional<SimResult>> results(static_cast<std::size_t>(o.reps));
    std::vector<std::string> failures(static_cast<std::size_t>(o.reps));
    {
        const unsigned width = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                               static_cast<unsigned>(o.reps)));
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (unsigned w = 0; w < width; ++w) {
            pool.emplace_back([&] {
                for (int i = next++; i < o.reps; i = next++) {
                    SimConfig c = base;
                    c.seed = base.seed + static_cast<std::uint64_t>(i);
                    try {
                        results[static_cast<std::size_t>(i)] = run(workload, c);
                    } catch (const std::exception& e) {
                        failures[static_cast<std::size_t>(i)] = e.what();
                    }
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    Json manifest;
    manifest["started_utc"] = started;
    manifest["finished_utc"] = utc_now();
    manifest["workload"] = o.workload;
    manifest["config"] = o.config ? Json(*o.config) : Json(nullptr);
    manifest["mode"] = to_string(base.mode);
    manifest["runs"] = Json::array();
    int status = kOk;
    try {
        ensure_dir(o.out);
        for (int i = 0; i < o.reps; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            const fs::path dir = o.reps == 1 ? fs::path(o.out) : fs::path(o.out) / ("rep_" + std::to_string(i));
            const auto seed = base.seed + static_cast<std::uint64_t>(i);
            if (!results[idx]) {
                err << "error: rep " << i << ": " << failures[idx] << '\n';
                manifest["runs"].push_back({{"dir", dir.string()}, {"seed", seed}, {"error", failures[idx]}});
                status = kRuntimeError;
                continue;
            }
            ensure_dir(dir);
            const auto& r = *results[idx];
            write_text_file((dir / "trace.jsonl").string(), trace_to_jsonl(r.trace));
            write_text_file((dir / "metrics.json").string(), r.metrics.to_json().dump(2) + "\n");
            SimConfig c = base;
            c.seed = seed;
            write_text_file((dir / "config.json").string(), c.to_json().dump(2) + "\n");
            manifest["runs"].push_back({{"dir", dir.string()}, {"seed", seed}});
            out << dir.string() << ": mode=" << r.metrics.mode << " makespan=" << r.metrics.makespan
                << "s mean_jct=" << r.metrics.mean_jct << "s\n";
        }
        write_text_file((fs::path(o.out) / "manifest.json").string(), manifest.dump(2) + "\n");
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::io ? kInputError : kRuntimeError;
    }
    return status;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

Json compare_reports(const MetricsReport& a, const MetricsReport& b) {
    if (a.workload_hash != b.workload_hash) {
        throw Error(ErrorCode::workload_mismatch, a.workload_hash + " vs " + b.workload_hash);
    }
    Json r;
    r["workload_hash"] = a.workload_hash;
    r["mode_a"] = a.mode;
    r["mode_b"] = b.mode;
    std::vector<double> ratios;
    Json per_job = Json::object();
    for (const auto& [job, ja] : a.jct) {
        auto it = b.jct.find(job);
        if (it == b.jct.end()) {
            continue;
        }
        const double ratio = safe_ratio(ja, it->second);
        ratios.push_back(ratio);
        per_job[job] = {{"a", ja}, {"b", it->second}, {"ratio", ratio}};
    }
    r["jct_ratio"] = ratio_stats(ratios);
    r["jobs"] = per_job;
    r["makespan"] = {{"a", a.makespan}, {"b", b.makespan}, {"ratio", safe_ratio(a.makespan, b.makespan)}};
    r["mean_jct"] = {{"a", a.mean_jct}, {"b", b.mean_jct}, {"ratio", safe_ratio(a.mean_jct, b.mean_jct)}};
    Json stages = Json::array();
    for (const auto& sa : a.stages) {
        const auto* sb = b.stage(sa.job, sa.stage);
        if (!sb) {
            continue;
        }
        stages.push_back({{"job", sa.job},
                          {"stage", sa.stage},
                          {"a", sa.duration()},
                          {"b", sb->duration()},
                          {"ratio", safe_ratio(sa.duration(), sb->duration())}});
    }
    r["stage_duration"] = stages;
    r["dl_granule_fraction"] = {{"a", a.mean_dl_granule_fraction()}, {"b", b.mean_dl_granule_fraction()}};
    r["ft_granule_fraction"] = {{"a", a.mean_ft_granule_fraction()}, {"b", b.mean_ft_granule_fraction()}};
    r["dl_task_fraction"] = {{"a", a.dl_task_fraction}, {"b", b.dl_task_fraction}};
    r["load_max_over_ideal"] = {{"a", safe_ratio(a.load.max, a.load.ideal)}, {"b", safe_ratio(b.load.max, b.load.ideal)}};
    r["bytes_shuffled"] = {{"a", a.bytes_shuffled}, {"b", b.bytes_shuffled}};
    r["bytes_processed"] = {{"a", a.bytes_processed}, {"b", b.bytes_processed}};
    return r;
}

std::string compare_csv(const MetricsReport& a, const MetricsReport& b) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "job,jct_a,jct_b,ratio\n";
    for (const auto& [job, ja] : a.jct) {
        auto it = b.jct.find(job);
        if (it != b.jct.end()) {
            os << job << ',' << ja << ',' << it->second << ',' << safe_ratio(ja, it->second) << '\n';
        }
    }
    return os.str();
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b, std::optional<std::string> out_prefix,
                std::ostream& out, std::ostream& err) {
    MetricsReport a;
    MetricsReport b;
    try {
        a = MetricsReport::from_json(read_json_file((fs::path(dir_a) / "metrics.json").string()));
        b = MetricsReport::from_json(read_json_file((fs::path(dir_b) / "metrics.json").string()));
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    try {
        const auto report = compare_reports(a, b);
        out << report.dump(2) << '\n';
        if (out_prefix) {
            write_text_file(*out_prefix + ".json", report.dump(2) + "\n");
            write_text_file(*out_prefix + ".csv", compare_csv(a, b));
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// ilp
// ---------------------------------------------------------------------------

Json ilp_report(const ilp::Instance& inst, bool heuristic) {
    const auto sol = ilp::solve_exact(inst);
    Json r;
    r["machines"] = inst.machines;
    r["granules"] = inst.granules.size();
    r["optimum"] = sol.objective;
    r["placement"] = sol.x;
    r["o1"] = sol.o1;
    r["o2"] = sol.o2;
    r["o3"] = sol.o3;
    r["nodes"] = sol.nodes;
    if (heuristic) {
        const auto h = ilp::heuristic_placement(inst);
        const double hv = ilp::weighted_objective(inst, h);
        r["heuristic"] = {{"placement", h},
                          {"objective", hv},
                          {"feasible", ilp::feasible(inst, h)},
                          {"ratio", safe_ratio(hv, sol.objective)}};
    }
    return r;
}

int cmd_ilp(const IlpOptions& o, std::ostream& out, std::ostream& err) {
    if (o.instance.has_value() == o.random.has_value()) {
        err << "error: give exactly one of --instance or --random\n";
        return kInputError;
    }
    Json report;
    try {
        if (o.instance) {
            ilp::Instance inst;
            try {
                inst = ilp_instance_from_json(read_json_file(*o.instance));
                inst.validate();
            } catch (const Error& e) {
                err << "error: " << e.what() << '\n';
                return kInputError;
            }
            report = ilp_report(inst, o.heuristic);
        } else {
            if (*o.random < 1) {
                err << "error: --random needs a positive count\n";
                return kInputError;
            }
            std::mt19937_64 rng(o.seed);
            std::vector<double> ratios;
            int infeasible_heuristic = 0;
            int infeasible_exact = 0;
            Json rows = Json::array();
            for (int i = 0; i < *o.random; ++i) {
                const auto inst = ilp::random_instance(rng);
                Json row;
                try {
                    row = ilp_report(inst, true);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::infeasible) {
                        throw;
                    }
                    ++infeasible_exact;
                    rows.push_back({{"index", i}, {"optimum", nullptr}, {"heuristic", nullptr}, {"ratio", nullptr}});
                    continue;
                }
                if (!row["heuristic"]["feasible"].get<bool>()) {
                    ++infeasible_heuristic;
                } else {
                    ratios.push_back(row["heuristic"]["ratio"].get<double>());
                }
                rows.push_back({{"index", i},
                                {"optimum", row["optimum"]},
                                {"heuristic", row["heuristic"]["objective"]},
                                {"ratio", row["heuristic"]["ratio"]}});
            }
            double mean = 0.0;
            for (double x : ratios) {
                mean += x;
            }
            report["instances"] = *o.random;
            report["seed"] = o.seed;
            report["max_ratio"] = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
            report["mean_ratio"] = ratios.empty() ? 0.0 : mean / static_cast<double>(ratios.size());
            report["heuristic_infeasible"] = infeasible_heuristic;
            report["infeasible"] = infeasible_exact;
            report["rows"] = rows;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    const auto text = report.dump(2) + "\n";
    out << text;
    if (o.out) {
        try {
            write_text_file(*o.out, text);
        } catch (const Error& e) {
            err << "error: " << e.what() << '\n';
            return kInputError;
        }
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

int cmd_gen(const GenOptions& o, std::ostream& out, std::ostream& err) {
    try {
        if (o.params.jobs < 1 || o.params.iterations < 1 || !(o.params.scale > 0.0) ||
            !(o.params.mean_interarrival_s > 0.0) || o.params.records < 1) {
            throw Error(ErrorCode::config_invalid, "scale parameters must be positive");
        }
        const auto w = generate_workload(o.params);
        const auto text = workload_to_json(w).dump(2) + "\n";
        if (o.out.empty() || o.out == "-") {
            out << text;
        } else {
            write_text_file(o.out, text);
            out << o.out << ": " << w.jobs.size() << " job(s), hash " << workload_hash(w) << '\n';
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"granary: granule-based data-driven scheduling simulator"};
    app.require_subcommand(1);

    RunOptions run_opts;
    std::string mode;
    std::uint64_t run_seed = 0;
    auto* run_cmd = app.add_subcommand("run", "simulate a workload");
    run_cmd->add_option("--workload", run_opts.workload, "workload JSON")->required();
    run_cmd->add_option("--config", run_opts.config, "SimConfig JSON");
    auto* mode_opt = run_cmd->add_option("--mode", mode, "data_driven | compute_centric")
                         ->check(CLI::IsMember({"data_driven", "compute_centric"}));
    auto* seed_opt = run_cmd->add_option("--seed", run_seed, "overrides the config seed");
    run_cmd->add_option("--out", run_opts.out, "output directory");
    run_cmd->add_option("--reps", run_opts.reps, "repetitions (seed, seed+1, ...)");

    std::string dir_a;
    std::string dir_b;
    std::string compare_out;
    auto* cmp_cmd = app.add_subcommand("compare", "compare two run directories (a / b ratios)");
    cmp_cmd->add_option("run_a", dir_a)->required();
    cmp_cmd->add_option("run_b", dir_b)->required();
    auto* cmp_out = cmp_cmd->add_option("--out", compare_out, "write <prefix>.json and <prefix>.csv");

    IlpOptions ilp_opts;
    std::string instance;
    int random = 0;
    std::string ilp_out;
    bool no_heuristic = false;
    auto* ilp_cmd = app.add_subcommand("ilp", "solve placement instances exactly");
    auto* inst_opt = ilp_cmd->add_option("--instance", instance, "instance JSON");
    auto* rand_opt = ilp_cmd->add_option("--random", random, "number of seeded random instances");
    ilp_cmd->add_option("--seed", ilp_opts.seed);
    ilp_cmd->add_flag("--no-heuristic", no_heuristic, "skip the heuristic comparison");
    auto* ilp_out_opt = ilp_cmd->add_option("--out", ilp_out, "also write the report here");

    GenOptions gen_opts;
    auto* gen_cmd = app.add_subcommand("gen", "generate a workload from a template");
    gen_cmd->add_option("--template", gen_opts.params.template_name)->required();
    gen_cmd->add_option("--seed", gen_opts.params.seed);
    gen_cmd->add_option("--out", gen_opts.out, "output file ('-' for stdout)");
    gen_cmd->add_option("--jobs", gen_opts.params.jobs);
    gen_cmd->add_option("--iters", gen_opts.params.iterations);
    gen_cmd->add_option("--scale", gen_opts.params.scale);
    gen_cmd->add_option("--records", gen_opts.params.records);
    gen_cmd->add_option("--zipf", gen_opts.params.zipf);
    gen_cmd->add_option("--interarrival", gen_opts.params.mean_interarrival_s, "mean seconds between arrivals");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }

    if (*run_cmd) {
        if (*mode_opt) {
            run_opts.mode = mode;
        }
        if (*seed_opt) {
            run_opts.seed = run_seed;
        }
        return cmd_run(run_opts, out, err);
    }
    if (*cmp_cmd) {
        return cmd_compare(dir_a, dir_b, *cmp_out ? std::optional(compare_out) : std::nullopt, out, err);
    }
    if (*ilp_cmd) {
        if (*inst_opt) {
            ilp_opts.instance = instance;
        }
        if (*rand_opt) {
            ilp_opts.random = random;
        }
        if (*ilp_out_opt) {
            ilp_opts.out = ilp_out;
        }
        ilp_opts.heuristic = !no_heuristic;
        return cmd_ilp(ilp_opts, out, err);
    }
    return cmd_gen(gen_opts, out, err);
}

}  // namespace granary::cli

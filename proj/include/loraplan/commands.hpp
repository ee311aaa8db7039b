#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "loraplan/allocators.hpp"
#include "loraplan/analytic.hpp"
#include "loraplan/csv.hpp"
#include "loraplan/errors.hpp"
#include "loraplan/scenario.hpp"
#include "loraplan/sim.hpp"
#include "loraplan/topology.hpp"

namespace loraplan {

struct RunOptions {
    std::vector<std::uint64_t> seeds;  // overrides the config list when nonempty
    int jobs = 1;
    bool header_timestamp = true;
};

inline constexpr const char* kReportHeader =
    "scenario,allocator,sweep_var,sweep_value,n_nodes,n_gateways,seed,metric,key,value";

namespace detail {

inline std::string timestamp_line(const std::string& cmd) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return "# loraplan " + cmd + " generated=" + buf;
}

// One sweep value resolved into the concrete knobs it overrides.
struct SweepPoint {
    double value = 0;
    int n_nodes = 0;
    double cell_radius_m = 0;
    double source_rate = 0;
    int gw_grid_side = 1;
    int gw_count = 1;
};

inline SweepPoint resolve_point(const ScenarioConfig& c, double value) {
    SweepPoint p;
    p.value = value;
    p.n_nodes = c.n_nodes;
    p.cell_radius_m = c.placement.cell_radius_m;
    p.source_rate = c.traffic.source_rate;
    p.gw_grid_side = c.placement.gw_grid_side;
    p.gw_count = c.placement.gw_count;
    if (c.sweep.variable == "n_nodes") {
        p.n_nodes = static_cast<int>(std::lround(value));
    } else if (c.sweep.variable == "cell_radius") {
        p.cell_radius_m = value;
    } else if (c.sweep.variable == "source_rate") {
        p.source_rate = value;
    } else if (c.sweep.variable == "n_gateways") {
        if (c.placement.generator == "grid")
            p.gw_grid_side = static_cast<int>(std::lround(std::sqrt(value)));
        else
            p.gw_count = static_cast<int>(std::lround(value));
    }
    return p;
}

inline Topology build_topology(const ScenarioConfig& c, const SweepPoint& p,
                               std::uint64_t seed) {
    Topology t;
    const auto& pl = c.placement;
    if (pl.generator == "uniform_disk") {
        t = place_uniform_disk(p.n_nodes, p.cell_radius_m, seed);
    } else if (pl.generator == "ring") {
        if (pl.ring_inner_m >= p.cell_radius_m)
            throw config_error("scenario.placement.ring_inner_m: must stay below the swept radius");
        t = place_ring(p.n_nodes, pl.ring_inner_m, p.cell_radius_m, seed);
    } else if (pl.generator == "grid") {
        t = place_uniform_square(p.n_nodes, p.gw_grid_side * pl.gw_spacing_m, seed);
        t.gateways = place_gateway_grid(p.gw_grid_side, pl.gw_spacing_m);
    } else if (pl.generator == "row") {
        t = place_uniform_disk(p.n_nodes, p.cell_radius_m, seed);
        t.gateways = place_gateway_row(p.gw_count, pl.gw_spacing_m);
    } else if (pl.generator == "triangle") {
        t = place_uniform_disk(p.n_nodes, p.cell_radius_m, seed);
        t.gateways = place_gateway_triangle(p.cell_radius_m);
    } else {  // trace
        t = import_rssi_trace(pl.trace_path, p.source_rate);
    }
    if (pl.generator != "trace") {
        compute_mean_rssi(t, c.tx_power_dbm, c.pathloss);
        const double r = t.cell_radius_m;
        t.ring_bounds = {0.25 * r, 0.5 * r, 0.75 * r, r};
    }
    for (auto& ed : t.devices) {
        ed.source_rate = p.source_rate;
        if (pl.n_operators <= 1)
            ed.operator_id = 0;
        else if (pl.generator == "triangle")  // one operator per cell
            ed.operator_id = strongest_gateway(ed) % pl.n_operators;
        else
            ed.operator_id = ed.id % pl.n_operators;
    }
    return t;
}

inline SfMap<double> spec_proportions(const AllocatorSpec& a) {
    if (a.proportions.empty()) return canonical_airtime_proportions();
    SfMap<double> p;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf)
        p[sf] = a.proportions[static_cast<std::size_t>(sf - kMinSf)];
    return p;
}

inline void merge_plan(SfPlan& into, const SfPlan& part) {
    for (auto [ed, sf] : part.assignment) into.assignment[ed] = sf;
    for (auto [ed, ph] : part.phase) into.phase[ed] = ph;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) into.counts[sf] += part.counts[sf];
    into.unallocated.insert(into.unallocated.end(), part.unallocated.begin(),
                            part.unallocated.end());
    for (const auto& [gw, row] : part.rounded_budgets) into.rounded_budgets[gw] = row;
    into.proportions_used = part.proportions_used;
}

// Operators are onboarded in id order; each one discounts the airtime already
// committed by the operators before it.
inline SfPlan allocate_multi_operator(const Topology& t, const Thresholds& thr,
                                      const SfMap<double>& p_sf, std::uint64_t seed,
                                      const SfMap<double>& toa) {
    std::set<int> operators;
    for (const auto& ed : t.devices) operators.insert(ed.operator_id);
    SfPlan merged;
    merged.proportions_used = p_sf;
    std::map<int, int> committed;
    for (int op : operators) {
        std::set<int> own;
        for (const auto& ed : t.devices)
            if (ed.operator_id == op) own.insert(ed.id);
        const OperatorContext ctx = make_operator_context(t, own, committed, thr, toa);
        const SfPlan part = explora_c_plus(t, thr, ctx, seed, p_sf, toa);
        merge_plan(merged, part);
        for (auto [ed, sf] : part.assignment) committed[ed] = sf;
    }
    std::sort(merged.unallocated.begin(), merged.unallocated.end());
    return merged;
}

inline SfPlan make_plan(const ScenarioConfig& c, const AllocatorSpec& a, const Topology& t,
                        std::uint64_t seed) {
    const SfMap<double> toa = toa_table(c.radio);
    if (a.name == "adr") return adr_legacy(t, c.thresholds);
    if (a.name == "fixed-sf") return fixed_sf(t, c.thresholds, a.sf);
    if (a.name == "explora-sf") return explora_sf(t, c.thresholds, seed);
    if (a.name == "explora-at") return explora_at(t, c.thresholds, spec_proportions(a));
    if (a.name == "rand-at") return rand_at(t, c.thresholds, spec_proportions(a), seed);
    if (a.name == "explora-c") return explora_c(t, c.thresholds, spec_proportions(a), seed);
    if (a.name == "explora-intersf") {
        const double beta = sir_coefficient(c.thresholds.intersf_rejection_db, c.pathloss.eta);
        return explora_intersf(t, c.thresholds, beta, seed, toa);
    }
    if (a.name == "explora-c-plus")
        return allocate_multi_operator(t, c.thresholds, spec_proportions(a), seed, toa);
    throw config_error("unknown allocator '" + a.name + "'");
}

inline void report_row(std::string& out, const std::string& scenario,
                       const std::string& allocator, const std::string& sweep_var,
                       double sweep_value, std::size_t n_nodes, std::size_t n_gateways,
                       const std::string& seed, const std::string& metric,
                       const std::string& key, double value) {
    out += scenario;
    out += ',';
    out += allocator;
    out += ',';
    out += sweep_var;
    out += ',';
    out += csv_double(sweep_value);
    out += ',';
    out += std::to_string(n_nodes);
    out += ',';
    out += std::to_string(n_gateways);
    out += ',';
    out += seed;
    out += ',';
    out += metric;
    out += ',';
    out += key;
    out += ',';
    out += csv_double(value);
    out += '\n';
}

template <class Fn>
void parallel_for(std::size_t n_tasks, int jobs, Fn&& fn) {
    if (jobs < 1) jobs = 1;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), n_tasks);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n_tasks);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Simulation sweep: every (sweep value, allocator, seed) combination becomes a
// block of long-format rows. Rows are assembled in task order, so the output
// bytes do not depend on --jobs.
inline void cmd_simulate(const ScenarioConfig& c, const RunOptions& opt, std::ostream& out) {
    validate(c);
    const std::vector<std::uint64_t>& seeds = opt.seeds.empty() ? c.seeds : opt.seeds;
    struct Task {
        double value;
        std::size_t alloc;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (double v : c.sweep.values)
        for (std::size_t a = 0; a < c.allocators.size(); ++a)
            for (std::uint64_t s : seeds) tasks.push_back({v, a, s});
    std::vector<std::string> blocks(tasks.size());
    detail::parallel_for(tasks.size(), opt.jobs, [&](std::size_t i) {
        const Task& task = tasks[i];
        const detail::SweepPoint p = detail::resolve_point(c, task.value);
        const Topology t = detail::build_topology(c, p, task.seed);
        const AllocatorSpec& a = c.allocators[task.alloc];
        const SfPlan plan = detail::make_plan(c, a, t, task.seed);
        SimOptions so;
        so.capture_enabled = c.capture;
        so.intersf_enabled = c.intersf;
        so.traffic = c.traffic.mode == "periodic" ? TrafficMode::periodic : TrafficMode::poisson;
        so.toa = toa_table(c.radio);
        so.shadow_sigma2_db2 = c.pathloss.sigma2_db2;
        const SimReport rep = run(t, plan, c.duration_s, c.thresholds, so, task.seed);
        std::string& b = blocks[i];
        const std::string seed_s = std::to_string(task.seed);
        const std::size_t n_dev = t.devices.size();
        const std::size_t n_gw = t.gateways.size();
        detail::report_row(b, c.name, a.name, c.sweep.variable, task.value, n_dev, n_gw, seed_s,
                           "der_global", "", rep.der_global);
        for (auto [sf, der] : rep.der_per_sf)
            detail::report_row(b, c.name, a.name, c.sweep.variable, task.value, n_dev, n_gw,
                               seed_s, "der_sf", std::to_string(sf), der);
        for (auto [ring, der] : rep.der_per_ring)
            detail::report_row(b, c.name, a.name, c.sweep.variable, task.value, n_dev, n_gw,
                               seed_s, "der_ring", std::to_string(ring), der);
        detail::report_row(b, c.name, a.name, c.sweep.variable, task.value, n_dev, n_gw, seed_s,
                           "unallocated", "", static_cast<double>(rep.unallocated_count));
    });
    if (opt.header_timestamp) out << detail::timestamp_line("simulate") << '\n';
    out << kReportHeader << '\n';
    for (const auto& b : blocks) out << b;
}

// Analytic curves over the sweep, no simulation. Per allocator the closed-form
// expected DER under the orthogonal, capture and inter-SF models; plus one
// block per sweep value with the model-optimal allocations.
inline void cmd_analyze(const ScenarioConfig& c, const RunOptions& opt, std::ostream& out) {
    validate(c);
    const SfMap<double> toa = toa_table(c.radio);
    std::map<int, double> toa_map;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) toa_map[sf] = toa[sf];
    const double alpha = sir_coefficient(c.thresholds.capture_sir_db, c.pathloss.eta);
    const double beta = sir_coefficient(c.thresholds.intersf_rejection_db, c.pathloss.eta);
    std::string body;
    for (double v : c.sweep.values) {
        const detail::SweepPoint p = detail::resolve_point(c, v);
        const double n_gw =
            c.placement.generator == "grid"
                ? static_cast<double>(p.gw_grid_side) * p.gw_grid_side
                : (c.placement.generator == "row" ? static_cast<double>(p.gw_count) : 1.0);
        for (const auto& a : c.allocators) {
            SfMap<double> prop{};
            if (a.name == "adr") {
                prop[kMinSf] = 1.0;  // unconstrained-cell view: everyone at SF7
            } else if (a.name == "fixed-sf") {
                prop[a.sf] = 1.0;
            } else if (a.name == "explora-sf") {
                for (int sf = kMinSf; sf <= kMaxSf; ++sf) prop[sf] = 1.0 / kNumSf;
            } else if (a.name == "explora-intersf") {
                const auto opt_n = optimal_allocation_intersf(p.n_nodes, toa_map,
                                                              InterSfParams{beta});
                for (auto [sf, n] : opt_n) prop[sf] = n / p.n_nodes;
            } else {
                prop = detail::normalize_proportions(detail::spec_proportions(a));
            }
            std::map<int, double> frac;
            for (int sf = kMinSf; sf <= kMaxSf; ++sf) frac[sf] = prop[sf] * p.n_nodes;
            const auto counts = round_allocation(frac, p.n_nodes);
            LoadProfile lp;
            lp.s = p.source_rate;
            lp.toa = toa;
            for (auto [sf, n] : counts) lp.n[sf] = static_cast<double>(n);
            double eder_capture = 0;
            for (int sf = kMinSf; sf <= kMaxSf; ++sf) {
                const double g = load(lp, sf) / n_gw;
                eder_capture += lp.n[sf] * capture_der(g, CaptureParams{alpha});
            }
            eder_capture /= total_nodes(lp);
            const std::size_t nn = static_cast<std::size_t>(p.n_nodes);
            const std::size_t ng = static_cast<std::size_t>(n_gw);
            detail::report_row(body, c.name, a.name, c.sweep.variable, v, nn, ng, "",
                               "eder_orth", "", expected_der_orthogonal(lp));
            detail::report_row(body, c.name, a.name, c.sweep.variable, v, nn, ng, "",
                               "eder_capture", "", eder_capture);
            detail::report_row(body, c.name, a.name, c.sweep.variable, v, nn, ng, "",
                               "eder_intersf", "", expected_der_intersf(lp, InterSfParams{beta}));
            for (int sf = kMinSf; sf <= kMaxSf; ++sf)
                detail::report_row(body, c.name, a.name, c.sweep.variable, v, nn, ng, "",
                                   "count", std::to_string(sf),
                                   static_cast<double>(counts.at(sf)));
        }
        const auto opt_orth = optimal_allocation_orthogonal(p.n_nodes, toa_map);
        const auto opt_inter = optimal_allocation_intersf(p.n_nodes, toa_map, InterSfParams{beta});
        const std::size_t nn = static_cast<std::size_t>(p.n_nodes);
        for (auto [sf, n] : opt_orth)
            detail::report_row(body, c.name, "-", c.sweep.variable, v, nn, 1, "", "opt_orth",
                               std::to_string(sf), n);
        for (auto [sf, n] : opt_inter)
            detail::report_row(body, c.name, "-", c.sweep.variable, v, nn, 1, "", "opt_intersf",
                               std::to_string(sf), n);
    }
    if (opt.header_timestamp) out << detail::timestamp_line("analyze") << '\n';
    out << kReportHeader << '\n';
    out << body;
}

namespace detail {

struct ReportRow {
    std::string scenario, allocator, sweep_var, sweep_value, seed, metric, key;
    std::size_t n_nodes = 0, n_gateways = 0;
    double value = 0;
};

inline std::vector<ReportRow> read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open report '" + path + "'");
    std::vector<ReportRow> rows;
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != kReportHeader)
                throw data_error(path + ": unexpected header '" + line + "'");
            saw_header = true;
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 10)
            throw data_error(path + ":" + std::to_string(line_no) + ": expected 10 fields");
        ReportRow r;
        r.scenario = f[0];
        r.allocator = f[1];
        r.sweep_var = f[2];
        r.sweep_value = f[3];
        r.seed = f[6];
        r.metric = f[7];
        r.key = f[8];
        try {
            r.n_nodes = static_cast<std::size_t>(std::stoull(f[4]));
            r.n_gateways = static_cast<std::size_t>(std::stoull(f[5]));
            r.value = std::stod(f[9]);
        } catch (const std::exception&) {
            throw data_error(path + ":" + std::to_string(line_no) + ": malformed numeric field");
        }
        rows.push_back(std::move(r));
    }
    if (!saw_header) throw data_error(path + ": missing header");
    return rows;
}

}  // namespace detail

// Merge simulation reports: per sweep point, mean and spread per allocator and
// all pairwise relative gains. Inputs must share the sweep axis.
inline void cmd_compare(const std::vector<std::string>& paths, const RunOptions& opt,
                        std::ostream& out) {
    if (paths.size() < 1) throw data_error("compare needs at least one report");
    std::vector<std::vector<detail::ReportRow>> files;
    for (const auto& p : paths) files.push_back(detail::read_report(p));

    std::string sweep_var;
    std::vector<std::string> axis;  // first-file order of sweep values
    std::set<std::string> axis_seen;
    for (std::size_t i = 0; i < files.size(); ++i) {
        std::set<std::string> vals;
        for (const auto& r : files[i]) {
            if (r.metric != "der_global") continue;
            if (sweep_var.empty()) sweep_var = r.sweep_var;
            if (r.sweep_var != sweep_var)
                throw data_error("sweep axis mismatch: variable '" + r.sweep_var + "' vs '" +
                                 sweep_var + "'");
            vals.insert(r.sweep_value);
            if (i == 0 && !axis_seen.count(r.sweep_value)) {
                axis_seen.insert(r.sweep_value);
                axis.push_back(r.sweep_value);
            }
        }
        if (i > 0 && vals != axis_seen) {
            std::string diff;
            for (const auto& v : vals)
                if (!axis_seen.count(v)) diff += (diff.empty() ? "" : " ") + v;
            for (const auto& v : axis_seen)
                if (!vals.count(v)) diff += (diff.empty() ? "" : " ") + v;
            throw data_error("sweep axis mismatch at points: " + diff);
        }
    }

    std::vector<std::string> allocators;  // first-appearance order
    std::set<std::string> alloc_seen;
    std::map<std::pair<std::string, std::string>, std::vector<double>> samples;
    std::map<std::string, std::pair<std::size_t, std::size_t>> sizes;  // value -> (n, gw)
    std::string scenario;
    for (const auto& rows : files)
        for (const auto& r : rows) {
            if (r.metric != "der_global") continue;
            if (scenario.empty()) scenario = r.scenario;
            if (!alloc_seen.count(r.allocator)) {
                alloc_seen.insert(r.allocator);
                allocators.push_back(r.allocator);
            }
            samples[{r.sweep_value, r.allocator}].push_back(r.value);
            sizes[r.sweep_value] = {r.n_nodes, r.n_gateways};
        }

    std::string body;
    for (const auto& v : axis) {
        const double vnum = std::stod(v);
        const auto [nn, ng] = sizes[v];
        std::map<std::string, double> mean;
        for (const auto& a : allocators) {
            auto it = samples.find({v, a});
            if (it == samples.end()) continue;
            const auto& s = it->second;
            double m = 0;
            for (double x : s) m += x;
            m /= static_cast<double>(s.size());
            double var = 0;
            for (double x : s) var += (x - m) * (x - m);
            const double sd = s.size() > 1 ? std::sqrt(var / (static_cast<double>(s.size()) - 1))
                                           : 0.0;
            mean[a] = m;
            detail::report_row(body, scenario, a, sweep_var, vnum, nn, ng, "", "mean_der", "", m);
            detail::report_row(body, scenario, a, sweep_var, vnum, nn, ng, "", "std_der", "", sd);
        }
        for (const auto& a : allocators)
            for (const auto& b : allocators) {
                if (a == b) continue;
                auto ia = mean.find(a), ib = mean.find(b);
                if (ia == mean.end() || ib == mean.end()) continue;
                const double gain = ib->second != 0 ? (ia->second - ib->second) / ib->second : 0;
                detail::report_row(body, scenario, a, sweep_var, vnum, nn, ng, "", "gain_vs", b,
                                   gain);
            }
    }
    if (opt.header_timestamp) out << detail::timestamp_line("compare") << '\n';
    out << kReportHeader << '\n';
    out << body;
}

// Materialize a trace-driven scenario bundle: scenario.json wired to the trace
// plus the CDF of the imported mean RSSI (strongest gateway per device).
inline void cmd_import_trace(const std::string& trace_path, const std::string& out_dir,
                             const RunOptions& opt) {
    const Topology t = import_rssi_trace(trace_path);
    ScenarioConfig c = preset("trace");
    c.placement.trace_path = trace_path;
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(std::filesystem::path(out_dir) / "scenario.json");
        if (!out) throw data_error("cannot write scenario.json under '" + out_dir + "'");
        out << serialize_scenario_text(c);
    }
    std::vector<double> rssi;
    rssi.reserve(t.devices.size());
    for (const auto& ed : t.devices) rssi.push_back(ed.mean_rssi.at(strongest_gateway(ed)));
    std::sort(rssi.begin(), rssi.end());
    std::ofstream out(std::filesystem::path(out_dir) / "rssi_cdf.csv");
    if (!out) throw data_error("cannot write rssi_cdf.csv under '" + out_dir + "'");
    if (opt.header_timestamp) out << detail::timestamp_line("import-trace") << '\n';
    out << "rssi_dbm,cdf\n";
    for (std::size_t i = 0; i < rssi.size(); ++i)
        out << csv_double(rssi[i]) << ','
            << csv_double(static_cast<double>(i + 1) / static_cast<double>(rssi.size())) << '\n';
}

}  // namespace loraplan

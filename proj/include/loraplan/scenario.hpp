#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "loraplan/allocators.hpp"
#include "loraplan/errors.hpp"
#include "loraplan/phy.hpp"

#include "json.hpp"

namespace loraplan {

using Json = nlohmann::ordered_json;

struct PlacementConfig {
    std::string generator = "uniform_disk";  // uniform_disk | ring | grid | row | triangle | trace
    double cell_radius_m = 12000.0;
    double ring_inner_m = 0.0;     // ring
    int gw_grid_side = 1;          // grid
    int gw_count = 1;              // row
    double gw_spacing_m = 12000.0; // grid / row
    int n_operators = 1;           // round-robin over device ids
    std::string trace_path;        // trace

    bool operator==(const PlacementConfig&) const = default;
};

struct TrafficConfig {
    std::string mode = "poisson";  // periodic | poisson
    double source_rate = 1.0 / 90.0;

    bool operator==(const TrafficConfig&) const = default;
};

struct AllocatorSpec {
    std::string name = "explora-at";
    int sf = 12;                      // fixed-sf only
    std::vector<double> proportions;  // empty -> airtime-equalizing defaults

    bool operator==(const AllocatorSpec&) const = default;
};

struct SweepConfig {
    std::string variable = "n_nodes";  // n_nodes | n_gateways | cell_radius | source_rate
    std::vector<double> values = {1000};

    bool operator==(const SweepConfig&) const = default;
};

struct ScenarioConfig {
    std::string name = "scenario";
    RadioParams radio;
    PathLossModel pathloss;
    Thresholds thresholds;
    PlacementConfig placement;
    TrafficConfig traffic;
    std::vector<AllocatorSpec> allocators = {AllocatorSpec{}};
    SweepConfig sweep;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    double duration_s = 90000.0;
    int n_nodes = 1000;
    double tx_power_dbm = 14.0;
    bool capture = true;
    bool intersf = false;

    bool operator==(const ScenarioConfig&) const = default;
};

inline const std::set<std::string>& allocator_names() {
    static const std::set<std::string> names = {"adr",     "fixed-sf",  "explora-sf",
                                                "explora-at", "rand-at", "explora-c",
                                                "explora-intersf", "explora-c-plus"};
    return names;
}

namespace detail {

inline void check_keys(const Json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw config_error(path + ": expected an object");
    for (const auto& item : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
                return item.key() == k;
            }) == allowed.end())
            throw config_error(path + ": unknown field '" + item.key() + "'");
    }
}

template <class T>
T get_field(const Json& j, const std::string& path, const char* key, const T& fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const Json::exception& e) {
        throw config_error(path + "." + key + ": " + e.what());
    }
}

inline SfMap<double> get_sf_map(const Json& j, const std::string& path, const char* key,
                                const SfMap<double>& fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    std::vector<double> v;
    try {
        v = it->get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw config_error(path + "." + key + ": " + e.what());
    }
    if (v.size() != kNumSf)
        throw config_error(path + "." + key + ": expected " + std::to_string(kNumSf) +
                           " values (SF7..SF12)");
    SfMap<double> m;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) m[sf] = v[static_cast<std::size_t>(sf - kMinSf)];
    return m;
}

inline Json sf_map_to_json(const SfMap<double>& m) {
    Json a = Json::array();
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) a.push_back(m[sf]);
    return a;
}

}  // namespace detail

inline void validate(const ScenarioConfig& c) {
    auto fail = [](const std::string& msg) { throw config_error(msg); };
    try {
        validate(c.radio);
    } catch (const std::domain_error& e) {
        fail(std::string("scenario.radio: ") + e.what());
    }
    try {
        validate(c.pathloss);
    } catch (const std::domain_error& e) {
        fail(std::string("scenario.pathloss: ") + e.what());
    }
    try {
        validate(c.thresholds);
    } catch (const std::domain_error& e) {
        fail(std::string("scenario.thresholds: ") + e.what());
    }
    static const std::set<std::string> generators = {"uniform_disk", "ring", "grid", "row",
                                                     "triangle", "trace"};
    if (!generators.count(c.placement.generator))
        fail("scenario.placement.generator: unknown generator '" + c.placement.generator + "'");
    if (c.placement.generator != "trace" && c.placement.generator != "grid" &&
        c.placement.cell_radius_m <= 0)
        fail("scenario.placement.cell_radius_m: must be positive");
    if (c.placement.generator == "ring" &&
        (c.placement.ring_inner_m < 0 || c.placement.ring_inner_m >= c.placement.cell_radius_m))
        fail("scenario.placement.ring_inner_m: must satisfy 0 <= r0 < cell_radius_m");
    if (c.placement.generator == "grid" && c.placement.gw_grid_side < 1)
        fail("scenario.placement.gw_grid_side: must be >= 1");
    if (c.placement.generator == "row" && c.placement.gw_count < 1)
        fail("scenario.placement.gw_count: must be >= 1");
    if ((c.placement.generator == "grid" || c.placement.generator == "row") &&
        c.placement.gw_spacing_m <= 0)
        fail("scenario.placement.gw_spacing_m: must be positive");
    if (c.placement.n_operators < 1) fail("scenario.placement.n_operators: must be >= 1");
    if (c.placement.generator == "trace" && c.placement.trace_path.empty())
        fail("scenario.placement.trace_path: required for the trace generator");
    if (c.traffic.mode != "periodic" && c.traffic.mode != "poisson")
        fail("scenario.traffic.mode: must be 'periodic' or 'poisson'");
    if (c.traffic.source_rate <= 0) fail("scenario.traffic.source_rate: must be positive");
    if (c.allocators.empty()) fail("scenario.allocators: at least one allocator required");
    for (std::size_t i = 0; i < c.allocators.size(); ++i) {
        const auto& a = c.allocators[i];
        const std::string path = "scenario.allocators[" + std::to_string(i) + "]";
        if (a.name.empty()) throw config_error(path + ".name: required");
        if (!allocator_names().count(a.name))
            throw config_error(path + ".name: unknown allocator '" + a.name + "'");
        if (a.name == "fixed-sf" && (a.sf < kMinSf || a.sf > kMaxSf))
            throw config_error(path + ".sf: must be in [7,12]");
        if (!a.proportions.empty()) {
            if (a.proportions.size() != kNumSf)
                throw config_error(path + ".proportions: expected 6 values (SF7..SF12)");
            double sum = 0;
            for (double p : a.proportions) {
                if (p < 0) throw config_error(path + ".proportions: values must be nonnegative");
                sum += p;
            }
            if (sum <= 0) throw config_error(path + ".proportions: must have positive mass");
        }
    }
    static const std::set<std::string> sweep_vars = {"n_nodes", "n_gateways", "cell_radius",
                                                     "source_rate"};
    if (!sweep_vars.count(c.sweep.variable))
        fail("scenario.sweep.variable: unknown variable '" + c.sweep.variable + "'");
    if (c.sweep.values.empty()) fail("scenario.sweep.values: at least one value required");
    for (double v : c.sweep.values)
        if (v <= 0) fail("scenario.sweep.values: values must be positive");
    if (c.sweep.variable == "n_gateways") {
        for (double v : c.sweep.values) {
            if (c.placement.generator == "grid") {
                const int side = static_cast<int>(std::lround(std::sqrt(v)));
                if (side * side != static_cast<int>(std::lround(v)))
                    fail("scenario.sweep.values: grid gateway counts must be perfect squares");
            } else if (c.placement.generator != "row") {
                fail("scenario.sweep.variable: n_gateways requires the grid or row generator");
            }
        }
    }
    if (c.seeds.empty()) fail("scenario.seeds: at least one seed required");
    if (c.duration_s <= 0) fail("scenario.duration_s: must be positive");
    if (c.n_nodes < 1) fail("scenario.n_nodes: must be >= 1");
}

inline ScenarioConfig parse_scenario(const Json& j) {
    using detail::check_keys;
    using detail::get_field;
    const ScenarioConfig def;
    ScenarioConfig c;
    check_keys(j, "scenario",
               {"name", "radio", "pathloss", "thresholds", "placement", "traffic", "allocators",
                "sweep", "seeds", "duration_s", "n_nodes", "tx_power_dbm", "capture", "intersf"});
    c.name = get_field(j, "scenario", "name", def.name);
    if (auto it = j.find("radio"); it != j.end()) {
        const std::string p = "scenario.radio";
        check_keys(*it, p,
                   {"bandwidth_hz", "spreading_factors", "rdd", "preamble_symbols",
                    "payload_bytes", "carrier_hz", "canonical_toa"});
        c.radio.bandwidth_hz = get_field(*it, p, "bandwidth_hz", def.radio.bandwidth_hz);
        c.radio.spreading_factors =
            get_field(*it, p, "spreading_factors", def.radio.spreading_factors);
        c.radio.rdd = get_field(*it, p, "rdd", def.radio.rdd);
        c.radio.preamble_symbols = get_field(*it, p, "preamble_symbols", def.radio.preamble_symbols);
        c.radio.payload_bytes = get_field(*it, p, "payload_bytes", def.radio.payload_bytes);
        c.radio.carrier_hz = get_field(*it, p, "carrier_hz", def.radio.carrier_hz);
        if (auto ct = it->find("canonical_toa"); ct != it->end()) {
            if (ct->is_null())
                c.radio.canonical_toa.reset();
            else
                c.radio.canonical_toa = detail::get_sf_map(*it, p, "canonical_toa",
                                                           canonical_toa_table());
        }
    }
    if (auto it = j.find("pathloss"); it != j.end()) {
        const std::string p = "scenario.pathloss";
        check_keys(*it, p, {"eta", "sigma2_db2", "ref_loss_db", "ref_distance_m"});
        c.pathloss.eta = get_field(*it, p, "eta", def.pathloss.eta);
        c.pathloss.sigma2_db2 = get_field(*it, p, "sigma2_db2", def.pathloss.sigma2_db2);
        c.pathloss.ref_loss_db = get_field(*it, p, "ref_loss_db", def.pathloss.ref_loss_db);
        c.pathloss.ref_distance_m = get_field(*it, p, "ref_distance_m", def.pathloss.ref_distance_m);
    }
    if (auto it = j.find("thresholds"); it != j.end()) {
        const std::string p = "scenario.thresholds";
        check_keys(*it, p,
                   {"capture_sir_db", "intersf_rejection_db", "sensitivity_dbm",
                    "sensitivity_margin_db"});
        c.thresholds.capture_sir_db =
            get_field(*it, p, "capture_sir_db", def.thresholds.capture_sir_db);
        c.thresholds.intersf_rejection_db =
            get_field(*it, p, "intersf_rejection_db", def.thresholds.intersf_rejection_db);
        c.thresholds.sensitivity_dbm =
            detail::get_sf_map(*it, p, "sensitivity_dbm", def.thresholds.sensitivity_dbm);
        c.thresholds.sensitivity_margin_db =
            get_field(*it, p, "sensitivity_margin_db", def.thresholds.sensitivity_margin_db);
    }
    if (auto it = j.find("placement"); it != j.end()) {
        const std::string p = "scenario.placement";
        check_keys(*it, p,
                   {"generator", "cell_radius_m", "ring_inner_m", "gw_grid_side", "gw_count",
                    "gw_spacing_m", "n_operators", "trace_path"});
        c.placement.generator = get_field(*it, p, "generator", def.placement.generator);
        c.placement.cell_radius_m = get_field(*it, p, "cell_radius_m", def.placement.cell_radius_m);
        c.placement.ring_inner_m = get_field(*it, p, "ring_inner_m", def.placement.ring_inner_m);
        c.placement.gw_grid_side = get_field(*it, p, "gw_grid_side", def.placement.gw_grid_side);
        c.placement.gw_count = get_field(*it, p, "gw_count", def.placement.gw_count);
        c.placement.gw_spacing_m = get_field(*it, p, "gw_spacing_m", def.placement.gw_spacing_m);
        c.placement.n_operators = get_field(*it, p, "n_operators", def.placement.n_operators);
        c.placement.trace_path = get_field(*it, p, "trace_path", def.placement.trace_path);
    }
    if (auto it = j.find("traffic"); it != j.end()) {
        const std::string p = "scenario.traffic";
        check_keys(*it, p, {"mode", "source_rate"});
        c.traffic.mode = get_field(*it, p, "mode", def.traffic.mode);
        c.traffic.source_rate = get_field(*it, p, "source_rate", def.traffic.source_rate);
    }
    if (auto it = j.find("allocators"); it != j.end()) {
        if (!it->is_array()) throw config_error("scenario.allocators: expected an array");
        c.allocators.clear();
        std::size_t i = 0;
        for (const auto& aj : *it) {
            const std::string p = "scenario.allocators[" + std::to_string(i++) + "]";
            check_keys(aj, p, {"name", "sf", "proportions"});
            AllocatorSpec a;
            if (!aj.contains("name")) throw config_error(p + ".name: required");
            a.name = get_field(aj, p, "name", std::string{});
            a.sf = get_field(aj, p, "sf", a.sf);
            a.proportions = get_field(aj, p, "proportions", a.proportions);
            c.allocators.push_back(std::move(a));
        }
    }
    if (auto it = j.find("sweep"); it != j.end()) {
        const std::string p = "scenario.sweep";
        check_keys(*it, p, {"variable", "values"});
        c.sweep.variable = get_field(*it, p, "variable", def.sweep.variable);
        c.sweep.values = get_field(*it, p, "values", def.sweep.values);
    }
    c.seeds = get_field(j, "scenario", "seeds", def.seeds);
    c.duration_s = get_field(j, "scenario", "duration_s", def.duration_s);
    c.n_nodes = get_field(j, "scenario", "n_nodes", def.n_nodes);
    c.tx_power_dbm = get_field(j, "scenario", "tx_power_dbm", def.tx_power_dbm);
    c.capture = get_field(j, "scenario", "capture", def.capture);
    c.intersf = get_field(j, "scenario", "intersf", def.intersf);
    validate(c);
    return c;
}

inline ScenarioConfig parse_scenario(std::istream& in) {
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw config_error(std::string("config parse: ") + e.what());
    }
    return parse_scenario(j);
}

inline Json serialize_scenario(const ScenarioConfig& c) {
    Json j;
    j["name"] = c.name;
    Json& r = j["radio"];
    r["bandwidth_hz"] = c.radio.bandwidth_hz;
    r["spreading_factors"] = c.radio.spreading_factors;
    r["rdd"] = c.radio.rdd;
    r["preamble_symbols"] = c.radio.preamble_symbols;
    r["payload_bytes"] = c.radio.payload_bytes;
    r["carrier_hz"] = c.radio.carrier_hz;
    r["canonical_toa"] =
        c.radio.canonical_toa ? detail::sf_map_to_json(*c.radio.canonical_toa) : Json(nullptr);
    Json& pl = j["pathloss"];
    pl["eta"] = c.pathloss.eta;
    pl["sigma2_db2"] = c.pathloss.sigma2_db2;
    pl["ref_loss_db"] = c.pathloss.ref_loss_db;
    pl["ref_distance_m"] = c.pathloss.ref_distance_m;
    Json& th = j["thresholds"];
    th["capture_sir_db"] = c.thresholds.capture_sir_db;
    th["intersf_rejection_db"] = c.thresholds.intersf_rejection_db;
    th["sensitivity_dbm"] = detail::sf_map_to_json(c.thresholds.sensitivity_dbm);
    th["sensitivity_margin_db"] = c.thresholds.sensitivity_margin_db;
    Json& p = j["placement"];
    p["generator"] = c.placement.generator;
    p["cell_radius_m"] = c.placement.cell_radius_m;
    p["ring_inner_m"] = c.placement.ring_inner_m;
    p["gw_grid_side"] = c.placement.gw_grid_side;
    p["gw_count"] = c.placement.gw_count;
    p["gw_spacing_m"] = c.placement.gw_spacing_m;
    p["n_operators"] = c.placement.n_operators;
    p["trace_path"] = c.placement.trace_path;
    Json& tr = j["traffic"];
    tr["mode"] = c.traffic.mode;
    tr["source_rate"] = c.traffic.source_rate;
    Json allocs = Json::array();
    for (const auto& a : c.allocators) {
        Json aj;
        aj["name"] = a.name;
        aj["sf"] = a.sf;
        aj["proportions"] = a.proportions;
        allocs.push_back(std::move(aj));
    }
    j["allocators"] = std::move(allocs);
    Json& sw = j["sweep"];
    sw["variable"] = c.sweep.variable;
    sw["values"] = c.sweep.values;
    j["seeds"] = c.seeds;
    j["duration_s"] = c.duration_s;
    j["n_nodes"] = c.n_nodes;
    j["tx_power_dbm"] = c.tx_power_dbm;
    j["capture"] = c.capture;
    j["intersf"] = c.intersf;
    return j;
}

inline std::string serialize_scenario_text(const ScenarioConfig& c) {
    return serialize_scenario(c).dump(2) + "\n";
}

inline std::vector<std::string> preset_names() {
    return {"fig2a", "fig3a", "fig6a", "grid25", "ring", "three-operator", "trace"};
}

// Ready-made scenarios for the figure-style experiments. All inherit the
// defaults (125 kHz, CR 4/5, 20 B, 14 dBm, 1 pkt / 90 s, eta 2.9, sigma2 0).
inline ScenarioConfig preset(const std::string& name) {
    ScenarioConfig c;
    c.name = name;
    if (name == "fig2a") {
        // Single-SF ALOHA sweep: everyone on SF12, capture off, G in [0.1, 3].
        c.thresholds.sensitivity_dbm = unconstrained_sensitivity_dbm();
        c.allocators = {AllocatorSpec{"fixed-sf", 12, {}}};
        c.capture = false;
        c.traffic.mode = "poisson";
        c.sweep.values = {8, 19, 38, 57, 76, 114, 152, 189, 227};
    } else if (name == "fig3a") {
        // Uniform disk with capture: per-node powers spread over the cell.
        c.thresholds.sensitivity_dbm = unconstrained_sensitivity_dbm();
        c.allocators = {AllocatorSpec{"explora-at"}};
        c.traffic.mode = "poisson";
        c.sweep.values = {250, 500, 1000, 1500, 2000, 3000, 4000};
    } else if (name == "fig6a") {
        // Single 12 km cell, all allocators side by side, reporting-app traffic.
        c.thresholds.sensitivity_dbm = unconstrained_sensitivity_dbm();
        c.allocators = {AllocatorSpec{"adr"}, AllocatorSpec{"explora-sf"},
                        AllocatorSpec{"explora-at"}, AllocatorSpec{"rand-at"},
                        AllocatorSpec{"explora-c"}};
        c.traffic.mode = "periodic";
        c.sweep.values = {100, 250, 500, 1000, 1500, 2000, 3000, 4000};
    } else if (name == "grid25") {
        // 25 gateways regularly placed, nodes uniform over the covered square.
        c.placement.generator = "grid";
        c.placement.gw_grid_side = 5;
        c.placement.gw_spacing_m = 12000;
        c.allocators = {AllocatorSpec{"adr"}, AllocatorSpec{"explora-at"},
                        AllocatorSpec{"explora-c"}};
        c.traffic.mode = "periodic";
        c.sweep.values = {1000, 2000, 4000, 8000};
    } else if (name == "ring") {
        // All nodes near the cell edge: capture degenerates to plain ALOHA.
        c.thresholds.sensitivity_dbm = unconstrained_sensitivity_dbm();
        c.placement.generator = "ring";
        c.placement.ring_inner_m = 0.95 * c.placement.cell_radius_m;
        c.allocators = {AllocatorSpec{"explora-at"}};
        c.traffic.mode = "poisson";
        c.sweep.values = {250, 500, 1000, 1500, 2000, 3000, 4000};
    } else if (name == "three-operator") {
        // Three overlapping cells (gateways on an equilateral triangle, side =
        // cell radius), one operator per gateway; the plus variant discounts
        // the neighbours' airtime from each budget.
        c.thresholds.sensitivity_dbm = unconstrained_sensitivity_dbm();
        c.placement.generator = "triangle";
        c.placement.cell_radius_m = 12000;
        c.placement.n_operators = 3;
        c.allocators = {AllocatorSpec{"explora-c-plus"}, AllocatorSpec{"explora-c"}};
        c.traffic.mode = "periodic";
        c.sweep.values = {600, 1200, 2400};
    } else if (name == "trace") {
        // Trace-driven cell; sweep the per-device message rate (packets/s
        // equivalents of 18 .. 8000 packets/day).
        c.placement.generator = "trace";
        c.placement.trace_path = "trace.csv";
        c.pathloss.sigma2_db2 = 6.0;
        c.allocators = {AllocatorSpec{"adr"}, AllocatorSpec{"explora-c"}};
        c.traffic.mode = "poisson";
        c.sweep.variable = "source_rate";
        c.sweep.values = {18.0 / 86400, 50.0 / 86400,  100.0 / 86400,
                          360.0 / 86400, 1000.0 / 86400, 2880.0 / 86400,
                          8000.0 / 86400};
    } else {
        throw config_error("unknown preset '" + name + "'");
    }
    validate(c);
    return c;
}

}  // namespace loraplan

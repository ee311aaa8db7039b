#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "loraplan/csv.hpp"
#include "loraplan/errors.hpp"
#include "loraplan/phy.hpp"
#include "loraplan/rng.hpp"

namespace loraplan {

struct Vec2 {
    double x = 0;
    double y = 0;
};

inline double distance(const Vec2& a, const Vec2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

struct Gateway {
    int id = 0;
    Vec2 position{};
};

struct EndDevice {
    int id = 0;
    std::optional<Vec2> position;     // absent for trace-driven nodes
    std::map<int, double> mean_rssi;  // gateway id -> dBm, shadowing excluded
    double source_rate = 1.0 / 90.0;  // packets/second
    int operator_id = 0;
};

struct Topology {
    std::vector<EndDevice> devices;
    std::vector<Gateway> gateways;
    double cell_radius_m = 0;
    std::vector<double> ring_bounds;  // strictly increasing outer radii, last = R
};

inline Topology place_uniform_disk(int n, double radius_m, std::uint64_t seed) {
    if (n < 1) throw std::domain_error("node count must be >= 1");
    if (radius_m <= 0) throw std::domain_error("radius must be positive");
    Topology t;
    t.cell_radius_m = radius_m;
    t.gateways.push_back(Gateway{0, {0, 0}});
    Rng rng = Rng(seed).substream("place");
    t.devices.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double r = radius_m * std::sqrt(rng.uniform01());
        const double a = rng.uniform(0.0, 6.283185307179586476925287);
        EndDevice ed;
        ed.id = i;
        ed.position = Vec2{r * std::cos(a), r * std::sin(a)};
        t.devices.push_back(ed);
    }
    return t;
}

// Uniform over the annulus [r0, R]; r0 = 0 degenerates to the full disk.
inline Topology place_ring(int n, double r0_m, double radius_m, std::uint64_t seed) {
    if (n < 1) throw std::domain_error("node count must be >= 1");
    if (radius_m <= 0) throw std::domain_error("radius must be positive");
    if (r0_m < 0 || r0_m >= radius_m) throw std::domain_error("ring requires 0 <= r0 < R");
    Topology t;
    t.cell_radius_m = radius_m;
    t.gateways.push_back(Gateway{0, {0, 0}});
    Rng rng = Rng(seed).substream("place");
    const double lo2 = r0_m * r0_m;
    const double hi2 = radius_m * radius_m;
    for (int i = 0; i < n; ++i) {
        const double r = std::sqrt(lo2 + (hi2 - lo2) * rng.uniform01());
        const double a = rng.uniform(0.0, 6.283185307179586476925287);
        EndDevice ed;
        ed.id = i;
        ed.position = Vec2{r * std::cos(a), r * std::sin(a)};
        t.devices.push_back(ed);
    }
    return t;
}

// Uniform over the centered square of the given side; gateways are attached
// separately (place_gateway_grid / place_gateway_row).
inline Topology place_uniform_square(int n, double side_m, std::uint64_t seed) {
    if (n < 1) throw std::domain_error("node count must be >= 1");
    if (side_m <= 0) throw std::domain_error("side must be positive");
    Topology t;
    t.cell_radius_m = side_m / 2.0;
    Rng rng = Rng(seed).substream("place");
    t.devices.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        EndDevice ed;
        ed.id = i;
        ed.position = Vec2{side_m * (rng.uniform01() - 0.5), side_m * (rng.uniform01() - 0.5)};
        t.devices.push_back(ed);
    }
    return t;
}

inline std::vector<Gateway> place_gateway_grid(int m_side, double spacing_m) {
    if (m_side < 1) throw std::domain_error("grid side must be >= 1");
    if (m_side > 1 && spacing_m <= 0) throw std::domain_error("spacing must be positive");
    std::vector<Gateway> gws;
    const double offset = (m_side - 1) / 2.0;
    int id = 0;
    for (int row = 0; row < m_side; ++row)
        for (int col = 0; col < m_side; ++col)
            gws.push_back(Gateway{id++, {(col - offset) * spacing_m, (row - offset) * spacing_m}});
    return gws;
}

inline std::vector<Gateway> place_gateway_row(int m, double spacing_m) {
    if (m < 1) throw std::domain_error("gateway count must be >= 1");
    if (m > 1 && spacing_m <= 0) throw std::domain_error("spacing must be positive");
    std::vector<Gateway> gws;
    const double offset = (m - 1) / 2.0;
    for (int i = 0; i < m; ++i) gws.push_back(Gateway{i, {(i - offset) * spacing_m, 0.0}});
    return gws;
}

// Three gateways on an equilateral triangle (centroid at the origin). With
// side equal to the cell radius the three coverage disks partially overlap.
inline std::vector<Gateway> place_gateway_triangle(double side_m) {
    if (side_m <= 0) throw std::domain_error("side must be positive");
    const double r = side_m / std::sqrt(3.0);
    return {Gateway{0, {0.0, r}},
            Gateway{1, {side_m / 2.0, -r / 2.0}},
            Gateway{2, {-side_m / 2.0, -r / 2.0}}};
}

// Fill mean RSSI from positions; shadowing stays out of the means (drawn and
// frozen per run by the simulator).
inline void compute_mean_rssi(Topology& t, double tx_power_dbm, const PathLossModel& model) {
    validate(model);
    for (auto& ed : t.devices) {
        if (!ed.position) continue;
        ed.mean_rssi.clear();
        for (const auto& gw : t.gateways) {
            const double d = std::max(distance(*ed.position, gw.position), 1e-3);
            ed.mean_rssi[gw.id] = rssi(tx_power_dbm, d, model);
        }
    }
}

inline int strongest_gateway(const EndDevice& ed) {
    if (ed.mean_rssi.empty())
        throw std::domain_error("device " + std::to_string(ed.id) + " has no RSSI entries");
    int best = ed.mean_rssi.begin()->first;
    double best_rssi = ed.mean_rssi.begin()->second;
    for (auto [gw, r] : ed.mean_rssi) {
        if (r > best_rssi) {  // ties keep the lowest id (map iterates ascending)
            best = gw;
            best_rssi = r;
        }
    }
    return best;
}

inline std::map<int, std::vector<int>> partition_by_closest_gw(const Topology& t) {
    std::map<int, std::vector<int>> sets;
    for (const auto& gw : t.gateways) sets[gw.id];
    for (const auto& ed : t.devices) sets[strongest_gateway(ed)].push_back(ed.id);
    return sets;
}

// Gateways able to decode the device at the most robust SF.
inline std::set<int> coverage_set(const EndDevice& ed, const Thresholds& thr) {
    std::set<int> out;
    for (auto [gw, r] : ed.mean_rssi)
        if (r >= thr.sensitivity_dbm[kMaxSf] + thr.sensitivity_margin_db) out.insert(gw);
    return out;
}

// Ring index by distance from the strongest gateway; nullopt for trace nodes
// or nodes beyond the outermost bound.
inline std::optional<int> ring_index(const Topology& t, const EndDevice& ed) {
    if (t.ring_bounds.empty() || !ed.position) return std::nullopt;
    Vec2 center{0, 0};
    if (!ed.mean_rssi.empty()) {
        const int gw_id = strongest_gateway(ed);
        for (const auto& gw : t.gateways)
            if (gw.id == gw_id) center = gw.position;
    }
    const double d = distance(*ed.position, center);
    for (std::size_t i = 0; i < t.ring_bounds.size(); ++i)
        if (d <= t.ring_bounds[i]) return static_cast<int>(i);
    return std::nullopt;
}

inline constexpr const char* kTraceHeader = "device_id,gateway_id,mean_rssi_dbm";

inline Topology import_rssi_trace(std::istream& in, double default_rate = 1.0 / 90.0) {
    std::string line;
    if (!std::getline(in, line)) throw data_error("trace: empty file");
    if (strip_cr(line) != kTraceHeader)
        throw data_error("trace line 1: expected header '" + std::string(kTraceHeader) + "'");
    std::map<int, std::map<int, double>> rows;  // device -> gw -> rssi
    std::set<int> gateways;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw data_error("trace line " + std::to_string(line_no) + ": expected 3 fields");
        int dev, gw;
        double r;
        try {
            std::size_t used;
            dev = std::stoi(fields[0], &used);
            if (used != fields[0].size()) throw std::invalid_argument("");
            gw = std::stoi(fields[1], &used);
            if (used != fields[1].size()) throw std::invalid_argument("");
            r = std::stod(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw data_error("trace line " + std::to_string(line_no) + ": malformed row '" +
                             line + "'");
        }
        if (rows.count(dev) && rows[dev].count(gw))
            throw data_error("trace line " + std::to_string(line_no) + ": duplicate pair (" +
                             std::to_string(dev) + "," + std::to_string(gw) + ")");
        rows[dev][gw] = r;
        gateways.insert(gw);
    }
    if (rows.empty()) throw data_error("trace: no data rows");
    Topology t;
    for (int gw : gateways) t.gateways.push_back(Gateway{gw, {0, 0}});
    for (const auto& [dev, rssi_map] : rows) {
        EndDevice ed;
        ed.id = dev;
        ed.mean_rssi = rssi_map;
        ed.source_rate = default_rate;
        t.devices.push_back(ed);
    }
    return t;
}

inline Topology import_rssi_trace(const std::string& path, double default_rate = 1.0 / 90.0) {
    std::ifstream in(path);
    if (!in) throw data_error("trace: cannot open '" + path + "'");
    return import_rssi_trace(in, default_rate);
}

inline void export_rssi_trace(const Topology& t, std::ostream& out) {
    out << kTraceHeader << "\n";
    for (const auto& ed : t.devices)
        for (auto [gw, r] : ed.mean_rssi)
            out << ed.id << "," << gw << "," << csv_double(r) << "\n";
}

// assignment may be null (before allocation) or omit devices (unallocatable).
inline void export_topology_csv(const Topology& t, const std::map<int, int>* assignment,
                                std::ostream& out) {
    out << "device_id,x_m,y_m,closest_gw,assigned_sf\n";
    for (const auto& ed : t.devices) {
        out << ed.id << ",";
        if (ed.position)
            out << csv_double(ed.position->x) << "," << csv_double(ed.position->y);
        else
            out << ",";
        out << "," << (ed.mean_rssi.empty() ? std::string() : std::to_string(strongest_gateway(ed)));
        out << ",";
        if (assignment) {
            auto it = assignment->find(ed.id);
            if (it != assignment->end()) out << it->second;
        }
        out << "\n";
    }
}

}  // namespace loraplan

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "loraplan/allocators.hpp"
#include "loraplan/phy.hpp"
#include "loraplan/rng.hpp"
#include "loraplan/topology.hpp"

namespace loraplan {

enum class TrafficMode { periodic, poisson };

struct SimOptions {
    bool capture_enabled = true;
    bool intersf_enabled = false;
    TrafficMode traffic = TrafficMode::periodic;
    SfMap<double> toa = canonical_toa_table();
    double shadow_sigma2_db2 = 0.0;  // one frozen draw per (ED, GW) pair per run
};

struct TransmissionEvent {
    int ed_id = 0;
    int sf = 0;
    double start = 0;
    double duration = 0;
};

// Received power per (device, gateway): frozen mean RSSI plus the run's frozen
// shadowing draw. Pairs without an RSSI entry are unreachable.
struct RxPowerTable {
    std::vector<int> ed_ids;  // ascending
    std::vector<int> gw_ids;  // ascending
    std::vector<double> dbm;  // ed_index * gw_count + gw_index
    static constexpr double kUnreachable = -1e30;

    std::size_t ed_index(int ed) const {
        auto it = std::lower_bound(ed_ids.begin(), ed_ids.end(), ed);
        if (it == ed_ids.end() || *it != ed) throw std::domain_error("unknown device id");
        return static_cast<std::size_t>(it - ed_ids.begin());
    }
    std::size_t gw_index(int gw) const {
        auto it = std::lower_bound(gw_ids.begin(), gw_ids.end(), gw);
        if (it == gw_ids.end() || *it != gw) throw std::domain_error("unknown gateway id");
        return static_cast<std::size_t>(it - gw_ids.begin());
    }
    double at(int ed, int gw) const { return dbm[ed_index(ed) * gw_ids.size() + gw_index(gw)]; }
};

// Shadow draws are keyed per (ED, GW) pair so that adding a gateway or device
// never perturbs the draws of existing pairs.
inline RxPowerTable build_rx_power_table(const Topology& t, double sigma2_db2,
                                         std::uint64_t seed) {
    RxPowerTable rx;
    for (const auto& ed : t.devices) rx.ed_ids.push_back(ed.id);
    for (const auto& gw : t.gateways) rx.gw_ids.push_back(gw.id);
    std::sort(rx.ed_ids.begin(), rx.ed_ids.end());
    std::sort(rx.gw_ids.begin(), rx.gw_ids.end());
    rx.dbm.assign(rx.ed_ids.size() * rx.gw_ids.size(), RxPowerTable::kUnreachable);
    const Rng master(seed);
    for (const auto& ed : t.devices) {
        const std::size_t ei = rx.ed_index(ed.id);
        for (auto [gw, mean] : ed.mean_rssi) {
            double shadow = 0.0;
            if (sigma2_db2 > 0) {
                const std::uint64_t key =
                    (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ed.id)) << 20) |
                    static_cast<std::uint64_t>(static_cast<std::uint32_t>(gw) & 0xfffff);
                Rng pair_rng = master.substream("shadow", key);
                shadow = pair_rng.normal(0.0, std::sqrt(sigma2_db2));
            }
            rx.dbm[ei * rx.gw_ids.size() + rx.gw_index(gw)] = mean - shadow;
        }
    }
    return rx;
}

// Uplink attempts for every allocated device over [0, duration), sorted by
// start time. Traffic draws are per-device substreams, so the stream is
// invariant to which other options are toggled.
inline std::vector<TransmissionEvent> generate_traffic(const Topology& t, const SfPlan& plan,
                                                       double duration, TrafficMode mode,
                                                       std::uint64_t seed,
                                                       const SfMap<double>& toa) {
    if (duration <= 0) throw std::domain_error("duration must be positive");
    const Rng master(seed);
    std::vector<TransmissionEvent> events;
    for (const auto& ed : t.devices) {
        auto it = plan.assignment.find(ed.id);
        if (it == plan.assignment.end()) continue;
        const int sf = it->second;
        const double dur = toa[sf];
        if (ed.source_rate <= 0) throw std::domain_error("source rate must be positive");
        Rng rng = master.substream("traffic", static_cast<std::uint64_t>(ed.id));
        if (mode == TrafficMode::periodic) {
            const double period = 1.0 / ed.source_rate;
            for (double start = rng.uniform01() * period; start < duration; start += period)
                events.push_back({ed.id, sf, start, dur});
        } else {
            for (double start = rng.exponential(ed.source_rate); start < duration;
                 start += rng.exponential(ed.source_rate))
                events.push_back({ed.id, sf, start, dur});
        }
    }
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
        if (a.start != b.start) return a.start < b.start;
        return a.ed_id < b.ed_id;
    });
    return events;
}

// Single-packet reception check at one gateway against an explicit overlap
// set. The batch engine in run() implements the same rule with sweep-line
// accumulators; tests pin the two against each other.
inline bool resolve_reception(const TransmissionEvent& e,
                              const std::vector<TransmissionEvent>& overlapping, int gw,
                              const Thresholds& thr, const RxPowerTable& rx,
                              const SimOptions& opt) {
    const double p = rx.at(e.ed_id, gw);
    if (p < thr.sensitivity_dbm[e.sf]) return false;
    double same_lin = 0, diff_lin = 0;
    for (const auto& o : overlapping) {
        const double q = rx.at(o.ed_id, gw);
        if (q <= RxPowerTable::kUnreachable) continue;
        if (o.sf == e.sf)
            same_lin += std::pow(10.0, q / 10.0);
        else
            diff_lin += std::pow(10.0, q / 10.0);
    }
    if (same_lin > 0) {
        if (!opt.capture_enabled) return false;
        if (p - 10.0 * std::log10(same_lin) < thr.capture_sir_db) return false;
    }
    if (opt.intersf_enabled && diff_lin > 0) {
        if (p - 10.0 * std::log10(diff_lin) < thr.intersf_rejection_db) return false;
    }
    return true;
}

struct SimReport {
    std::map<int, long long> generated;  // ed id -> packets
    std::map<int, long long> delivered;
    double der_global = 0;
    std::map<int, double> der_per_sf;    // sf -> DER (SFs with traffic only)
    std::map<int, double> der_per_ring;  // ring index -> DER (when rings set)
    std::uint64_t seed = 0;
    double sim_duration = 0;
    long long unallocated_count = 0;
};

inline SimReport run(const Topology& t, const SfPlan& plan, double duration,
                     const Thresholds& thr, const SimOptions& opt, std::uint64_t seed) {
    validate(thr);
    auto events = generate_traffic(t, plan, duration, opt.traffic, seed, opt.toa);
    if (events.empty()) throw std::domain_error("zero generated packets");
    const RxPowerTable rx = build_rx_power_table(t, opt.shadow_sigma2_db2, seed);
    const std::size_t n_events = events.size();

    // Precompute per-event linear rx power per gateway pass.
    std::vector<std::size_t> ed_index(n_events);
    for (std::size_t i = 0; i < n_events; ++i) ed_index[i] = rx.ed_index(events[i].ed_id);

    std::vector<char> delivered_any(n_events, 0);
    std::vector<double> lin(n_events);
    std::vector<double> same_acc(n_events), diff_acc(n_events);
    std::vector<std::size_t> active;

    const std::size_t n_gw = rx.gw_ids.size();
    for (std::size_t g = 0; g < n_gw; ++g) {
        for (std::size_t i = 0; i < n_events; ++i) {
            const double dbm = rx.dbm[ed_index[i] * n_gw + g];
            lin[i] = dbm <= RxPowerTable::kUnreachable ? 0.0 : std::pow(10.0, dbm / 10.0);
            same_acc[i] = 0.0;
            diff_acc[i] = 0.0;
        }
        active.clear();
        for (std::size_t i = 0; i < n_events; ++i) {
            const auto& e = events[i];
            std::size_t kept = 0;
            for (std::size_t a : active) {
                if (events[a].start + events[a].duration > e.start) active[kept++] = a;
            }
            active.resize(kept);
            for (std::size_t a : active) {
                if (events[a].sf == e.sf) {
                    same_acc[a] += lin[i];
                    same_acc[i] += lin[a];
                } else {
                    diff_acc[a] += lin[i];
                    diff_acc[i] += lin[a];
                }
            }
            active.push_back(i);
        }
        for (std::size_t i = 0; i < n_events; ++i) {
            if (delivered_any[i]) continue;
            if (lin[i] <= 0.0) continue;
            const auto& e = events[i];
            const double p = 10.0 * std::log10(lin[i]);
            if (p < thr.sensitivity_dbm[e.sf]) continue;
            if (same_acc[i] > 0) {
                if (!opt.capture_enabled) continue;
                if (p - 10.0 * std::log10(same_acc[i]) < thr.capture_sir_db) continue;
            }
            if (opt.intersf_enabled && diff_acc[i] > 0 &&
                p - 10.0 * std::log10(diff_acc[i]) < thr.intersf_rejection_db)
                continue;
            delivered_any[i] = 1;
        }
    }

    SimReport rep;
    rep.seed = seed;
    rep.sim_duration = duration;
    rep.unallocated_count = static_cast<long long>(plan.unallocated.size());
    for (auto [ed, sf] : plan.assignment) {
        rep.generated[ed] = 0;
        rep.delivered[ed] = 0;
    }
    std::map<int, long long> gen_sf, del_sf, gen_ring, del_ring;
    std::map<int, int> ring_of;
    for (const auto& ed : t.devices)
        if (auto r = ring_index(t, ed)) ring_of[ed.id] = *r;
    for (std::size_t i = 0; i < n_events; ++i) {
        const auto& e = events[i];
        rep.generated[e.ed_id] += 1;
        gen_sf[e.sf] += 1;
        if (auto it = ring_of.find(e.ed_id); it != ring_of.end()) gen_ring[it->second] += 1;
        if (delivered_any[i]) {
            rep.delivered[e.ed_id] += 1;
            del_sf[e.sf] += 1;
            if (auto it = ring_of.find(e.ed_id); it != ring_of.end()) del_ring[it->second] += 1;
        }
    }
    long long gen_total = 0, del_total = 0;
    for (auto [ed, g] : rep.generated) {
        gen_total += g;
        del_total += rep.delivered[ed];
    }
    rep.der_global = gen_total > 0 ? static_cast<double>(del_total) / gen_total : 0.0;
    for (auto [sf, g] : gen_sf)
        rep.der_per_sf[sf] = g > 0 ? static_cast<double>(del_sf[sf]) / g : 0.0;
    for (auto [r, g] : gen_ring)
        rep.der_per_ring[r] = g > 0 ? static_cast<double>(del_ring[r]) / g : 0.0;
    return rep;
}

// Node-DER histogram over uniform bins spanning [0, 1].
inline std::vector<long long> der_histogram(const SimReport& r, int bins) {
    if (bins < 1) throw std::domain_error("bins must be >= 1");
    std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
    bool any = false;
    for (auto [ed, g] : r.generated) {
        if (g <= 0) continue;
        any = true;
        const double der = static_cast<double>(r.delivered.at(ed)) / static_cast<double>(g);
        const int b = std::min(bins - 1, static_cast<int>(der * bins));
        counts[static_cast<std::size_t>(b)] += 1;
    }
    if (!any) throw std::domain_error("empty report");
    return counts;
}

// Same histogram split by ring index.
inline std::map<int, std::vector<long long>> der_histogram_by_ring(const SimReport& r, int bins,
                                                                   const Topology& t) {
    if (bins < 1) throw std::domain_error("bins must be >= 1");
    std::map<int, int> ring_of;
    for (const auto& ed : t.devices)
        if (auto ri = ring_index(t, ed)) ring_of[ed.id] = *ri;
    std::map<int, std::vector<long long>> out;
    for (auto [ed, g] : r.generated) {
        if (g <= 0) continue;
        auto it = ring_of.find(ed);
        if (it == ring_of.end()) continue;
        auto& counts = out[it->second];
        if (counts.empty()) counts.assign(static_cast<std::size_t>(bins), 0);
        const double der = static_cast<double>(r.delivered.at(ed)) / static_cast<double>(g);
        const int b = std::min(bins - 1, static_cast<int>(der * bins));
        counts[static_cast<std::size_t>(b)] += 1;
    }
    return out;
}

}  // namespace loraplan

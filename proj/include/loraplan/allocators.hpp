#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "loraplan/analytic.hpp"
#include "loraplan/phy.hpp"
#include "loraplan/rng.hpp"
#include "loraplan/topology.hpp"

namespace loraplan {

enum class AssignPhase { phase1, phase2, phase3, adr, fixed };

inline const char* phase_label(AssignPhase p) {
    switch (p) {
        case AssignPhase::phase1: return "1";
        case AssignPhase::phase2: return "2";
        case AssignPhase::phase3: return "3";
        case AssignPhase::adr: return "adr";
        case AssignPhase::fixed: return "fixed";
    }
    return "?";
}

struct SfPlan {
    std::map<int, int> assignment;          // ed id -> sf
    std::map<int, AssignPhase> phase;       // ed id -> how it was assigned
    SfMap<long long> counts{};              // assigned devices per SF
    SfMap<double> proportions_used{};       // target proportions (achieved for adr/fixed)
    std::vector<int> unallocated;           // no feasible SF at the strongest gateway
    // explora_c_plus only: per-gateway integer budgets after rounding
    std::map<int, SfMap<long long>> rounded_budgets;

    bool operator==(const SfPlan&) const = default;
};

// Equal-airtime proportions matching the canonical ToA table.
inline SfMap<double> canonical_airtime_proportions() {
    return make_sf_map<double>({0.4702, 0.2585, 0.1436, 0.0718, 0.0359, 0.0202});
}

struct OperatorContext {
    std::set<int> own_devices;
    std::map<int, std::map<int, double>> g_int;  // gw id -> sf -> normalized load
    std::map<int, double> n_int;                 // gw id -> equivalent device count
};

namespace detail {

inline SfMap<double> normalize_proportions(const SfMap<double>& p) {
    double sum = 0;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) {
        if (p[sf] < 0) throw std::domain_error("proportions must be nonnegative");
        sum += p[sf];
    }
    if (sum <= 0) throw std::domain_error("proportions must not all be zero");
    SfMap<double> out;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) out[sf] = p[sf] / sum;
    return out;
}

struct EdView {
    int id;
    double rssi;  // at the strongest gateway
    std::optional<int> min_sf;
    std::set<int> coverage;
};

inline std::vector<EdView> sorted_views(const Topology& t, const Thresholds& thr,
                                        const std::vector<int>& ids) {
    std::map<int, const EndDevice*> by_id;
    for (const auto& ed : t.devices) by_id[ed.id] = &ed;
    std::vector<EdView> views;
    views.reserve(ids.size());
    for (int id : ids) {
        const EndDevice* ed = by_id.at(id);
        EdView v;
        v.id = id;
        v.rssi = ed->mean_rssi.at(strongest_gateway(*ed));
        v.min_sf = min_feasible_sf(v.rssi, thr);
        v.coverage = coverage_set(*ed, thr);
        views.push_back(v);
    }
    std::sort(views.begin(), views.end(), [](const EdView& a, const EdView& b) {
        if (a.rssi != b.rssi) return a.rssi > b.rssi;
        return a.id < b.id;
    });
    return views;
}

inline bool feasible(const EdView& v, int sf) { return v.min_sf && sf >= *v.min_sf; }

// The three-phase waterfilling engine shared by explora_c and explora_c_plus.
// Budgets are real-valued; the phase test is NUM > budget after increment.
inline void run_phases(const std::vector<EdView>& views, double gamma_th,
                       const SfMap<double>& budget, Rng phase3_rng, SfPlan& plan) {
    SfMap<long long> num{};
    std::map<int, int> local;  // ed -> sf
    std::map<int, AssignPhase> local_phase;
    int sf = kMinSf;

    auto assign = [&](const EdView& v, AssignPhase ph) {
        local[v.id] = sf;
        local_phase[v.id] = ph;
        num[sf] += 1;
        if (static_cast<double>(num[sf]) > budget[sf]) ++sf;  // may step past kMaxSf
    };

    // Phase 1: stack capture-safe devices (consecutive RSSI gap above the
    // margin) onto the current SF.
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (sf > kMaxSf) break;
        const EdView& v = views[i];
        const bool wide_gap = i == 0 || (views[i - 1].rssi - v.rssi > gamma_th);
        if (wide_gap && feasible(v, sf)) assign(v, AssignPhase::phase1);
    }

    // Phase 2: devices heard by a different gateway set than their sorted
    // predecessor can also share an SF (delivery via distinct gateways).
    for (std::size_t i = 1; i < views.size(); ++i) {
        if (sf > kMaxSf) break;
        const EdView& v = views[i];
        if (local.count(v.id)) continue;
        if (views[i - 1].coverage != v.coverage && feasible(v, sf)) assign(v, AssignPhase::phase2);
    }

    // Phase 3: the residual budget mass becomes exact per-SF quotas
    // (largest-remainder over the remaining devices); membership is drawn at
    // random but counts stay pinned, keeping the plan within one device of the
    // target proportions. Zero residual mass degenerates to equal quotas over
    // all SFs, still subject to each device's link budget.
    std::vector<const EdView*> rest;
    for (const EdView& v : views) {
        if (local.count(v.id)) continue;
        if (!v.min_sf) {
            plan.unallocated.push_back(v.id);
            continue;
        }
        rest.push_back(&v);
    }
    if (!rest.empty()) {
        const double n_rest = static_cast<double>(rest.size());
        SfMap<double> residual{};
        double mass = 0;
        for (int k = kMinSf; k <= kMaxSf; ++k) {
            residual[k] = std::max(0.0, budget[k] - static_cast<double>(num[k]));
            mass += residual[k];
        }
        std::map<int, double> targets;
        for (int k = kMinSf; k <= kMaxSf; ++k)
            targets[k] = mass > 0 ? residual[k] / mass * n_rest : n_rest / kNumSf;
        auto quota = round_allocation(targets, static_cast<long long>(rest.size()));
        std::sort(rest.begin(), rest.end(),
                  [](const EdView* a, const EdView* b) { return a->id < b->id; });
        for (const EdView* v : rest) {
            long long avail = 0;
            for (int k = *v->min_sf; k <= kMaxSf; ++k) avail += quota[k];
            int chosen;
            if (avail > 0) {
                auto u = static_cast<long long>(
                    phase3_rng.uniform_int(static_cast<std::uint64_t>(avail)));
                chosen = kMaxSf;
                for (int k = *v->min_sf; k <= kMaxSf; ++k) {
                    u -= quota[k];
                    if (u < 0) {
                        chosen = k;
                        break;
                    }
                }
                quota[chosen] -= 1;
            } else {
                chosen = *v->min_sf;  // quotas exhausted by constraints; keep it feasible
            }
            local[v->id] = chosen;
            local_phase[v->id] = AssignPhase::phase3;
            num[chosen] += 1;
        }
    }

    for (auto [id, k] : local) {
        plan.assignment[id] = k;
        plan.phase[id] = local_phase[id];
        plan.counts[k] += 1;
    }
}

inline std::vector<int> all_ids(const Topology& t) {
    std::vector<int> ids;
    ids.reserve(t.devices.size());
    for (const auto& ed : t.devices) ids.push_back(ed.id);
    return ids;
}

// Contiguous-block assignment over RSSI-sorted devices with per-SF quotas;
// used by explora_sf and explora_at. A device infeasible for its block's SF
// is bumped to its own minimum feasible SF.
inline SfPlan block_assign(const Topology& t, const Thresholds& thr,
                           const SfMap<double>& proportions) {
    SfPlan plan;
    plan.proportions_used = proportions;
    auto views = sorted_views(t, thr, all_ids(t));
    const long long n = static_cast<long long>(views.size());
    std::map<int, double> targets;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf)
        targets[sf] = proportions[sf] * static_cast<double>(n);
    auto quota = round_allocation(targets, n);
    int sf = kMinSf;
    long long used = 0;
    for (const EdView& v : views) {
        while (sf < kMaxSf && used >= quota[sf]) {
            ++sf;
            used = 0;
        }
        if (!v.min_sf) {
            plan.unallocated.push_back(v.id);
            continue;
        }
        const int chosen = std::max(sf, *v.min_sf);
        plan.assignment[v.id] = chosen;
        plan.phase[v.id] = AssignPhase::fixed;
        plan.counts[chosen] += 1;
        ++used;
    }
    return plan;
}

}  // namespace detail

// Legacy ADR: fastest feasible data rate per device.
inline SfPlan adr_legacy(const Topology& t, const Thresholds& thr) {
    SfPlan plan;
    for (const auto& ed : t.devices) {
        std::optional<int> sf;
        if (!ed.mean_rssi.empty())
            sf = min_feasible_sf(ed.mean_rssi.at(strongest_gateway(ed)), thr);
        if (!sf) {
            plan.unallocated.push_back(ed.id);
            continue;
        }
        plan.assignment[ed.id] = *sf;
        plan.phase[ed.id] = AssignPhase::adr;
        plan.counts[*sf] += 1;
    }
    const double n = static_cast<double>(plan.assignment.size());
    if (n > 0)
        for (int sf = kMinSf; sf <= kMaxSf; ++sf)
            plan.proportions_used[sf] = static_cast<double>(plan.counts[sf]) / n;
    return plan;
}

// Every device on one configured SF (subject to link budget).
inline SfPlan fixed_sf(const Topology& t, const Thresholds& thr, int sf) {
    check_sf(sf);
    SfPlan plan;
    for (const auto& ed : t.devices) {
        std::optional<int> min_sf;
        if (!ed.mean_rssi.empty())
            min_sf = min_feasible_sf(ed.mean_rssi.at(strongest_gateway(ed)), thr);
        if (!min_sf || *min_sf > sf) {
            plan.unallocated.push_back(ed.id);
            continue;
        }
        plan.assignment[ed.id] = sf;
        plan.phase[ed.id] = AssignPhase::fixed;
        plan.counts[sf] += 1;
    }
    if (!plan.assignment.empty()) plan.proportions_used[sf] = 1.0;
    return plan;
}

// Equal split across SFs, contiguous RSSI-ordered blocks.
inline SfPlan explora_sf(const Topology& t, const Thresholds& thr, std::uint64_t /*seed*/ = 0) {
    SfMap<double> p;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) p[sf] = 1.0 / kNumSf;
    return detail::block_assign(t, thr, p);
}

// Equal-airtime waterfilling with contiguous rings: strongest devices take the
// fastest SFs.
inline SfPlan explora_at(const Topology& t, const Thresholds& thr,
                         const SfMap<double>& p_sf = canonical_airtime_proportions()) {
    return detail::block_assign(t, thr, detail::normalize_proportions(p_sf));
}

// Same per-SF counts as explora_at but membership sampled uniformly without
// replacement.
inline SfPlan rand_at(const Topology& t, const Thresholds& thr,
                      const SfMap<double>& p_sf, std::uint64_t seed) {
    SfPlan plan;
    const SfMap<double> p = detail::normalize_proportions(p_sf);
    plan.proportions_used = p;
    auto views = detail::sorted_views(t, thr, detail::all_ids(t));
    const long long n = static_cast<long long>(views.size());
    std::map<int, double> targets;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf)
        targets[sf] = p[sf] * static_cast<double>(n);
    auto quota = round_allocation(targets, n);
    SfMap<long long> remaining{};
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) remaining[sf] = quota[sf];

    Rng rng = Rng(seed).substream("alloc-rand");
    std::sort(views.begin(), views.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (const auto& v : views) {
        if (!v.min_sf) {
            plan.unallocated.push_back(v.id);
            continue;
        }
        long long mass = 0;
        for (int sf = *v.min_sf; sf <= kMaxSf; ++sf) mass += remaining[sf];
        int chosen;
        if (mass > 0) {
            auto u = static_cast<long long>(rng.uniform_int(static_cast<std::uint64_t>(mass)));
            chosen = kMaxSf;
            for (int sf = *v.min_sf; sf <= kMaxSf; ++sf) {
                u -= remaining[sf];
                if (u < 0) {
                    chosen = sf;
                    break;
                }
            }
            remaining[chosen] -= 1;
        } else {
            chosen = *v.min_sf;  // quotas exhausted by constraints; keep it feasible
        }
        plan.assignment[v.id] = chosen;
        plan.phase[v.id] = AssignPhase::fixed;
        plan.counts[chosen] += 1;
    }
    return plan;
}

// Capture-aware sequential waterfilling, one run of the three phases per
// nearest-gateway set with budgets P_sf * N_m.
inline SfPlan explora_c(const Topology& t, const Thresholds& thr,
                        const SfMap<double>& p_sf, std::uint64_t seed) {
    SfPlan plan;
    const SfMap<double> p = detail::normalize_proportions(p_sf);
    plan.proportions_used = p;
    const Rng master(seed);
    for (const auto& [gw, ids] : partition_by_closest_gw(t)) {
        if (ids.empty()) continue;
        auto views = detail::sorted_views(t, thr, ids);
        SfMap<double> budget;
        for (int sf = kMinSf; sf <= kMaxSf; ++sf)
            budget[sf] = p[sf] * static_cast<double>(ids.size());
        detail::run_phases(views, thr.capture_sir_db, budget,
                           master.substream("alloc-phase3", static_cast<std::uint64_t>(gw)),
                           plan);
    }
    return plan;
}

// explora_c driven by the inter-SF-aware optimal proportions instead of the
// equal-airtime ones.
inline SfPlan explora_intersf(const Topology& t, const Thresholds& thr, double beta,
                              std::uint64_t seed,
                              const SfMap<double>& toa = canonical_toa_table()) {
    std::map<int, double> toa_map;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) toa_map[sf] = toa[sf];
    auto alloc = optimal_allocation_intersf(100.0, toa_map, InterSfParams{beta});
    SfMap<double> p{};
    for (auto [sf, v] : alloc) p[sf] = v / 100.0;
    return explora_c(t, thr, p, seed);
}

// Per-gateway SF budgets discounting airtime already consumed by other
// operators' devices audible at that gateway.
inline SfMap<double> operator_budgets(double n_own, double n_int,
                                      const std::map<int, double>& g_int_row,
                                      const SfMap<double>& p_sf, double s,
                                      const SfMap<double>& toa) {
    if (s <= 0) throw std::domain_error("source rate must be positive");
    SfMap<double> budget{};
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) {
        if (p_sf[sf] < 0) throw std::domain_error("proportions must be nonnegative");
        double g = 0;
        if (auto it = g_int_row.find(sf); it != g_int_row.end()) g = it->second;
        if (g < 0) throw std::domain_error("interfering load must be nonnegative");
        budget[sf] = std::max(0.0, p_sf[sf] * (n_own + n_int) - g / (s * toa[sf]));
    }
    return budget;
}

// Multi-operator variant: phases run against the interference-discounted
// budgets; with an empty context it reduces exactly to explora_c.
inline SfPlan explora_c_plus(const Topology& t, const Thresholds& thr,
                             const OperatorContext& ctx, std::uint64_t seed,
                             const SfMap<double>& p_sf = canonical_airtime_proportions(),
                             const SfMap<double>& toa = canonical_toa_table()) {
    SfPlan plan;
    const SfMap<double> p = detail::normalize_proportions(p_sf);
    plan.proportions_used = p;
    const Rng master(seed);

    std::map<int, const EndDevice*> by_id;
    for (const auto& ed : t.devices) by_id[ed.id] = &ed;
    std::map<int, std::vector<int>> sets;
    for (const auto& gw : t.gateways) sets[gw.id];
    for (int id : ctx.own_devices) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw std::domain_error("operator context names unknown device " +
                                    std::to_string(id));
        sets[strongest_gateway(*it->second)].push_back(id);
    }

    for (const auto& [gw, ids] : sets) {
        if (ids.empty()) continue;
        auto views = detail::sorted_views(t, thr, ids);
        double n_int = 0;
        if (auto it = ctx.n_int.find(gw); it != ctx.n_int.end()) n_int = it->second;
        std::map<int, double> g_row;
        if (auto it = ctx.g_int.find(gw); it != ctx.g_int.end()) g_row = it->second;
        const double s = by_id.at(ids.front())->source_rate;
        const SfMap<double> budget =
            operator_budgets(static_cast<double>(ids.size()), n_int, g_row, p, s, toa);
        std::map<int, double> budget_map;
        double budget_total = 0;
        for (int sf = kMinSf; sf <= kMaxSf; ++sf) {
            budget_map[sf] = budget[sf];
            budget_total += budget[sf];
        }
        auto rounded = round_allocation(budget_map, std::llround(budget_total));
        SfMap<long long> rounded_map{};
        for (int sf = kMinSf; sf <= kMaxSf; ++sf) rounded_map[sf] = rounded[sf];
        plan.rounded_budgets[gw] = rounded_map;
        detail::run_phases(views, thr.capture_sir_db, budget,
                           master.substream("alloc-phase3", static_cast<std::uint64_t>(gw)),
                           plan);
    }
    return plan;
}

// Build an OperatorContext from the other operators' plans: a foreign device
// contributes its airtime at every gateway that can decode its assigned SF.
inline OperatorContext make_operator_context(const Topology& t,
                                             const std::set<int>& own_devices,
                                             const std::map<int, int>& foreign_assignment,
                                             const Thresholds& thr, const SfMap<double>& toa) {
    OperatorContext ctx;
    ctx.own_devices = own_devices;
    for (const auto& gw : t.gateways) ctx.g_int[gw.id];
    std::map<int, const EndDevice*> by_id;
    for (const auto& ed : t.devices) by_id[ed.id] = &ed;
    for (auto [id, sf] : foreign_assignment) {
        if (own_devices.count(id)) continue;
        auto it = by_id.find(id);
        if (it == by_id.end()) continue;
        const EndDevice& ed = *it->second;
        check_sf(sf);
        for (auto [gw, r] : ed.mean_rssi)
            if (r >= thr.sensitivity_dbm[sf] + thr.sensitivity_margin_db)
                ctx.g_int[gw][sf] += ed.source_rate * toa[sf];
    }
    for (const auto& gw : t.gateways) {
        double n = 0;
        double s = t.devices.empty() ? 1.0 / 90.0 : t.devices.front().source_rate;
        for (auto [sf, g] : ctx.g_int[gw.id]) n += g / (s * toa[sf]);
        ctx.n_int[gw.id] = n;
    }
    return ctx;
}

inline void export_plan_csv(const Topology& t, const SfPlan& plan, std::ostream& out) {
    out << "device_id,sf,phase\n";
    for (const auto& ed : t.devices) {
        out << ed.id << ",";
        auto it = plan.assignment.find(ed.id);
        if (it != plan.assignment.end()) {
            out << it->second << "," << phase_label(plan.phase.at(ed.id));
        } else {
            out << ",";
        }
        out << "\n";
    }
}

}  // namespace loraplan

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "loraplan/phy.hpp"

namespace loraplan {

// Per-SF offered load. Node counts are relaxed to reals: the optimization
// works on the continuous problem and rounds at the end.
struct LoadProfile {
    SfMap<double> n{};
    double s = 1.0 / 90.0;  // packets/second per node
    SfMap<double> toa = canonical_toa_table();
};

inline void validate(const LoadProfile& lp) {
    if (lp.s <= 0) throw std::domain_error("source rate must be positive");
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) {
        if (lp.n[sf] < 0) throw std::domain_error("node counts must be nonnegative");
        if (lp.toa[sf] <= 0) throw std::domain_error("ToA must be positive");
    }
}

struct InterSfParams {
    double beta = 0.28073;  // 10^(SIR/10eta), < 1; 0 means perfect orthogonality
    double eta = 2.9;
};

inline void validate(const InterSfParams& p) {
    if (p.beta < 0 || p.beta >= 1) throw std::domain_error("beta must be in [0,1)");
    if (p.eta <= 0) throw std::domain_error("eta must be positive");
}

struct CaptureParams {
    double alpha = 1.08264;  // 10^(SIR/10eta), > 1
    double cell_radius_m = 12000.0;
};

inline void validate(const CaptureParams& p) {
    if (p.alpha <= 1) throw std::domain_error("alpha must exceed 1");
    if (p.cell_radius_m <= 0) throw std::domain_error("cell radius must be positive");
}

inline double load(const LoadProfile& lp, int sf) { return lp.n[sf] * lp.s * lp.toa[sf]; }

inline double total_nodes(const LoadProfile& lp) {
    double n = 0;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) n += lp.n[sf];
    return n;
}

// Unslotted ALOHA success probability e^{-2G}.
inline double aloha_der(double g) {
    if (g < 0) throw std::domain_error("load must be nonnegative");
    return std::exp(-2.0 * g);
}

// Node-weighted mean DER across SFs under perfect orthogonality.
inline double expected_der_orthogonal(const LoadProfile& lp) {
    validate(lp);
    const double n_total = total_nodes(lp);
    if (n_total <= 0) throw std::domain_error("empty load profile");
    double acc = 0;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) acc += lp.n[sf] * aloha_der(load(lp, sf));
    return acc / n_total;
}

namespace detail {

inline void check_toa_subset(const std::map<int, double>& toa) {
    if (toa.empty()) throw std::domain_error("ToA set empty");
    for (auto [sf, t] : toa) {
        check_sf(sf);
        if (t <= 0) throw std::domain_error("ToA must be positive");
    }
}

// Dense Gaussian elimination with partial pivoting; the systems here are at
// most 6x6 so no factorization library is warranted.
inline std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                        std::vector<double> b,
                                        const std::string& singular_msg) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        if (std::fabs(a[pivot][col]) < 1e-12)
            throw std::domain_error(singular_msg);
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
    return x;
}

}  // namespace detail

// ToA-equalizing optimum: n*(sf) proportional to 1/ToA(sf), summing to N.
// Accepts any subset of SFs (the two- and three-SF cell studies use subsets).
inline std::map<int, double> optimal_allocation_orthogonal(double n_total,
                                                           const std::map<int, double>& toa) {
    if (n_total <= 0) throw std::domain_error("N must be positive");
    detail::check_toa_subset(toa);
    const double t_ref = toa.rbegin()->second;
    double denom = 0;
    for (auto [sf, t] : toa) denom += t_ref / t;
    std::map<int, double> out;
    for (auto [sf, t] : toa) out[sf] = (t_ref / t) * n_total / denom;
    return out;
}

// High-load regime: hold every SF but the slowest at G = 0.5 and dump the
// remainder on the slowest SF. Falls back to the equalizing optimum while the
// equalized load is still stable or N cannot fill the stable SFs.
inline std::map<int, double> optimal_allocation_highload(double n_total, double s,
                                                         const std::map<int, double>& toa) {
    if (s <= 0) throw std::domain_error("source rate must be positive");
    auto eq6 = optimal_allocation_orthogonal(n_total, toa);
    const int sf_hat = toa.rbegin()->first;
    const double g_eq6 = eq6.begin()->second * s * toa.begin()->second;
    double stable_total = 0;
    for (auto [sf, t] : toa)
        if (sf != sf_hat) stable_total += 0.5 / (s * t);
    if (g_eq6 <= 0.5 || n_total < stable_total) return eq6;
    std::map<int, double> out;
    for (auto [sf, t] : toa)
        if (sf != sf_hat) out[sf] = 0.5 / (s * t);
    out[sf_hat] = n_total - stable_total;
    return out;
}

// L_sf: own-SF load plus the quasi-orthogonal fraction of every other SF.
inline double competing_load(int sf, const LoadProfile& lp, const InterSfParams& p) {
    validate(lp);
    validate(p);
    check_sf(sf);
    const double c = p.beta * p.beta / 4.0;
    double l = load(lp, sf);
    for (int k = kMinSf; k <= kMaxSf; ++k) {
        if (k == sf) continue;
        l += c * lp.n[k] * lp.s * (lp.toa[k] + lp.toa[sf]);
    }
    return l;
}

// Exact per-SF DER under inter-SF interference: e^{-2G} (1-e^{-X})/X.
inline double der_intersf(int sf, const LoadProfile& lp, const InterSfParams& p) {
    validate(lp);
    validate(p);
    check_sf(sf);
    double x = 0;
    for (int k = kMinSf; k <= kMaxSf; ++k) {
        if (k == sf) continue;
        x += lp.n[k] * lp.s * (lp.toa[k] + lp.toa[sf]);
    }
    x *= p.beta * p.beta;
    const double base = aloha_der(load(lp, sf));
    if (x < 1e-12) return base;
    return base * (-std::expm1(-x)) / x;
}

// Stable-regime mean DER with e^{-2 L_sf} weighting; this is the objective the
// inter-SF allocation optimum maximizes.
inline double expected_der_intersf(const LoadProfile& lp, const InterSfParams& p) {
    validate(lp);
    validate(p);
    const double n_total = total_nodes(lp);
    if (n_total <= 0) throw std::domain_error("empty load profile");
    double acc = 0;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf)
        acc += lp.n[sf] * std::exp(-2.0 * competing_load(sf, lp, p));
    return acc / n_total;
}

// Equalize the competing loads L_sf across the SF set, clamping any negative
// component to zero and re-solving on the survivors. The linear system is the
// normative definition; the printed closed form below cross-checks it.
inline std::map<int, double> optimal_allocation_intersf(double n_total,
                                                        const std::map<int, double>& toa,
                                                        const InterSfParams& p) {
    if (n_total <= 0) throw std::domain_error("N must be positive");
    detail::check_toa_subset(toa);
    validate(p);
    const double c = p.beta * p.beta / 4.0;

    auto singular_msg = [&] {
        std::ostringstream os;
        os << "singular inter-SF system: beta=" << p.beta << " toa={";
        for (auto [sf, t] : toa) os << sf << ":" << t << " ";
        os << "}";
        return os.str();
    };

    std::map<int, double> active = toa;
    std::map<int, double> out;
    for (auto [sf, t] : toa) out[sf] = 0.0;

    while (true) {
        std::vector<int> sfs;
        sfs.reserve(active.size());
        for (auto [sf, t] : active) sfs.push_back(sf);
        const std::size_t m = sfs.size();
        if (m == 1) {
            out[sfs[0]] = n_total;
            return out;
        }
        // coefficient of n_j inside L_k (the common factor s cancels)
        auto coef = [&](int k, int j) {
            return j == k ? active[k] : c * (active[j] + active[k]);
        };
        const int last = sfs.back();
        std::vector<std::vector<double>> a(m, std::vector<double>(m, 0.0));
        std::vector<double> b(m, 0.0);
        for (std::size_t i = 0; i + 1 < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                a[i][j] = coef(sfs[i], sfs[j]) - coef(last, sfs[j]);
        for (std::size_t j = 0; j < m; ++j) a[m - 1][j] = 1.0;
        b[m - 1] = n_total;

        auto x = detail::solve_linear(a, b, singular_msg());
        bool clamped = false;
        for (std::size_t j = 0; j < m; ++j) {
            if (x[j] < 0) {
                active.erase(sfs[j]);
                out[sfs[j]] = 0.0;
                clamped = true;
            }
        }
        if (!clamped) {
            for (std::size_t j = 0; j < m; ++j) out[sfs[j]] = x[j];
            return out;
        }
        if (active.empty()) throw std::domain_error(singular_msg());
    }
}

// Closed-form expression of the inter-SF optimum (cross-check only; the linear
// system above is normative). Generalized to SF subsets by using the slowest
// SF present as the reference.
inline std::map<int, double> intersf_allocation_closed_form(double n_total,
                                                            const std::map<int, double>& toa,
                                                            const InterSfParams& p) {
    if (n_total <= 0) throw std::domain_error("N must be positive");
    detail::check_toa_subset(toa);
    validate(p);
    const double b2 = p.beta * p.beta;
    const double t_ref = toa.rbegin()->second;
    double denom = 0;
    for (auto [k, tk] : toa) denom += (t_ref / tk) * (1.0 - b2 / 2.0);
    std::map<int, double> out;
    for (auto [sf, t] : toa) {
        double ratio_sum = 0;
        for (auto [k, tk] : toa) ratio_sum += t / tk - 1.0;
        const double num = n_total - (b2 / 4.0) * n_total * (ratio_sum + 2.0);
        out[sf] = (t_ref / t) * num / denom;
    }
    return out;
}

// Closed form of the capture throughput integral over a uniform disk:
// S_c(G) = (1-e^{-2G})/(2 alpha^2) + G (1-1/alpha^2) e^{-2G}.
inline double capture_throughput(double g, const CaptureParams& cp) {
    if (g < 0) throw std::domain_error("load must be nonnegative");
    validate(cp);
    const double a2 = cp.alpha * cp.alpha;
    return -std::expm1(-2.0 * g) / (2.0 * a2) + g * (1.0 - 1.0 / a2) * std::exp(-2.0 * g);
}

inline double capture_der(double g, const CaptureParams& cp) {
    if (g == 0) return 1.0;
    return capture_throughput(g, cp) / g;
}

// M uniformly spaced gateways approximated as M independent sub-cells each
// carrying load G/M.
inline double multi_gw_capacity(int m_gateways, const LoadProfile& lp, const CaptureParams& cp) {
    if (m_gateways < 1) throw std::domain_error("gateway count must be >= 1");
    validate(lp);
    double acc = 0;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf)
        acc += capture_throughput(load(lp, sf) / m_gateways, cp);
    return m_gateways * acc;
}

// Largest-remainder rounding to integer counts summing to total; fractional
// ties break toward the lower SF.
inline std::map<int, long long> round_allocation(const std::map<int, double>& alloc,
                                                 long long total) {
    if (total < 0) throw std::domain_error("total must be nonnegative");
    std::map<int, long long> out;
    long long assigned = 0;
    std::vector<std::pair<double, int>> rem;  // (-frac, sf) sorts ties to low SF
    for (auto [sf, v] : alloc) {
        if (v < 0) throw std::domain_error("allocation components must be nonnegative");
        const double fl = std::floor(v);
        out[sf] = static_cast<long long>(fl);
        assigned += out[sf];
        rem.emplace_back(-(v - fl), sf);
    }
    long long leftover = total - assigned;
    if (leftover < 0 || leftover > static_cast<long long>(rem.size()))
        throw std::domain_error("rounding target inconsistent with allocation");
    std::sort(rem.begin(), rem.end());
    for (long long i = 0; i < leftover; ++i) out[rem[static_cast<std::size_t>(i)].second] += 1;
    return out;
}

}  // namespace loraplan

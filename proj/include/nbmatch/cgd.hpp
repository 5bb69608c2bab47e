#pragma once

#include <algorithm>
#include <optional>

#include "nbmatch/instance.hpp"
#include "nbmatch/oracles.hpp"

namespace nbmatch {

/// Quadratic extension of the logarithm at x0 > 0: log above x0, its
/// second-order Taylor model below. C^1 everywhere, (1/x0^2)-smooth.
inline double eta(double x, double x0) {
    if (x <= x0) {
        double d = x - x0;
        return std::log(x0) + d / x0 - 0.5 * d * d / (x0 * x0);
    }
    return std::log(x);
}

inline double eta_prime(double x, double x0) {
    return x <= x0 ? (2.0 * x0 - x) / (x0 * x0) : 1.0 / x;
}

/// Parameters of the smoothed objective psi(x) = sum_i eta(u_i(x) - c_i; x0)
/// (plus the job-side sum for two-sided models).
struct SmoothedObjective {
    ModelKind kind = ModelKind::OneSidedLinear;
    double x0 = 0.0;
    double kappa = 1.0;
    double delta = kDeltaCap;
    double smoothness = 0.0;  // L
};

inline SmoothedObjective make_smoothed_objective(const MarketInstance& inst, double kappa,
                                                 std::optional<double> delta = std::nullopt) {
    SmoothedObjective obj;
    obj.kind = inst.kind;
    obj.kappa = kappa;
    const double n = inst.n;
    const bool fisher = inst.fisher();
    obj.delta = delta.value_or(kDeltaCap);
    if (!fisher && !delta)
        throw std::invalid_argument("endowment model requires a feasibility gap delta");
    switch (inst.kind) {
        case ModelKind::OneSidedLinear:
        case ModelKind::OneSidedSPLC:
            obj.x0 = fisher ? 1.0 / (2.0 * kappa * n)
                            : 1.0 / (2.0 * n * n * (1.0 + 1.0 / obj.delta) * kappa);
            break;
        case ModelKind::TwoSidedSPLC:
            obj.x0 = 1.0 / (2.0 * n * n * (1.0 + 1.0 / obj.delta) * kappa);
            break;
        case ModelKind::NonBipartiteLinear:
            if (!fisher)
                throw UnsupportedModelError(
                    "non-bipartite instances with endowments are not supported");
            obj.x0 = 1.0 / (2.0 * kappa * n * n);
            break;
    }
    obj.smoothness = (inst.two_sided() ? 2.0 : 1.0) / (obj.x0 * obj.x0);
    return obj;
}

namespace detail {

// Flat coordinate view used by the solver: (i,j) cells for bipartite linear,
// edges i<j for non-bipartite, (i,j,k) segments for SPLC kinds.
struct Layout {
    ModelKind kind;
    int n = 0;
    int size = 0;
    std::vector<std::vector<int>> off;  // SPLC / NB: start index per (i, j)

    int cell(int i, int j) const {
        if (kind == ModelKind::NonBipartiteLinear) return off[std::min(i, j)][std::max(i, j)];
        return i * n + j;
    }
};

inline Layout make_layout(const MarketInstance& inst) {
    Layout lay;
    lay.kind = inst.kind;
    lay.n = inst.n;
    if (inst.splc()) {
        lay.off.assign(inst.n, std::vector<int>(inst.n, 0));
        int pos = 0;
        for (int i = 0; i < inst.n; ++i)
            for (int j = 0; j < inst.n; ++j) {
                lay.off[i][j] = pos;
                pos += inst.segments(i, j);
            }
        lay.size = pos;
    } else if (inst.non_bipartite()) {
        lay.off.assign(inst.n, std::vector<int>(inst.n, -1));
        int pos = 0;
        for (int i = 0; i < inst.n; ++i)
            for (int j = i + 1; j < inst.n; ++j) lay.off[i][j] = pos++;
        lay.size = pos;
    } else {
        lay.size = inst.n * inst.n;
    }
    return lay;
}

inline Allocation to_allocation(const MarketInstance& inst, const Layout& lay, const Vec& flat) {
    Allocation a = Allocation::zeros(inst);
    if (inst.splc()) {
        for (int i = 0; i < inst.n; ++i)
            for (int j = 0; j < inst.n; ++j)
                for (int k = 0; k < inst.segments(i, j); ++k) a.xs[i][j][k] = flat[lay.off[i][j] + k];
    } else if (inst.non_bipartite()) {
        for (int i = 0; i < inst.n; ++i)
            for (int j = i + 1; j < inst.n; ++j) a.x[i][j] = a.x[j][i] = flat[lay.off[i][j]];
    } else {
        for (int i = 0; i < inst.n; ++i)
            for (int j = 0; j < inst.n; ++j) a.x[i][j] = flat[i * inst.n + j];
    }
    return a;
}

inline Vec to_flat(const MarketInstance& inst, const Layout& lay, const Allocation& a) {
    Vec flat(lay.size, 0.0);
    if (inst.splc()) {
        for (int i = 0; i < inst.n; ++i)
            for (int j = 0; j < inst.n; ++j)
                for (int k = 0; k < inst.segments(i, j); ++k) flat[lay.off[i][j] + k] = a.xs[i][j][k];
    } else if (inst.non_bipartite()) {
        for (int i = 0; i < inst.n; ++i)
            for (int j = i + 1; j < inst.n; ++j) flat[lay.off[i][j]] = a.x[i][j];
    } else {
        for (int i = 0; i < inst.n; ++i)
            for (int j = 0; j < inst.n; ++j) flat[i * inst.n + j] = a.x[i][j];
    }
    return flat;
}

inline void utilities_flat(const MarketInstance& inst, const Layout& lay, const Vec& x, Vec& u,
                           Vec& w) {
    const int n = inst.n;
    u.assign(n, 0.0);
    if (inst.splc()) {
        if (inst.two_sided()) w.assign(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                int base = lay.off[i][j];
                for (int k = 0; k < inst.segments(i, j); ++k) {
                    u[i] += inst.seg[i][j][k].u * x[base + k];
                    if (inst.two_sided()) w[j] += inst.w[i][j][k] * x[base + k];
                }
            }
    } else if (inst.non_bipartite()) {
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double xe = x[lay.off[i][j]];
                u[i] += inst.u[i][j] * xe;
                u[j] += inst.u[j][i] * xe;
            }
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) u[i] += inst.u[i][j] * x[i * n + j];
    }
}

struct PsiEval {
    double psi = 0.0;
    Vec agent_surplus;  // u_i(x) - c_i
    Vec job_surplus;    // w_j(x) - d_j (two-sided)
};

inline PsiEval psi_flat(const MarketInstance& inst, const SmoothedObjective& obj, const Layout& lay,
                        const Vec& x) {
    PsiEval ev;
    Vec u, w;
    utilities_flat(inst, lay, x, u, w);
    ev.agent_surplus.resize(inst.n);
    for (int i = 0; i < inst.n; ++i) {
        ev.agent_surplus[i] = u[i] - inst.disagreement(i);
        ev.psi += eta(ev.agent_surplus[i], obj.x0);
    }
    if (inst.two_sided()) {
        ev.job_surplus.resize(inst.n);
        for (int j = 0; j < inst.n; ++j) {
            ev.job_surplus[j] = w[j] - inst.job_disagreement(j);
            ev.psi += eta(ev.job_surplus[j], obj.x0);
        }
    }
    return ev;
}

inline void grad_flat(const MarketInstance& inst, const SmoothedObjective& obj, const Layout& lay,
                      const PsiEval& ev, Vec& g) {
    const int n = inst.n;
    g.assign(lay.size, 0.0);
    Vec gpA(n), gpJ;
    for (int i = 0; i < n; ++i) gpA[i] = eta_prime(ev.agent_surplus[i], obj.x0);
    if (inst.two_sided()) {
        gpJ.resize(n);
        for (int j = 0; j < n; ++j) gpJ[j] = eta_prime(ev.job_surplus[j], obj.x0);
    }
    if (inst.splc()) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                int base = lay.off[i][j];
                for (int k = 0; k < inst.segments(i, j); ++k) {
                    g[base + k] = inst.seg[i][j][k].u * gpA[i];
                    if (inst.two_sided()) g[base + k] += inst.w[i][j][k] * gpJ[j];
                }
            }
    } else if (inst.non_bipartite()) {
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                g[lay.off[i][j]] = inst.u[i][j] * gpA[i] + inst.u[j][i] * gpA[j];
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g[i * n + j] = inst.u[i][j] * gpA[i];
    }
}

// Linear oracle over the model's polytope; returns the vertex (flat) and the
// oracle's objective value max_v g.v.
inline double oracle_flat(const MarketInstance& inst, const Layout& lay, const Vec& g, Vec& y) {
    const int n = inst.n;
    y.assign(lay.size, 0.0);
    if (inst.splc()) {
        Tensor wt(n, std::vector<Vec>(n)), lt(n, std::vector<Vec>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                int m = inst.segments(i, j);
                wt[i][j].resize(m);
                lt[i][j].resize(m);
                for (int k = 0; k < m; ++k) {
                    wt[i][j][k] = g[lay.off[i][j] + k];
                    lt[i][j][k] = inst.seg[i][j][k].l;
                }
            }
        auto sol = max_weight_capacitated_assignment(wt, lt);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < inst.segments(i, j); ++k)
                    y[lay.off[i][j] + k] = sol.flow[i][j][k];
        return sol.value;
    }
    if (inst.non_bipartite()) {
        Mat wm(n, Vec(n, 0.0));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) wm[i][j] = g[lay.off[i][j]];
        auto sol = max_weight_general_matching(wm);
        for (int i = 0; i < n; ++i)
            if (sol.match[i] > i) y[lay.off[i][sol.match[i]]] = 1.0;
        return sol.value;
    }
    Mat wm(n, Vec(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) wm[i][j] = g[i * n + j];
    auto sol = max_weight_bipartite_matching(wm);
    for (int i = 0; i < n; ++i)
        if (sol.match[i] >= 0) y[i * n + sol.match[i]] = 1.0;
    return sol.value;
}

inline void shift_flat(const MarketInstance& inst, const Layout& lay, Vec& x) {
    thread_local Vec buf;
    for (int i = 0; i < inst.n; ++i)
        for (int j = 0; j < inst.n; ++j) {
            int m = inst.segments(i, j);
            buf.assign(x.begin() + lay.off[i][j], x.begin() + lay.off[i][j] + m);
            shift_pair(inst.seg[i][j], buf);
            std::copy(buf.begin(), buf.end(), x.begin() + lay.off[i][j]);
        }
}

inline void check_normalized(const MarketInstance& inst) {
    for (int i = 0; i < inst.n; ++i)
        if (std::abs(agent_max_rate(inst, i) - 1.0) > 1e-9)
            throw std::invalid_argument("solver requires a normalized instance (see normalize)");
    if (inst.two_sided())
        for (int j = 0; j < inst.n; ++j)
            if (std::abs(job_max_rate(inst, j) - 1.0) > 1e-9)
                throw std::invalid_argument("solver requires a normalized instance (see normalize)");
}

inline double instance_kappa(const MarketInstance& inst) {
    double kappa = 1.0;
    for (int i = 0; i < inst.n; ++i) kappa = std::max(kappa, 1.0 / agent_rate_sum(inst, i));
    if (inst.two_sided())
        for (int j = 0; j < inst.n; ++j) kappa = std::max(kappa, 1.0 / job_rate_sum(inst, j));
    return kappa;
}

}  // namespace detail

/// psi(x) and its gradient in allocation coordinates. For non-bipartite
/// instances the gradient of edge {i,j} is written to both matrix entries.
inline std::pair<double, Allocation> psi_and_grad(const Allocation& x, const MarketInstance& inst,
                                                  const SmoothedObjective& obj) {
    auto lay = detail::make_layout(inst);
    Vec flat = detail::to_flat(inst, lay, x);
    auto ev = detail::psi_flat(inst, obj, lay, flat);
    Vec g;
    detail::grad_flat(inst, obj, lay, ev, g);
    return {ev.psi, detail::to_allocation(inst, lay, g)};
}

/// Frank-Wolfe gap at x: max over polytope vertices v of grad.(v - x).
/// A certified upper bound on psi(x*) - psi(x); one oracle call.
inline double fw_gap(const Allocation& x, const MarketInstance& inst, const SmoothedObjective& obj) {
    auto lay = detail::make_layout(inst);
    Vec flat = detail::to_flat(inst, lay, x);
    auto ev = detail::psi_flat(inst, obj, lay, flat);
    Vec g, y;
    detail::grad_flat(inst, obj, lay, ev, g);
    double best = detail::oracle_flat(inst, lay, g, y);
    double cur = 0.0;
    for (int c = 0; c < lay.size; ++c) cur += g[c] * flat[c];
    return best - cur;
}

struct FwTraceRow {
    long long t;
    double psi;
    double fw_gap;
    double min_utility_minus_c;
    double step_size;
};

struct FwOptions {
    long long max_iters = -1;            // -1: ceil(D^2 L / eps) with D^2 = 4n
    std::optional<double> delta;         // skip the feasibility-gap LP when known
    bool record_trace = true;
};

struct FwResult {
    Allocation x;
    SmoothedObjective obj;
    bool converged = false;
    long long iterations = 0;
    double gap = 0.0;  // certified FW gap of the returned iterate
    double psi_value = 0.0;
    std::vector<FwTraceRow> trace;
};

/// Conditional gradient with step 2/(t+1) from x = 0, stopping when the FW
/// gap certificate drops to eps (SPLC kinds interleave the shift step).
/// Returns the best-gap iterate when the iteration cap is hit first.
inline FwResult fw_solve(const MarketInstance& inst, double eps, FwOptions opts = {}) {
    detail::check_normalized(inst);
    const double kappa = detail::instance_kappa(inst);
    std::optional<double> delta = opts.delta;
    if (!inst.fisher() && !delta) delta = feasibility_gap(inst).delta;
    if (inst.fisher() && !delta) delta = kDeltaCap;
    if (!inst.fisher() && *delta <= 0.0)
        throw InfeasibleError("infeasible instance: delta <= 0", *delta);

    FwResult res;
    res.obj = make_smoothed_objective(inst, kappa, delta);
    const auto lay = detail::make_layout(inst);
    const SmoothedObjective& obj = res.obj;

    long long cap = opts.max_iters;
    if (cap < 0) {
        double bound = std::ceil(4.0 * inst.n * obj.smoothness / eps);
        cap = bound > 9e17 ? (long long)9e17 : (long long)bound;
    }

    Vec x(lay.size, 0.0), g, y;
    Vec xBest = x;
    double gapBest = std::numeric_limits<double>::infinity();
    double psiAtBest = -std::numeric_limits<double>::infinity();
    // Log-thinned trace: every iterate up to 1024, ~1024 per doubling after.
    auto keep = [](long long t) {
        if (t <= 1024) return true;
        long long stride = 1;
        while ((stride << 11) <= t) stride <<= 1;
        return t % stride == 0;
    };

    long long t = 1;
    for (; t <= cap; ++t) {
        auto ev = detail::psi_flat(inst, obj, lay, x);
        detail::grad_flat(inst, obj, lay, ev, g);
        double oracleVal = detail::oracle_flat(inst, lay, g, y);
        double cur = 0.0;
        for (int c2 = 0; c2 < lay.size; ++c2) cur += g[c2] * x[c2];
        double gap = oracleVal - cur;
        if (gap < gapBest) {
            gapBest = gap;
            xBest = x;
            psiAtBest = ev.psi;
        }
        double alpha = 2.0 / (double)(t + 1);
        if (opts.record_trace && keep(t)) {
            double minS = ev.agent_surplus.empty() ? 0.0
                                                   : *std::min_element(ev.agent_surplus.begin(),
                                                                       ev.agent_surplus.end());
            if (inst.two_sided())
                minS = std::min(minS, *std::min_element(ev.job_surplus.begin(),
                                                        ev.job_surplus.end()));
            res.trace.push_back({t, ev.psi, gap, minS, alpha});
        }
        if (gapBest <= eps) {
            res.converged = true;
            break;
        }
        if (inst.splc()) detail::shift_flat(inst, lay, y);
        for (int c2 = 0; c2 < lay.size; ++c2) x[c2] = (1.0 - alpha) * x[c2] + alpha * y[c2];
        if (inst.splc()) detail::shift_flat(inst, lay, x);
    }
    res.iterations = std::min(t, cap);
    res.gap = gapBest;
    res.psi_value = psiAtBest;
    res.x = detail::to_allocation(inst, lay, xBest);
    return res;
}

}  // namespace nbmatch

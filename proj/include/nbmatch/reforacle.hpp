#pragma once

#include <functional>

#include "nbmatch/instance.hpp"
#include "nbmatch/oracles.hpp"

namespace nbmatch {

/// Result of the independent exhaustive-scan reference solver.
struct OracleResult {
    Allocation x;
    double objective = -std::numeric_limits<double>::infinity();
    double resolution = 0.0;   // final grid step actually used
    double error_bound = 0.0;  // L_local * resolution, a crude optimality slack
};

namespace detail {

// Parameterization of the search region by free coordinates in [0,1]^dim.
// Bipartite kinds scan the doubly-stochastic face ((n-1)^2 free cells):
// leftover goods can always be packed into leftover demand without lowering
// any utility, so the optimal utility vector is attained on that face.
struct GridProblem {
    int dim = 0;
    // returns -inf if the point is infeasible
    std::function<double(const Vec&)> eval;
    std::function<Allocation(const Vec&)> materialize;
};

inline Mat ds_complete(int n, const Vec& p) {
    Mat x(n, Vec(n, 0.0));
    for (int i = 0; i < n - 1; ++i)
        for (int j = 0; j < n - 1; ++j) x[i][j] = p[i * (n - 1) + j];
    for (int i = 0; i < n - 1; ++i) {
        double s = 0.0;
        for (int j = 0; j < n - 1; ++j) s += x[i][j];
        x[i][n - 1] = 1.0 - s;
    }
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < n - 1; ++i) s += x[i][j];
        x[n - 1][j] = 1.0 - s;
    }
    return x;
}

inline bool ds_feasible(const Mat& x) {
    for (const auto& row : x)
        for (double v : row)
            if (v < -1e-12) return false;
    return true;
}

// SPLC utility of agent i for given per-good totals, filling the
// highest-slope segments first (optimal for any fixed totals).
inline double splc_fill_utility(const MarketInstance& inst, int i, const Vec& totals) {
    double u = 0.0;
    for (int j = 0; j < inst.n; ++j) {
        double rem = totals[j];
        for (const Segment& s : inst.seg[i][j]) {
            double take = std::min(s.l, rem);
            u += s.u * take;
            rem -= take;
            if (rem <= 0.0) break;
        }
    }
    return u;
}

inline GridProblem grid_problem(const MarketInstance& inst) {
    GridProblem gp;
    const int n = inst.n;
    if (inst.non_bipartite()) {
        if (n > 4) throw std::invalid_argument("grid_solve: non-bipartite instances limited to n <= 4");
        std::vector<std::array<int, 2>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) edges.push_back({i, j});
        auto odd = odd_subsets(n);
        gp.dim = (int)edges.size();
        auto utilities = [=, &inst](const Vec& p, Vec& u) {
            u.assign(n, 0.0);
            for (size_t e = 0; e < edges.size(); ++e) {
                u[edges[e][0]] += inst.u[edges[e][0]][edges[e][1]] * p[e];
                u[edges[e][1]] += inst.u[edges[e][1]][edges[e][0]] * p[e];
            }
        };
        gp.eval = [=, &inst](const Vec& p) {
            Vec deg(n, 0.0);
            for (size_t e = 0; e < edges.size(); ++e) {
                deg[edges[e][0]] += p[e];
                deg[edges[e][1]] += p[e];
            }
            for (double v : deg)
                if (v > 1.0 + 1e-12) return -std::numeric_limits<double>::infinity();
            for (std::uint32_t B : odd) {
                double s = 0.0;
                for (size_t e = 0; e < edges.size(); ++e)
                    if ((B >> edges[e][0] & 1u) && (B >> edges[e][1] & 1u)) s += p[e];
                if (s > (__builtin_popcount(B) - 1) / 2.0 + 1e-12)
                    return -std::numeric_limits<double>::infinity();
            }
            Vec u;
            utilities(p, u);
            double phi = 0.0;
            for (int i = 0; i < n; ++i) {
                double s = u[i] - inst.disagreement(i);
                if (s <= 0.0) return -std::numeric_limits<double>::infinity();
                phi += std::log(s);
            }
            return phi;
        };
        gp.materialize = [=, &inst](const Vec& p) {
            Allocation a = Allocation::zeros(inst);
            for (size_t e = 0; e < edges.size(); ++e)
                a.x[edges[e][0]][edges[e][1]] = a.x[edges[e][1]][edges[e][0]] = p[e];
            return a;
        };
        return gp;
    }

    if (n > 3) throw std::invalid_argument("grid_solve: bipartite instances limited to n <= 3");
    if (inst.two_sided()) throw UnsupportedModelError("grid_solve does not support two-sided instances");
    gp.dim = (n - 1) * (n - 1);
    gp.eval = [&inst, n](const Vec& p) {
        Mat x = ds_complete(n, p);
        if (!ds_feasible(x)) return -std::numeric_limits<double>::infinity();
        double phi = 0.0;
        for (int i = 0; i < n; ++i) {
            double u = inst.splc() ? splc_fill_utility(inst, i, x[i]) : 0.0;
            if (!inst.splc())
                for (int j = 0; j < n; ++j) u += inst.u[i][j] * x[i][j];
            double s = u - inst.disagreement(i);
            if (s <= 0.0) return -std::numeric_limits<double>::infinity();
            phi += std::log(s);
        }
        return phi;
    };
    gp.materialize = [&inst, n](const Vec& p) {
        Mat x = ds_complete(n, p);
        for (auto& row : x)
            for (double& v : row) v = std::max(0.0, v);
        Allocation a = Allocation::zeros(inst);
        if (inst.splc()) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    double rem = x[i][j];
                    for (int k = 0; k < inst.segments(i, j); ++k) {
                        double take = std::min(inst.seg[i][j][k].l, rem);
                        a.xs[i][j][k] = take;
                        rem -= take;
                        if (rem <= 0.0) break;
                    }
                }
        } else {
            a.x = x;
        }
        return a;
    };
    return gp;
}

// Scan an axis-aligned box at a fixed number of steps per axis; boundary
// points are hit exactly (params are computed as lo + (hi-lo)*k/K).
inline void grid_scan(const GridProblem& gp, const Vec& lo, const Vec& hi, int stepsPerAxis,
                      Vec& bestP, double& bestVal) {
    Vec p(gp.dim, 0.0);
    std::function<void(int)> rec = [&](int axis) {
        if (axis == gp.dim) {
            double v = gp.eval(p);
            if (v > bestVal) {
                bestVal = v;
                bestP = p;
            }
            return;
        }
        for (int k = 0; k <= stepsPerAxis; ++k) {
            p[axis] = lo[axis] + (hi[axis] - lo[axis]) * (double)k / (double)stepsPerAxis;
            rec(axis + 1);
        }
    };
    rec(0);
}

}  // namespace detail

/// Exhaustive grid maximizer of the exact log objective on tiny instances
/// (bipartite n <= 3, non-bipartite n <= 4). Coarse pass over the whole
/// region, then windowed refinement around the incumbent until the grid step
/// falls to `resolution`. Used as the independent ground-truth oracle.
inline OracleResult grid_solve(const MarketInstance& inst, double resolution = 1e-5) {
    auto gp = detail::grid_problem(inst);
    OracleResult res;
    if (gp.dim == 0) {  // n = 1: the only point is x = [1]
        Vec p;
        res.objective = gp.eval(p);
        res.x = gp.materialize(p);
        res.resolution = 0.0;
        return res;
    }

    double step = gp.dim <= 1 ? std::max(resolution, 1e-3) : gp.dim <= 4 ? 1.0 / 40.0 : 1.0 / 10.0;
    const int shrink = gp.dim <= 4 ? 8 : 4;

    Vec lo(gp.dim, 0.0), hi(gp.dim, 1.0), bestP;
    double bestVal = -std::numeric_limits<double>::infinity();
    detail::grid_scan(gp, lo, hi, (int)std::ceil(1.0 / step), bestP, bestVal);

    while (step > resolution) {
        double next = std::max(resolution, step / shrink);
        for (int a = 0; a < gp.dim; ++a) {
            lo[a] = std::max(0.0, bestP[a] - 2.0 * step);
            hi[a] = std::min(1.0, bestP[a] + 2.0 * step);
        }
        int steps = (int)std::ceil((4.0 * step) / next);
        detail::grid_scan(gp, lo, hi, steps, bestP, bestVal);
        step = next;
    }

    res.objective = bestVal;
    res.x = gp.materialize(bestP);
    res.resolution = step;
    // Crude local Lipschitz estimate: each free coordinate moves at most a
    // handful of allocation entries with unit coefficients.
    double L = 0.0;
    for (int i = 0; i < inst.n; ++i) {
        double s = res.x.agent_utility(inst, i) - inst.disagreement(i);
        if (s > 0.0) L += 4.0 / s;
    }
    res.error_bound = L * step * gp.dim;
    return res;
}

}  // namespace nbmatch

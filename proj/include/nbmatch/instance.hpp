#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>

#include "nbmatch/common.hpp"
#include "nbmatch/simplex.hpp"

namespace nbmatch {

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> violations;

    void fail(std::string msg) {
        ok = false;
        violations.push_back(std::move(msg));
    }
};

namespace detail {

inline bool bad(double v) { return !std::isfinite(v) || v < 0.0; }

// Largest per-unit utility of agent i over all goods (and segments).
inline double agent_max_rate(const MarketInstance& inst, int i) {
    double m = 0.0;
    if (inst.splc()) {
        for (int j = 0; j < inst.n; ++j)
            for (const Segment& s : inst.seg[i][j]) m = std::max(m, s.u);
    } else {
        for (int j = 0; j < inst.n; ++j) m = std::max(m, inst.u[i][j]);
    }
    return m;
}

inline double job_max_rate(const MarketInstance& inst, int j) {
    double m = 0.0;
    for (int i = 0; i < inst.n; ++i)
        for (double v : inst.w[i][j]) m = std::max(m, v);
    return m;
}

// Total utility "budget" of agent i: sum_j u_ij, resp. sum_{j,k} u_ijk l_ijk.
inline double agent_rate_sum(const MarketInstance& inst, int i) {
    double s = 0.0;
    if (inst.splc()) {
        for (int j = 0; j < inst.n; ++j)
            for (const Segment& sg : inst.seg[i][j]) s += sg.u * sg.l;
    } else {
        for (int j = 0; j < inst.n; ++j) s += inst.u[i][j];
    }
    return s;
}

inline double job_rate_sum(const MarketInstance& inst, int j) {
    double s = 0.0;
    for (int i = 0; i < inst.n; ++i)
        for (size_t k = 0; k < inst.w[i][j].size(); ++k) s += inst.w[i][j][k] * inst.seg[i][j][k].l;
    return s;
}

}  // namespace detail

inline ValidationReport validate(const MarketInstance& inst) {
    ValidationReport rep;
    const int n = inst.n;
    if (n < 1) {
        rep.fail("n must be >= 1");
        return rep;
    }
    if (inst.splc()) {
        if ((int)inst.seg.size() != n) {
            rep.fail("segment tensor must have n rows");
            return rep;
        }
        for (int i = 0; i < n; ++i)
            if ((int)inst.seg[i].size() != n) {
                rep.fail("segment tensor row " + std::to_string(i) + " must have n entries");
                return rep;
            }
    } else {
        if ((int)inst.u.size() != n) {
            rep.fail("utility matrix must be n x n");
            return rep;
        }
        for (int i = 0; i < n; ++i)
            if ((int)inst.u[i].size() != n) {
                rep.fail("utility matrix row " + std::to_string(i) + " must have n entries");
                return rep;
            }
    }
    if (!inst.c.empty() && (int)inst.c.size() != n) rep.fail("disagreement vector c must have n entries");
    for (size_t i = 0; i < inst.c.size(); ++i)
        if (detail::bad(inst.c[i])) rep.fail("disagreement c[" + std::to_string(i) + "] must be finite and >= 0");
    if (inst.two_sided()) {
        if (!inst.d.empty() && (int)inst.d.size() != n) rep.fail("disagreement vector d must have n entries");
        for (size_t j = 0; j < inst.d.size(); ++j)
            if (detail::bad(inst.d[j])) rep.fail("disagreement d[" + std::to_string(j) + "] must be finite and >= 0");
        if ((int)inst.w.size() != n) {
            rep.fail("job utility tensor must have n rows");
            return rep;
        }
    } else if (!inst.d.empty()) {
        rep.fail("disagreement vector d only applies to two-sided instances");
    }

    if (inst.splc()) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const SegRow& row = inst.seg[i][j];
                const std::string at = " at (i=" + std::to_string(i) + ",j=" + std::to_string(j) + ")";
                if (row.empty()) {
                    rep.fail("empty segment list" + at);
                    continue;
                }
                double total = 0.0;
                for (size_t k = 0; k < row.size(); ++k) {
                    if (detail::bad(row[k].u)) rep.fail("segment slope not finite/nonnegative" + at);
                    if (detail::bad(row[k].l)) rep.fail("segment length not finite/nonnegative" + at);
                    if (k > 0 && row[k].u > row[k - 1].u + 1e-12) rep.fail("segments not concave" + at);
                    total += row[k].l;
                }
                if (std::abs(total - 1.0) > 1e-9) rep.fail("segment lengths do not sum to 1" + at);
                if (inst.two_sided()) {
                    const Vec& wr = inst.w[i][j];
                    if (wr.size() != row.size()) {
                        rep.fail("job segments do not share breakpoints" + at);
                        continue;
                    }
                    for (size_t k = 0; k < wr.size(); ++k) {
                        if (detail::bad(wr[k])) rep.fail("job slope not finite/nonnegative" + at);
                        if (k > 0 && wr[k] > wr[k - 1] + 1e-12) rep.fail("job segments not concave" + at);
                    }
                }
            }
        }
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (detail::bad(inst.u[i][j]))
                    rep.fail("utility not finite/nonnegative at (i=" + std::to_string(i) + ",j=" +
                             std::to_string(j) + ")");
        if (inst.non_bipartite())
            for (int i = 0; i < n; ++i)
                if (inst.u[i][i] != 0.0) rep.fail("nonzero self-utility for agent " + std::to_string(i));
    }
    if (!rep.ok) return rep;

    for (int i = 0; i < n; ++i) {
        bool positive = false;
        if (inst.splc()) {
            for (int j = 0; j < n && !positive; ++j)
                for (const Segment& s : inst.seg[i][j])
                    if (s.u > 0.0 && s.l > 0.0) {
                        positive = true;
                        break;
                    }
        } else {
            for (int j = 0; j < n && !positive; ++j)
                if (j != i || !inst.non_bipartite()) positive = inst.u[i][j] > 0.0;
        }
        if (!positive) rep.fail("degenerate agent " + std::to_string(i) + " (all-zero utility row)");
    }
    if (inst.two_sided()) {
        for (int j = 0; j < n; ++j) {
            bool positive = false;
            for (int i = 0; i < n && !positive; ++i)
                for (size_t k = 0; k < inst.w[i][j].size(); ++k)
                    if (inst.w[i][j][k] > 0.0 && inst.seg[i][j][k].l > 0.0) {
                        positive = true;
                        break;
                    }
            if (!positive) rep.fail("degenerate job " + std::to_string(j) + " (all-zero utility column)");
        }
    }
    return rep;
}

/// Per-agent normalization state. After normalize(), every agent's (and for
/// two-sided kinds, every job's) largest per-unit utility equals 1, kappa is
/// the smallest value >= 1 with sum of utility rates >= 1/kappa for everyone,
/// and delta is filled in later by the feasibility-gap computation.
struct ScalingInfo {
    Vec scale;       // factor applied to agent i's utilities (and c[i])
    Vec job_scale;   // two-sided only: factor applied to job j's utilities (and d[j])
    double kappa = 1.0;
    std::optional<double> delta;
};

inline std::pair<MarketInstance, ScalingInfo> normalize(const MarketInstance& inst) {
    MarketInstance out = inst;
    ScalingInfo info;
    info.scale.assign(inst.n, 1.0);
    const int n = inst.n;
    if (out.c.empty()) out.c.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double m = detail::agent_max_rate(inst, i);
        if (m <= 0.0) throw std::invalid_argument("degenerate agent " + std::to_string(i) + " (zero row)");
        info.scale[i] = 1.0 / m;
        // Divide rather than multiply by the reciprocal: u/u == 1 exactly,
        // which makes normalize bit-for-bit idempotent.
        if (out.splc()) {
            for (int j = 0; j < n; ++j)
                for (Segment& s : out.seg[i][j]) s.u /= m;
        } else {
            for (int j = 0; j < n; ++j) out.u[i][j] /= m;
        }
        out.c[i] /= m;
    }
    if (out.two_sided()) {
        info.job_scale.assign(n, 1.0);
        if (out.d.empty()) out.d.assign(n, 0.0);
        for (int j = 0; j < n; ++j) {
            double m = detail::job_max_rate(inst, j);
            if (m <= 0.0) throw std::invalid_argument("degenerate job " + std::to_string(j) + " (zero column)");
            info.job_scale[j] = 1.0 / m;
            for (int i = 0; i < n; ++i)
                for (double& v : out.w[i][j]) v /= m;
            out.d[j] /= m;
        }
    }
    double kappa = 1.0;
    for (int i = 0; i < n; ++i) kappa = std::max(kappa, 1.0 / detail::agent_rate_sum(out, i));
    if (out.two_sided())
        for (int j = 0; j < n; ++j) kappa = std::max(kappa, 1.0 / detail::job_rate_sum(out, j));
    info.kappa = kappa;
    return {std::move(out), std::move(info)};
}

struct FeasibilityGap {
    double delta = 0.0;
    Allocation witness;
};

namespace detail {

// Enumerate odd subsets of {0..n-1} with |B| >= 3 as bitmasks.
inline std::vector<std::uint32_t> odd_subsets(int n) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t m = 1; m < (1u << n); ++m) {
        int pc = __builtin_popcount(m);
        if (pc >= 3 && (pc & 1)) out.push_back(m);
    }
    return out;
}

}  // namespace detail

/// Optimum of the LP  max delta  s.t.  u_i(x) >= (1+delta) c_i  over the
/// model's matching polytope. The constraint is linear in (x, delta) jointly,
/// so a single dense-simplex solve computes the exact optimum and a witness.
/// Throws InfeasibleError when no allocation strictly dominates c.
inline FeasibilityGap feasibility_gap(const MarketInstance& inst) {
    const int n = inst.n;
    FeasibilityGap out;
    if (inst.fisher()) {
        out.delta = kDeltaCap;
        out.witness = Allocation::zeros(inst);
        return out;
    }

    std::vector<std::array<int, 3>> coords;  // (i, j, k), k = -1 for linear kinds
    if (inst.splc()) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < inst.segments(i, j); ++k) coords.push_back({i, j, k});
    } else if (inst.non_bipartite()) {
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) coords.push_back({i, j, -1});
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) coords.push_back({i, j, -1});
    }
    const int nv = (int)coords.size() + 1;  // + delta
    const int dv = (int)coords.size();

    Mat A;
    Vec b;
    auto addRow = [&](Vec row, double rhs) {
        A.push_back(std::move(row));
        b.push_back(rhs);
    };

    // Degree constraints.
    if (inst.non_bipartite()) {
        for (int v = 0; v < n; ++v) {
            Vec row(nv, 0.0);
            for (int e = 0; e < dv; ++e)
                if (coords[e][0] == v || coords[e][1] == v) row[e] = 1.0;
            addRow(std::move(row), 1.0);
        }
        // Odd-set constraints are enumerated explicitly; keeps the LP dense
        // and exact but caps the size.
        if (n > 12)
            throw UnsupportedModelError("feasibility_gap: non-bipartite instances supported up to n=12");
        for (std::uint32_t B : detail::odd_subsets(n)) {
            Vec row(nv, 0.0);
            for (int e = 0; e < dv; ++e)
                if ((B >> coords[e][0] & 1u) && (B >> coords[e][1] & 1u)) row[e] = 1.0;
            addRow(std::move(row), (__builtin_popcount(B) - 1) / 2.0);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            Vec row(nv, 0.0);
            for (int e = 0; e < dv; ++e)
                if (coords[e][0] == i) row[e] = 1.0;
            addRow(std::move(row), 1.0);
        }
        for (int j = 0; j < n; ++j) {
            Vec row(nv, 0.0);
            for (int e = 0; e < dv; ++e)
                if (coords[e][1] == j) row[e] = 1.0;
            addRow(std::move(row), 1.0);
        }
        if (inst.splc())
            for (int e = 0; e < dv; ++e) {
                Vec row(nv, 0.0);
                row[e] = 1.0;
                addRow(std::move(row), inst.seg[coords[e][0]][coords[e][1]][coords[e][2]].l);
            }
    }

    // -u_i(x) + c_i delta <= -c_i  for agents (and jobs) with c_i > 0; rows
    // with c_i == 0 are vacuous under x >= 0.
    auto rate = [&](int e, int agent, bool jobSide) -> double {
        auto [i, j, k] = coords[e];
        if (jobSide) return i >= 0 && j == agent ? inst.w[i][j][k] : 0.0;
        if (inst.splc()) return i == agent ? inst.seg[i][j][k].u : 0.0;
        if (inst.non_bipartite()) return i == agent ? inst.u[i][j] : (j == agent ? inst.u[j][i] : 0.0);
        return i == agent ? inst.u[i][j] : 0.0;
    };
    for (int i = 0; i < n; ++i) {
        if (inst.disagreement(i) <= 0.0) continue;
        Vec row(nv, 0.0);
        for (int e = 0; e < dv; ++e) row[e] = -rate(e, i, false);
        row[dv] = inst.disagreement(i);
        addRow(std::move(row), -inst.disagreement(i));
    }
    if (inst.two_sided())
        for (int j = 0; j < n; ++j) {
            if (inst.job_disagreement(j) <= 0.0) continue;
            Vec row(nv, 0.0);
            for (int e = 0; e < dv; ++e) row[e] = -rate(e, j, true);
            row[dv] = inst.job_disagreement(j);
            addRow(std::move(row), -inst.job_disagreement(j));
        }
    {
        Vec row(nv, 0.0);
        row[dv] = 1.0;
        addRow(std::move(row), kDeltaCap);
    }

    Vec objective(nv, 0.0);
    objective[dv] = 1.0;
    Vec sol;
    double opt = detail::SimplexSolver(A, b, objective).solve(sol);
    if (!std::isfinite(opt) || opt <= kInfeasibleTol)
        throw InfeasibleError("infeasible instance: feasibility gap delta = " +
                                  std::to_string(std::max(opt, 0.0)) +
                                  " (no allocation strictly dominates the disagreement point)",
                              std::max(opt, 0.0));

    out.delta = opt;
    out.witness = Allocation::zeros(inst);
    for (int e = 0; e < dv; ++e) {
        auto [i, j, k] = coords[e];
        double v = std::max(0.0, sol[e]);
        if (inst.splc())
            out.witness.xs[i][j][k] = v;
        else if (inst.non_bipartite())
            out.witness.x[i][j] = out.witness.x[j][i] = v;
        else
            out.witness.x[i][j] = v;
    }
    return out;
}

/// Random instance: i.i.d. uniform utilities with each agent's max rate
/// renormalized to 1; SPLC segment lengths from sorted uniform breakpoints.
/// `sparsity` is the probability of zeroing an entry (each agent keeps at
/// least one positive entry). Deterministic for a fixed seed.
inline MarketInstance gen_random(int n, ModelKind kind, std::uint64_t seed, double sparsity = 0.0,
                                 int segments = 2) {
    if (n < 2) throw std::invalid_argument("gen_random requires n >= 2");
    if (segments < 1) throw std::invalid_argument("gen_random requires segments >= 1");
    Rng rng(seed);
    MarketInstance inst;
    inst.kind = kind;
    inst.n = n;
    inst.c.assign(n, 0.0);

    const bool nb = kind == ModelKind::NonBipartiteLinear;
    auto keepMask = [&](int i) {
        std::vector<char> keep(n, 1);
        for (int j = 0; j < n; ++j) {
            if (nb && j == i) {
                keep[j] = 0;
                continue;
            }
            if (sparsity > 0.0 && rng.uniform() < sparsity) keep[j] = 0;
        }
        if (std::none_of(keep.begin(), keep.end(), [](char k) { return k != 0; }))
            keep[nb && i == 0 ? 1 : 0] = 1;
        return keep;
    };

    if (inst.splc()) {
        inst.seg.assign(n, std::vector<SegRow>(n));
        if (inst.two_sided()) {
            inst.w.assign(n, std::vector<Vec>(n));
            inst.d.assign(n, 0.0);
        }
        for (int i = 0; i < n; ++i) {
            auto keep = keepMask(i);
            double rowMax = 0.0;
            for (int j = 0; j < n; ++j) {
                Vec breaks(segments - 1);
                for (double& v : breaks) v = rng.uniform();
                std::sort(breaks.begin(), breaks.end());
                Vec slopes(segments), wslopes(segments);
                for (double& v : slopes) v = keep[j] ? rng.uniform() : 0.0;
                for (double& v : wslopes) v = rng.uniform();
                std::sort(slopes.rbegin(), slopes.rend());
                std::sort(wslopes.rbegin(), wslopes.rend());
                SegRow row(segments);
                for (int k = 0; k < segments; ++k) {
                    double lo = k == 0 ? 0.0 : breaks[k - 1];
                    double hi = k == segments - 1 ? 1.0 : breaks[k];
                    row[k] = Segment{slopes[k], hi - lo};
                }
                inst.seg[i][j] = std::move(row);
                if (inst.two_sided()) inst.w[i][j] = std::move(wslopes);
                for (const Segment& s : inst.seg[i][j]) rowMax = std::max(rowMax, s.u);
            }
            if (rowMax > 0.0)
                for (int j = 0; j < n; ++j)
                    for (Segment& s : inst.seg[i][j]) s.u /= rowMax;
        }
        if (inst.two_sided())
            for (int j = 0; j < n; ++j) {
                double colMax = 0.0;
                for (int i = 0; i < n; ++i)
                    for (double v : inst.w[i][j]) colMax = std::max(colMax, v);
                for (int i = 0; i < n; ++i)
                    for (double& v : inst.w[i][j]) v /= colMax;
            }
    } else {
        inst.u.assign(n, Vec(n, 0.0));
        for (int i = 0; i < n; ++i) {
            auto keep = keepMask(i);
            double rowMax = 0.0;
            for (int j = 0; j < n; ++j) {
                double v = rng.uniform();
                inst.u[i][j] = keep[j] ? v : 0.0;
                rowMax = std::max(rowMax, inst.u[i][j]);
            }
            if (rowMax > 0.0)
                for (int j = 0; j < n; ++j) inst.u[i][j] /= rowMax;
        }
    }
    return inst;
}

/// The non-bipartite family showing the 1/(2n^2) proportionality bound is
/// tight: 2l+1 agents where 1..l value only agent 2l+1, agents l+1..2l are
/// indifferent (value everyone), and agent 2l+1 values only l+1..2l.
inline MarketInstance gen_tightness(int l) {
    if (l < 1) throw std::invalid_argument("gen_tightness requires l >= 1");
    const int n = 2 * l + 1;
    MarketInstance inst;
    inst.kind = ModelKind::NonBipartiteLinear;
    inst.n = n;
    inst.u.assign(n, Vec(n, 0.0));
    inst.c.assign(n, 0.0);
    for (int i = 0; i < l; ++i) inst.u[i][n - 1] = 1.0;
    for (int i = l; i < 2 * l; ++i) {
        for (int j = 0; j < n; ++j) inst.u[i][j] = 1.0;
        inst.u[i][i] = 0.0;
    }
    for (int j = l; j < 2 * l; ++j) inst.u[n - 1][j] = 1.0;
    return inst;
}

}  // namespace nbmatch

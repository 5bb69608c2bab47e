#pragma once

#include <algorithm>
#include <array>
#include <queue>

#include "nbmatch/common.hpp"

namespace nbmatch {

/// A vertex of the feasible polytope returned by a linear-optimization
/// oracle: 0/1 edges for matchings, capacity-clipped flow for assignments.
struct VertexSolution {
    double value = 0.0;
    std::vector<int> match;  // bipartite: match[i] = good or -1; general: partner or -1
    Tensor flow;             // capacitated assignment only

    Mat as_matrix(int n) const {
        Mat m(n, Vec(n, 0.0));
        for (int i = 0; i < n; ++i)
            if (match[i] >= 0) m[i][match[i]] = 1.0;
        return m;
    }
};

namespace detail {

// O(n^3) Kuhn-Munkres on a square max-weight problem; returns row -> col and
// the dual potentials certifying optimality.
struct KmResult {
    std::vector<int> rowsol;
    Vec u, v;
};

inline KmResult km_square(const Mat& w) {
    const int n = (int)w.size();
    Vec u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        Vec minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j)
                if (!used[j]) {
                    double cur = -w[i0 - 1][j - 1] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    KmResult res;
    res.rowsol.assign(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j]) res.rowsol[p[j] - 1] = j - 1;
    res.u = std::move(u);
    res.v = std::move(v);
    return res;
}

inline double km_value(const Mat& w, const std::vector<int>& rowsol) {
    double s = 0.0;
    for (size_t i = 0; i < rowsol.size(); ++i)
        if (rowsol[i] >= 0 && w[i][rowsol[i]] > 0.0) s += w[i][rowsol[i]];
    return s;
}

// Recursive max-weight matching value with some rows/cols removed; used only
// by the lexicographic tie-break below, and only on reduced problems.
inline double km_masked_value(const Mat& w, const std::vector<char>& rowGone,
                              const std::vector<char>& colGone) {
    const int n = (int)w.size();
    std::vector<int> rows, cols;
    for (int i = 0; i < n; ++i)
        if (!rowGone[i]) rows.push_back(i);
    for (int j = 0; j < n; ++j)
        if (!colGone[j]) cols.push_back(j);
    const int m = std::max(rows.size(), cols.size());
    if (m == 0) return 0.0;
    Mat sub(m, Vec(m, 0.0));
    for (size_t a = 0; a < rows.size(); ++a)
        for (size_t b = 0; b < cols.size(); ++b) sub[a][b] = w[rows[a]][cols[b]];
    return km_value(sub, km_square(sub).rowsol);
}

}  // namespace detail

/// Maximum-weight (not necessarily perfect) bipartite matching; zero-weight
/// edges never appear in the output. Ties between optimal matchings break to
/// the lexicographically smallest edge set, so runs are reproducible.
inline VertexSolution max_weight_bipartite_matching(const Mat& w) {
    const int n = (int)w.size();
    auto base = detail::km_square(w);
    double best = detail::km_value(w, base.rowsol);
    const double tol = 1e-9 * (1.0 + std::abs(best));

    VertexSolution out;
    out.match.assign(n, -1);

    // Fast path: if the zero-reduced-cost cells are exactly the matched
    // positive cells, the optimum is unique and already lexicographic.
    bool unique = true;
    for (int i = 0; i < n && unique; ++i)
        for (int j = 0; j < n && unique; ++j) {
            if (w[i][j] <= 0.0) continue;
            bool tight = -w[i][j] - base.u[i + 1] - base.v[j + 1] <= tol;
            if (tight && base.rowsol[i] != j) unique = false;
        }
    if (unique) {
        for (int i = 0; i < n; ++i)
            if (base.rowsol[i] >= 0 && w[i][base.rowsol[i]] > 0.0) out.match[i] = base.rowsol[i];
        out.value = best;
        return out;
    }

    // Lexicographic refinement: force cells in row-major order and keep a
    // forced edge whenever the optimum value is preserved.
    std::vector<char> rowGone(n, 0), colGone(n, 0);
    double forced = 0.0;
    for (int i = 0; i < n; ++i) {
        if (rowGone[i]) continue;
        for (int j = 0; j < n; ++j) {
            if (colGone[j] || w[i][j] <= 0.0) continue;
            if (-w[i][j] - base.u[i + 1] - base.v[j + 1] > tol) continue;  // never optimal
            rowGone[i] = colGone[j] = 1;
            double rest = detail::km_masked_value(w, rowGone, colGone);
            if (forced + w[i][j] + rest >= best - tol) {
                out.match[i] = j;
                forced += w[i][j];
                break;
            }
            rowGone[i] = colGone[j] = 0;
        }
    }
    out.value = best;
    return out;
}

namespace detail {

// Maximum-weight matching on a general graph: primal-dual blossom algorithm
// (Galil's formulation). Works directly on double weights; not required to
// be perfect, so vertices with no profitable partner stay single.
class Blossom {
public:
    Blossom(int n, const std::vector<std::array<int, 2>>& ends, const Vec& weights)
        : n_(n), ends_(ends), w_(weights) {
        const int m = (int)ends_.size();
        maxw_ = 0.0;
        for (double x : w_) maxw_ = std::max(maxw_, x);
        neigh_.assign(n_, {});
        for (int k = 0; k < m; ++k) {
            neigh_[ends_[k][0]].push_back(2 * k + 1);
            neigh_[ends_[k][1]].push_back(2 * k);
        }
        mate_.assign(n_, -1);
        label_.assign(2 * n_, 0);
        labelend_.assign(2 * n_, -1);
        inblossom_.resize(n_);
        for (int v = 0; v < n_; ++v) inblossom_[v] = v;
        blossomparent_.assign(2 * n_, -1);
        blossombase_.resize(2 * n_, -1);
        for (int v = 0; v < n_; ++v) blossombase_[v] = v;
        blossomchilds_.assign(2 * n_, {});
        blossomendps_.assign(2 * n_, {});
        dualvar_.assign(2 * n_, 0.0);
        for (int v = 0; v < n_; ++v) dualvar_[v] = maxw_;
        allowedge_.assign(m, 0);
        for (int b = n_; b < 2 * n_; ++b) unused_.push_back(b);
    }

    // mate[v] = partner vertex or -1
    std::vector<int> solve() {
        for (int stage = 0; stage < n_; ++stage)
            if (!run_stage()) break;
        std::vector<int> partner(n_, -1);
        for (int v = 0; v < n_; ++v)
            if (mate_[v] >= 0) partner[v] = endpoint(mate_[v]);
        return partner;
    }

private:
    int n_;
    std::vector<std::array<int, 2>> ends_;
    Vec w_;
    double maxw_;
    std::vector<std::vector<int>> neigh_;  // endpoint ids p; edge p/2, far vertex endpoint(p)
    std::vector<int> mate_;                // endpoint id toward partner, or -1
    std::vector<int> label_, labelend_, inblossom_, blossomparent_, blossombase_;
    std::vector<std::vector<int>> blossomchilds_, blossomendps_;
    Vec dualvar_;
    std::vector<char> allowedge_;
    std::vector<int> unused_;
    std::vector<int> queue_;

    int endpoint(int p) const { return ends_[p / 2][p % 2]; }
    double slack(int k) const { return dualvar_[ends_[k][0]] + dualvar_[ends_[k][1]] - 2.0 * w_[k]; }

    void leaves(int b, std::vector<int>& out) const {
        if (b < n_) {
            out.push_back(b);
            return;
        }
        for (int c : blossomchilds_[b]) leaves(c, out);
    }

    void assign_label(int v, int t, int p) {
        int b = inblossom_[v];
        label_[v] = label_[b] = t;
        labelend_[v] = labelend_[b] = p;
        if (t == 1) {
            std::vector<int> ls;
            leaves(b, ls);
            queue_.insert(queue_.end(), ls.begin(), ls.end());
        } else if (t == 2) {
            int base = blossombase_[b];
            assign_label(endpoint(mate_[base]), 1, mate_[base] ^ 1);
        }
    }

    // Trace back from both ends looking for a common ancestor; returns the
    // base vertex of the new blossom, or -1 when an augmenting path exists.
    int scan_blossom(int v, int w) {
        std::vector<int> path;
        int base = -1;
        while (v != -1 || w != -1) {
            int b = inblossom_[v];
            if (label_[b] & 4) {
                base = blossombase_[b];
                break;
            }
            path.push_back(b);
            label_[b] |= 4;
            if (mate_[blossombase_[b]] == -1) {
                v = -1;
            } else {
                v = endpoint(labelend_[b]);
                b = inblossom_[v];
                v = endpoint(labelend_[b]);
            }
            if (w != -1) std::swap(v, w);
        }
        for (int b : path) label_[b] &= ~4;
        return base;
    }

    void add_blossom(int base, int k) {
        int v = ends_[k][0], w = ends_[k][1];
        int bb = inblossom_[base], bv = inblossom_[v], bw = inblossom_[w];
        int b = unused_.back();
        unused_.pop_back();
        blossombase_[b] = base;
        blossomparent_[b] = -1;
        blossomparent_[bb] = b;
        auto& childs = blossomchilds_[b];
        auto& endps = blossomendps_[b];
        childs.clear();
        endps.clear();
        std::vector<int> path, eps;
        while (bv != bb) {
            blossomparent_[bv] = b;
            path.push_back(bv);
            eps.push_back(labelend_[bv]);
            v = endpoint(labelend_[bv]);
            bv = inblossom_[v];
        }
        path.push_back(bb);
        std::reverse(path.begin(), path.end());
        std::reverse(eps.begin(), eps.end());
        eps.push_back(2 * k);
        childs = std::move(path);
        endps = std::move(eps);
        while (bw != bb) {
            blossomparent_[bw] = b;
            childs.push_back(bw);
            endps.push_back(labelend_[bw] ^ 1);
            w = endpoint(labelend_[bw]);
            bw = inblossom_[w];
        }
        label_[b] = 1;
        labelend_[b] = labelend_[bb];
        dualvar_[b] = 0.0;
        std::vector<int> ls;
        leaves(b, ls);
        for (int x : ls) {
            if (label_[inblossom_[x]] == 2) queue_.push_back(x);
            inblossom_[x] = b;
        }
    }

    void expand_blossom(int b, bool endstage) {
        for (int s : blossomchilds_[b]) {
            blossomparent_[s] = -1;
            if (s < n_) {
                inblossom_[s] = s;
            } else if (endstage && dualvar_[s] == 0.0) {
                expand_blossom(s, endstage);
            } else {
                std::vector<int> ls;
                leaves(s, ls);
                for (int v : ls) inblossom_[v] = s;
            }
        }
        if (!endstage && label_[b] == 2) {
            // Relabel the path through the former blossom so the alternating
            // tree stays valid.
            int entrychild = inblossom_[endpoint(labelend_[b] ^ 1)];
            int j = 0;
            for (size_t idx = 0; idx < blossomchilds_[b].size(); ++idx)
                if (blossomchilds_[b][idx] == entrychild) {
                    j = (int)idx;
                    break;
                }
            int jstep, endptrick;
            const int len = (int)blossomchilds_[b].size();
            if (j & 1) {
                j -= len;
                jstep = 1;
                endptrick = 0;
            } else {
                jstep = -1;
                endptrick = 1;
            }
            int p = labelend_[b];
            while (j != 0) {
                label_[endpoint(p ^ 1)] = 0;
                label_[endpoint(at(blossomendps_[b], j - endptrick) ^ endptrick ^ 1)] = 0;
                assign_label(endpoint(p ^ 1), 2, p);
                allowedge_[at(blossomendps_[b], j - endptrick) / 2] = 1;
                j += jstep;
                p = at(blossomendps_[b], j - endptrick) ^ endptrick;
                allowedge_[p / 2] = 1;
                j += jstep;
            }
            int bv = at(blossomchilds_[b], j);
            label_[endpoint(p ^ 1)] = label_[bv] = 2;
            labelend_[endpoint(p ^ 1)] = labelend_[bv] = p;
            j += jstep;
            while (at(blossomchilds_[b], j) != entrychild) {
                int bw = at(blossomchilds_[b], j);
                if (label_[bw] == 1) {
                    j += jstep;
                    continue;
                }
                std::vector<int> ls;
                leaves(bw, ls);
                int v = -1;
                for (int x : ls)
                    if (label_[x] != 0) {
                        v = x;
                        break;
                    }
                if (v >= 0) {
                    label_[v] = 0;
                    label_[endpoint(mate_[blossombase_[bw]])] = 0;
                    assign_label(v, 2, labelend_[v]);
                }
                j += jstep;
            }
        }
        label_[b] = 0;
        labelend_[b] = -1;
        blossomchilds_[b].clear();
        blossomendps_[b].clear();
        blossombase_[b] = -1;
        unused_.push_back(b);
    }

    static int at(const std::vector<int>& v, int idx) {
        int m = (int)v.size();
        return v[((idx % m) + m) % m];
    }

    void augment_blossom(int b, int v) {
        int t = v;
        while (blossomparent_[t] != b) t = blossomparent_[t];
        if (t >= n_) augment_blossom(t, v);
        int i = 0;
        const int len = (int)blossomchilds_[b].size();
        for (int idx = 0; idx < len; ++idx)
            if (blossomchilds_[b][idx] == t) {
                i = idx;
                break;
            }
        int j = i, jstep, endptrick;
        if (j & 1) {
            j -= len;
            jstep = 1;
            endptrick = 0;
        } else {
            jstep = -1;
            endptrick = 1;
        }
        while (j != 0) {
            j += jstep;
            t = at(blossomchilds_[b], j);
            int p = at(blossomendps_[b], j - endptrick) ^ endptrick;
            if (t >= n_) augment_blossom(t, endpoint(p));
            j += jstep;
            t = at(blossomchilds_[b], j);
            if (t >= n_) augment_blossom(t, endpoint(p ^ 1));
            mate_[endpoint(p)] = p ^ 1;
            mate_[endpoint(p ^ 1)] = p;
        }
        std::rotate(blossomchilds_[b].begin(), blossomchilds_[b].begin() + ((i % len) + len) % len,
                    blossomchilds_[b].end());
        std::rotate(blossomendps_[b].begin(), blossomendps_[b].begin() + ((i % len) + len) % len,
                    blossomendps_[b].end());
        blossombase_[b] = blossombase_[blossomchilds_[b][0]];
    }

    void augment_matching(int k) {
        for (int dir = 0; dir < 2; ++dir) {
            int v = ends_[k][dir];
            int p = 2 * k + (dir == 0 ? 1 : 0);
            for (;;) {
                int bv = inblossom_[v];
                if (bv >= n_) augment_blossom(bv, v);
                mate_[v] = p;
                if (labelend_[bv] == -1) break;
                int t = endpoint(labelend_[bv]);
                int bt = inblossom_[t];
                v = endpoint(labelend_[bt]);
                int w2 = endpoint(labelend_[bt] ^ 1);
                if (bt >= n_) augment_blossom(bt, w2);
                mate_[w2] = labelend_[bt];
                p = labelend_[bt] ^ 1;
            }
        }
    }

    bool run_stage() {
        std::fill(label_.begin(), label_.end(), 0);
        std::fill(labelend_.begin(), labelend_.end(), -1);
        std::fill(allowedge_.begin(), allowedge_.end(), 0);
        queue_.clear();
        for (int v = 0; v < n_; ++v)
            if (mate_[v] == -1 && label_[inblossom_[v]] == 0) assign_label(v, 1, -1);
        bool augmented = false;
        for (;;) {
            while (!queue_.empty() && !augmented) {
                int v = queue_.back();
                queue_.pop_back();
                for (int p : neigh_[v]) {
                    int k = p / 2;
                    int w2 = endpoint(p);
                    if (inblossom_[v] == inblossom_[w2]) continue;
                    double kslack = 0.0;
                    if (!allowedge_[k]) {
                        kslack = slack(k);
                        if (kslack <= 1e-12 * (1.0 + 2.0 * maxw_)) allowedge_[k] = 1;
                    }
                    if (allowedge_[k]) {
                        if (label_[inblossom_[w2]] == 0) {
                            assign_label(w2, 2, p ^ 1);
                        } else if (label_[inblossom_[w2]] == 1) {
                            int base = scan_blossom(v, w2);
                            if (base >= 0) {
                                add_blossom(base, k);
                            } else {
                                augment_matching(k);
                                augmented = true;
                                break;
                            }
                        } else if (label_[w2] == 0) {
                            label_[w2] = 2;
                            labelend_[w2] = p ^ 1;
                        }
                    }
                }
            }
            if (augmented) break;

            double delta = std::numeric_limits<double>::infinity();
            int deltatype = -1, deltaedge = -1, deltablossom = -1;
            // delta1: vertex duals may drop to zero (free to stay single)
            for (int v = 0; v < n_; ++v)
                if (dualvar_[v] < delta) {
                    delta = dualvar_[v];
                    deltatype = 1;
                }
            // delta2: S -- free edges
            for (int k = 0; k < (int)ends_.size(); ++k) {
                int i = ends_[k][0], j = ends_[k][1];
                int li = label_[inblossom_[i]], lj = label_[inblossom_[j]];
                if (inblossom_[i] == inblossom_[j]) continue;
                double s = slack(k);
                if ((li == 1 && lj == 0) || (li == 0 && lj == 1)) {
                    if (s < delta) {
                        delta = s;
                        deltatype = 2;
                        deltaedge = k;
                    }
                } else if (li == 1 && lj == 1) {
                    if (s / 2.0 < delta) {
                        delta = s / 2.0;
                        deltatype = 3;
                        deltaedge = k;
                    }
                }
            }
            // delta4: T-blossom duals
            for (int b = n_; b < 2 * n_; ++b)
                if (blossombase_[b] >= 0 && blossomparent_[b] == -1 && label_[b] == 2 &&
                    dualvar_[b] < delta) {
                    delta = dualvar_[b];
                    deltatype = 4;
                    deltablossom = b;
                }
            if (deltatype == -1) return false;

            for (int v = 0; v < n_; ++v) {
                int l = label_[inblossom_[v]];
                if (l == 1)
                    dualvar_[v] -= delta;
                else if (l == 2)
                    dualvar_[v] += delta;
            }
            // Blossom duals are stored at half scale (matching the vertex
            // dual convention in slack()), so they move by delta per step.
            for (int b = n_; b < 2 * n_; ++b)
                if (blossombase_[b] >= 0 && blossomparent_[b] == -1) {
                    if (label_[b] == 1)
                        dualvar_[b] += delta;
                    else if (label_[b] == 2)
                        dualvar_[b] -= delta;
                }

            if (deltatype == 1) return false;
            if (deltatype == 2) {
                allowedge_[deltaedge] = 1;
                int i = ends_[deltaedge][0];
                queue_.push_back(label_[inblossom_[i]] == 1 ? i : ends_[deltaedge][1]);
            } else if (deltatype == 3) {
                allowedge_[deltaedge] = 1;
                queue_.push_back(ends_[deltaedge][0]);
            } else {
                expand_blossom(deltablossom, false);
            }
        }
        if (!augmented) return false;
        // Expand S-blossoms whose dual hit zero before the next stage.
        for (int b = n_; b < 2 * n_; ++b)
            if (blossombase_[b] >= 0 && blossomparent_[b] == -1 && label_[b] == 1 &&
                dualvar_[b] == 0.0)
                expand_blossom(b, true);
        return true;
    }
};

}  // namespace detail

/// Maximum-weight matching on a complete general (non-bipartite) graph given
/// by a weight matrix; w[i][j] and w[j][i] are summed, the diagonal is
/// ignored, and only strictly positive edges can be matched.
inline VertexSolution max_weight_general_matching(const Mat& w) {
    const int n = (int)w.size();
    std::vector<std::array<int, 2>> ends;
    Vec weights;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double wij = w[i][j] + w[j][i];
            if (wij > 0.0) {
                ends.push_back({i, j});
                weights.push_back(wij);
            }
        }
    VertexSolution out;
    out.match.assign(n, -1);
    if (!ends.empty()) {
        detail::Blossom solver(n, ends, weights);
        out.match = solver.solve();
    }
    for (int i = 0; i < n; ++i)
        if (out.match[i] > i) out.value += w[i][out.match[i]] + w[out.match[i]][i];
    return out;
}

namespace detail {

// Min-cost-flow network for the capacitated assignment polytope:
// source -> agent (cap 1), one arc per segment (cap l_ijk, cost -w_ijk),
// good -> sink (cap 1). Successive shortest paths with potentials; augments
// while a profitable path exists, so the flow value is free.
struct McmfArc {
    int to;
    double cap, cost;
    int rev;
};

class Mcmf {
public:
    explicit Mcmf(int nodes) : g_(nodes) {}

    int add(int a, int b, double cap, double cost) {
        g_[a].push_back({b, cap, cost, (int)g_[b].size()});
        g_[b].push_back({a, 0.0, -cost, (int)g_[a].size() - 1});
        return (int)g_[a].size() - 1;
    }

    // Max-profit flow from s to t (profit = -cost); stops when no augmenting
    // path has strictly negative reduced cost.
    void run(int s, int t) {
        const int n = (int)g_.size();
        Vec pot(n, 0.0);
        // Initial potentials by Bellman-Ford (graph is a DAG at zero flow).
        for (int rep = 0; rep < n; ++rep) {
            bool changed = false;
            for (int v2 = 0; v2 < n; ++v2)
                for (const McmfArc& a : g_[v2])
                    if (a.cap > 1e-15 && pot[v2] + a.cost < pot[a.to] - 1e-15) {
                        pot[a.to] = pot[v2] + a.cost;
                        changed = true;
                    }
            if (!changed) break;
        }
        Vec dist(n);
        std::vector<int> pv(n), pe(n);
        for (;;) {
            std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
            dist[s] = 0.0;
            using Item = std::pair<double, int>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            pq.push({0.0, s});
            while (!pq.empty()) {
                auto [d, v2] = pq.top();
                pq.pop();
                if (d > dist[v2] + 1e-15) continue;
                for (int idx = 0; idx < (int)g_[v2].size(); ++idx) {
                    const McmfArc& a = g_[v2][idx];
                    if (a.cap <= 1e-15) continue;
                    double nd = dist[v2] + std::max(0.0, a.cost + pot[v2] - pot[a.to]);
                    if (nd < dist[a.to] - 1e-15) {
                        dist[a.to] = nd;
                        pv[a.to] = v2;
                        pe[a.to] = idx;
                        pq.push({nd, a.to});
                    }
                }
            }
            if (!std::isfinite(dist[t])) break;
            double pathCost = dist[t] + pot[t] - pot[s];
            if (pathCost >= -1e-12) break;
            double push = std::numeric_limits<double>::infinity();
            for (int v2 = t; v2 != s; v2 = pv[v2]) push = std::min(push, g_[pv[v2]][pe[v2]].cap);
            for (int v2 = t; v2 != s; v2 = pv[v2]) {
                McmfArc& a = g_[pv[v2]][pe[v2]];
                a.cap -= push;
                g_[v2][a.rev].cap += push;
            }
            for (int v2 = 0; v2 < n; ++v2)
                if (std::isfinite(dist[v2])) pot[v2] += dist[v2];
        }
    }

    const McmfArc& arc(int from, int idx) const { return g_[from][idx]; }

private:
    std::vector<std::vector<McmfArc>> g_;
};

}  // namespace detail

/// Maximum-weight capacitated assignment over segments: maximize sum w.x
/// subject to x_ijk <= l_ijk and unit row/column budgets. The output is
/// canonicalized per (i,j) so higher-weight segments fill first, which keeps
/// at most one fractional segment per pair.
inline VertexSolution max_weight_capacitated_assignment(const Tensor& w, const Tensor& l) {
    const int n = (int)w.size();
    const int S = 0, T = 2 * n + 1;
    detail::Mcmf net(2 * n + 2);
    for (int i = 0; i < n; ++i) net.add(S, 1 + i, 1.0, 0.0);
    for (int j = 0; j < n; ++j) net.add(1 + n + j, T, 1.0, 0.0);
    std::vector<std::array<int, 4>> arcIds;  // (i, j, k, arc index at node 1+i)
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < (int)w[i][j].size(); ++k) {
                if (w[i][j][k] <= 0.0 || l[i][j][k] <= 0.0) continue;
                int id = net.add(1 + i, 1 + n + j, l[i][j][k], -w[i][j][k]);
                arcIds.push_back({i, j, k, id});
            }
    net.run(S, T);

    VertexSolution out;
    out.flow.assign(n, std::vector<Vec>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.flow[i][j].assign(w[i][j].size(), 0.0);
    for (const auto& [i, j, k, id] : arcIds)
        out.flow[i][j][k] = l[i][j][k] - net.arc(1 + i, id).cap;

    // Canonicalize: per (i,j), move mass to segments in decreasing weight
    // order (never lowers the objective, all constraints preserved).
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int m = (int)w[i][j].size();
            double total = 0.0;
            for (double v : out.flow[i][j]) total += v;
            if (total <= 0.0) continue;
            std::vector<int> order(m);
            for (int k = 0; k < m; ++k) order[k] = k;
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return w[i][j][a] > w[i][j][b]; });
            Vec filled(m, 0.0);
            double rem = total;
            for (int k : order) {
                double take = std::min(l[i][j][k], rem);
                if (w[i][j][k] <= 0.0) take = 0.0;
                filled[k] = take;
                rem -= take;
                if (rem <= 0.0) break;
            }
            out.flow[i][j] = std::move(filled);
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < (int)w[i][j].size(); ++k) out.value += w[i][j][k] * out.flow[i][j][k];
    out.match.assign(n, -1);
    return out;
}

/// Per-(i,j) greedy reallocation onto the highest-slope segments first;
/// preserves the pair total, never decreases any agent's utility, idempotent.
inline void shift_pair(const SegRow& segs, Vec& x) {
    double total = 0.0;
    for (double v : x) total += v;
    double rem = total;
    for (size_t k = 0; k < x.size(); ++k) {
        double take = std::min(segs[k].l, rem);
        x[k] = take;
        rem -= take;
    }
    // Float residue from the subtractions goes back onto trailing slack so
    // the pair total is preserved without ever exceeding a cap.
    for (size_t k = x.size(); rem > 0.0 && k-- > 0;) {
        double room = segs[k].l - x[k];
        if (room <= 0.0) continue;
        double add = std::min(room, rem);
        x[k] += add;
        rem -= add;
    }
}

inline Allocation shift(const Allocation& a, const MarketInstance& inst) {
    Allocation out = a;
    for (int i = 0; i < inst.n; ++i)
        for (int j = 0; j < inst.n; ++j) shift_pair(inst.seg[i][j], out.xs[i][j]);
    return out;
}

}  // namespace nbmatch

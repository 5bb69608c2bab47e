#pragma once

#include <algorithm>
#include <limits>

#include "nbmatch/common.hpp"

namespace nbmatch::detail {

// Dense two-phase simplex: max c^T x s.t. A x <= b, x >= 0.
// Tableau layout and pivoting follow the classic competitive-programming
// formulation (Dantzig rule with lexicographic tie-breaking on variable
// ids, which avoids cycling in practice). Intended for desk-scale LPs.
class SimplexSolver {
public:
    SimplexSolver(const Mat& A, const Vec& b, const Vec& c)
        : m_((int)b.size()), n_((int)c.size()), N_(n_ + 1), B_(m_), D_(m_ + 2, Vec(n_ + 2)) {
        for (int i = 0; i < m_; ++i) {
            for (int j = 0; j < n_; ++j) D_[i][j] = A[i][j];
            B_[i] = n_ + i;
            D_[i][n_] = -1;
            D_[i][n_ + 1] = b[i];
        }
        for (int j = 0; j < n_; ++j) {
            N_[j] = j;
            D_[m_][j] = -c[j];
        }
        N_[n_] = -1;
        D_[m_ + 1][n_] = 1;
    }

    // Returns the optimum, -inf when infeasible, +inf when unbounded.
    double solve(Vec& x) {
        int r = 0;
        for (int i = 1; i < m_; ++i)
            if (D_[i][n_ + 1] < D_[r][n_ + 1]) r = i;
        if (D_[r][n_ + 1] < -kEps) {
            pivot(r, n_);
            if (!simplex(2) || D_[m_ + 1][n_ + 1] < -kEps)
                return -std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i)
                if (B_[i] == -1) {
                    int s = 0;
                    for (int j = 1; j <= n_; ++j)
                        if (s == -1 || std::pair(D_[i][j], N_[j]) < std::pair(D_[i][s], N_[s]))
                            s = j;
                    pivot(i, s);
                }
        }
        bool ok = simplex(1);
        x.assign(n_, 0.0);
        for (int i = 0; i < m_; ++i)
            if (B_[i] < n_) x[B_[i]] = D_[i][n_ + 1];
        return ok ? D_[m_][n_ + 1] : std::numeric_limits<double>::infinity();
    }

private:
    static constexpr double kEps = 1e-10;

    int m_, n_;
    std::vector<int> N_, B_;
    Mat D_;

    void pivot(int r, int s) {
        double* a = D_[r].data();
        double inv = 1.0 / a[s];
        for (int i = 0; i < m_ + 2; ++i)
            if (i != r && std::abs(D_[i][s]) > kEps) {
                double* b2 = D_[i].data();
                double invRS = b2[s] * inv;
                for (int j = 0; j <= n_ + 1; ++j) b2[j] -= a[j] * invRS;
                b2[s] = a[s] * invRS;
            }
        for (int j = 0; j <= n_ + 1; ++j)
            if (j != s) D_[r][j] *= inv;
        for (int i = 0; i < m_ + 2; ++i)
            if (i != r) D_[i][s] *= -inv;
        D_[r][s] = inv;
        std::swap(B_[r], N_[s]);
    }

    bool simplex(int phase) {
        int x = m_ + phase - 1;
        for (;;) {
            int s = -1;
            for (int j = 0; j <= n_; ++j) {
                if (phase == 2 && N_[j] == -1) continue;
                if (s == -1 || std::pair(D_[x][j], N_[j]) < std::pair(D_[x][s], N_[s])) s = j;
            }
            if (D_[x][s] >= -kEps) return true;
            int r = -1;
            for (int i = 0; i < m_; ++i) {
                if (D_[i][s] <= kEps) continue;
                if (r == -1 ||
                    std::pair(D_[i][n_ + 1] / D_[i][s], B_[i]) <
                        std::pair(D_[r][n_ + 1] / D_[r][s], B_[r]))
                    r = i;
            }
            if (r == -1) return false;
            pivot(r, s);
        }
    }
};

}  // namespace nbmatch::detail

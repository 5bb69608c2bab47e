#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbmatch {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

enum class ModelKind {
    OneSidedLinear,     // LiF / LiAD
    OneSidedSPLC,       // SF / SAD
    TwoSidedSPLC,       // 2SAD (covers the linear two-sided case with one segment)
    NonBipartiteLinear, // NBLF
};

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::OneSidedLinear: return "OneSidedLinear";
        case ModelKind::OneSidedSPLC: return "OneSidedSPLC";
        case ModelKind::TwoSidedSPLC: return "TwoSidedSPLC";
        case ModelKind::NonBipartiteLinear: return "NonBipartiteLinear";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "OneSidedLinear") return ModelKind::OneSidedLinear;
    if (s == "OneSidedSPLC") return ModelKind::OneSidedSPLC;
    if (s == "TwoSidedSPLC") return ModelKind::TwoSidedSPLC;
    if (s == "NonBipartiteLinear") return ModelKind::NonBipartiteLinear;
    throw std::invalid_argument("unknown model kind: \"" + s + "\"");
}

/// Thrown when an instance admits no allocation strictly dominating the
/// disagreement point (feasibility gap delta <= 0).
struct InfeasibleError : std::runtime_error {
    double delta;
    explicit InfeasibleError(const std::string& msg, double d = 0.0)
        : std::runtime_error(msg), delta(d) {}
};

/// Thrown when a solver or operation does not support the given model kind.
struct UnsupportedModelError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// One linear piece of an SPLC utility: slope u over a length-l interval.
struct Segment {
    double u = 0.0;
    double l = 0.0;
};

using SegRow = std::vector<Segment>;             // segments of one (agent, good) pair
using SegTensor = std::vector<std::vector<SegRow>>;
using Tensor = std::vector<std::vector<Vec>>;    // [i][j][k] doubles

/// A matching-market instance. Immutable by convention after construction;
/// every operation in this library takes it by const reference.
struct MarketInstance {
    ModelKind kind = ModelKind::OneSidedLinear;
    int n = 0;
    Mat u;          // linear kinds: n x n agent utilities (NB: u[i][j], u[j][i] independent)
    SegTensor seg;  // SPLC kinds: seg[i][j] sorted by non-increasing slope
    Tensor w;       // TwoSidedSPLC: job-side slopes, same (i,j,k) shape as seg
    Vec c;          // agent disagreement utilities; empty or all-zero = Fisher
    Vec d;          // job disagreement utilities (two-sided only)

    bool splc() const { return kind == ModelKind::OneSidedSPLC || kind == ModelKind::TwoSidedSPLC; }
    bool two_sided() const { return kind == ModelKind::TwoSidedSPLC; }
    bool non_bipartite() const { return kind == ModelKind::NonBipartiteLinear; }

    bool fisher() const {
        for (double v : c)
            if (v != 0.0) return false;
        for (double v : d)
            if (v != 0.0) return false;
        return true;
    }

    double disagreement(int i) const { return c.empty() ? 0.0 : c[i]; }
    double job_disagreement(int j) const { return d.empty() ? 0.0 : d[j]; }

    int segments(int i, int j) const { return (int)seg[i][j].size(); }
};

/// Fractional allocation. Matrix-indexed for linear kinds (symmetric with a
/// zero diagonal for NonBipartiteLinear, where x[i][j] == x[j][i] is the
/// fraction of edge {i,j}), segment-indexed for SPLC kinds.
struct Allocation {
    ModelKind kind = ModelKind::OneSidedLinear;
    Mat x;      // linear kinds
    Tensor xs;  // SPLC kinds

    static Allocation zeros(const MarketInstance& inst) {
        Allocation a;
        a.kind = inst.kind;
        if (inst.splc()) {
            a.xs.assign(inst.n, std::vector<Vec>(inst.n));
            for (int i = 0; i < inst.n; ++i)
                for (int j = 0; j < inst.n; ++j) a.xs[i][j].assign(inst.seg[i][j].size(), 0.0);
        } else {
            a.x.assign(inst.n, Vec(inst.n, 0.0));
        }
        return a;
    }

    double agent_utility(const MarketInstance& inst, int i) const {
        double s = 0.0;
        if (inst.splc()) {
            for (int j = 0; j < inst.n; ++j)
                for (size_t k = 0; k < xs[i][j].size(); ++k) s += inst.seg[i][j][k].u * xs[i][j][k];
        } else {
            for (int j = 0; j < inst.n; ++j) s += inst.u[i][j] * x[i][j];
        }
        return s;
    }

    double job_utility(const MarketInstance& inst, int j) const {
        double s = 0.0;
        for (int i = 0; i < inst.n; ++i)
            for (size_t k = 0; k < xs[i][j].size(); ++k) s += inst.w[i][j][k] * xs[i][j][k];
        return s;
    }

    Vec agent_utilities(const MarketInstance& inst) const {
        Vec v(inst.n);
        for (int i = 0; i < inst.n; ++i) v[i] = agent_utility(inst, i);
        return v;
    }

    // Total mass on (i, j), summing segments for SPLC kinds.
    double pair_total(int i, int j) const {
        if (kind == ModelKind::OneSidedSPLC || kind == ModelKind::TwoSidedSPLC) {
            double s = 0.0;
            for (double v : xs[i][j]) s += v;
            return s;
        }
        return x[i][j];
    }

    int size() const { return kind == ModelKind::OneSidedSPLC || kind == ModelKind::TwoSidedSPLC
                                  ? (int)xs.size()
                                  : (int)x.size(); }

    double row_sum(int i) const {
        double s = 0.0;
        for (int j = 0; j < size(); ++j) s += pair_total(i, j);
        return s;
    }

    double col_sum(int j) const {
        double s = 0.0;
        for (int i = 0; i < size(); ++i) s += pair_total(i, j);
        return s;
    }
};

/// Deterministic RNG used everywhere randomness is needed. Draws are pinned
/// to the mt19937_64 bit stream so runs reproduce for a fixed seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return (double)(eng_() >> 11) * 0x1p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, bound) via rejection.
    std::uint64_t below(std::uint64_t bound) {
        std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = eng_();
            if (r >= threshold) return r % bound;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 eng_;
};

inline constexpr double kInfeasibleTol = 1e-9;
inline constexpr double kDeltaCap = 1e6;  // delta sentinel for Fisher instances

}  // namespace nbmatch

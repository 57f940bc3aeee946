// Eigenvalue branch tracking along the segment A + tC for non-negative A
// and C.  Every grid point gets a full indefinite-metric eigendecomposition;
// eigenvalues are split into first-order slots (degenerate clusters refined
// through the compression of C onto the cluster eigenspace), consecutive
// points are joined by a minimum-cost assignment on trapezoid-predicted
// positions, and chains that stay clustered together for their whole life
// are merged into one branch of higher multiplicity.  On top of the branch
// picture: clamping to a spectral interval with boundary-exact frozen
// endpoint values, the displacement quadrature, and the residual check of
// the displacement identity.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "core.hpp"
#include "schatten.hpp"
#include "spectral.hpp"

namespace kreinflow {

struct MatchingAmbiguous : Error {
    using Error::Error;
};

struct FlowConfig {
    std::vector<double> grid;
    double tol = 0.0;             // eigensolve tolerance, 0 = automatic
    double matching_tol = 1e-9;   // assignment ambiguity threshold

    // points equally spaced values of t in [0,1], endpoints included.
    static FlowConfig uniform(int points) {
        if (points < 2) throw Error("FlowConfig: need at least 2 grid points");
        FlowConfig cfg;
        cfg.grid.resize(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i)
            cfg.grid[static_cast<std::size_t>(i)] = static_cast<double>(i) / (points - 1);
        cfg.grid.front() = 0.0;
        cfg.grid.back() = 1.0;
        return cfg;
    }
};

inline void validate_grid(const std::vector<double>& grid) {
    if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0)
        throw Error("grid must start at 0 and end at 1");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw Error("grid must be strictly increasing");
}

// One eigenvalue trajectory of constant multiplicity and type.  values[k]
// belongs to grid index first + k; derivatives carry the non-negative form
// (1/m) sum_k [C x_k, x_k], so the actual slope is sign * derivatives[k].
struct Branch {
    int id = -1;
    int sign = 1;
    int multiplicity = 1;
    int first = 0;
    std::vector<double> values;
    std::vector<double> derivatives;
    std::vector<Matrix> frames;   // per point, n x multiplicity, [.,.]-orthonormal

    int last() const { return first + static_cast<int>(values.size()) - 1; }
    bool alive_at(int gi) const { return gi >= first && gi <= last(); }
    double value_at(int gi) const { return values[static_cast<std::size_t>(gi - first)]; }
    double derivative_at(int gi) const {
        return derivatives[static_cast<std::size_t>(gi - first)];
    }
    const Matrix& frame_at(int gi) const {
        return frames[static_cast<std::size_t>(gi - first)];
    }

    // [.,.]-orthogonal projection onto the branch eigenspace at grid index gi.
    Matrix projection_at(int gi, const KreinSpace& space) const {
        const Matrix& x = frame_at(gi);
        return static_cast<double>(sign) * x * x.adjoint() * space.fundamental_symmetry();
    }
};

struct FlowResult {
    DenseOperator a;
    DenseOperator c;
    std::vector<double> grid;
    std::vector<Branch> branches;
    std::vector<SpectrumReport> reports;   // per grid point

    const KreinSpace& space() const { return a.space(); }
    int points() const { return static_cast<int>(grid.size()); }
};

// (1/m) sum_k [C x_k, x_k] from the stored frame; non-negative whenever C is.
inline double branch_derivative(const Branch& b, int grid_index, const DenseOperator& c) {
    const Matrix& x = b.frame_at(grid_index);
    const Matrix d = x.adjoint() * c.space().fundamental_symmetry() * c.mat() * x;
    return d.real().trace() / b.multiplicity;
}

namespace detail {

// Minimum-cost assignment of rows to columns, rows <= cols; returns the
// matched column per row.  Potential-based shortest augmenting paths.
inline std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(m) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
        std::vector<bool> used(static_cast<std::size_t>(m) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const int i0 = match[static_cast<std::size_t>(j0)];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= m; ++j)
                if (!used[static_cast<std::size_t>(j)]) {
                    const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                       v[static_cast<std::size_t>(j)];
                    if (cur < minv[static_cast<std::size_t>(j)]) {
                        minv[static_cast<std::size_t>(j)] = cur;
                        way[static_cast<std::size_t>(j)] = j0;
                    }
                    if (minv[static_cast<std::size_t>(j)] < delta) {
                        delta = minv[static_cast<std::size_t>(j)];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= m; ++j)
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j)
        if (match[static_cast<std::size_t>(j)] > 0)
            row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

// First-order slot: one eigenvector direction with its refined slope.
struct Slot {
    double value = 0.0;
    double deriv = 0.0;   // [C x, x] for the refined direction, >= 0
    int sign = 1;
    int cluster = -1;     // cluster index within the point report
    Vector vec;

    double slope() const { return sign * deriv; }
};

// Splits every cluster of the report into slots.  Inside a degenerate
// cluster the compression D = X^* (J C) X is diagonalized; its eigenvalues
// are the first-order eigenvalue velocities and its eigenvectors pick the
// directions that continue analytically through the degeneracy.
inline std::vector<Slot> make_slots(const SpectrumReport& rep, const DenseOperator& c) {
    const Matrix jc = c.space().fundamental_symmetry() * c.mat();
    std::vector<Slot> slots;
    for (int cl = 0; cl < rep.cluster_count(); ++cl) {
        const Matrix& x = rep.frames[static_cast<std::size_t>(cl)];
        const int m = rep.multiplicities[static_cast<std::size_t>(cl)];
        const double value = rep.eigenvalues[static_cast<std::size_t>(cl)];
        const int sign = rep.type_signs[static_cast<std::size_t>(cl)];
        if (m == 1) {
            const double d = std::real(Complex(x.col(0).dot(jc * x.col(0))));
            slots.push_back({value, std::max(d, 0.0), sign, cl, x.col(0)});
            continue;
        }
        Matrix d = x.adjoint() * jc * x;
        d = 0.5 * (d + d.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix> es(d);
        if (es.info() != Eigen::Success)
            throw EigensolveFailed("make_slots: cluster compression eigensolve failed");
        for (int r = 0; r < m; ++r)
            slots.push_back({value, std::max(es.eigenvalues()(r), 0.0), sign, cl,
                             Vector(x * es.eigenvectors().col(r))});
    }
    return slots;
}

struct Chain {
    int first = 0;
    int sign = 1;
    std::vector<int> clusters;
    std::vector<double> values;
    std::vector<double> derivs;
    std::vector<Vector> vecs;
};

}  // namespace detail

inline FlowResult track(const DenseOperator& a, const DenseOperator& c, const FlowConfig& cfg) {
    if (a.space() != c.space())
        throw DimensionMismatch("track: operators live in different spaces");
    validate_grid(cfg.grid);
    if (!is_nonnegative(a, cfg.tol))
        throw NotNonnegative("track: A is not non-negative");
    if (!is_nonnegative(c, cfg.tol))
        throw NotNonnegative("track: C is not non-negative");
    if (!regularity_check(c, cfg.tol))
        throw RegularityViolated("track: rank C != rank C^2");

    FlowResult flow{a, c, cfg.grid, {}, {}};
    const int np = flow.points();
    flow.reports.reserve(static_cast<std::size_t>(np));
    std::vector<std::vector<detail::Slot>> slots(static_cast<std::size_t>(np));
    for (int i = 0; i < np; ++i) {
        flow.reports.push_back(eigen_nonnegative(a + cfg.grid[static_cast<std::size_t>(i)] * c,
                                                 cfg.tol));
        slots[static_cast<std::size_t>(i)] =
            detail::make_slots(flow.reports.back(), c);
    }

    // Chains of matched slots.  chain_of[k] is the chain owning slot k of the
    // current point.
    std::vector<detail::Chain> chains;
    std::vector<int> chain_of;
    const auto start_chain = [&](int point, const detail::Slot& s) {
        detail::Chain ch;
        ch.first = point;
        ch.sign = s.sign;
        ch.clusters.push_back(s.cluster);
        ch.values.push_back(s.value);
        ch.derivs.push_back(s.deriv);
        ch.vecs.push_back(s.vec);
        chains.push_back(std::move(ch));
        return static_cast<int>(chains.size()) - 1;
    };

    chain_of.resize(slots[0].size());
    for (std::size_t k = 0; k < slots[0].size(); ++k)
        chain_of[k] = start_chain(0, slots[0][k]);

    for (int i = 0; i + 1 < np; ++i) {
        const double dt = flow.grid[static_cast<std::size_t>(i + 1)] -
                          flow.grid[static_cast<std::size_t>(i)];
        const auto& cur = slots[static_cast<std::size_t>(i)];
        const auto& nxt = slots[static_cast<std::size_t>(i + 1)];
        std::vector<int> next_chain(nxt.size(), -1);

        // Matching runs separately per type sign; positive and negative
        // eigenvalues move monotonically away from zero, so slot counts per
        // sign never shrink and every current slot finds a continuation.
        for (int sign : {1, -1}) {
            std::vector<int> rows, cols;
            for (std::size_t k = 0; k < cur.size(); ++k)
                if (cur[k].sign == sign) rows.push_back(static_cast<int>(k));
            for (std::size_t k = 0; k < nxt.size(); ++k)
                if (nxt[k].sign == sign) cols.push_back(static_cast<int>(k));
            if (rows.empty()) continue;
            if (rows.size() > cols.size())
                throw EigensolveFailed("track: eigenvalue of fixed type disappeared between "
                                       "grid points");

            Eigen::MatrixXd cost(rows.size(), cols.size());
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t s = 0; s < cols.size(); ++s) {
                    const auto& sa = cur[static_cast<std::size_t>(rows[r])];
                    const auto& sb = nxt[static_cast<std::size_t>(cols[s])];
                    double cst =
                        std::abs(sa.value + 0.5 * (sa.slope() + sb.slope()) * dt - sb.value);
                    // Values move away from zero along every branch, so a
                    // continuation that steps toward zero is not a crossing
                    // but a wrong pairing; avoided crossings otherwise fool
                    // the first-order prediction when slopes swap inside one
                    // grid cell.
                    const double drop =
                        sign > 0 ? sb.value - sa.value : sa.value - sb.value;
                    if (drop < -cfg.matching_tol) cst += 1e9 + std::abs(drop);
                    cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = cst;
                }
            const std::vector<int> assign = detail::min_cost_assignment(cost);

            // A near-tie between materially different continuations means the
            // grid cannot distinguish the branches; refuse rather than guess.
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t q = r + 1; q < rows.size(); ++q) {
                    const auto& sa = cur[static_cast<std::size_t>(rows[r])];
                    const auto& sb = cur[static_cast<std::size_t>(rows[q])];
                    const double separation =
                        std::abs(sa.value - sb.value) + dt * std::abs(sa.slope() - sb.slope());
                    if (separation <= 100.0 * cfg.matching_tol) continue;
                    const double kept = cost(static_cast<Eigen::Index>(r), assign[r]) +
                                        cost(static_cast<Eigen::Index>(q), assign[q]);
                    const double swapped = cost(static_cast<Eigen::Index>(r), assign[q]) +
                                           cost(static_cast<Eigen::Index>(q), assign[r]);
                    if (swapped - kept <= cfg.matching_tol)
                        throw MatchingAmbiguous(
                            "track: branch continuation ambiguous between grid points " +
                            std::to_string(i) + " and " + std::to_string(i + 1) +
                            "; refine the grid");
                }

            for (std::size_t r = 0; r < rows.size(); ++r) {
                const int chain = chain_of[static_cast<std::size_t>(rows[r])];
                const auto& sb = nxt[static_cast<std::size_t>(cols[static_cast<std::size_t>(
                    assign[r])])];
                chains[static_cast<std::size_t>(chain)].clusters.push_back(sb.cluster);
                chains[static_cast<std::size_t>(chain)].values.push_back(sb.value);
                chains[static_cast<std::size_t>(chain)].derivs.push_back(sb.deriv);
                chains[static_cast<std::size_t>(chain)].vecs.push_back(sb.vec);
                next_chain[static_cast<std::size_t>(cols[static_cast<std::size_t>(assign[r])])] =
                    chain;
            }
        }

        for (std::size_t k = 0; k < nxt.size(); ++k)
            if (next_chain[k] < 0) next_chain[k] = start_chain(i + 1, nxt[k]);
        chain_of = std::move(next_chain);
    }

    // Chains that share their birth point and sit in the same cluster at
    // every single point are one analytic eigenvalue of higher multiplicity.
    std::vector<int> group(chains.size(), -1);
    int n_groups = 0;
    for (std::size_t p = 0; p < chains.size(); ++p) {
        if (group[p] >= 0) continue;
        group[p] = n_groups;
        for (std::size_t q = p + 1; q < chains.size(); ++q)
            if (group[q] < 0 && chains[q].first == chains[p].first &&
                chains[q].sign == chains[p].sign && chains[q].clusters == chains[p].clusters)
                group[q] = n_groups;
        ++n_groups;
    }

    flow.branches.resize(static_cast<std::size_t>(n_groups));
    for (int g = 0; g < n_groups; ++g) {
        std::vector<int> members;
        for (std::size_t p = 0; p < chains.size(); ++p)
            if (group[p] == g) members.push_back(static_cast<int>(p));
        const detail::Chain& lead = chains[static_cast<std::size_t>(members.front())];
        Branch b;
        b.sign = lead.sign;
        b.multiplicity = static_cast<int>(members.size());
        b.first = lead.first;
        const std::size_t len = lead.values.size();
        b.values = lead.values;
        b.derivatives.resize(len);
        b.frames.reserve(len);
        for (std::size_t k = 0; k < len; ++k) {
            Matrix frame(a.dim(), b.multiplicity);
            double deriv = 0.0;
            for (std::size_t mi = 0; mi < members.size(); ++mi) {
                const detail::Chain& ch = chains[static_cast<std::size_t>(members[mi])];
                frame.col(static_cast<Eigen::Index>(mi)) = ch.vecs[k];
                deriv += ch.derivs[k];
            }
            b.derivatives[k] = deriv / b.multiplicity;
            b.frames.push_back(std::move(frame));
        }
        flow.branches[static_cast<std::size_t>(g)] = std::move(b);
    }

    std::sort(flow.branches.begin(), flow.branches.end(), [](const Branch& x, const Branch& y) {
        if (x.first != y.first) return x.first < y.first;
        if (x.values.front() != y.values.front()) return x.values.front() < y.values.front();
        return x.derivatives.front() < y.derivatives.front();
    });
    for (std::size_t i = 0; i < flow.branches.size(); ++i)
        flow.branches[i].id = static_cast<int>(i);
    return flow;
}

namespace detail {

// Crossing time of a branch value against a boundary within one grid cell,
// from the cubic Hermite through the node values and analytic slopes.  The
// slopes make the estimate fourth order in the step; a secant estimate
// would cap the displacement identity at a noisy second order whenever a
// steep branch leaves the interval between nodes.  Falls back to the secant
// point if Newton leaves the cell.
inline double hermite_crossing(double t0, double t1, double v0, double v1, double s0, double s1,
                               double target) {
    const double h = t1 - t0;
    const double dv = v1 - v0;
    if (h <= 0.0 || dv == 0.0) return t1;
    const double secant = (target - v0) / dv;
    const double d0 = s0 * h, d1 = s1 * h;
    double x = secant;
    for (int it = 0; it < 8; ++it) {
        const double x2 = x * x, x3 = x2 * x;
        const double val = v0 * (2.0 * x3 - 3.0 * x2 + 1.0) + d0 * (x3 - 2.0 * x2 + x) +
                           v1 * (-2.0 * x3 + 3.0 * x2) + d1 * (x3 - x2) - target;
        const double der = v0 * (6.0 * x2 - 6.0 * x) + d0 * (3.0 * x2 - 4.0 * x + 1.0) +
                           v1 * (6.0 * x - 6.0 * x2) + d1 * (3.0 * x2 - 2.0 * x);
        if (der == 0.0) break;
        const double next = x - val / der;
        if (!(next >= 0.0 && next <= 1.0)) return t0 + secant * h;
        if (std::abs(next - x) <= 1e-15) {
            x = next;
            break;
        }
        x = next;
    }
    return t0 + x * h;
}

}  // namespace detail

// A branch seen through a spectral interval: the time window where its value
// lies strictly inside, and endpoint values frozen exactly at the boundary
// the branch crossed.  A branch that never visits the interval has
// in_set = false and contributes nothing downstream.
struct ClampedBranch {
    int branch_id = -1;
    int multiplicity = 1;
    int sign = 1;
    bool in_set = false;
    int enter = -1;            // first grid index strictly inside
    int exit = -1;             // last grid index strictly inside
    double entry_value = 0.0;  // frozen value at and before entry
    double exit_value = 0.0;   // frozen value at and after exit
    double entry_time = 0.0;   // crossing time estimate (equals grid[enter] if born inside)
    double exit_time = 1.0;

    double displacement() const { return exit_value - entry_value; }
};

inline ClampedBranch clamp(const Branch& b, const Interval& interval,
                           const std::vector<double>& grid) {
    ClampedBranch cb;
    cb.branch_id = b.id;
    cb.multiplicity = b.multiplicity;
    cb.sign = b.sign;

    int first_in = -1, last_in = -1;
    for (int gi = b.first; gi <= b.last(); ++gi)
        if (interval.contains(b.value_at(gi))) {
            if (first_in < 0) first_in = gi;
            last_in = gi;
        }
    if (first_in < 0) return cb;

    cb.in_set = true;
    cb.enter = first_in;
    cb.exit = last_in;

    if (first_in > b.first) {
        const double prev = b.value_at(first_in - 1);
        const double crossed = prev <= interval.lo ? interval.lo : interval.hi;
        cb.entry_value = crossed;
        const double v0 = prev, v1 = b.value_at(first_in);
        const double t0 = grid[static_cast<std::size_t>(first_in - 1)];
        const double t1 = grid[static_cast<std::size_t>(first_in)];
        cb.entry_time = detail::hermite_crossing(t0, t1, v0, v1,
                                                 b.sign * b.derivative_at(first_in - 1),
                                                 b.sign * b.derivative_at(first_in), crossed);
    } else {
        cb.entry_value = b.value_at(first_in);
        cb.entry_time = grid[static_cast<std::size_t>(first_in)];
    }

    if (last_in < b.last()) {
        const double next = b.value_at(last_in + 1);
        const double crossed = next >= interval.hi ? interval.hi : interval.lo;
        cb.exit_value = crossed;
        const double v0 = b.value_at(last_in), v1 = next;
        const double t0 = grid[static_cast<std::size_t>(last_in)];
        const double t1 = grid[static_cast<std::size_t>(last_in + 1)];
        cb.exit_time = v1 == v0 ? t0
                               : detail::hermite_crossing(
                                     t0, t1, v0, v1, b.sign * b.derivative_at(last_in),
                                     b.sign * b.derivative_at(last_in + 1), crossed);
    } else {
        cb.exit_value = b.value_at(last_in);
        cb.exit_time = grid[static_cast<std::size_t>(last_in)];
    }
    return cb;
}

// Frozen trajectory value at grid index gi, defined for in_set branches.
inline double clamped_value(const ClampedBranch& cb, const Branch& b, int gi) {
    if (!cb.in_set) throw Error("clamped_value: branch does not meet the interval");
    if (gi < cb.enter) return cb.entry_value;
    if (gi > cb.exit) return cb.exit_value;
    return b.value_at(gi);
}

struct ClampedFlow {
    Interval interval;
    std::vector<ClampedBranch> branches;   // parallel to flow.branches

    std::vector<int> members() const {
        std::vector<int> ids;
        for (const auto& cb : branches)
            if (cb.in_set) ids.push_back(cb.branch_id);
        return ids;
    }
};

inline ClampedFlow clamp_flow(const FlowResult& flow, const Interval& interval,
                              double tol = 0.0) {
    double scale = 1.0;
    for (const auto& rep : flow.reports) scale = std::max(scale, rep.scale);
    if (interval.touches_zero(effective_tol(tol, scale)))
        throw IntervalTouchesZero("clamp_flow: interval closure meets zero");
    ClampedFlow cf;
    cf.interval = interval;
    cf.branches.reserve(flow.branches.size());
    for (const auto& b : flow.branches) cf.branches.push_back(clamp(b, interval, flow.grid));
    return cf;
}

// sigma[j][l] = (1/m_j) integral over the clamped window of
// [E_j(t) phi_l, phi_l] dt.  Composite trapezoid over the grid points inside
// the window plus corrected partial cells at the boundary crossings, so the
// truncation error stays second order in the grid spacing even when the
// window does not start or end on the grid.
struct SigmaTable {
    std::vector<int> branch_ids;       // members of the clamped set, flow order
    Eigen::MatrixXd sigma;             // rows follow branch_ids, cols follow gammas
    Eigen::VectorXd row_sums;          // sum over l per branch
    double quadrature_error_estimate = 0.0;
};

inline SigmaTable sigma_matrix(const FlowResult& flow, const ClampedFlow& cf,
                               const PerturbationData& pert) {
    const Matrix j = flow.space().fundamental_symmetry();
    const int nl = pert.count();
    std::vector<int> ids;
    for (const auto& cb : cf.branches)
        if (cb.in_set) ids.push_back(cb.branch_id);

    SigmaTable tab;
    tab.branch_ids = ids;
    tab.sigma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ids.size()), nl);
    tab.row_sums = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ids.size()));

    const Matrix jphi = j * pert.phis;
    for (std::size_t row = 0; row < ids.size(); ++row) {
        const Branch& b = flow.branches[static_cast<std::size_t>(ids[row])];
        const ClampedBranch& cb = cf.branches[static_cast<std::size_t>(ids[row])];

        // f(i, l) = [E_b(t_i) phi_l, phi_l] = sign * || X_i^* J phi_l ||^2,
        // evaluated wherever the branch exists (also just outside the window,
        // for the boundary cells).
        const auto f = [&](int gi, int l) {
            const Matrix& x = b.frame_at(gi);
            return b.sign * (x.adjoint() * jphi.col(l)).squaredNorm();
        };

        for (int l = 0; l < nl; ++l) {
            double acc = 0.0;
            for (int gi = cb.enter; gi < cb.exit; ++gi) {
                const double dt = flow.grid[static_cast<std::size_t>(gi + 1)] -
                                  flow.grid[static_cast<std::size_t>(gi)];
                acc += 0.5 * dt * (f(gi, l) + f(gi + 1, l));
            }
            if (cb.enter > b.first) {
                const double t0 = flow.grid[static_cast<std::size_t>(cb.enter - 1)];
                const double t1 = flow.grid[static_cast<std::size_t>(cb.enter)];
                const double f0 = f(cb.enter - 1, l), f1 = f(cb.enter, l);
                const double fc = f0 + (f1 - f0) * (cb.entry_time - t0) / (t1 - t0);
                acc += 0.5 * (t1 - cb.entry_time) * (fc + f1);
            }
            if (cb.exit < b.last()) {
                const double t0 = flow.grid[static_cast<std::size_t>(cb.exit)];
                const double t1 = flow.grid[static_cast<std::size_t>(cb.exit + 1)];
                const double f0 = f(cb.exit, l), f1 = f(cb.exit + 1, l);
                const double fc = f0 + (f1 - f0) * (cb.exit_time - t0) / (t1 - t0);
                acc += 0.5 * (cb.exit_time - t0) * (f0 + fc);
            }
            tab.sigma(static_cast<Eigen::Index>(row), l) = acc / b.multiplicity;
        }
        tab.row_sums(static_cast<Eigen::Index>(row)) =
            tab.sigma.row(static_cast<Eigen::Index>(row)).sum();

        // Trapezoid truncation estimate from second differences of the
        // integrand: |window| / 12 * max |f''| h^2, with f'' h^2 read off as
        // the largest second difference over the window.
        double d2 = 0.0;
        for (int l = 0; l < nl; ++l)
            for (int gi = cb.enter + 1; gi < cb.exit; ++gi)
                d2 = std::max(d2, std::abs(f(gi + 1, l) - 2.0 * f(gi, l) + f(gi - 1, l)) /
                                      b.multiplicity);
        tab.quadrature_error_estimate = std::max(
            tab.quadrature_error_estimate,
            (cb.exit_time - cb.entry_time) / 12.0 * d2);
    }
    return tab;
}

// Residuals of the displacement identity: for every branch meeting the
// interval, the frozen endpoint displacement equals sum_l gamma_l sigma_jl
// up to quadrature error.  The two trace bounds tie the sigma table to the
// reciprocal of the uniform definiteness constant; violations are reported,
// not thrown, since they are what the whole computation is probing.
struct HdiReport {
    std::vector<int> branch_ids;
    std::vector<double> residuals;
    double max_residual = 0.0;
    double delta = 1.0;
    double quad_tol = 0.0;
    double row_bound_excess = 0.0;   // max_j row_sum_j - 1/delta
    double col_bound_excess = 0.0;   // max_l sum_j m_j sigma_jl - 1/delta
    bool row_bounds_ok = true;
    bool col_bounds_ok = true;
    bool residuals_ok = true;
};

inline HdiReport check_hdi(const FlowResult& flow, const ClampedFlow& cf, const SigmaTable& tab,
                           const PerturbationData& pert, double delta, double quad_tol = 0.0) {
    if (!(delta > 0.0)) throw NonPositiveDelta("check_hdi: delta must be positive");
    HdiReport rep;
    rep.branch_ids = tab.branch_ids;
    rep.delta = delta;
    rep.quad_tol = quad_tol > 0.0
                       ? quad_tol
                       : std::max(1e-8, 10.0 * tab.quadrature_error_estimate);

    // The displacement identity pairs sigma with the eigenvalue magnitudes:
    // lambda' = sum_l |gamma_l| |[phi_j, phi_l]|^2 regardless of the type of
    // phi_l, since the sign of gamma_l and the sign of [phi_l, phi_l] cancel.
    const Eigen::Map<const Eigen::VectorXd> gam(pert.gammas.data(),
                                                static_cast<Eigen::Index>(pert.gammas.size()));
    const Eigen::VectorXd gam_abs = gam.cwiseAbs();
    for (std::size_t row = 0; row < tab.branch_ids.size(); ++row) {
        const ClampedBranch& cb =
            cf.branches[static_cast<std::size_t>(tab.branch_ids[row])];
        const double predicted = tab.sigma.row(static_cast<Eigen::Index>(row)).dot(gam_abs);
        const double resid = std::abs(cb.displacement() - predicted);
        rep.residuals.push_back(resid);
        rep.max_residual = std::max(rep.max_residual, resid);
    }
    rep.residuals_ok = rep.max_residual <= rep.quad_tol;

    const double inv_delta = 1.0 / delta;
    if (tab.row_sums.size() > 0)
        rep.row_bound_excess = tab.row_sums.maxCoeff() - inv_delta;
    if (tab.sigma.cols() > 0 && !tab.branch_ids.empty()) {
        rep.col_bound_excess = std::numeric_limits<double>::lowest();
        for (int l = 0; l < tab.sigma.cols(); ++l) {
            double col = 0.0;
            for (std::size_t row = 0; row < tab.branch_ids.size(); ++row)
                col += flow.branches[static_cast<std::size_t>(tab.branch_ids[row])].multiplicity *
                       tab.sigma(static_cast<Eigen::Index>(row), l);
            rep.col_bound_excess = std::max(rep.col_bound_excess, col - inv_delta);
        }
    }
    rep.row_bounds_ok = rep.row_bound_excess <= rep.quad_tol;
    rep.col_bounds_ok = rep.col_bound_excess <= rep.quad_tol;
    return rep;
}

}  // namespace kreinflow

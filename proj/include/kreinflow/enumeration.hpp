// Endpoint enumerations of the clamped branches and the summability bound:
// each branch meeting the interval contributes the pair of its frozen
// endpoint values with its multiplicity, and the p-th power displacement sum
// is compared against delta^(-p) times the p-sum of the perturbation
// eigenvalues.  Negative intervals reduce to positive ones by reflecting
// the whole problem through zero.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "core.hpp"
#include "flow.hpp"
#include "schatten.hpp"
#include "spectral.hpp"

namespace kreinflow {

struct IntervalContainsZero : Error {
    using Error::Error;
};
struct SplitOnEigenvalue : Error {
    using Error::Error;
};

struct EnumerationPair {
    int branch_id = -1;
    int multiplicity = 1;
    double alpha = 0.0;   // clamped value at t = 0
    double beta = 0.0;    // clamped value at t = 1
};

struct EnumerationResult {
    Interval interval;
    double p = 1.0;
    double delta = 1.0;
    std::vector<EnumerationPair> pairs;
    double lp_sum = 0.0;             // sum m_j |beta_j - alpha_j|^p
    double bound_rhs = 0.0;          // delta^(-p) sum_l |gamma_l|^p
    double margin = 0.0;             // bound_rhs - lp_sum
    double slack = 0.0;              // tolerance applied to within_bound
    bool within_bound = false;
    int boundary_pinned = 0;         // endpoints frozen at an interval boundary
    double sorted_pairing_lp_sum = 0.0;  // monotone re-pairing of the same endpoint multisets
};

inline EnumerationResult extended_enumerations(const ClampedFlow& cf, double p, double delta,
                                               const PerturbationData& pert,
                                               double slack = 1e-8) {
    if (!(p >= 1.0) || !std::isfinite(p))
        throw InvalidExponent("extended_enumerations: exponent must satisfy p >= 1");
    if (cf.interval.lo <= 0.0 && cf.interval.hi >= 0.0)
        throw IntervalContainsZero("extended_enumerations: interval must not meet zero");
    if (!(delta > 0.0))
        throw NonPositiveDelta("extended_enumerations: delta must be positive");

    EnumerationResult res;
    res.interval = cf.interval;
    res.p = p;
    res.delta = delta;
    res.slack = slack;

    std::vector<double> displacements;
    std::vector<double> alphas, betas;
    for (const auto& cb : cf.branches) {
        if (!cb.in_set) continue;
        res.pairs.push_back({cb.branch_id, cb.multiplicity, cb.entry_value, cb.exit_value});
        for (int k = 0; k < cb.multiplicity; ++k) {
            displacements.push_back(cb.exit_value - cb.entry_value);
            alphas.push_back(cb.entry_value);
            betas.push_back(cb.exit_value);
        }
        const bool pinned = cb.entry_value == cf.interval.lo || cb.entry_value == cf.interval.hi ||
                            cb.exit_value == cf.interval.lo || cb.exit_value == cf.interval.hi;
        if (pinned) ++res.boundary_pinned;
    }

    res.lp_sum = detail::stable_power_sum(displacements, p);
    res.bound_rhs = std::pow(delta, -p) * gamma_power_sum(pert.gammas, p);
    res.margin = res.bound_rhs - res.lp_sum;
    res.within_bound = res.lp_sum <= res.bound_rhs + slack;

    // Monotone coupling of the two endpoint multisets: the cheapest pairing
    // for a convex displacement cost, reported next to the branch pairing.
    std::sort(alphas.begin(), alphas.end());
    std::sort(betas.begin(), betas.end());
    std::vector<double> sorted_disp(alphas.size());
    for (std::size_t i = 0; i < alphas.size(); ++i) sorted_disp[i] = betas[i] - alphas[i];
    res.sorted_pairing_lp_sum = detail::stable_power_sum(std::move(sorted_disp), p);
    return res;
}

// The problem (-A, -C) in the anti-space: flipping every signature sign makes
// -A and -C non-negative again, and the spectrum reflects through zero.
struct ReflectedProblem {
    DenseOperator a;
    DenseOperator c;
    Interval interval;
};

inline ReflectedProblem reflect(const DenseOperator& a, const DenseOperator& c,
                                const Interval& interval) {
    if (a.space() != c.space())
        throw DimensionMismatch("reflect: operators live in different spaces");
    if (!(interval.hi < 0.0))
        throw Error("reflect: interval must be entirely negative");
    const KreinSpace flipped = a.space().flipped();
    return ReflectedProblem{DenseOperator(-a.mat(), flipped), DenseOperator(-c.mat(), flipped),
                            interval.reflected()};
}

// Reflected view of an already tracked flow: values and type signs negate,
// eigenvectors and the non-negative derivative forms carry over unchanged.
inline FlowResult reflect_flow(const FlowResult& flow) {
    const KreinSpace flipped = flow.space().flipped();
    FlowResult out{DenseOperator(-flow.a.mat(), flipped), DenseOperator(-flow.c.mat(), flipped),
                   flow.grid, {}, {}};
    out.branches = flow.branches;
    for (auto& b : out.branches) {
        b.sign = -b.sign;
        for (double& v : b.values) v = -v;
    }
    out.reports.reserve(flow.reports.size());
    for (const auto& rep : flow.reports) {
        SpectrumReport r = rep;
        r.space = flipped;
        for (double& v : r.eigenvalues) v = -v;
        for (int& s : r.type_signs) s = -s;
        std::reverse(r.eigenvalues.begin(), r.eigenvalues.end());
        std::reverse(r.multiplicities.begin(), r.multiplicities.end());
        std::reverse(r.type_signs.begin(), r.type_signs.end());
        std::reverse(r.frames.begin(), r.frames.end());
        out.reports.push_back(std::move(r));
    }
    return out;
}

// Pulls an enumeration on the reflected problem back to the original
// orientation.  Displacement magnitudes are preserved bitwise.
inline EnumerationResult reflect_enumeration(const EnumerationResult& res) {
    EnumerationResult out = res;
    out.interval = res.interval.reflected();
    for (auto& pr : out.pairs) {
        pr.alpha = -pr.alpha;
        pr.beta = -pr.beta;
    }
    return out;
}

// Splits an interval at designated interior points, refusing points that sit
// on (or within tol of) a listed eigenvalue, where the subinterval spectral
// projections would be ill defined.
inline std::vector<Interval> split_interval(const Interval& interval,
                                            std::vector<double> points,
                                            const std::vector<double>& avoid_eigenvalues,
                                            double tol = 1e-10) {
    std::sort(points.begin(), points.end());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!interval.contains(points[i]))
            throw Error("split_interval: split point outside the interval");
        if (i > 0 && points[i] == points[i - 1])
            throw Error("split_interval: duplicate split point");
        for (double ev : avoid_eigenvalues)
            if (std::abs(points[i] - ev) <= tol)
                throw SplitOnEigenvalue("split_interval: split point " +
                                        std::to_string(points[i]) +
                                        " coincides with an eigenvalue");
    }
    std::vector<Interval> parts;
    double lo = interval.lo;
    for (double pt : points) {
        parts.emplace_back(lo, pt);
        lo = pt;
    }
    parts.emplace_back(lo, interval.hi);
    return parts;
}

}  // namespace kreinflow

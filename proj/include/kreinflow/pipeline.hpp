// Full verification pipeline: track the flow, clamp it to the interval,
// integrate the displacement quadrature, check the displacement identity and
// the projection bounds, and compare the p-th power displacement sum against
// the perturbation bound.  Negative intervals run through the reflected
// problem and are pulled back afterwards.  The report produced here is the
// machine-readable contract of the command line runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "enumeration.hpp"
#include "flow.hpp"
#include "instances.hpp"
#include "io.hpp"
#include "schatten.hpp"
#include "spectral.hpp"

namespace kreinflow {

struct RunConfig {
    Interval interval{1.0, 3.0};
    double p = 1.0;
    int grid_steps = 101;        // number of grid points, >= 2
    double tol = 0.0;            // eigensolve tolerance, 0 = automatic
    double matching_tol = 1e-9;
    double lp_slack = 1e-8;
    double norm_slack = 1e-8;    // slack on projection norm bounds
};

struct BranchRecord {
    int id = -1;
    int multiplicity = 1;
    int sign = 1;
    bool in_set = false;
    double alpha = 0.0;          // clamped value at t=0 (raw endpoint if not in set)
    double beta = 0.0;           // clamped value at t=1
    double max_derivative_fd_gap = 0.0;
};

struct PipelineResult {
    RunConfig config;
    bool reflected = false;
    FlowResult flow;        // original orientation, as requested
    FlowResult work;        // positive orientation used by the bound machinery
    ClampedFlow clamped;    // on the working flow
    PerturbationData pert;  // working orientation
    SigmaTable sigma;
    HdiReport hdi;
    EnumerationResult enumeration;   // pulled back to the original orientation
    double delta = 1.0;
    std::vector<BranchRecord> branch_records;

    bool monotonic = true;
    double monotonicity_slack = 1e-9;
    double projection_identity_max = 0.0;
    bool projection_identity_ok = true;
    double h_norm_max = 0.0;
    bool h_norms_ok = true;
    double gram_min = 1.0;
    bool gram_min_ok = true;
    double max_derivative_fd_gap = 0.0;
    double derivative_fd_tol = 0.0;
    bool derivative_ok = true;

    bool passed() const {
        return enumeration.within_bound && monotonic && hdi.residuals_ok && hdi.row_bounds_ok &&
               hdi.col_bounds_ok && projection_identity_ok && h_norms_ok && gram_min_ok &&
               derivative_ok;
    }
};

namespace detail {

// Largest grid spacing; tolerance scales quoted "at grid step h" refer to it.
inline double grid_step(const std::vector<double>& grid) {
    double h = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) h = std::max(h, grid[i] - grid[i - 1]);
    return h;
}

// Central finite differences of branch values against the analytic slope.
// Points where another branch comes within 10 h in value are skipped: there
// the assignment of raw eigenvalues to branches is exactly what finite
// differences cannot see through.  The difference is also only an oracle
// where its own truncation stays below the comparison tolerance; the
// truncation is read off the third difference of the values alone, since a
// sharp avoided crossing can keep branches far apart in value yet push the
// third derivative orders of magnitude past what an h^2 stencil resolves.
inline double derivative_fd_gap(const FlowResult& flow, const Branch& b, double h,
                                double trunc_tol = 0.0) {
    if (trunc_tol <= 0.0) trunc_tol = 0.5 * std::max(1e-5, 10.0 * h * h);
    double worst = 0.0;
    for (int gi = b.first + 1; gi < b.last(); ++gi) {
        bool near_other = false;
        for (const auto& other : flow.branches) {
            if (other.id == b.id || !other.alive_at(gi)) continue;
            if (std::abs(other.value_at(gi) - b.value_at(gi)) <= 10.0 * h) near_other = true;
        }
        if (near_other) continue;
        // The third difference is an odd function of position around a sharp
        // avoided crossing and vanishes at its center while the stencil error
        // does not, so the estimate is taken over the neighboring stencils
        // as well.
        double trunc_est = 0.0;
        for (int j = gi - 1; j <= gi + 1; ++j) {
            if (j - 2 < b.first || j + 2 > b.last()) continue;
            const double third = b.value_at(j + 2) - 2.0 * b.value_at(j + 1) +
                                 2.0 * b.value_at(j - 1) - b.value_at(j - 2);
            trunc_est = std::max(trunc_est, std::abs(third) / (12.0 * h));
        }
        if (trunc_est > trunc_tol) continue;
        const double dt = flow.grid[static_cast<std::size_t>(gi + 1)] -
                          flow.grid[static_cast<std::size_t>(gi - 1)];
        const double fd = (b.value_at(gi + 1) - b.value_at(gi - 1)) / dt;
        const double analytic = b.sign * b.derivative_at(gi);
        worst = std::max(worst, std::abs(fd - analytic));
    }
    return worst;
}

}  // namespace detail

inline PipelineResult run_pipeline(const Instance& inst, const RunConfig& cfg) {
    if (cfg.interval.lo <= 0.0 && cfg.interval.hi >= 0.0)
        throw IntervalContainsZero("run_pipeline: interval must not contain zero");
    if (!(cfg.p >= 1.0) || !std::isfinite(cfg.p))
        throw InvalidExponent("run_pipeline: p must satisfy p >= 1");
    if (cfg.grid_steps < 2) throw Error("run_pipeline: need at least 2 grid points");

    FlowConfig fc = FlowConfig::uniform(cfg.grid_steps);
    fc.tol = cfg.tol;
    fc.matching_tol = cfg.matching_tol;

    PipelineResult res{cfg,
                       cfg.interval.hi < 0.0,
                       track(inst.a, inst.c, fc),
                       FlowResult{inst.a, inst.c, fc.grid, {}, {}},
                       {},
                       PerturbationData{{}, Matrix(), {}, DenseOperator(Matrix::Identity(1, 1),
                                                                        KreinSpace::hilbert(1)),
                                        cfg.p, 0.0, 0.0},
                       {},
                       {},
                       {}};

    Interval work_iv = cfg.interval;
    if (res.reflected) {
        const ReflectedProblem rp = reflect(inst.a, inst.c, cfg.interval);
        res.work = reflect_flow(res.flow);
        work_iv = rp.interval;
    } else {
        res.work = res.flow;
    }

    res.pert = krein_eigendata(res.work.c, cfg.p, cfg.tol);
    res.delta = delta_bound(res.work.a, res.work.c, work_iv.lo, fc.grid, cfg.tol);
    res.clamped = clamp_flow(res.work, work_iv, cfg.tol);
    res.sigma = sigma_matrix(res.work, res.clamped, res.pert);
    res.hdi = check_hdi(res.work, res.clamped, res.sigma, res.pert, res.delta);
    EnumerationResult en =
        extended_enumerations(res.clamped, cfg.p, res.delta, res.pert, cfg.lp_slack);
    res.enumeration = res.reflected ? reflect_enumeration(en) : en;

    // Monotonicity in the original orientation: positive branches may not
    // decrease, negative ones may not increase, beyond the fixed slack.
    for (const auto& b : res.flow.branches)
        for (std::size_t k = 1; k < b.values.size(); ++k) {
            const double step = b.values[k] - b.values[k - 1];
            if (b.sign > 0 && step < -res.monotonicity_slack) res.monotonic = false;
            if (b.sign < 0 && step > res.monotonicity_slack) res.monotonic = false;
        }

    // Projection identity at every grid point of the working flow: the sum of
    // the clamped branch projections against the interval spectral projection
    // of an independently assembled report.  Grid points with an eigenvalue
    // on the interval boundary are skipped; the projection is not defined
    // there.
    const Matrix gram_m = detail::definite_gram_matrix(res.pert.adapted, res.work.space());
    const double inv_delta = 1.0 / res.delta;
    const int np = res.work.points();
    const int n = res.work.space().dim();
    for (int gi = 0; gi < np; ++gi) {
        Matrix sum = Matrix::Zero(n, n);
        bool any = false;
        for (const auto& b : res.work.branches) {
            if (!b.alive_at(gi) || !work_iv.contains(b.value_at(gi))) continue;
            const Matrix pb = b.projection_at(gi, res.work.space());
            sum += pb;
            any = true;
            const double nb = h_operator_norm(pb, gram_m);
            res.h_norm_max = std::max(res.h_norm_max, nb);

            Matrix q;
            try {
                q = detail::m_orthonormalize(b.frame_at(gi), gram_m);
            } catch (const DegenerateSubspace&) {
                res.gram_min_ok = false;
                continue;
            }
            Matrix g = q.adjoint() * res.work.space().fundamental_symmetry() * q;
            g = 0.5 * (g + g.adjoint());
            const double gm =
                Eigen::SelfAdjointEigenSolver<Matrix>(g, Eigen::EigenvaluesOnly).eigenvalues()
                    .minCoeff();
            res.gram_min = std::min(res.gram_min, gm);
        }
        if (any) res.h_norm_max = std::max(res.h_norm_max, h_operator_norm(sum, gram_m));

        try {
            const SpectralProjection sp =
                spectral_projection(res.work.reports[static_cast<std::size_t>(gi)], work_iv,
                                    cfg.tol);
            const double scale = std::max(1.0, max_norm(sp.projection.mat()));
            res.projection_identity_max = std::max(
                res.projection_identity_max, max_norm(Matrix(sum - sp.projection.mat())) / scale);
        } catch (const EigenvalueOnBoundary&) {
        } catch (const IntervalTouchesZero&) {
        }
    }
    res.projection_identity_ok = res.projection_identity_max <= 1e-8;
    res.h_norms_ok = res.h_norm_max <= inv_delta + cfg.norm_slack;
    res.gram_min_ok = res.gram_min_ok && res.gram_min > 0.0 &&
                      res.gram_min >= res.delta - cfg.norm_slack;

    // Analytic derivative against central differences on the original flow.
    const double h = detail::grid_step(fc.grid);
    res.derivative_fd_tol = std::max(1e-5, 10.0 * h * h);
    res.branch_records.reserve(res.flow.branches.size());
    for (std::size_t bi = 0; bi < res.flow.branches.size(); ++bi) {
        const Branch& b = res.flow.branches[bi];
        BranchRecord rec;
        rec.id = b.id;
        rec.multiplicity = b.multiplicity;
        rec.sign = b.sign;
        const ClampedBranch& cb = res.clamped.branches[bi];
        rec.in_set = cb.in_set;
        if (cb.in_set) {
            rec.alpha = res.reflected ? -cb.entry_value : cb.entry_value;
            rec.beta = res.reflected ? -cb.exit_value : cb.exit_value;
        } else {
            rec.alpha = b.values.front();
            rec.beta = b.values.back();
        }
        rec.max_derivative_fd_gap = detail::derivative_fd_gap(res.flow, b, h);
        res.max_derivative_fd_gap = std::max(res.max_derivative_fd_gap,
                                             rec.max_derivative_fd_gap);
        res.branch_records.push_back(rec);
    }
    res.derivative_ok = res.max_derivative_fd_gap <= res.derivative_fd_tol;
    return res;
}

// Rows of the trajectory CSV: one row per grid point and live branch of the
// original-orientation flow.  gram_min is the smallest [.,.]-Gram eigenvalue
// of the branch frame orthonormalized in the adapted metric of C.
inline std::vector<TrajectoryRow> trajectory_rows(const PipelineResult& res) {
    const FlowResult& flow = res.flow;
    const DenseOperator jhat = adapted_symmetry(flow.c, res.config.tol);
    const Matrix gram_m = detail::definite_gram_matrix(jhat, flow.space());
    const Matrix j = flow.space().fundamental_symmetry();

    std::vector<TrajectoryRow> rows;
    for (int gi = 0; gi < flow.points(); ++gi)
        for (const auto& b : flow.branches) {
            if (!b.alive_at(gi)) continue;
            TrajectoryRow row;
            row.t = flow.grid[static_cast<std::size_t>(gi)];
            row.branch_id = b.id;
            row.lambda = b.value_at(gi);
            row.multiplicity = b.multiplicity;
            const Matrix q = detail::m_orthonormalize(b.frame_at(gi), gram_m);
            Matrix g = q.adjoint() * j * q;
            g = 0.5 * (g + g.adjoint());
            row.gram_min = Eigen::SelfAdjointEigenSolver<Matrix>(g, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
            rows.push_back(row);
        }
    return rows;
}

inline json report_to_json(const Instance& inst, const PipelineResult& res) {
    json rep;
    rep["instance"] = json{{"name", inst.name},
                           {"n", inst.space.dim()},
                           {"signature", inst.space.signature()},
                           {"seed", inst.spec.seed}};
    rep["config"] = json{{"interval", json::array({res.config.interval.lo,
                                                   res.config.interval.hi})},
                         {"p", res.config.p},
                         {"steps", res.config.grid_steps},
                         {"tol", res.config.tol},
                         {"reflected", res.reflected}};
    rep["delta"] = res.delta;
    rep["gammas"] = res.pert.gammas;

    {
        const RealVector sv = singular_values(res.work.c);
        json sj = json::array();
        for (int i = 0; i < sv.size(); ++i) sj.push_back(sv(i));
        rep["schatten"] = json{{"p", res.pert.p},
                               {"norm", res.pert.schatten},
                               {"gamma_power_sum", res.pert.gamma_power_sum},
                               {"singular_values", sj}};
    }

    json branches = json::array();
    for (const auto& rec : res.branch_records)
        branches.push_back(json{{"id", rec.id},
                                {"multiplicity", rec.multiplicity},
                                {"sign", rec.sign},
                                {"in_set", rec.in_set},
                                {"alpha", rec.alpha},
                                {"beta", rec.beta},
                                {"max_derivative_fd_gap", rec.max_derivative_fd_gap}});
    rep["branches"] = branches;

    rep["lp_sum"] = res.enumeration.lp_sum;
    rep["bound_rhs"] = res.enumeration.bound_rhs;
    rep["margin"] = res.enumeration.margin;
    rep["sorted_pairing_lp_sum"] = res.enumeration.sorted_pairing_lp_sum;
    rep["boundary_pinned"] = res.enumeration.boundary_pinned;

    rep["checks"] = json{{"within_bound", res.enumeration.within_bound},
                         {"monotonic", res.monotonic},
                         {"hdi_residual_max", res.hdi.max_residual},
                         {"hdi_residuals_ok", res.hdi.residuals_ok},
                         {"sigma_row_bounds_ok", res.hdi.row_bounds_ok},
                         {"sigma_col_bounds_ok", res.hdi.col_bounds_ok},
                         {"projection_identity_max", res.projection_identity_max},
                         {"projection_identity_ok", res.projection_identity_ok},
                         {"h_norm_max", res.h_norm_max},
                         {"h_norms_ok", res.h_norms_ok},
                         {"gram_min", res.gram_min},
                         {"gram_min_ok", res.gram_min_ok},
                         {"max_derivative_fd_gap", res.max_derivative_fd_gap},
                         {"derivative_ok", res.derivative_ok}};
    rep["passed"] = res.passed();
    rep["exit_status"] = res.passed() ? 0 : 2;
    return rep;
}

// Exit-code contract: 0 pass, 2 check failure, 3 invalid instance or
// hypotheses, 4 numerical failure.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IllConditioned*>(&e) || dynamic_cast<const EigensolveFailed*>(&e) ||
        dynamic_cast<const NonPositiveDelta*>(&e) ||
        dynamic_cast<const MatchingAmbiguous*>(&e) ||
        dynamic_cast<const DegenerateKernel*>(&e) ||
        dynamic_cast<const DegenerateSubspace*>(&e))
        return 4;
    return 3;
}

}  // namespace kreinflow

// Acceptance gate: ten checks with pinned tolerances, one printed line per
// check, nonzero exit when any of them fails.  argv[1] names the command
// line runner binary; the hypothesis-rejection check launches it as a
// subprocess and inspects the exit code.

#include <kreinflow/kreinflow.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "support/oracles.hpp"

namespace kf = kreinflow;

namespace {

std::string g3(double x) {
    char b[64];
    std::snprintf(b, sizeof b, "%.3g", x);
    return b;
}

struct Line {
    bool pass = false;
    std::string detail;
};

// Shared accumulator feeding the monotonicity and proof-chain criteria.
struct Aggregate {
    int runs = 0;
    int flows = 0;
    bool monotonic_all = true;
    bool rowcol_all = true;
    bool hnorm_all = true;
    double worst_row_excess = -std::numeric_limits<double>::infinity();
    double worst_col_excess = -std::numeric_limits<double>::infinity();
    double worst_hnorm_slack = -std::numeric_limits<double>::infinity();
    std::string first_violation;

    void note(const kf::PipelineResult& res, const std::string& label) {
        ++runs;
        note_flow(res.flow, label);
        if (!res.monotonic && first_violation.empty()) first_violation = label + " (pipeline)";
        if (!res.monotonic) monotonic_all = false;
        if (!res.hdi.row_bounds_ok || !res.hdi.col_bounds_ok) rowcol_all = false;
        worst_row_excess = std::max(worst_row_excess, res.hdi.row_bound_excess);
        worst_col_excess = std::max(worst_col_excess, res.hdi.col_bound_excess);
        if (!res.h_norms_ok) hnorm_all = false;
        worst_hnorm_slack = std::max(
            worst_hnorm_slack, res.h_norm_max - (1.0 / res.delta + res.config.norm_slack));
    }

    void note_flow(const kf::FlowResult& flow, const std::string& label) {
        ++flows;
        for (const auto& b : flow.branches)
            for (std::size_t k = 1; k < b.values.size(); ++k) {
                const double step = b.values[k] - b.values[k - 1];
                if ((b.sign > 0 && step < -1e-9) || (b.sign < 0 && step > 1e-9)) {
                    monotonic_all = false;
                    if (first_violation.empty())
                        first_violation = label + " branch " + std::to_string(b.id) + " step " +
                                          g3(step) + " at k=" + std::to_string(k);
                }
            }
    }
};

kf::PipelineResult run_retry(const kf::Instance& inst, kf::RunConfig cfg) {
    for (int attempt = 0;; ++attempt) {
        try {
            return kf::run_pipeline(inst, cfg);
        } catch (const kf::MatchingAmbiguous&) {
            if (attempt >= 2) throw;
            cfg.grid_steps = 2 * (cfg.grid_steps - 1) + 1;
        }
    }
}

kf::FlowResult track_retry(const kf::DenseOperator& a, const kf::DenseOperator& c, int points) {
    for (int attempt = 0;; ++attempt) {
        try {
            return kf::track(a, c, kf::FlowConfig::uniform(points));
        } catch (const kf::MatchingAmbiguous&) {
            if (attempt >= 2) throw;
            points = 2 * (points - 1) + 1;
        }
    }
}

// 1. lp bound on 200 random instances, all four exponents.
Line criterion_lp_bound(Aggregate& agg) {
    const std::vector<kf::Interval> ivs = {{0.15, 5.0}, {0.2, 1.8},    {0.5, 2.5},
                                           {1.0, 3.0},  {-5.0, -0.15}, {-2.5, -0.4}};
    const std::vector<double> ps = {1.0, 1.5, 2.0, 3.0};
    int violations = 0, ran = 0;
    double min_margin = std::numeric_limits<double>::infinity();
    std::string first_bad;
    for (int k = 0; k < 200; ++k) {
        kf::RandomConfig rc;
        rc.n = 2 + k % 11;
        rc.n_plus = (k * 7 + 1) % (rc.n + 1);
        rc.seed = 1000 + static_cast<std::uint64_t>(k);
        kf::RunConfig cfg;
        cfg.interval = ivs[static_cast<std::size_t>(k) % ivs.size()];
        try {
            const kf::Instance inst = kf::random_instance(rc);
            const kf::PipelineResult res = run_retry(inst, cfg);
            agg.note(res, "lp seed " + std::to_string(rc.seed));
            ++ran;
            for (double p : ps) {
                const kf::EnumerationResult en =
                    p == 1.0 ? res.enumeration
                             : kf::extended_enumerations(res.clamped, p, res.delta, res.pert,
                                                         cfg.lp_slack);
                min_margin = std::min(min_margin, en.margin);
                if (!en.within_bound) {
                    ++violations;
                    if (first_bad.empty())
                        first_bad = "seed " + std::to_string(rc.seed) + " p=" + g3(p) +
                                    " excess=" + g3(en.lp_sum - en.bound_rhs);
                }
            }
        } catch (const std::exception& e) {
            ++violations;
            if (first_bad.empty())
                first_bad = "seed " + std::to_string(rc.seed) + ": " + e.what();
        }
    }
    Line line;
    line.pass = violations == 0 && ran == 200;
    line.detail = "lp bound: 200 random instances (n<=12) x p in {1,1.5,2,3}, " +
                  std::to_string(violations) + " violations (slack 1e-8), min margin " +
                  g3(min_margin);
    if (!first_bad.empty()) line.detail += "; first: " + first_bad;
    return line;
}

// 2. Hyperbolic preset closed forms.
Line criterion_hyperbolic(Aggregate& agg) {
    const kf::Preset hp = kf::preset("hyperbolic-2x2");
    kf::RunConfig cfg;
    cfg.interval = hp.default_interval;
    const kf::PipelineResult res = run_retry(hp.instance, cfg);
    agg.note(res, "hyperbolic-2x2");

    const kf::SpectrumReport rep = kf::eigen_nonnegative(hp.instance.a + hp.instance.c);
    const double disc = std::sqrt(10.285);
    double eig_dev = std::numeric_limits<double>::infinity();
    if (rep.cluster_count() == 2)
        eig_dev = std::max(std::abs(rep.eigenvalues[0] - (1.1 - disc) / 2.0),
                           std::abs(rep.eigenvalues[1] - (1.1 + disc) / 2.0));

    const bool delta_ok = res.delta > 0.0 && res.delta <= 8.0 / 17.0 + 1e-10;
    const double lp_dev = std::abs(res.enumeration.lp_sum - 0.15351);
    const double margin_closed = 0.2125 - (disc - 2.9) / 2.0;
    const double margin_dev = std::abs(res.enumeration.margin - margin_closed);
    // 0.059 is the two-figure rounding of the closed-form margin
    // 0.05898822891754...; the margin is pinned to the closed form at 1e-10
    // and the 0.059 threshold carries the same 1e-4 slack as the lp check.
    const bool margin_ok = margin_dev <= 1e-10 && res.enumeration.margin >= 0.059 - 1e-4;

    Line line;
    line.pass = eig_dev <= 1e-10 && delta_ok && lp_dev <= 1e-4 && margin_ok;
    line.detail = std::string("hyperbolic-2x2: eig dev ") + g3(eig_dev) +
                  " (tol 1e-10), delta " + kf::format_full(res.delta) +
                  " in (0, 8/17+1e-10], lp dev " + g3(lp_dev) + " (tol 1e-4), margin " +
                  kf::format_full(res.enumeration.margin) + " = closed form " +
                  kf::format_full(margin_closed) + " +- " + g3(margin_dev) +
                  " (tol 1e-10, threshold 0.059-1e-4)";
    return line;
}

// 3. Analytic derivative against central finite differences.
Line criterion_derivative(Aggregate& agg) {
    double worst = 0.0;
    std::string worst_at = "-";
    const auto scan = [&](const kf::FlowResult& flow, const std::string& label) {
        agg.note_flow(flow, label);
        const double h = kf::detail::grid_step(flow.grid);
        for (const auto& b : flow.branches) {
            const double gap = kf::detail::derivative_fd_gap(flow, b, h);
            if (gap > worst) {
                worst = gap;
                worst_at = label;
            }
        }
    };

    double d0 = std::numeric_limits<double>::quiet_NaN();
    for (const std::string& name : kf::preset_names()) {
        const kf::Preset p = kf::preset(name);
        const kf::FlowResult flow = track_retry(p.instance.a, p.instance.c, 1001);
        scan(flow, name);
        if (name == "hyperbolic-2x2")
            for (const auto& b : flow.branches)
                if (b.sign > 0) d0 = b.derivative_at(0);
    }
    for (int k = 0; k < 20; ++k) {
        kf::RandomConfig rc;
        rc.n = 3 + k % 6;
        rc.n_plus = (k * 5 + 1) % (rc.n + 1);
        rc.seed = 7000 + static_cast<std::uint64_t>(k);
        const kf::Instance inst = kf::random_instance(rc);
        scan(track_retry(inst.a, inst.c, 1001), "random seed " + std::to_string(rc.seed));
    }

    const double d0_dev = std::abs(d0 - 0.15625);
    Line line;
    line.pass = worst <= 1e-5 && d0_dev <= 1e-10;
    line.detail = "derivatives: presets + 20 random at h=1e-3, max |analytic - fd| " + g3(worst) +
                  " (tol 1e-5, at " + worst_at + "), hyperbolic d/dt at t=0 = " +
                  kf::format_full(d0) + " vs 0.15625 (dev " + g3(d0_dev) + ", tol 1e-10)";
    return line;
}

// 4. Monotonicity of every tracked flow, including an explicitly reflected
// run on the mirrored hyperbolic instance.
Line criterion_monotonic(Aggregate& agg) {
    const kf::Preset hp = kf::preset("hyperbolic-2x2");
    const kf::KreinSpace flipped = hp.instance.space.flipped();
    const kf::Instance mirrored{"hyperbolic-mirrored", flipped,
                                kf::DenseOperator(-hp.instance.a.mat(), flipped),
                                kf::DenseOperator(-hp.instance.c.mat(), flipped),
                                hp.instance.spec};
    kf::RunConfig cfg;
    cfg.interval = kf::Interval(-3.0, -1.0);
    const kf::PipelineResult res = run_retry(mirrored, cfg);
    agg.note(res, "hyperbolic-mirrored");

    Line line;
    line.pass = agg.monotonic_all && res.reflected;
    line.detail = "monotonicity: " + std::to_string(agg.flows) +
                  " flows (incl. reflected mirrored hyperbolic), positive branches "
                  "nondecreasing / negative nonincreasing within 1e-9: " +
                  (agg.monotonic_all ? "all hold" : "violated at " + agg.first_violation);
    return line;
}

// 5. HDI residual is quadratic in the grid step: halve h twice, demand a
// >= 3.5x drop per halving unless the residual already sits at the
// floating-point floor.  The base grid must resolve the shortest clamped
// window (cluster-gap has a branch leaving the interval within ~1.6% of the
// flow), so the study starts at 201 points.
Line criterion_hdi_convergence(Aggregate& agg) {
    bool all_ok = true;
    std::string detail = "hdi residual vs h^2:";
    for (const std::string& name : kf::preset_names()) {
        const kf::Preset p = kf::preset(name);
        double r[3] = {0.0, 0.0, 0.0};
        const int steps[3] = {201, 401, 801};
        for (int i = 0; i < 3; ++i) {
            kf::RunConfig cfg;
            cfg.interval = p.default_interval;
            cfg.grid_steps = steps[i];
            const kf::PipelineResult res = kf::run_pipeline(p.instance, cfg);
            agg.note(res, name + " steps " + std::to_string(steps[i]));
            r[i] = res.hdi.max_residual;
        }
        const bool floor = r[2] <= 1e-12;
        const bool ratios = r[0] >= 3.5 * r[1] && r[1] >= 3.5 * r[2];
        if (!(floor || ratios)) all_ok = false;
        detail += " " + name + " " + g3(r[0]) + "/" + g3(r[1]) + "/" + g3(r[2]) +
                  (floor ? " (floor)" : ratios ? " (>=3.5x)" : " (FAIL)");
    }
    Line line;
    line.pass = all_ok;
    line.detail = detail + "; pass = >=3.5x per halving or residual <= 1e-12";
    return line;
}

// 6. Proof-chain bounds accumulated over every pipeline run issued above.
Line criterion_proof_chain(const Aggregate& agg) {
    Line line;
    line.pass = agg.runs > 0 && agg.rowcol_all && agg.hnorm_all;
    line.detail = "proof-chain bounds on " + std::to_string(agg.runs) +
                  " pipeline runs: sigma_j <= 1/delta and sum_j m_j sigma_jl <= 1/delta "
                  "within quad tol (worst excess " +
                  g3(agg.worst_row_excess) + " / " + g3(agg.worst_col_excess) +
                  "), h-norms <= 1/delta + 1e-8 (worst slack " + g3(agg.worst_hnorm_slack) + ")";
    return line;
}

// 7. Eigenvalue sign always matches the type sign.
Line criterion_type_inclusion() {
    int bad = 0, checked = 0;
    std::string first_bad;
    for (int k = 0; k < 500; ++k) {
        kf::RandomConfig rc;
        rc.n = 2 + k % 9;
        rc.n_plus = (k * 3 + 1) % (rc.n + 1);
        rc.seed = 40000 + static_cast<std::uint64_t>(k);
        try {
            const kf::Instance inst = kf::random_instance(rc);
            const kf::SpectrumReport rep = kf::eigen_nonnegative(inst.a);
            for (int cl = 0; cl < rep.cluster_count(); ++cl) {
                ++checked;
                const std::size_t ci = static_cast<std::size_t>(cl);
                const int expected = rep.eigenvalues[ci] > 0.0 ? 1 : -1;
                const kf::PointClassification pc =
                    kf::classify_point(rep, rep.eigenvalues[ci]);
                if (rep.type_signs[ci] != expected || pc.sign != expected) {
                    ++bad;
                    if (first_bad.empty())
                        first_bad = "seed " + std::to_string(rc.seed) + " eigenvalue " +
                                    g3(rep.eigenvalues[ci]);
                }
            }
        } catch (const std::exception& e) {
            ++bad;
            if (first_bad.empty())
                first_bad = "seed " + std::to_string(rc.seed) + ": " + e.what();
        }
    }
    Line line;
    line.pass = bad == 0;
    line.detail = "spectral type: 500 random operators, " + std::to_string(checked) +
                  " eigenvalues, " + std::to_string(bad) +
                  " sign/type mismatches (positive <-> positive type, negative <-> negative)";
    if (!first_bad.empty()) line.detail += "; first: " + first_bad;
    return line;
}

// 8. The nilpotent perturbation is rejected: regularity_check refuses it and
// the runner exits with code 3.
Line criterion_rejection(const std::string& cli) {
    const kf::KreinSpace sp(std::vector<int>{1, -1});
    kf::Matrix cm(2, 2), am(2, 2);
    cm << 1.0, 1.0, -1.0, -1.0;
    am << 2.0, 0.0, 0.0, -1.0;
    const kf::DenseOperator c(cm, sp), a(am, sp);

    const auto rank_of = [](const kf::Matrix& m) {
        const kf::RealVector sv = Eigen::JacobiSVD<kf::Matrix>(m).singularValues();
        int r = 0;
        for (int i = 0; i < sv.size(); ++i)
            if (sv(i) > 1e-12 * std::max(sv(0), 1.0)) ++r;
        return r;
    };
    const int rank_c = rank_of(cm);
    const int rank_c2 = rank_of(kf::Matrix(cm * cm));
    const bool nonneg = static_cast<bool>(kf::is_nonnegative(c));
    const bool rejected = !kf::regularity_check(c);

    int code = -1;
    std::string cli_note;
    if (cli.empty()) {
        cli_note = "runner path not supplied";
    } else {
        kf::InstanceSpec spec;
        spec.n = 2;
        spec.n_plus = 1;
        const kf::Instance inst{"nilpotent", sp, a, c, spec};
        const std::string path = "/tmp/kreinflow_acceptance_nilpotent.json";
        kf::write_file(path, kf::instance_to_json(inst).dump(2) + "\n");
        const std::string cmd =
            "\"" + cli + "\" flow --instance " + path + " --interval 1,3 --p 1 >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
        std::remove(path.c_str());
        cli_note = "runner exit " + std::to_string(code);
    }

    Line line;
    line.pass = nonneg && rank_c == 1 && rank_c2 == 0 && rejected && code == 3;
    line.detail = std::string("rejection: nilpotent C on J=diag(1,-1) is non-negative (") +
                  (nonneg ? "yes" : "NO") + "), rank C=" + std::to_string(rank_c) +
                  " != rank C^2=" + std::to_string(rank_c2) + ", regularity_check " +
                  (rejected ? "rejects" : "ACCEPTS") + ", " + cli_note + " (want 3)";
    return line;
}

// 9. Structured eigensolver against the general dense solver.
Line criterion_oracle_equivalence() {
    double worst_rel = 0.0;
    int mismatches = 0;
    std::string first_bad;
    for (int k = 0; k < 200; ++k) {
        kf::RandomConfig rc;
        rc.n = 2 + k % 15;
        rc.n_plus = (k * 5 + 2) % (rc.n + 1);
        rc.seed = 90000 + static_cast<std::uint64_t>(k);
        try {
            const kf::Instance inst = kf::random_instance(rc);
            const kf::SpectrumReport rep = kf::eigen_nonnegative(inst.a);
            std::vector<double> mine;
            for (int cl = 0; cl < rep.cluster_count(); ++cl)
                for (int m = 0; m < rep.multiplicities[static_cast<std::size_t>(cl)]; ++m)
                    mine.push_back(rep.eigenvalues[static_cast<std::size_t>(cl)]);
            const std::vector<double> ref =
                oracles::nonzero_real_eigenvalues(inst.a, 1e-8 * std::max(rep.scale, 1.0));
            if (mine.size() != ref.size()) {
                ++mismatches;
                if (first_bad.empty())
                    first_bad = "seed " + std::to_string(rc.seed) + " counts " +
                                std::to_string(mine.size()) + " vs " + std::to_string(ref.size());
                continue;
            }
            for (std::size_t i = 0; i < mine.size(); ++i)
                worst_rel = std::max(worst_rel, std::abs(mine[i] - ref[i]) /
                                                    std::max(1.0, std::abs(ref[i])));
        } catch (const std::exception& e) {
            ++mismatches;
            if (first_bad.empty())
                first_bad = "seed " + std::to_string(rc.seed) + ": " + e.what();
        }
    }
    Line line;
    line.pass = mismatches == 0 && worst_rel <= 1e-7;
    line.detail = "oracle equivalence: 200 random instances (n<=16), max relative deviation " +
                  g3(worst_rel) + " (tol 1e-7), " + std::to_string(mismatches) +
                  " count mismatches";
    if (!first_bad.empty()) line.detail += "; first: " + first_bad;
    return line;
}

// 10. Hilbert reduction is exact: delta is bitwise 1 whenever J = I, and on
// dyadic diagonal instances the displacement p-sum equals the gamma p-sum
// bitwise (zero-gamma directions do not move).
Line criterion_hilbert_exact(Aggregate& agg) {
    bool delta_exact = true;
    std::string delta_note = "delta==1 exactly on";

    {
        const kf::Preset hd = kf::preset("hilbert-diagonal");
        kf::RunConfig cfg;
        cfg.interval = hd.default_interval;
        const kf::PipelineResult res = kf::run_pipeline(hd.instance, cfg);
        agg.note(res, "hilbert-diagonal");
        delta_exact = delta_exact && res.delta == 1.0;
        delta_note += " hilbert-diagonal";
    }
    {
        const std::vector<double> grid = {0.0, 0.5, 1.0};
        int ok = 0;
        for (int k = 0; k < 10; ++k) {
            kf::RandomConfig rc;
            rc.n = 2 + k % 7;
            rc.n_plus = rc.n;
            rc.seed = 60000 + static_cast<std::uint64_t>(k);
            const kf::Instance inst = kf::random_instance(rc);
            if (kf::delta_bound(inst.a, inst.c, 0.5, grid) == 1.0) ++ok;
        }
        delta_exact = delta_exact && ok == 10;
        delta_note += " + " + std::to_string(ok) + "/10 random J=I instances";
    }

    bool lp_exact = true;
    std::string lp_note;
    const auto dyadic_case = [&](kf::InstanceSpec spec, const kf::Interval& iv,
                                 const std::string& label) {
        const kf::Instance inst = kf::instance_from_spec(spec, label);
        for (double p : {1.0, 1.5, 2.0, 3.0}) {
            kf::RunConfig cfg;
            cfg.interval = iv;
            cfg.p = p;
            const kf::PipelineResult res = kf::run_pipeline(inst, cfg);
            agg.note(res, label);
            const double gps = kf::gamma_power_sum(res.pert.gammas, p);
            const bool same = res.delta == 1.0 && res.enumeration.lp_sum == gps &&
                              res.enumeration.bound_rhs == gps;
            if (!same) {
                lp_exact = false;
                if (lp_note.empty())
                    lp_note = label + " p=" + g3(p) + ": lp_sum " +
                              kf::format_full(res.enumeration.lp_sum) + " vs gamma p-sum " +
                              kf::format_full(gps);
            }
        }
    };

    kf::InstanceSpec d3;
    d3.n = 3;
    d3.n_plus = 3;
    d3.a_entries = {{1.0, 1}, {2.0, 1}, {0.5, 1}};
    d3.c_entries = {{0.25, 1}, {0.125, 1}, {0.0, 1}};
    dyadic_case(d3, kf::Interval(0.25, 4.0), "dyadic-3");

    kf::InstanceSpec d5;
    d5.n = 5;
    d5.n_plus = 5;
    d5.a_entries = {{0.5, 1}, {1.0, 1}, {2.0, 1}, {4.0, 1}, {0.75, 1}};
    d5.c_entries = {{0.5, 1}, {0.25, 1}, {0.0, 1}, {0.0625, 1}, {0.0, 1}};
    dyadic_case(d5, kf::Interval(0.25, 8.0), "dyadic-5");

    Line line;
    line.pass = delta_exact && lp_exact;
    line.detail = "hilbert reduction: " + delta_note + (delta_exact ? "" : " (FAIL)") +
                  "; dyadic-3 and dyadic-5 diagonals, p in {1,1.5,2,3}: lp_sum == gamma p-sum " +
                  (lp_exact ? "bitwise" : "MISMATCH " + lp_note);
    return line;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    std::vector<Line> lines(10);
    Aggregate agg;

    const auto guard = [&](int idx, Line (*fn)(Aggregate&)) {
        try {
            lines[static_cast<std::size_t>(idx - 1)] = fn(agg);
        } catch (const std::exception& e) {
            lines[static_cast<std::size_t>(idx - 1)] = {false, std::string("threw: ") + e.what()};
        }
    };

    guard(1, criterion_lp_bound);
    guard(2, criterion_hyperbolic);
    guard(3, criterion_derivative);
    guard(5, criterion_hdi_convergence);
    guard(10, criterion_hilbert_exact);
    // 4 and 6 read the accumulator, so they run after everything that feeds it.
    guard(4, criterion_monotonic);
    try {
        lines[5] = criterion_proof_chain(agg);
    } catch (const std::exception& e) {
        lines[5] = {false, std::string("threw: ") + e.what()};
    }
    try {
        lines[6] = criterion_type_inclusion();
    } catch (const std::exception& e) {
        lines[6] = {false, std::string("threw: ") + e.what()};
    }
    try {
        lines[7] = criterion_rejection(cli);
    } catch (const std::exception& e) {
        lines[7] = {false, std::string("threw: ") + e.what()};
    }
    try {
        lines[8] = criterion_oracle_equivalence();
    } catch (const std::exception& e) {
        lines[8] = {false, std::string("threw: ") + e.what()};
    }

    int failures = 0;
    for (int i = 0; i < 10; ++i) {
        const Line& line = lines[static_cast<std::size_t>(i)];
        if (!line.pass) ++failures;
        std::printf("[%2d] %s  %s\n", i + 1, line.pass ? "PASS" : "FAIL", line.detail.c_str());
    }
    std::printf("%d/10 acceptance criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}

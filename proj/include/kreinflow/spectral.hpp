// Spectral decomposition of [.,.]-non-negative operators via the reduction
// to a Hermitian problem: with H = J*A positive semidefinite and
// S = H^(1/2), the Hermitian operator W = S*J*S has the same nonzero
// spectrum as A, and its eigenvectors pull back to [.,.]-orthonormal
// eigenvector frames of A whose type sign matches the sign of the
// eigenvalue.  On top of that sit spectral projections onto intervals,
// the adapted fundamental symmetry of a perturbation, and the uniform
// definiteness constant of spectral subspaces along an operator flow.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "core.hpp"

namespace kreinflow {

struct IntervalTouchesZero : Error {
    using Error::Error;
};
struct EigenvalueOnBoundary : Error {
    using Error::Error;
};
struct EigenvalueNotFound : Error {
    using Error::Error;
};
struct DegenerateKernel : Error {
    using Error::Error;
};
struct NonPositiveDelta : Error {
    using Error::Error;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    Interval() = default;
    Interval(double a, double b) : lo(a), hi(b) {
        if (!(lo < hi)) throw Error("Interval: endpoints must satisfy lo < hi");
    }

    // Open interval membership.
    bool contains(double x) const { return lo < x && x < hi; }
    bool touches_zero(double tol) const { return lo <= tol && hi >= -tol; }
    Interval reflected() const { return Interval(-hi, -lo); }
};

// One entry per distinct eigenvalue (after clustering at working precision).
struct SpectrumReport {
    KreinSpace space = KreinSpace::hilbert(1);
    std::vector<double> eigenvalues;   // ascending, zero excluded
    std::vector<int> multiplicities;
    std::vector<int> type_signs;       // +1 positive type, -1 negative type
    std::vector<Matrix> frames;        // n x m_i, [x_k,x_l] = sign * delta_kl
    Matrix kernel_basis;               // Euclidean-orthonormal basis of ker A
    double scale = 0.0;                // spectral radius, reference for tolerances

    int cluster_count() const { return static_cast<int>(eigenvalues.size()); }
    int kernel_dimension() const { return static_cast<int>(kernel_basis.cols()); }
    int nonzero_dimension() const {
        int m = 0;
        for (int v : multiplicities) m += v;
        return m;
    }
};

// Full indefinite-metric eigendecomposition of a non-negative operator.
// Eigenvalues come from the Hermitian W = S J S, frames from w -> J S w
// rescaled to [x,x] = +-1; a Gram-Schmidt polish restores orthonormality
// within clusters to working precision.
inline SpectrumReport eigen_nonnegative(const DenseOperator& a, double tol = 0.0) {
    const auto cert = is_nonnegative(a, tol);
    if (!cert)
        throw NotNonnegative("eigen_nonnegative: operator is not non-negative (min eigenvalue " +
                             std::to_string(cert.min_eigenvalue) + ", hermiticity residual " +
                             std::to_string(cert.hermiticity_residual) + ")");

    const KreinSpace& space = a.space();
    const int n = space.dim();
    const Matrix j = space.fundamental_symmetry();
    Matrix h = j * a.mat();
    h = 0.5 * (h + h.adjoint());

    SpectrumReport rep;
    rep.space = space;

    RealVector mu;   // signed nonzero eigenvalues, ascending
    Matrix raw;      // column k: unpolished eigenvector for mu(k)

    bool diagonal = true;
    for (int r = 0; r < n && diagonal; ++r)
        for (int c = 0; c < n && diagonal; ++c)
            if (r != c && h(r, c) != Complex(0.0, 0.0)) diagonal = false;

    if (diagonal) {
        // Exactly diagonal H resolves in closed form: eigenvalues are the
        // signed diagonal entries, frames are standard basis vectors. No
        // square-root detour, so closed-form instances stay noise-free.
        const RealVector hd = h.diagonal().real();
        rep.scale = hd.cwiseAbs().maxCoeff();
        const double h_zero = effective_tol(tol, rep.scale);

        std::vector<int> kernel_idx;
        std::vector<int> live_idx;
        for (int i = 0; i < n; ++i)
            (hd(i) <= h_zero ? kernel_idx : live_idx).push_back(i);
        std::sort(live_idx.begin(), live_idx.end(), [&](int p, int q) {
            const double vp = space.sign(p) * hd(p);
            const double vq = space.sign(q) * hd(q);
            return vp < vq || (vp == vq && p < q);
        });

        rep.kernel_basis = Matrix::Zero(n, static_cast<Eigen::Index>(kernel_idx.size()));
        for (std::size_t c = 0; c < kernel_idx.size(); ++c)
            rep.kernel_basis(kernel_idx[c], static_cast<Eigen::Index>(c)) = 1.0;

        mu.resize(static_cast<Eigen::Index>(live_idx.size()));
        raw = Matrix::Zero(n, static_cast<Eigen::Index>(live_idx.size()));
        for (std::size_t k = 0; k < live_idx.size(); ++k) {
            mu(static_cast<Eigen::Index>(k)) = space.sign(live_idx[k]) * hd(live_idx[k]);
            raw(live_idx[k], static_cast<Eigen::Index>(k)) = 1.0;
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> hs(h);
        if (hs.info() != Eigen::Success)
            throw EigensolveFailed("eigen_nonnegative: eigensolve of J*A did not converge");

        const double h_scale =
            std::max(std::abs(hs.eigenvalues()(0)), std::abs(hs.eigenvalues()(n - 1)));
        const double h_zero = effective_tol(tol, h_scale);

        // ker A = ker(J*A); the near-null eigenvectors of H give an exact,
        // Euclidean-orthonormal kernel basis.
        std::vector<int> kernel_idx;
        for (int i = 0; i < n; ++i)
            if (hs.eigenvalues()(i) <= h_zero) kernel_idx.push_back(i);
        rep.kernel_basis = Matrix(n, static_cast<Eigen::Index>(kernel_idx.size()));
        for (std::size_t c = 0; c < kernel_idx.size(); ++c)
            rep.kernel_basis.col(static_cast<Eigen::Index>(c)) = hs.eigenvectors().col(kernel_idx[c]);

        RealVector d = hs.eigenvalues();
        for (int i = 0; i < n; ++i) d(i) = std::sqrt(std::max(d(i), 0.0));
        const Matrix s = hs.eigenvectors() * d.asDiagonal() * hs.eigenvectors().adjoint();

        Matrix w = s * j * s;
        w = 0.5 * (w + w.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix> ws(w);
        if (ws.info() != Eigen::Success)
            throw EigensolveFailed("eigen_nonnegative: eigensolve of S*J*S did not converge");

        rep.scale = std::max(std::abs(ws.eigenvalues()(0)), std::abs(ws.eigenvalues()(n - 1)));
        const double zero_tol = effective_tol(tol, rep.scale);

        std::vector<int> live;
        for (int i = 0; i < n; ++i)
            if (std::abs(ws.eigenvalues()(i)) > zero_tol) live.push_back(i);
        mu.resize(static_cast<Eigen::Index>(live.size()));
        raw.resize(n, static_cast<Eigen::Index>(live.size()));
        for (std::size_t k = 0; k < live.size(); ++k) {
            const double m = ws.eigenvalues()(live[k]);
            mu(static_cast<Eigen::Index>(k)) = m;
            raw.col(static_cast<Eigen::Index>(k)) =
                (j * (s * ws.eigenvectors().col(live[k]))) / std::sqrt(std::abs(m));
        }
    }

    const double cluster_tol = 1e-8 * std::max(rep.scale, 1.0);
    const Eigen::Index n_live = mu.size();

    // Eigenvalues arrive ascending; clusters are maximal runs at distance
    // <= cluster_tol that do not straddle a sign change.
    Eigen::Index pos = 0;
    while (pos < n_live) {
        Eigen::Index end = pos + 1;
        while (end < n_live && mu(end) - mu(end - 1) <= cluster_tol &&
               (mu(end) > 0.0) == (mu(pos) > 0.0))
            ++end;

        const int m = static_cast<int>(end - pos);
        double value = 0.0;
        Matrix frame(n, m);
        for (int k = 0; k < m; ++k) {
            value += mu(pos + k);
            frame.col(k) = raw.col(pos + k);
        }
        value /= m;

        // [v_k,v_l] = w_l^* W w_k = mu delta_kl by construction; the polish
        // removes the O(eps) cross terms and normalizes exactly.
        const JOrthonormalFamily fam = j_orthonormalize(frame, space);
        const int sign = value > 0.0 ? 1 : -1;
        for (int k = 0; k < m; ++k)
            if (fam.signs[static_cast<std::size_t>(k)] != sign)
                throw IllConditioned(
                    "eigen_nonnegative: frame type sign disagrees with eigenvalue sign");

        for (int k = 0; k < m; ++k) {
            const Vector x = fam.vectors.col(k);
            const double resid = (a.mat() * x - value * x).norm();
            if (resid > 1e-6 * std::max(rep.scale, 1.0))
                throw IllConditioned("eigen_nonnegative: eigenpair residual " +
                                     std::to_string(resid) + " exceeds tolerance");
        }

        rep.eigenvalues.push_back(value);
        rep.multiplicities.push_back(m);
        rep.type_signs.push_back(sign);
        rep.frames.push_back(fam.vectors);
        pos = end;
    }
    return rep;
}

struct SpectralProjection {
    DenseOperator projection;
    Interval interval;
    int multiplicity = 0;
};

// [.,.]-orthogonal spectral projection onto the part of the spectrum inside
// an open interval that stays away from zero.
inline SpectralProjection spectral_projection(const SpectrumReport& rep, const Interval& interval,
                                              double tol = 0.0) {
    const double eff = effective_tol(tol, rep.scale);
    if (interval.touches_zero(eff))
        throw IntervalTouchesZero("spectral_projection: interval closure meets zero");
    for (double v : rep.eigenvalues)
        if (std::abs(v - interval.lo) <= eff || std::abs(v - interval.hi) <= eff)
            throw EigenvalueOnBoundary("spectral_projection: eigenvalue " + std::to_string(v) +
                                       " lies on the interval boundary");

    const int n = rep.space.dim();
    Matrix p = Matrix::Zero(n, n);
    int mult = 0;
    const Matrix j = rep.space.fundamental_symmetry();
    for (int c = 0; c < rep.cluster_count(); ++c)
        if (interval.contains(rep.eigenvalues[static_cast<std::size_t>(c)])) {
            const Matrix& x = rep.frames[static_cast<std::size_t>(c)];
            p += static_cast<double>(rep.type_signs[static_cast<std::size_t>(c)]) * x *
                 x.adjoint() * j;
            mult += rep.multiplicities[static_cast<std::size_t>(c)];
        }
    return SpectralProjection{DenseOperator(p, rep.space), interval, mult};
}

struct PointClassification {
    int cluster = -1;
    int multiplicity = 0;
    int sign = 0;                   // +1 positive type, -1 negative type
    double gram_margin = 0.0;       // min |eigenvalue| of the frame Gram
    Definiteness classification = Definiteness::Degenerate;
};

// Type of an eigenvalue: definiteness of its eigenspace in [.,.].  For a
// non-negative operator this always comes out definite with the sign of the
// eigenvalue; the Gram margin is the numerical certificate.
inline PointClassification classify_point(const SpectrumReport& rep, double eigenvalue,
                                          double tol = 0.0) {
    const double eff = std::max(effective_tol(tol, rep.scale), 1e-8 * std::max(rep.scale, 1.0));
    int best = -1;
    double best_dist = 0.0;
    for (int c = 0; c < rep.cluster_count(); ++c) {
        const double d = std::abs(rep.eigenvalues[static_cast<std::size_t>(c)] - eigenvalue);
        if (best < 0 || d < best_dist) {
            best = c;
            best_dist = d;
        }
    }
    if (best < 0 || best_dist > eff)
        throw EigenvalueNotFound("classify_point: no eigenvalue near " +
                                 std::to_string(eigenvalue));

    const Matrix& x = rep.frames[static_cast<std::size_t>(best)];
    Matrix gram = x.adjoint() * rep.space.fundamental_symmetry() * x;
    gram = 0.5 * (gram + gram.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw EigensolveFailed("classify_point: Gram eigensolve did not converge");

    PointClassification pc;
    pc.cluster = best;
    pc.multiplicity = rep.multiplicities[static_cast<std::size_t>(best)];
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    pc.gram_margin = std::min(std::abs(lo), std::abs(hi));
    if (lo > 0.0) {
        pc.sign = 1;
        pc.classification = Definiteness::UniformlyPositive;
    } else if (hi < 0.0) {
        pc.sign = -1;
        pc.classification = Definiteness::UniformlyNegative;
    } else {
        pc.classification = Definiteness::Indefinite;
    }
    return pc;
}

// rank C == rank C^2, i.e. no nilpotent part at zero.  Ranks are counted by
// singular values relative to the largest one of each matrix.
inline bool regularity_check(const DenseOperator& c, double tol = 0.0) {
    const auto rank_of = [&](const Matrix& m) {
        Eigen::JacobiSVD<Matrix> svd(m);
        const RealVector& sv = svd.singularValues();
        if (sv.size() == 0 || sv(0) <= 0.0) return 0;
        const double cut = effective_tol(tol, sv(0));
        int r = 0;
        for (int i = 0; i < sv.size(); ++i)
            if (sv(i) > cut) ++r;
        return r;
    };
    return rank_of(c.mat()) == rank_of(Matrix(c.mat() * c.mat()));
}

// Fundamental symmetry adapted to a non-negative regular operator C: over a
// [.,.]-orthonormal basis made of the eigenvector frames of C completed by an
// orthonormalized basis of ker C, the sum of u u^* J is the difference of the
// projections onto the positive and negative parts.  It squares to the
// identity and induces a definite metric; for C = 0 it reproduces J itself.
inline DenseOperator adapted_symmetry(const DenseOperator& c, double tol = 0.0) {
    if (!is_nonnegative(c, tol))
        throw NotNonnegative("adapted_symmetry: operator is not non-negative");
    if (!regularity_check(c, tol))
        throw RegularityViolated("adapted_symmetry: rank C != rank C^2");

    const KreinSpace& space = c.space();
    const int n = space.dim();
    const Matrix j = space.fundamental_symmetry();

    // A definite space admits exactly one fundamental symmetry, J itself.
    if (space.plus_count() == n || space.minus_count() == n) return DenseOperator(j, space);

    const SpectrumReport rep = eigen_nonnegative(c, tol);

    Matrix jhat = Matrix::Zero(n, n);
    int covered = 0;
    for (int cl = 0; cl < rep.cluster_count(); ++cl) {
        const Matrix& x = rep.frames[static_cast<std::size_t>(cl)];
        jhat += x * x.adjoint() * j;
        covered += rep.multiplicities[static_cast<std::size_t>(cl)];
    }

    // On ker C the [.,.]-Gram of any basis decides the completion.  A kernel
    // that is degenerate in [.,.] admits no orthonormal completion; for a
    // regular non-negative C this cannot happen in exact arithmetic.
    const int kd = rep.kernel_dimension();
    if (covered + kd != n)
        throw RegularityViolated("adapted_symmetry: eigenvectors and kernel do not fill the space");
    if (kd > 0) {
        const Matrix& y = rep.kernel_basis;
        Matrix k = y.adjoint() * j * y;
        k = 0.5 * (k + k.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix> ks(k);
        if (ks.info() != Eigen::Success)
            throw EigensolveFailed("adapted_symmetry: kernel Gram eigensolve did not converge");
        for (int i = 0; i < kd; ++i) {
            const double kappa = ks.eigenvalues()(i);
            if (std::abs(kappa) <= effective_tol(tol, 1.0))
                throw DegenerateKernel("adapted_symmetry: kernel of C is degenerate in [.,.]");
            const Vector z = (y * ks.eigenvectors().col(i)) / std::sqrt(std::abs(kappa));
            jhat += z * z.adjoint() * j;
        }
    }

    // Sanity: the assembled operator must be an involution.
    const double inv_resid = max_norm(Matrix(jhat * jhat - Matrix::Identity(n, n)));
    if (inv_resid > 1e-8 * std::max(1.0, max_norm(jhat) * max_norm(jhat)))
        throw IllConditioned("adapted_symmetry: result fails the involution check, residual " +
                             std::to_string(inv_resid));
    return DenseOperator(jhat, space);
}

// Spectral norm of T measured in the definite inner product with Gram
// matrix M: the Euclidean norm of M^(1/2) T M^(-1/2).
inline double h_operator_norm(const Matrix& t, const Matrix& gram_m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(0.5 * (gram_m + gram_m.adjoint())));
    if (es.info() != Eigen::Success)
        throw EigensolveFailed("h_operator_norm: Gram eigensolve did not converge");
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw NotFundamentalSymmetry("h_operator_norm: Gram matrix is not positive definite");
    RealVector rt = es.eigenvalues().cwiseSqrt();
    const Matrix mh = es.eigenvectors() * rt.asDiagonal() * es.eigenvectors().adjoint();
    const Matrix mih = es.eigenvectors() * rt.cwiseInverse().asDiagonal() * es.eigenvectors().adjoint();
    return Eigen::JacobiSVD<Matrix>(mh * t * mih).singularValues()(0);
}

inline double h_operator_norm(const DenseOperator& t, const DenseOperator& norm_symmetry,
                              double tol = 0.0) {
    const Matrix m = detail::definite_gram_matrix(norm_symmetry, t.space(), tol);
    return h_operator_norm(t.mat(), m);
}

// Uniform definiteness constant of the spectral subspaces above a > 0 along
// the segment A + tC: the smallest Gram eigenvalue, over the grid, of the
// [.,.]-Gram of a basis of span{eigenvectors with eigenvalue >= a} that is
// orthonormal in the metric of the symmetry adapted to C.  Grid points where
// that span is trivial impose no constraint; if nothing constrains, the
// Hilbert-type value 1 is returned.
inline double delta_bound(const DenseOperator& a, const DenseOperator& c, double threshold,
                          const std::vector<double>& grid, double tol = 0.0) {
    if (a.space() != c.space())
        throw DimensionMismatch("delta_bound: operators live in different spaces");
    if (!(threshold > 0.0)) throw Error("delta_bound: threshold must be positive");
    if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0)
        throw Error("delta_bound: grid must start at 0 and end at 1");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw Error("delta_bound: grid must be strictly increasing");

    // In a definite space the Gram of any orthonormal family is the identity:
    // the minimum is 1 whenever any grid point constrains it, and the
    // unconstrained convention returns 1 as well.
    if (a.space().plus_count() == a.dim() || a.space().minus_count() == a.dim()) {
        if (!is_nonnegative(a, tol) || !is_nonnegative(c, tol))
            throw NotNonnegative("delta_bound: operators must be non-negative");
        return 1.0;
    }

    const DenseOperator jhat = adapted_symmetry(c, tol);
    const Matrix m = detail::definite_gram_matrix(jhat, a.space(), tol);
    const Matrix j = a.space().fundamental_symmetry();

    double delta = 1.0;
    bool constrained = false;
    for (double t : grid) {
        const SpectrumReport rep = eigen_nonnegative(a + t * c, tol);
        std::vector<int> selected;
        int total = 0;
        for (int cl = 0; cl < rep.cluster_count(); ++cl)
            if (rep.eigenvalues[static_cast<std::size_t>(cl)] >= threshold) {
                selected.push_back(cl);
                total += rep.multiplicities[static_cast<std::size_t>(cl)];
            }
        if (total == 0) continue;

        Matrix basis(a.dim(), total);
        int col = 0;
        for (int cl : selected) {
            const Matrix& x = rep.frames[static_cast<std::size_t>(cl)];
            basis.middleCols(col, static_cast<int>(x.cols())) = x;
            col += static_cast<int>(x.cols());
        }
        const Matrix q = detail::m_orthonormalize(basis, m);
        Matrix gram = q.adjoint() * j * q;
        gram = 0.5 * (gram + gram.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw EigensolveFailed("delta_bound: Gram eigensolve did not converge");
        delta = std::min(delta, es.eigenvalues().minCoeff());
        constrained = true;
    }

    if (constrained && delta <= effective_tol(tol, 1.0))
        throw NonPositiveDelta("delta_bound: spectral subspace fails uniform positivity, delta " +
                               std::to_string(delta));
    return delta;
}

}  // namespace kreinflow

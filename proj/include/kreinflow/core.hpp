// Indefinite inner product spaces on C^n and the basic operator calculus:
// fundamental symmetries, the [.,.]-adjoint, selfadjointness and
// non-negativity checks, Gram-Schmidt in the indefinite metric, and
// definiteness analysis of subspace Gram matrices.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kreinflow {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller handed us operands that live in different spaces or have
// inconsistent sizes.
struct DimensionMismatch : Error {
    using Error::Error;
};

// Gram-Schmidt hit a neutral vector: the span is degenerate with respect
// to the indefinite inner product and admits no orthonormal basis.
struct DegenerateSubspace : Error {
    using Error::Error;
};

// An operator that should satisfy a structural hypothesis (selfadjoint,
// non-negative, equal kernel ranks, ...) fails it beyond tolerance.
struct NotNonnegative : Error {
    using Error::Error;
};

struct RegularityViolated : Error {
    using Error::Error;
};

struct NotFundamentalSymmetry : Error {
    using Error::Error;
};

// Residuals of a computed decomposition exceed what the conditioning of
// the input can explain; results would be garbage.
struct IllConditioned : Error {
    using Error::Error;
};

struct EigensolveFailed : Error {
    using Error::Error;
};

inline constexpr double default_rel_tol = 1e-10;

// Effective absolute tolerance: an explicit positive tol wins, otherwise
// default_rel_tol scaled by the magnitude of the operand.
inline double effective_tol(double tol, double scale) {
    if (tol > 0.0) return tol;
    return default_rel_tol * std::max(scale, 1.0);
}

inline double max_norm(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// A finite dimensional Krein space: C^n with [x,y] = y^* J x for a
// diagonal fundamental symmetry J with entries +-1.  The inner product is
// linear in the first argument.
class KreinSpace {
  public:
    explicit KreinSpace(std::vector<int> signature) : sig_(std::move(signature)) {
        for (int s : sig_)
            if (s != 1 && s != -1)
                throw Error("KreinSpace: signature entries must be +1 or -1");
        if (sig_.empty()) throw Error("KreinSpace: dimension must be positive");
    }

    static KreinSpace hilbert(int n) {
        return KreinSpace(std::vector<int>(static_cast<std::size_t>(n), 1));
    }

    // diag(+1 x n_plus, -1 x n_minus)
    static KreinSpace with_counts(int n_plus, int n_minus) {
        std::vector<int> s;
        s.reserve(static_cast<std::size_t>(n_plus + n_minus));
        s.insert(s.end(), static_cast<std::size_t>(n_plus), 1);
        s.insert(s.end(), static_cast<std::size_t>(n_minus), -1);
        return KreinSpace(std::move(s));
    }

    int dim() const { return static_cast<int>(sig_.size()); }
    int sign(int i) const { return sig_.at(static_cast<std::size_t>(i)); }
    const std::vector<int>& signature() const { return sig_; }

    int plus_count() const {
        return static_cast<int>(std::count(sig_.begin(), sig_.end(), 1));
    }
    int minus_count() const { return dim() - plus_count(); }

    bool operator==(const KreinSpace& o) const { return sig_ == o.sig_; }
    bool operator!=(const KreinSpace& o) const { return !(*this == o); }

    // J as a dense matrix, for operator algebra.
    Matrix fundamental_symmetry() const {
        Matrix j = Matrix::Zero(dim(), dim());
        for (int i = 0; i < dim(); ++i) j(i, i) = Complex(sig_[static_cast<std::size_t>(i)], 0.0);
        return j;
    }

    Vector apply_j(const Vector& x) const {
        if (x.size() != dim()) throw DimensionMismatch("apply_j: vector dimension mismatch");
        Vector y = x;
        for (int i = 0; i < dim(); ++i)
            if (sig_[static_cast<std::size_t>(i)] < 0) y(i) = -y(i);
        return y;
    }

    // Space with every sign flipped; the natural home of -T when T acts here.
    KreinSpace flipped() const {
        std::vector<int> s(sig_);
        for (int& v : s) v = -v;
        return KreinSpace(std::move(s));
    }

  private:
    std::vector<int> sig_;
};

// [x,y] = y^* J x.  Real and symmetric-looking only on the diagonal:
// [y,x] = conj([x,y]).
inline Complex inner(const Vector& x, const Vector& y, const KreinSpace& space) {
    if (x.size() != space.dim() || y.size() != space.dim())
        throw DimensionMismatch("inner: vector dimension mismatch");
    return y.dot(space.apply_j(x));
}

// A linear operator together with the space it acts on.  Plain value type;
// all structure checks live in free functions.
class DenseOperator {
  public:
    DenseOperator(Matrix entries, KreinSpace space)
        : mat_(std::move(entries)), space_(std::move(space)) {
        if (mat_.rows() != mat_.cols())
            throw DimensionMismatch("DenseOperator: matrix must be square");
        if (mat_.rows() != space_.dim())
            throw DimensionMismatch("DenseOperator: matrix size does not match space dimension");
    }

    const Matrix& mat() const { return mat_; }
    const KreinSpace& space() const { return space_; }
    int dim() const { return space_.dim(); }

    Vector apply(const Vector& x) const {
        if (x.size() != dim()) throw DimensionMismatch("apply: vector dimension mismatch");
        return mat_ * x;
    }

  private:
    Matrix mat_;
    KreinSpace space_;
};

inline DenseOperator operator+(const DenseOperator& a, const DenseOperator& b) {
    if (a.space() != b.space())
        throw DimensionMismatch("operator+: operands live in different spaces");
    return DenseOperator(a.mat() + b.mat(), a.space());
}

inline DenseOperator operator*(double s, const DenseOperator& a) {
    return DenseOperator(s * a.mat(), a.space());
}

// T+ = J T^* J, the adjoint with respect to [.,.].
inline DenseOperator adjoint(const DenseOperator& t) {
    const Matrix j = t.space().fundamental_symmetry();
    return DenseOperator(j * t.mat().adjoint() * j, t.space());
}

// T is [.,.]-selfadjoint iff J*T is Hermitian.
inline bool is_selfadjoint(const DenseOperator& t, double tol = 0.0) {
    const Matrix h = t.space().fundamental_symmetry() * t.mat();
    const double resid = max_norm(Matrix(h - h.adjoint()));
    return resid <= effective_tol(tol, max_norm(t.mat()));
}

struct NonnegativityCertificate {
    bool nonnegative = false;
    // Smallest eigenvalue of the Hermitian part of J*T; the witness when the
    // check fails and the margin when it holds.
    double min_eigenvalue = 0.0;
    // How far J*T is from Hermitian in the max norm.
    double hermiticity_residual = 0.0;

    explicit operator bool() const { return nonnegative; }
};

// [Tx,x] >= 0 for all x iff J*T is Hermitian positive semidefinite.
inline NonnegativityCertificate is_nonnegative(const DenseOperator& t, double tol = 0.0) {
    const Matrix h = t.space().fundamental_symmetry() * t.mat();
    NonnegativityCertificate cert;
    cert.hermiticity_residual = max_norm(Matrix(h - h.adjoint()));

    const Matrix herm = 0.5 * (h + h.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw EigensolveFailed("is_nonnegative: Hermitian eigensolve did not converge");
    cert.min_eigenvalue = es.eigenvalues().minCoeff();

    const double eff = effective_tol(tol, max_norm(t.mat()));
    cert.nonnegative =
        cert.hermiticity_residual <= eff && cert.min_eigenvalue >= -eff;
    return cert;
}

struct JOrthonormalFamily {
    // Columns u_k with [u_k, u_l] = signs[k] * delta_kl.
    Matrix vectors;
    std::vector<int> signs;

    int count() const { return static_cast<int>(vectors.cols()); }
    Vector vector(int k) const { return vectors.col(k); }
};

// Gram-Schmidt in the indefinite metric.  Neutral intermediate vectors
// (|[v,v]| below tol relative to ||v||^2) mean the span has no
// [.,.]-orthonormal basis in this processing order; we refuse rather than
// divide by a tiny number.
inline JOrthonormalFamily j_orthonormalize(const Matrix& vectors, const KreinSpace& space,
                                           double tol = default_rel_tol) {
    if (vectors.rows() != space.dim())
        throw DimensionMismatch("j_orthonormalize: vector dimension mismatch");
    const int k = static_cast<int>(vectors.cols());
    JOrthonormalFamily fam;
    fam.vectors = Matrix(space.dim(), k);
    fam.signs.reserve(static_cast<std::size_t>(k));

    for (int i = 0; i < k; ++i) {
        Vector v = vectors.col(i);
        // Two passes of modified Gram-Schmidt; the second pass mops up the
        // cancellation the indefinite metric invites.
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j < i; ++j) {
                const Vector u = fam.vectors.col(j);
                v -= static_cast<double>(fam.signs[static_cast<std::size_t>(j)]) *
                     inner(v, u, space) * u;
            }
        const double nrm2 = v.squaredNorm();
        const double rho = std::real(inner(v, v, space));
        if (std::abs(rho) <= tol * std::max(nrm2, 1e-300))
            throw DegenerateSubspace(
                "j_orthonormalize: neutral vector encountered (degenerate or dependent span)");
        const int s = rho > 0.0 ? 1 : -1;
        fam.vectors.col(i) = v / std::sqrt(std::abs(rho));
        fam.signs.push_back(s);
    }
    return fam;
}

inline JOrthonormalFamily j_orthonormalize(const std::vector<Vector>& vectors,
                                           const KreinSpace& space,
                                           double tol = default_rel_tol) {
    if (vectors.empty()) return JOrthonormalFamily{Matrix(space.dim(), 0), {}};
    Matrix m(space.dim(), static_cast<Eigen::Index>(vectors.size()));
    for (std::size_t i = 0; i < vectors.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = vectors[i];
    return j_orthonormalize(m, space, tol);
}

enum class Definiteness { UniformlyPositive, UniformlyNegative, Indefinite, Degenerate };

inline const char* to_string(Definiteness d) {
    switch (d) {
        case Definiteness::UniformlyPositive: return "uniformly-positive";
        case Definiteness::UniformlyNegative: return "uniformly-negative";
        case Definiteness::Indefinite: return "indefinite";
        case Definiteness::Degenerate: return "degenerate";
    }
    return "unknown";
}

struct GramReport {
    Definiteness classification = Definiteness::Degenerate;
    // Definiteness constant of smallest magnitude: min eigenvalue of the Gram
    // matrix for a positive subspace, max eigenvalue for a negative one, the
    // eigenvalue closest to zero otherwise.
    double delta = 0.0;
    Matrix gram;
    Eigen::VectorXd gram_eigenvalues;
};

namespace detail {

// Validates that jhat is a fundamental symmetry compatible with the space:
// [.,.]-selfadjoint, involutive, and with J*jhat positive definite.
// Returns the Hermitian positive definite Gram matrix M = J * jhat of the
// associated definite inner product.
inline Matrix definite_gram_matrix(const DenseOperator& jhat, const KreinSpace& space,
                                   double tol = 0.0) {
    if (jhat.space() != space)
        throw DimensionMismatch("norm symmetry lives in a different space");
    const Matrix& jh = jhat.mat();
    const double eff = effective_tol(tol, max_norm(jh));
    const Matrix j = space.fundamental_symmetry();
    if (max_norm(Matrix(jh * jh - Matrix::Identity(space.dim(), space.dim()))) > eff * 10.0)
        throw NotFundamentalSymmetry("norm symmetry is not an involution");
    Matrix m = j * jh;
    if (max_norm(Matrix(m - m.adjoint())) > eff * 10.0)
        throw NotFundamentalSymmetry("norm symmetry is not [.,.]-selfadjoint");
    m = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw EigensolveFailed("definite_gram_matrix: eigensolve did not converge");
    if (es.eigenvalues().minCoeff() <= eff)
        throw NotFundamentalSymmetry("norm symmetry does not induce a positive definite metric");
    return m;
}

// Orthonormalizes the columns of basis with respect to the definite inner
// product <x,y> = y^* M x, M Hermitian positive definite.
inline Matrix m_orthonormalize(const Matrix& basis, const Matrix& m) {
    const int k = static_cast<int>(basis.cols());
    Matrix q = basis;
    for (int i = 0; i < k; ++i) {
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j < i; ++j)
                q.col(i) -= q.col(j).dot(m * q.col(i)) * q.col(j);
        const double nrm2 = std::real(q.col(i).dot(m * q.col(i)));
        if (nrm2 <= 1e-24 * std::max(1.0, basis.col(i).squaredNorm()))
            throw DegenerateSubspace("m_orthonormalize: basis is numerically dependent");
        q.col(i) /= std::sqrt(nrm2);
    }
    return q;
}

}  // namespace detail

// Definiteness of a subspace, measured in the scale fixed by norm_symmetry:
// the basis is orthonormalized in the definite inner product induced by
// norm_symmetry, and the eigenvalues of the [.,.]-Gram matrix of that
// orthonormal family are reported.  For the subspace to be uniformly
// positive with constant delta means [x,x] >= delta * h(x,x) on it.
inline GramReport gram_definiteness(const Matrix& basis, const KreinSpace& space,
                                    const DenseOperator& norm_symmetry, double tol = 0.0) {
    if (basis.rows() != space.dim())
        throw DimensionMismatch("gram_definiteness: basis dimension mismatch");
    if (basis.cols() == 0) throw Error("gram_definiteness: empty basis");

    const Matrix m = detail::definite_gram_matrix(norm_symmetry, space, tol);
    const Matrix q = detail::m_orthonormalize(basis, m);
    const Matrix j = space.fundamental_symmetry();
    Matrix gram = q.adjoint() * j * q;
    gram = 0.5 * (gram + gram.adjoint());

    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw EigensolveFailed("gram_definiteness: eigensolve did not converge");

    GramReport rep;
    rep.gram = gram;
    rep.gram_eigenvalues = es.eigenvalues();
    const double lo = rep.gram_eigenvalues.minCoeff();
    const double hi = rep.gram_eigenvalues.maxCoeff();
    const double eff = effective_tol(tol, 1.0);

    if (lo > eff) {
        rep.classification = Definiteness::UniformlyPositive;
        rep.delta = lo;
    } else if (hi < -eff) {
        rep.classification = Definiteness::UniformlyNegative;
        rep.delta = hi;
    } else {
        rep.classification = (lo < -eff && hi > eff) ? Definiteness::Indefinite
                                                     : Definiteness::Degenerate;
        // Report the eigenvalue closest to zero; there is no uniform
        // definiteness constant in these cases.
        double best = rep.gram_eigenvalues(0);
        for (int i = 1; i < rep.gram_eigenvalues.size(); ++i)
            if (std::abs(rep.gram_eigenvalues(i)) < std::abs(best))
                best = rep.gram_eigenvalues(i);
        rep.delta = best;
    }
    return rep;
}

}  // namespace kreinflow

// Schatten p-norms of the perturbation and its indefinite-metric eigendata:
// the eigenvalue list (with repetition, signed by type) together with the
// adapted fundamental symmetry is everything the perturbation contributes
// to the eigenvalue displacement bound.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "core.hpp"
#include "spectral.hpp"

namespace kreinflow {

struct InvalidExponent : Error {
    using Error::Error;
};

// Singular values in descending order.
inline RealVector singular_values(const DenseOperator& c) {
    return Eigen::JacobiSVD<Matrix>(c.mat()).singularValues();
}

namespace detail {

// Sum of |x|^p, accumulated ascending with compensation so that many tiny
// terms next to one large one are not swallowed.
inline double stable_power_sum(std::vector<double> xs, double p) {
    for (double& x : xs) x = std::pow(std::abs(x), p);
    std::sort(xs.begin(), xs.end());
    double sum = 0.0, comp = 0.0;
    for (double x : xs) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

}  // namespace detail

// (sum sigma_i^p)^(1/p) over the singular values.
inline double schatten_norm(const DenseOperator& c, double p) {
    if (!(p >= 1.0) || !std::isfinite(p))
        throw InvalidExponent("schatten_norm: exponent must satisfy p >= 1");
    const RealVector sv = singular_values(c);
    std::vector<double> xs(sv.data(), sv.data() + sv.size());
    return std::pow(detail::stable_power_sum(std::move(xs), p), 1.0 / p);
}

// Indefinite-metric eigendata of the perturbation: eigenvalues gamma_l
// listed with repetition and sorted by descending magnitude, vectors phi_l
// with [phi_l, phi_k] = sgn(gamma_l) delta_lk, and the adapted symmetry.
struct PerturbationData {
    std::vector<double> gammas;
    Matrix phis;                  // column l pairs with gammas[l]
    std::vector<int> signs;       // sgn(gamma_l)
    DenseOperator adapted;        // fundamental symmetry adapted to C
    double p = 1.0;
    double gamma_power_sum = 0.0; // sum |gamma_l|^p
    double schatten = 0.0;        // Schatten p-norm of C

    int count() const { return static_cast<int>(gammas.size()); }
};

inline double gamma_power_sum(const std::vector<double>& gammas, double p) {
    if (!(p >= 1.0) || !std::isfinite(p))
        throw InvalidExponent("gamma_power_sum: exponent must satisfy p >= 1");
    return detail::stable_power_sum(gammas, p);
}

inline PerturbationData krein_eigendata(const DenseOperator& c, double p, double tol = 0.0) {
    if (!(p >= 1.0) || !std::isfinite(p))
        throw InvalidExponent("krein_eigendata: exponent must satisfy p >= 1");
    const auto cert = is_nonnegative(c, tol);
    if (!cert)
        throw NotNonnegative("krein_eigendata: perturbation is not non-negative");
    if (!regularity_check(c, tol))
        throw RegularityViolated("krein_eigendata: rank C != rank C^2");

    const SpectrumReport rep = eigen_nonnegative(c, tol);

    struct Entry {
        double gamma;
        int sign;
        Vector phi;
    };
    std::vector<Entry> entries;
    for (int cl = 0; cl < rep.cluster_count(); ++cl)
        for (int k = 0; k < rep.multiplicities[static_cast<std::size_t>(cl)]; ++k)
            entries.push_back({rep.eigenvalues[static_cast<std::size_t>(cl)],
                               rep.type_signs[static_cast<std::size_t>(cl)],
                               rep.frames[static_cast<std::size_t>(cl)].col(k)});
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::abs(a.gamma) > std::abs(b.gamma);
    });

    PerturbationData data{
        {}, Matrix(c.dim(), static_cast<Eigen::Index>(entries.size())), {},
        adapted_symmetry(c, tol), p, 0.0, 0.0};
    for (std::size_t l = 0; l < entries.size(); ++l) {
        data.gammas.push_back(entries[l].gamma);
        data.signs.push_back(entries[l].sign);
        data.phis.col(static_cast<Eigen::Index>(l)) = entries[l].phi;
    }
    data.gamma_power_sum = gamma_power_sum(data.gammas, p);
    data.schatten = schatten_norm(c, p);
    return data;
}

}  // namespace kreinflow

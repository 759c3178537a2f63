#ifndef NEARINT_INTEGRABLE_HPP
#define NEARINT_INTEGRABLE_HPP

#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace nearint {

/// Phase point in action-angle coordinates; angles use unit period.
struct ActionAngleState {
    Vec q;
    Vec p;

    ActionAngleState() = default;
    ActionAngleState(Vec q_, Vec p_);

    int dimension() const { return static_cast<int>(p.size()); }
    void normalize();
};

/// Completely integrable Hamiltonian H(p) with analytic gradient and Hessian.
class IntegrableHamiltonian {
public:
    using Scalar = std::function<double(const Vec&)>;
    using Vector = std::function<Vec(const Vec&)>;
    using Matrix = std::function<Mat(const Vec&)>;

    IntegrableHamiltonian(std::string name, int n, Scalar eval, Vector grad, Matrix hess);

    /// H(p) = |p|^2 / 2, the flat-torus geodesic flow.
    static IntegrableHamiltonian quadratic(int n);
    /// H(p) = p_n, the canonical straightened chart.
    static IntegrableHamiltonian canonical(int n);
    /// Separable polynomial: H(p) = sum_i sum_k coeffs[i][k] * p_i^(k+1).
    static IntegrableHamiltonian polynomial(const std::vector<std::vector<double>>& coeffs);

    const std::string& name() const { return name_; }
    int dimension() const { return n_; }

    double eval(const Vec& p) const { return eval_(p); }
    Vec grad(const Vec& p) const { return grad_(p); }
    Mat hess(const Vec& p) const { return hess_(p); }

private:
    std::string name_;
    int n_;
    Scalar eval_;
    Vector grad_;
    Matrix hess_;
};

/// Invariant torus {p = p_star}.
struct LiouvilleTorus {
    Vec p_star;
    std::optional<double> period;

    Vec omega(const IntegrableHamiltonian& sys) const { return sys.grad(p_star); }
};

Vec frequency(const IntegrableHamiltonian& sys, const Vec& p);

/// q' = q + t * omega(p) mod 1, p' = p.
ActionAngleState flow_exact(const IntegrableHamiltonian& sys, const ActionAngleState& s, double t);

/// det of the Hessian; zero means KAM-degenerate at p.
double kam_nondegeneracy(const IntegrableHamiltonian& sys, const Vec& p);

/// Period 1/omega_n when the frequency vector is aligned with the last axis
/// (other components below tol_rat); std::nullopt otherwise.
std::optional<double> periodic_torus_check(const IntegrableHamiltonian& sys, const Vec& p_star,
                                           double tol_rat);

LiouvilleTorus make_torus(const IntegrableHamiltonian& sys, const Vec& p_star, double tol_rat = 1e-9);

} // namespace nearint

#endif

#ifndef NEARINT_FLOW_HPP
#define NEARINT_FLOW_HPP

#include <iosfwd>
#include <optional>
#include <vector>

#include "perturbation.hpp"

namespace nearint {

/// Anything with a value and a gradient in (q, p). Angles are lifted (not reduced).
class EvaluableHamiltonian {
public:
    virtual ~EvaluableHamiltonian() = default;
    virtual int dimension() const = 0;
    virtual double value(const Vec& q, const Vec& p) const = 0;
    virtual void gradient(const Vec& q, const Vec& p, Vec& dq, Vec& dp) const = 0;
    /// H = T(p) + V(q)
    virtual bool separable() const { return false; }
    /// d2H/dp2 of a nearby integrable part, used as the simplified Newton matrix.
    virtual std::optional<Mat> base_hessian(const Vec& p) const
    {
        (void)p;
        return std::nullopt;
    }
};

/// H(p) seen as an evaluable Hamiltonian.
class IntegrableFlow : public EvaluableHamiltonian {
public:
    explicit IntegrableFlow(const IntegrableHamiltonian& sys) : sys_(&sys) {}
    int dimension() const override { return sys_->dimension(); }
    double value(const Vec&, const Vec& p) const override { return sys_->eval(p); }
    void gradient(const Vec& q, const Vec& p, Vec& dq, Vec& dp) const override
    {
        dq = Vec::Zero(q.size());
        dp = sys_->grad(p);
    }
    bool separable() const override { return true; }
    std::optional<Mat> base_hessian(const Vec& p) const override { return sys_->hess(p); }

private:
    const IntegrableHamiltonian* sys_;
};

enum class Scheme { midpoint, splitting };

struct IntegratorSettings {
    Scheme scheme = Scheme::midpoint;
    int order = 2;        ///< 2, 4 or 6 (triple-jump compositions)
    double step = 1e-2;
    double newton_tol = 1e-12;
    int max_newton = 25;
    double crossing_tol = 1e-10;
    double max_time = 1e3; ///< horizon for section searches
    double fd_step = 1e-6; ///< for Hessians in tangent propagation

    void validate() const;
};

struct CrossingEvent {
    ActionAngleState state;
    double time = 0.0;
    double residual = 0.0;
    long steps = 0;
};

using TrajectoryRecorder = std::function<void(double t, const Vec& q, const Vec& p)>;

/// Composition weights for the requested order.
std::vector<double> composition_weights(int order);

/// One composed step on lifted coordinates.
void step_inplace(const EvaluableHamiltonian& h, Vec& q, Vec& p, double dt, const IntegratorSettings& cfg);

ActionAngleState step(const EvaluableHamiltonian& h, const ActionAngleState& s, double dt,
                      const IntegratorSettings& cfg);

/// Integrates until q_n increases through the next integer. Downward crossings are skipped.
CrossingEvent integrate_to_section(const EvaluableHamiltonian& h, const ActionAngleState& s,
                                   const IntegratorSettings& cfg,
                                   const TrajectoryRecorder& record = nullptr);

/// Numerical return map: lift the section point, integrate to the next crossing.
SectionPoint integrated_return(const EvaluableHamiltonian& h, const SectionPoint& sp,
                               const IntegratorSettings& cfg, double* time = nullptr);

struct Monodromy {
    SectionPoint image;
    double time = 0.0;
    Mat flow;  ///< 2n x 2n tangent of the time-to-section map (crossing corrected)
    Mat slice; ///< restricted to the level slice in (q_bar, p_bar)
};

/// Return map plus its tangent. Tangents use the discrete midpoint variational
/// step with a symmetrized finite-difference Hessian, so they are symplectic.
/// `level` recovers p_n on the starting slice; dH/dp_n at both ends is taken
/// from the evaluable Hamiltonian.
Monodromy integrated_monodromy(const EvaluableHamiltonian& h, const SectionPoint& sp,
                               const IntegratorSettings& cfg);

/// D(R o Psi) by the chain rule; (2n-1) square.
Mat tangent_return_map(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                       const SectionPoint& sp);
/// Level-slice block; (2n-2) square.
Mat tangent_return_slice(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                         const SectionPoint& sp);

/// Writes t, q_1..q_n, p_1..p_n rows while integrating to the next crossing.
CrossingEvent dump_trajectory_csv(const EvaluableHamiltonian& h, const ActionAngleState& s,
                                  const IntegratorSettings& cfg, std::ostream& out);

} // namespace nearint

#endif

#ifndef NEARINT_REALIZATION_HPP
#define NEARINT_REALIZATION_HPP

#include <memory>
#include <vector>

#include "flow.hpp"
#include "potential.hpp"

namespace nearint {

// Realization runs in the flow-box chart of the unperturbed system. With
// theta = q_n mod 1 and r_j = omega_j / omega_n,
//   Q_j = q_j - theta r_j (j < n),  Q_n = theta / omega_n,  P_j = p_j,  P_n = H(p).
// This chart is canonical and H = P_n in it. The transition coordinate is
// s = Q_n - Q_c, with Q_c half the return time of the base torus, so the zone
// sits midway between two section hits.

struct RealizationSettings {
    double eps_u = 0.1;       ///< half-width of the transition zone in s (time units)
    double glue_tol = 1e-13;  ///< absolute tolerance of the level root
    int glue_max_iter = 100;
    double leaf_tol = 1e-14;  ///< absolute tolerance of the leaf label solve
    int leaf_max_iter = 50;
    int check_levels = 9;     ///< graph/closedness check grid at construction
    int check_labels = 17;
    int check_nodes = 257;

    void validate() const;
};

/// sigma(s): 0 for s <= -eps, 1 for s >= eps.
class TransitionProfile {
public:
    TransitionProfile() = default;
    explicit TransitionProfile(double eps);

    double eps() const { return step_.hi(); }
    Jet jet(double s) const { return step_.jet(s); }
    /// sigma' may be nonzero only here
    bool active(double s) const { return s > -eps() && s < eps(); }

private:
    SmoothStep step_;
};

struct LeafLabel {
    double phat = 0.0;  ///< label p_hat_1
    double level = 0.0; ///< label p_hat_n, the per-level Hamiltonian value
    double m = 1.0;     ///< d P_1 / d phat at the point
    PotentialJet jet;   ///< potential at (Q_1, phat)
};

/// Leaves L(phat, c) = graph of d(Q_1 phat + Q_n c + sigma(s) w(Q_1, phat; h)),
/// i.e. P_1 = phat + sigma w_Q and P_n = c + sigma' w.
class LeafFamily {
public:
    LeafFamily() = default;
    LeafFamily(const MapPotential& pot, TransitionProfile sigma, const RealizationSettings& cfg);

    const MapPotential& potential() const { return *pot_; }
    const TransitionProfile& transition() const { return sigma_; }

    Vec2 leaf(double q1, double s, double phat, double level, double h) const;
    /// Label of the leaf through (Q_1, s, P_1, P_n) in the level-h family.
    /// Throws foliation_overlap if the label solve does not converge.
    LeafLabel leaf_through_point(double q1, double s, double p1, double pn, double h,
                                 bool with_level = false) const;
    double hamiltonian_one_level(double q1, double s, double p1, double pn, double h) const;

    /// Root h* of hamiltonian_one_level(.., h) = h inside [pn - halfwidth, pn + halfwidth].
    double glue_levels(double q1, double s, double p1, double pn, double halfwidth) const;

private:
    const MapPotential* pot_ = nullptr;
    TransitionProfile sigma_;
    RealizationSettings cfg_;
};

/// Generic scalar root for decreasing g on [lo, hi]: safeguarded Newton with
/// bisection. Throws gluing if the bracket does not contain a sign change.
double safeguarded_root(const std::function<std::pair<double, double>(double)>& g, double lo,
                        double hi, double tol, int max_iter);

/// Flow-box chart coordinates of a phase point.
struct ChartPoint {
    double theta = 0.0;
    double q1 = 0.0; ///< Q_1, unwrapped near the template center
    double s = 0.0;
    double p1 = 0.0;
    double pn = 0.0; ///< H(p)
    double r1 = 0.0;
    Vec omega;
};

class RealizedHamiltonian : public EvaluableHamiltonian {
public:
    RealizedHamiltonian(const IntegrableHamiltonian& sys, const Vec& p_star, SectionPerturbation psi,
                        RealizationSettings cfg);

    const IntegrableHamiltonian& base() const { return sys_; }
    const SectionPerturbation& perturbation() const { return *psi_; }
    const RealizationSettings& settings() const { return cfg_; }
    const Vec& p_star() const { return p_star_; }
    const LeafFamily& leaves() const { return leaves_; }
    const MapPotential& potential() const { return *pot_; }
    double zone_center() const { return q_center_; }
    double glue_halfwidth() const { return glue_half_; }

    ChartPoint chart(const Vec& q, const Vec& p) const;
    /// Phase point with the given chart coordinates; other q_j, p_j from `rest`.
    ActionAngleState from_chart(double q1, double s, double p1, double h, const ActionAngleState& rest) const;
    /// False where H~ = H by construction (the evaluation takes the fast path).
    bool in_zone(const Vec& q, const Vec& p) const;
    bool in_zone(const ChartPoint& c) const;

    int dimension() const override { return sys_.dimension(); }
    double value(const Vec& q, const Vec& p) const override;
    void gradient(const Vec& q, const Vec& p, Vec& dq, Vec& dp) const override;
    std::optional<Mat> base_hessian(const Vec& p) const override { return sys_.hess(p); }

private:
    IntegrableHamiltonian sys_;
    Vec p_star_;
    std::shared_ptr<const SectionPerturbation> psi_;
    std::shared_ptr<const MapPotential> pot_;
    RealizationSettings cfg_;
    LeafFamily leaves_;
    double q_center_ = 0.0;
    double glue_half_ = 0.0;
};

/// Builds H~ for Psi around the torus p_star. Checks that the transition zone
/// fits between two section hits over the support and that the image
/// manifolds are graphs with closed primitives.
std::shared_ptr<RealizedHamiltonian> realize(const IntegrableHamiltonian& sys, const Vec& p_star,
                                             const SectionPerturbation& psi,
                                             const RealizationSettings& cfg = {});

struct FidelityReport {
    std::size_t samples = 0;
    std::size_t active = 0;      ///< samples where Psi moves the point
    double sup_error = 0.0;      ///< integrated return vs R o Psi, max-norm (angles mod 1)
    double mean_error = 0.0;
    double sup_energy_drift = 0.0;
    double max_outside = 0.0;    ///< max |H~ - H| over samples outside the zone
    std::size_t outside = 0;
    std::vector<double> errors;  ///< per sample
};

/// Integrates the H~ flow from each sample on the section to the next crossing.
FidelityReport verify_realization(const IntegrableHamiltonian& sys, const RealizedHamiltonian& ht,
                                  const SectionPerturbation& psi,
                                  const std::vector<SectionPoint>& samples,
                                  const IntegratorSettings& cfg, int workers = 1);

/// Distance on the section: angle distance on q_bar, Euclidean on p, max-combined.
double section_distance(const SectionPoint& a, const SectionPoint& b);

struct LocalizationReport {
    std::size_t samples = 0;
    std::size_t outside = 0;
    std::size_t outside_mismatch = 0; ///< fast-path points where H~ != H bitwise
    double sup_inside = 0.0;          ///< sup |H~ - H| over zone samples
    double sup_gradient = 0.0;        ///< sup |grad H~ - grad H|_inf over zone samples
};

/// Uniform samples over the whole phase-space box around the torus (mostly
/// outside the zone) plus `zone_samples` drawn in chart coordinates inside it.
LocalizationReport localization_scan(const RealizedHamiltonian& ht, std::size_t samples,
                                     std::size_t zone_samples, std::uint64_t seed);

/// Random section points around the torus with (q_1, p_1) in the template box
/// enlarged by `margin` and levels across the envelope support enlarged likewise.
std::vector<SectionPoint> section_samples(const IntegrableHamiltonian& sys,
                                          const SectionPerturbation& psi, std::size_t count,
                                          double margin, std::uint64_t seed);

} // namespace nearint

#endif

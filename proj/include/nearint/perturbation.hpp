#ifndef NEARINT_PERTURBATION_HPP
#define NEARINT_PERTURBATION_HPP

#include <optional>
#include <vector>

#include "profiles.hpp"
#include "section_maps.hpp"

namespace nearint {

// Everything here acts on the slice plane z = (q_1, p_1). The q_1 coordinate
// is unwrapped around a reference angle before any of these maps see it.

/// Time-K flow of G(z) = (rho^2/2) b(s), s = |z - c|^2 / rho^2,
/// b = (1 - step(s))/2 for the exp-built unit smooth step. The flow is a
/// rotation about c by K g(s) with g = -b' = step'/2; g vanishes to all orders
/// at s = 0 and s = 1 and peaks at s = 1/2 with g = 1, so K is the peak angle.
/// This profile has a small shear max|2 s g'| (about 7.7), which keeps line
/// images graphs up to K of order 0.1.
class RadialTwist {
public:
    RadialTwist() = default;
    RadialTwist(Vec2 center, double rho, double amplitude);

    const Vec2& center() const { return center_; }
    double rho() const { return rho_; }
    double amplitude() const { return amplitude_; }

    static double profile(double s);            ///< g(s)
    static double profile_derivative(double s); ///< g'(s)
    static double peak_s();                     ///< argmax of g
    double peak_radius() const { return rho_ * std::sqrt(peak_s()); }

    bool in_support(const Vec2& z) const { return (z - center_).squaredNorm() < rho_ * rho_; }

    /// The amplitude is multiplied by `scale` (the level envelope).
    Vec2 apply(const Vec2& z, double scale = 1.0) const;
    Vec2 apply_inverse(const Vec2& z, double scale = 1.0) const;
    Mat2 derivative(const Vec2& z, double scale = 1.0) const;
    Vec2 apply(const Vec2& z, double scale, Mat2& jac) const;

    double generator(const Vec2& z) const;
    Vec2 generator_gradient(const Vec2& z) const;

private:
    Vec2 center_ = Vec2::Zero();
    double rho_ = 1.0;
    double amplitude_ = 0.0;
};

/// Composition T_m o ... o T_1 of twists with overlapping supports.
class DiskTemplate {
public:
    DiskTemplate() = default;
    DiskTemplate(std::vector<RadialTwist> twists, Vec2 center, double r_supp);

    /// Two twists of radius 2r/3 centered at center -+ (r/3, 0), both with amplitude K.
    static DiskTemplate linked_twist(Vec2 center, double r_supp, double kick);

    const std::vector<RadialTwist>& twists() const { return twists_; }
    const Vec2& center() const { return center_; }
    double support_radius() const { return r_supp_; }
    bool empty() const { return twists_.empty(); }

    bool in_support(const Vec2& z) const;
    Vec2 apply(const Vec2& z, double scale = 1.0) const;
    Vec2 apply_inverse(const Vec2& z, double scale = 1.0) const;
    Mat2 derivative(const Vec2& z, double scale = 1.0) const;
    Vec2 apply(const Vec2& z, double scale, Mat2& jac) const;

    /// Hamiltonian K with d/dscale B(z) = X_K(B(z)), evaluated at the image y.
    double deformation(const Vec2& y, double scale) const;
    Vec2 deformation_gradient(const Vec2& y, double scale) const;

private:
    std::vector<RadialTwist> twists_;
    Vec2 center_ = Vec2::Zero();
    double r_supp_ = 0.0;
};

/// Cancels the unperturbed twist drift of the return map on a core disk of
/// the level h0. Mixed generating function w = scale * chi_Q(Q) chi_p(p) F(p),
/// (q, p) -> (Q, P) with q = Q + w_p, P = p + w_Q, and F' = omega_1 / omega_n on
/// the level, so R o C is the identity where both cutoffs equal 1.
class DriftCompensator {
public:
    DriftCompensator(const IntegrableHamiltonian& sys, const Vec& p_star, double center_q,
                     double core_radius, double h0, const SectionSettings& cfg = {});

    double q_half_width() const { return chi_q_.outer(); }
    double p_half_width() const { return chi_p_.outer(); }
    double q_plateau() const { return chi_q_.inner(); }
    double p_plateau() const { return chi_p_.inner(); }

    bool in_support(const Vec2& z) const;
    Vec2 apply(const Vec2& z, double scale = 1.0) const;
    Vec2 apply_inverse(const Vec2& z, double scale = 1.0) const;
    Mat2 derivative(const Vec2& z, double scale = 1.0) const;
    Vec2 apply(const Vec2& z, double scale, Mat2& jac) const;

    double deformation(const Vec2& y, double scale) const;
    Vec2 deformation_gradient(const Vec2& y, double scale) const;

private:
    // chi_p F and its first two p-derivatives
    Jet momentum_factor(double p) const;
    double preimage_momentum(const Vec2& y, double scale) const;

    IntegrableHamiltonian sys_;
    Vec p_star_;
    double h0_;
    double pn_star_;
    SectionSettings cfg_;
    PlateauCutoff chi_q_;
    PlateauCutoff chi_p_;
    double factor_bound_ = 0.0; ///< max |chi_p F|
};

/// The level-indexed plane family Phi_h = C_h o B_h, amplitude beta(h).
class SlicePlaneMap {
public:
    SlicePlaneMap() = default;
    SlicePlaneMap(DiskTemplate tmpl, BumpProfile envelope,
                  std::optional<DriftCompensator> compensator = std::nullopt);

    const DiskTemplate& disk() const { return template_; }
    const BumpProfile& envelope() const { return envelope_; }
    const std::optional<DriftCompensator>& compensator() const { return compensator_; }

    /// Half widths of the box around the template center outside which every
    /// member of the family is the identity.
    double q_half_width() const { return q_half_; }
    double p_half_width() const { return p_half_; }
    bool in_support(const Vec2& z) const;
    bool active(const Vec2& z, double h) const;

    Vec2 apply(const Vec2& z, double h) const;
    Vec2 apply_inverse(const Vec2& z, double h) const;
    Mat2 derivative(const Vec2& z, double h) const;
    /// Image and Jacobian in one pass.
    Vec2 apply(const Vec2& z, double h, Mat2& jac) const;

    /// K_h with d/dh Phi_h(z) = X_{K_h}(Phi_h(z)); X_K = (dK/dp, -dK/dq).
    double deformation(const Vec2& y, double h) const;
    Vec2 deformation_gradient(const Vec2& y, double h) const;
    Vec2 level_velocity(const Vec2& y, double h) const;

private:
    DiskTemplate template_;
    BumpProfile envelope_;
    std::optional<DriftCompensator> compensator_;
    double q_half_ = 0.0;
    double p_half_ = 0.0;
};

/// Psi on the section: acts by Phi_{H(p)} on (q_1, p_1), re-lifts p_n on the level.
class SectionPerturbation {
public:
    SectionPerturbation() = default;
    SectionPerturbation(SlicePlaneMap plane, Vec p_star, SectionSettings cfg = {});

    static SectionPerturbation identity(const Vec& p_star);

    const SlicePlaneMap& plane() const { return plane_; }
    const Vec& p_star() const { return p_star_; }
    const SectionSettings& settings() const { return cfg_; }
    double center_q() const { return plane_.disk().center()[0]; }
    bool is_identity() const { return plane_.disk().empty() && !plane_.compensator(); }

    /// Unwrapped plane coordinates (q_1 near the template center, p_1).
    Vec2 plane_point(const SectionPoint& sp) const;
    bool active(const IntegrableHamiltonian& sys, const SectionPoint& sp) const;

    SectionPoint apply(const IntegrableHamiltonian& sys, const SectionPoint& sp) const;
    /// Jacobian in (q_bar, p) coordinates including the level dependence.
    Mat derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp) const;
    /// Jacobian restricted to the level slice, (q_bar, p_bar) coordinates.
    Mat slice_derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp) const;

private:
    SlicePlaneMap plane_;
    Vec p_star_;
    SectionSettings cfg_;
};

SectionPoint perturbation_apply(const SectionPerturbation& psi, const IntegrableHamiltonian& sys,
                                const SectionPoint& sp);
SectionPoint perturbed_return(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                              const SectionPoint& sp);
/// R o Psi and its level-slice Jacobian in one pass (same image as perturbed_return).
SectionPoint perturbed_return(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                              const SectionPoint& sp, Mat& slice_jac);
Mat perturbed_return_derivative(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                                const SectionPoint& sp);
Mat perturbed_return_slice_derivative(const IntegrableHamiltonian& sys,
                                      const SectionPerturbation& psi, const SectionPoint& sp);

double envelope_eval(const BumpProfile& beta, double h);

} // namespace nearint

#endif

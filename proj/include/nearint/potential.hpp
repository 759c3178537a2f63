#ifndef NEARINT_POTENTIAL_HPP
#define NEARINT_POTENTIAL_HPP

#include <vector>

#include "perturbation.hpp"

namespace nearint {

// Mixed generating function of a plane map (s, p) -> (Q, P):
//   s = Q + w_p(Q, p),  P = p + w_Q(Q, p).
// The image of the horizontal line {p = phat} is the graph of phat + w_Q(., phat),
// so w(., phat) is the primitive of the image manifold.

struct PotentialJet {
    double w = 0.0;
    double wq = 0.0, wp = 0.0;
    double wqq = 0.0, wqp = 0.0, wpp = 0.0;
    double wh = 0.0, whq = 0.0, whp = 0.0; ///< level derivatives
    double s = 0.0;                        ///< preimage angle, s = Q + w_p
    bool zero = true;                      ///< identically zero near the point
};

struct PotentialSettings {
    int quad_panels = 8; ///< 20-point Gauss-Legendre panels between the support edge and s
};

/// Exact evaluation for the plane family Phi_h. The preimage angle comes from a
/// scalar Newton solve, w_Q and w_p from the map itself, the value from a fixed
/// Gauss-Legendre rule along the preimage line (smooth in the arguments,
/// unlike an adaptive rule), and the h-derivatives
/// from the deformation Hamiltonian (w_h = -K_h(Q, P)).
class MapPotential {
public:
    MapPotential() = default;
    MapPotential(const SlicePlaneMap& map, PotentialSettings cfg = {});

    const SlicePlaneMap& map() const { return *map_; }
    double q_lo() const { return q_lo_; }
    double q_hi() const { return q_hi_; }
    bool support_contains(double q, double phat, double h) const;

    /// Solves Phi_q(s, phat) = Q for s.
    double preimage(double q, double phat, double h) const;
    double value(double q, double phat, double h) const;
    PotentialJet jet(double q, double phat, double h, bool with_value = true,
                     bool with_level = true) const;

private:
    const SlicePlaneMap* map_ = nullptr;
    PotentialSettings cfg_;
    double q_lo_ = 0.0, q_hi_ = 0.0, p_lo_ = 0.0, p_hi_ = 0.0;
};

/// max |d/dphat w_Q - d/dQ w_p| over a grid (4th-order differences); vanishes
/// exactly when the sampled 1-form w_Q dQ + w_p dphat is closed.
double closedness_defect(const MapPotential& pot, double h, int grid, double fd_step = 1e-5);

/// Image manifold of {p = phat} sampled on a preimage grid, with its primitive.
struct ImageManifoldSample {
    double phat = 0.0;
    std::vector<double> s;  ///< preimage nodes
    std::vector<double> q;  ///< image angles, strictly increasing
    std::vector<double> wq; ///< P - phat at the nodes
    std::vector<double> wqq; ///< slope dP/dQ of the image
    std::vector<double> w;  ///< primitive at the nodes, 0 at the left end

    bool identically_zero() const;
    /// Quintic Hermite interpolation of (w, w_Q) at Q; zero outside the node range.
    std::pair<double, double> eval(double q) const;
};

/// Samples Phi_h on `nodes` points of the line p = phat across the support and
/// integrates P - phat along the image with Gauss-Legendre panels. Throws
/// amplitude_too_large on a fold and closedness if the primitive does not
/// return to zero (tolerance 1e-6).
ImageManifoldSample image_manifold_potential(const SlicePlaneMap& map, double h, double phat,
                                             int nodes);

/// Slice map reconstructed from the leaf partition alone: labels phat
/// neighbouring a query give d/dphat W by a 4th-order stencil, then
/// s = Q + W_phat(Q) is solved for Q and P = phat + W_Q(Q).
class PartitionReconstruction {
public:
    PartitionReconstruction(const SlicePlaneMap& map, double h, int nodes, double label_step);
    Vec2 apply(const Vec2& z) const;

private:
    const SlicePlaneMap* map_;
    double h_;
    int nodes_;
    double step_;
};

/// Isotopy phi_t generated by rho(t) W with rho = 1 on [0,1/3], 0 on [2/3,1].
class IsotopyFamily {
public:
    IsotopyFamily(const MapPotential& pot, double h);

    static double rho(double t);
    Vec2 apply(const Vec2& z, double t) const;
    Mat2 derivative(const Vec2& z, double t) const;

private:
    const MapPotential* pot_;
    double h_;
};

} // namespace nearint

#endif

#ifndef NEARINT_SECTION_MAPS_HPP
#define NEARINT_SECTION_MAPS_HPP

#include <cstdint>
#include <vector>

#include "integrable.hpp"

namespace nearint {

// The section is {q_n = 0 mod 1}; only crossings with increasing q_n count.

/// Point of the section: q_bar = (q_1..q_{n-1}) and the full action vector.
struct SectionPoint {
    Vec q_bar;
    Vec p;

    SectionPoint() = default;
    SectionPoint(Vec q_bar_, Vec p_);

    int dimension() const { return static_cast<int>(p.size()); }
    void normalize();
    ActionAngleState lift() const; ///< the phase point with q_n = 0
};

/// Coordinates (q_bar, p_bar) on the level slice {H = h} of the section.
struct SliceCoordinates {
    double h = 0.0;
    Vec q_bar;
    Vec p_bar;
};

/// Closed box in (q_bar, p) coordinates of the section.
struct SectionBox {
    std::vector<double> lo;
    std::vector<double> hi;

    SectionBox() = default;
    SectionBox(std::vector<double> lo_, std::vector<double> hi_);

    std::size_t size() const { return lo.size(); }
    double volume() const;
    bool contains(const SectionPoint& sp) const;
};

struct SectionSettings {
    double transversality_threshold = 1e-8; ///< minimum dH/dp_n
    double lift_tolerance = 1e-12;
    double lift_trust = 1.0; ///< Newton iterates must stay within guess +- trust
    int lift_max_iter = 50;
};

/// Throws ErrorKind::transversality if dH/dp_n does not exceed the threshold.
double check_transversal(const IntegrableHamiltonian& sys, const Vec& p,
                         const SectionSettings& cfg = {});

/// The first-return map: q_i += omega_i / omega_n, p unchanged.
SectionPoint return_map(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                        const SectionSettings& cfg = {});
SectionPoint return_map_inverse(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                                const SectionSettings& cfg = {});

/// Shift vector omega_bar / omega_n (unreduced; used for lifted angle tracking).
Vec return_shift(const IntegrableHamiltonian& sys, const Vec& p, const SectionSettings& cfg = {});

/// Jacobian of return_map in (q_bar, p) coordinates, (2n-1) x (2n-1).
Mat return_map_derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                          const SectionSettings& cfg = {});

/// Jacobian of the return map restricted to the level slice, in (q_bar, p_bar).
Mat slice_return_derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                            const SectionSettings& cfg = {});

/// Time for q_n to advance by one period.
double return_time(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                   const SectionSettings& cfg = {});

struct MeasureEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    std::size_t samples = 0;
};

/// Monte-Carlo estimate of the flow-induced section measure of a box, i.e. the
/// integral of |dH/dp_n| over the box in (q_bar, p) coordinates.
MeasureEstimate induced_measure(const IntegrableHamiltonian& sys, const SectionBox& box,
                                std::size_t samples, std::uint64_t seed);

/// Same integrand restricted to an arbitrary indicator inside a bounding box.
MeasureEstimate induced_measure_of_set(const IntegrableHamiltonian& sys, const SectionBox& bounds,
                                       const std::function<bool(const SectionPoint&)>& indicator,
                                       std::size_t samples, std::uint64_t seed);

/// Solves H(p_bar, p_n) = h for p_n by safeguarded Newton near the guess.
double solve_level(const IntegrableHamiltonian& sys, double h, const Vec& p_bar, double p_n_guess,
                   const SectionSettings& cfg = {});

SectionPoint slice_lift(const IntegrableHamiltonian& sys, double h, const Vec& q_bar,
                        const Vec& p_bar, double p_n_guess, const SectionSettings& cfg = {});
SliceCoordinates slice_project(const IntegrableHamiltonian& sys, const SectionPoint& sp);

/// Standard skew form on (q_bar, p_bar) of dimension 2m.
Mat standard_skew(int m);

} // namespace nearint

#endif

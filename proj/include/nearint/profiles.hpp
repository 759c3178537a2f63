#ifndef NEARINT_PROFILES_HPP
#define NEARINT_PROFILES_HPP

namespace nearint {

/// Value and first two derivatives of a scalar profile.
struct Jet {
    double v = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

/// exp(1 - 1/(1 - u^2)) with u = (x - center) / radius; 1 at the center,
/// identically 0 for |u| >= 1.
class BumpProfile {
public:
    BumpProfile() = default;
    BumpProfile(double center, double radius);

    double center() const { return center_; }
    double radius() const { return radius_; }

    double operator()(double x) const { return jet(x).v; }
    Jet jet(double x) const;
    bool inside(double x) const { return (x - center_) * (x - center_) < radius_ * radius_; }

private:
    double center_ = 0.0;
    double radius_ = 1.0;
};

/// Smooth monotone step from 0 (x <= lo) to 1 (x >= hi), built from exp(-1/u).
class SmoothStep {
public:
    SmoothStep() = default;
    SmoothStep(double lo, double hi);

    double lo() const { return lo_; }
    double hi() const { return hi_; }

    double operator()(double x) const { return jet(x).v; }
    Jet jet(double x) const;

private:
    double lo_ = 0.0;
    double hi_ = 1.0;
};

/// Even cutoff: 1 for |x - center| <= inner, 0 for |x - center| >= outer.
class PlateauCutoff {
public:
    PlateauCutoff() = default;
    PlateauCutoff(double center, double inner, double outer);

    double center() const { return center_; }
    double inner() const { return step_.lo(); }
    double outer() const { return step_.hi(); }

    double operator()(double x) const { return jet(x).v; }
    Jet jet(double x) const;

private:
    double center_ = 0.0;
    SmoothStep step_;
};

} // namespace nearint

#endif

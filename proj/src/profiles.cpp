#include "nearint/profiles.hpp"

#include <cmath>

#include "nearint/common.hpp"

namespace nearint {

BumpProfile::BumpProfile(double center, double radius) : center_(center), radius_(radius)
{
    if (!(radius > 0.0))
        throw Error(ErrorKind::configuration, "bump radius must be positive");
}

Jet BumpProfile::jet(double x) const
{
    const double u = (x - center_) / radius_;
    const double w = 1.0 - u * u;
    if (!(w > 0.0))
        return {};
    // log b = 1 - 1/w; (log b)' = -2u / w^2
    const double b = std::exp(1.0 - 1.0 / w);
    const double l1 = -2.0 * u / (w * w);
    const double l2 = -2.0 / (w * w) - 8.0 * u * u / (w * w * w);
    const double s = 1.0 / radius_;
    return {b, b * l1 * s, b * (l2 + l1 * l1) * s * s};
}

SmoothStep::SmoothStep(double lo, double hi) : lo_(lo), hi_(hi)
{
    if (!(hi > lo))
        throw Error(ErrorKind::configuration, "smooth step needs lo < hi");
}

Jet SmoothStep::jet(double x) const
{
    const double len = hi_ - lo_;
    const double u = (x - lo_) / len;
    if (u <= 0.0)
        return {0.0, 0.0, 0.0};
    if (u >= 1.0)
        return {1.0, 0.0, 0.0};
    // sigma = 1 / (1 + e^z) with z = 1/u - 1/(1-u)
    const double z = 1.0 / u - 1.0 / (1.0 - u);
    const double e = std::exp(-std::abs(z));
    const double sig = z > 0.0 ? e / (1.0 + e) : 1.0 / (1.0 + e);
    const double ss = e / ((1.0 + e) * (1.0 + e)); // sigma (1 - sigma)
    if (ss == 0.0)
        return {sig, 0.0, 0.0};
    const double z1 = -1.0 / (u * u) - 1.0 / ((1.0 - u) * (1.0 - u));
    const double z2 = 2.0 / (u * u * u) - 2.0 / ((1.0 - u) * (1.0 - u) * (1.0 - u));
    const double d1 = -ss * z1;
    const double d2 = -d1 * (1.0 - 2.0 * sig) * z1 - ss * z2;
    return {sig, d1 / len, d2 / (len * len)};
}

PlateauCutoff::PlateauCutoff(double center, double inner, double outer)
    : center_(center), step_(inner, outer)
{
    if (!(inner >= 0.0))
        throw Error(ErrorKind::configuration, "cutoff plateau must be nonnegative");
}

Jet PlateauCutoff::jet(double x) const
{
    const double d = x - center_;
    const double sgn = d < 0.0 ? -1.0 : 1.0;
    const Jet j = step_.jet(std::abs(d));
    return {1.0 - j.v, -sgn * j.d1, -j.d2};
}

} // namespace nearint

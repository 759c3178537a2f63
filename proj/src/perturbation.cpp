#include "nearint/perturbation.hpp"

#include <algorithm>
#include <sstream>

namespace nearint {

namespace {

Mat2 rotation(double th)
{
    const double c = std::cos(th), s = std::sin(th);
    Mat2 r;
    r << c, -s, s, c;
    return r;
}

Mat2 inverse_unimodular(const Mat2& m)
{
    Mat2 r;
    r << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return r / (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
}

// Scalar root of a monotone increasing f on [lo, hi]: Newton, falling back to bisection.
template <class F>
double monotone_root(F&& f, double x, double lo, double hi)
{
    for (int it = 0; it < 100; ++it) {
        const auto [val, der] = f(x);
        if (val == 0.0)
            return x;
        if (val > 0.0)
            hi = std::min(hi, x);
        else
            lo = std::max(lo, x);
        double nx = x - val / der;
        if (!(nx > lo && nx < hi))
            nx = 0.5 * (lo + hi);
        if (std::abs(nx - x) <= 1e-16 * (1.0 + std::abs(x)) || hi - lo <= 1e-16 * (1.0 + std::abs(x)))
            return nx;
        x = nx;
    }
    return x;
}

} // namespace

// ---------------------------------------------------------------- RadialTwist

RadialTwist::RadialTwist(Vec2 center, double rho, double amplitude)
    : center_(std::move(center)), rho_(rho), amplitude_(amplitude)
{
    if (!(rho > 0.0))
        throw Error(ErrorKind::configuration, "twist support radius must be positive");
}

namespace {
// g = sigma'/2 for the unit smooth step, so g peaks at s = 1/2 with value 1
const SmoothStep& unit_step()
{
    static const SmoothStep st(0.0, 1.0);
    return st;
}
} // namespace

double RadialTwist::profile(double s)
{
    return 0.5 * unit_step().jet(s).d1;
}

double RadialTwist::profile_derivative(double s)
{
    return 0.5 * unit_step().jet(s).d2;
}

double RadialTwist::peak_s()
{
    return 0.5;
}

Vec2 RadialTwist::apply(const Vec2& z, double scale) const
{
    const Vec2 v = z - center_;
    const double s = v.squaredNorm() / (rho_ * rho_);
    if (!(s < 1.0))
        return z;
    const double th = scale * amplitude_ * profile(s);
    if (th == 0.0)
        return z;
    return center_ + rotation(th) * v;
}

Vec2 RadialTwist::apply_inverse(const Vec2& z, double scale) const
{
    return apply(z, -scale);
}

Mat2 RadialTwist::derivative(const Vec2& z, double scale) const
{
    const Vec2 v = z - center_;
    const double s = v.squaredNorm() / (rho_ * rho_);
    if (!(s < 1.0))
        return Mat2::Identity();
    const double a = scale * amplitude_;
    const Mat2 r = rotation(a * profile(s));
    const Vec2 grad_th = a * profile_derivative(s) * 2.0 / (rho_ * rho_) * v;
    const Vec2 jv(-v[1], v[0]);
    return r * (Mat2::Identity() + jv * grad_th.transpose());
}

Vec2 RadialTwist::apply(const Vec2& z, double scale, Mat2& jac) const
{
    const Vec2 v = z - center_;
    const double s = v.squaredNorm() / (rho_ * rho_);
    if (!(s < 1.0)) {
        jac.setIdentity();
        return z;
    }
    const Jet g = unit_step().jet(s);
    const double a = scale * amplitude_;
    const Mat2 r = rotation(a * (0.5 * g.d1)); // same rounding as apply()
    const Vec2 grad_th = a * g.d2 / (rho_ * rho_) * v;
    const Vec2 jv(-v[1], v[0]);
    jac = r * (Mat2::Identity() + jv * grad_th.transpose());
    return center_ + r * v;
}

double RadialTwist::generator(const Vec2& z) const
{
    const double s = (z - center_).squaredNorm() / (rho_ * rho_);
    if (!(s < 1.0))
        return 0.0;
    return 0.25 * rho_ * rho_ * (1.0 - unit_step()(s));
}

Vec2 RadialTwist::generator_gradient(const Vec2& z) const
{
    const Vec2 v = z - center_;
    return -profile(v.squaredNorm() / (rho_ * rho_)) * v;
}

// --------------------------------------------------------------- DiskTemplate

DiskTemplate::DiskTemplate(std::vector<RadialTwist> twists, Vec2 center, double r_supp)
    : twists_(std::move(twists)), center_(std::move(center)), r_supp_(r_supp)
{
    for (const auto& t : twists_)
        if ((t.center() - center_).norm() + t.rho() > r_supp_ * (1.0 + 1e-12))
            throw Error(ErrorKind::configuration, "twist support leaves the template disk");
}

DiskTemplate DiskTemplate::linked_twist(Vec2 center, double r_supp, double kick)
{
    if (!(r_supp > 0.0))
        throw Error(ErrorKind::configuration, "template support radius must be positive");
    const double rho = 2.0 * r_supp / 3.0;
    const double d = r_supp / 3.0;
    std::vector<RadialTwist> tw;
    tw.emplace_back(Vec2(center[0] - d, center[1]), rho, kick);
    tw.emplace_back(Vec2(center[0] + d, center[1]), rho, kick);
    return DiskTemplate(std::move(tw), center, r_supp);
}

bool DiskTemplate::in_support(const Vec2& z) const
{
    for (const auto& t : twists_)
        if (t.in_support(z))
            return true;
    return false;
}

Vec2 DiskTemplate::apply(const Vec2& z, double scale) const
{
    Vec2 y = z;
    for (const auto& t : twists_)
        y = t.apply(y, scale);
    return y;
}

Vec2 DiskTemplate::apply_inverse(const Vec2& z, double scale) const
{
    Vec2 y = z;
    for (auto it = twists_.rbegin(); it != twists_.rend(); ++it)
        y = it->apply_inverse(y, scale);
    return y;
}

Mat2 DiskTemplate::derivative(const Vec2& z, double scale) const
{
    Vec2 y = z;
    Mat2 m = Mat2::Identity();
    for (const auto& t : twists_) {
        m = t.derivative(y, scale) * m;
        y = t.apply(y, scale);
    }
    return m;
}

Vec2 DiskTemplate::apply(const Vec2& z, double scale, Mat2& jac) const
{
    Vec2 y = z;
    jac.setIdentity();
    Mat2 d;
    for (const auto& t : twists_) {
        y = t.apply(y, scale, d);
        jac = d * jac;
    }
    return y;
}

double DiskTemplate::deformation(const Vec2& y, double scale) const
{
    double k = 0.0;
    Vec2 u = y;
    for (auto it = twists_.rbegin(); it != twists_.rend(); ++it) {
        k += it->amplitude() * it->generator(u);
        u = it->apply_inverse(u, scale);
    }
    return k;
}

Vec2 DiskTemplate::deformation_gradient(const Vec2& y, double scale) const
{
    Vec2 g = Vec2::Zero();
    Vec2 u = y;
    Mat2 a = Mat2::Identity(); // du/dy
    for (auto it = twists_.rbegin(); it != twists_.rend(); ++it) {
        g += it->amplitude() * a.transpose() * it->generator_gradient(u);
        const Vec2 prev = it->apply_inverse(u, scale);
        a = inverse_unimodular(it->derivative(prev, scale)) * a;
        u = prev;
    }
    return g;
}

// ----------------------------------------------------------- DriftCompensator

namespace {

double level_pn(const IntegrableHamiltonian& sys, const Vec& p_star, double p1, double h0,
                double guess, const SectionSettings& cfg)
{
    const auto n = p_star.size();
    Vec pb = p_star.head(n - 1);
    pb[0] = p1;
    return solve_level(sys, h0, pb, guess, cfg);
}

} // namespace

DriftCompensator::DriftCompensator(const IntegrableHamiltonian& sys, const Vec& p_star,
                                   double center_q, double core_radius, double h0,
                                   const SectionSettings& cfg)
    : sys_(sys), p_star_(p_star), h0_(h0), cfg_(cfg)
{
    const auto n = p_star.size();
    if (n != sys.dimension())
        throw Error(ErrorKind::dimension_mismatch, "torus action has the wrong dimension");
    if (!(core_radius > 0.0))
        throw Error(ErrorKind::configuration, "compensator core radius must be positive");
    pn_star_ = level_pn(sys, p_star, p_star[0], h0, p_star[n - 1], cfg);
    const double cp = p_star[0];
    const double r = core_radius;
    chi_p_ = PlateauCutoff(cp, 1.2 * r, 2.5 * r);

    // scan the momentum factor to size the angle cutoff
    const int grid = 1601;
    double fmax = 0.0, dmax = 0.0, vmax = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double p = cp - chi_p_.outer() + 2.0 * chi_p_.outer() * i / (grid - 1);
        const Vec full = [&] {
            Vec x = p_star;
            x[0] = p;
            x[n - 1] = level_pn(sys, p_star, p, h0, pn_star_, cfg);
            return x;
        }();
        const Vec w = sys.grad(full);
        fmax = std::max(fmax, std::abs(w[0] / w[n - 1]));
        const Jet m = momentum_factor(p);
        dmax = std::max(dmax, std::abs(m.d1));
        vmax = std::max(vmax, std::abs(m.v));
    }
    factor_bound_ = 1.5 * vmax + 1e-300;
    const double plateau = r + 1.2 * fmax + 0.1 * r;
    const double ramp = std::max(4.4 * dmax, r);
    chi_q_ = PlateauCutoff(center_q, plateau, plateau + ramp);
    if (chi_q_.outer() >= 0.45) {
        std::ostringstream os;
        os << "drift compensator needs angle half-width " << chi_q_.outer()
           << " which does not fit on the circle; reduce the core radius";
        throw Error(ErrorKind::configuration, os.str());
    }
    // solvability of the generating function: 1 + w_Qp stays above 1/2
    double slope = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double x = chi_q_.inner() + ramp * i / (grid - 1);
        slope = std::max(slope, std::abs(chi_q_.jet(center_q + x).d1));
    }
    if (slope * dmax > 0.5)
        throw Error(ErrorKind::amplitude_too_large, "drift compensator generating function not solvable");
}

Jet DriftCompensator::momentum_factor(double p) const
{
    const Jet c = chi_p_.jet(p);
    if (c.v == 0.0 && c.d1 == 0.0)
        return {};
    const auto n = p_star_.size();
    Vec full = p_star_;
    full[0] = p;
    full[n - 1] = level_pn(sys_, p_star_, p, h0_, pn_star_, cfg_);
    const Vec w = sys_.grad(full);
    const Mat hs = sys_.hess(full);
    const double wn = w[n - 1];
    const double f = pn_star_ - full[n - 1];
    const double f1 = w[0] / wn;
    const double d = -f1; // dp_n/dp_1 along the level
    const double f2 = ((hs(0, 0) + hs(0, n - 1) * d) * wn - w[0] * (hs(n - 1, 0) + hs(n - 1, n - 1) * d)) /
                      (wn * wn);
    return {c.v * f, c.d1 * f + c.v * f1, c.d2 * f + 2.0 * c.d1 * f1 + c.v * f2};
}

bool DriftCompensator::in_support(const Vec2& z) const
{
    return std::abs(z[0] - chi_q_.center()) < chi_q_.outer() &&
           std::abs(z[1] - chi_p_.center()) < chi_p_.outer();
}

Vec2 DriftCompensator::apply(const Vec2& z, double scale) const
{
    Mat2 unused;
    return apply(z, scale, unused);
}

Vec2 DriftCompensator::apply(const Vec2& z, double scale, Mat2& jac) const
{
    jac.setIdentity();
    if (scale == 0.0 || !in_support(z))
        return z;
    const Jet m = momentum_factor(z[1]);
    const double g1 = scale * m.d1;
    const double q = z[0];
    auto f = [&](double x) {
        const Jet c = chi_q_.jet(x);
        return std::pair<double, double>{x + c.v * g1 - q, 1.0 + c.d1 * g1};
    };
    const double big = std::abs(g1);
    const double qq = monotone_root(f, q, q - big - 1e-300, q + big + 1e-300);
    const Jet c = chi_q_.jet(qq);
    const double mqp = c.d1 * m.d1, mpp = c.v * m.d2, mqq = c.d2 * m.v;
    const double den = 1.0 + scale * mqp;
    const double dq_dq = 1.0 / den;
    const double dq_dp = -scale * mpp / den;
    jac << dq_dq, dq_dp, scale * mqq * dq_dq, 1.0 + scale * mqq * dq_dp + scale * mqp;
    return {qq, z[1] + scale * c.d1 * m.v};
}

double DriftCompensator::preimage_momentum(const Vec2& y, double scale) const
{
    const double a = scale * chi_q_.jet(y[0]).d1;
    if (a == 0.0)
        return y[1];
    const double pp = y[1];
    auto f = [&](double x) {
        const Jet m = momentum_factor(x);
        return std::pair<double, double>{x + a * m.v - pp, 1.0 + a * m.d1};
    };
    const double big = std::abs(a) * factor_bound_;
    return monotone_root(f, pp, pp - big - 1e-300, pp + big + 1e-300);
}

Vec2 DriftCompensator::apply_inverse(const Vec2& y, double scale) const
{
    if (scale == 0.0 || !in_support(y))
        return y;
    const double p = preimage_momentum(y, scale);
    return {y[0] + scale * chi_q_.jet(y[0]).v * momentum_factor(p).d1, p};
}

Mat2 DriftCompensator::derivative(const Vec2& z, double scale) const
{
    if (scale == 0.0 || !in_support(z))
        return Mat2::Identity();
    Mat2 d;
    apply(z, scale, d);
    return d;
}

double DriftCompensator::deformation(const Vec2& y, double scale) const
{
    if (!in_support(y))
        return 0.0;
    const double p = preimage_momentum(y, scale);
    return -chi_q_.jet(y[0]).v * momentum_factor(p).v;
}

Vec2 DriftCompensator::deformation_gradient(const Vec2& y, double scale) const
{
    if (!in_support(y))
        return Vec2::Zero();
    const double p = preimage_momentum(y, scale);
    const Jet m = momentum_factor(p);
    const Jet c = chi_q_.jet(y[0]);
    const double mq = c.d1 * m.v, mp = c.v * m.d1;
    const double mqq = c.d2 * m.v, mqp = c.d1 * m.d1;
    const double den = 1.0 + scale * mqp;
    return {-(mq - mp * scale * mqq / den), -mp / den};
}

// -------------------------------------------------------------- SlicePlaneMap

SlicePlaneMap::SlicePlaneMap(DiskTemplate tmpl, BumpProfile envelope,
                             std::optional<DriftCompensator> compensator)
    : template_(std::move(tmpl)), envelope_(envelope), compensator_(std::move(compensator))
{
    q_half_ = template_.empty() ? 0.0 : template_.support_radius();
    p_half_ = q_half_;
    if (compensator_) {
        q_half_ = std::max(q_half_, compensator_->q_half_width());
        p_half_ = std::max(p_half_, compensator_->p_half_width());
    }
    if (q_half_ >= 0.5)
        throw Error(ErrorKind::configuration, "perturbation support wraps around the angle circle");
}

bool SlicePlaneMap::in_support(const Vec2& z) const
{
    const Vec2& c = template_.center();
    return std::abs(z[0] - c[0]) < q_half_ && std::abs(z[1] - c[1]) < p_half_;
}

bool SlicePlaneMap::active(const Vec2& z, double h) const
{
    return in_support(z) && envelope_.inside(h);
}

Vec2 SlicePlaneMap::apply(const Vec2& z, double h) const
{
    if (!in_support(z))
        return z;
    const double s = envelope_(h);
    if (s == 0.0)
        return z;
    Vec2 y = template_.apply(z, s);
    if (compensator_)
        y = compensator_->apply(y, s);
    return y;
}

Vec2 SlicePlaneMap::apply_inverse(const Vec2& z, double h) const
{
    if (!in_support(z))
        return z;
    const double s = envelope_(h);
    if (s == 0.0)
        return z;
    Vec2 y = z;
    if (compensator_)
        y = compensator_->apply_inverse(y, s);
    return template_.apply_inverse(y, s);
}

Mat2 SlicePlaneMap::derivative(const Vec2& z, double h) const
{
    if (!in_support(z))
        return Mat2::Identity();
    const double s = envelope_(h);
    if (s == 0.0)
        return Mat2::Identity();
    Mat2 d = template_.derivative(z, s);
    if (compensator_)
        d = compensator_->derivative(template_.apply(z, s), s) * d;
    return d;
}

Vec2 SlicePlaneMap::apply(const Vec2& z, double h, Mat2& jac) const
{
    jac.setIdentity();
    if (!in_support(z))
        return z;
    const double s = envelope_(h);
    if (s == 0.0)
        return z;
    Vec2 y = template_.apply(z, s, jac);
    if (compensator_) {
        Mat2 dc;
        y = compensator_->apply(y, s, dc);
        jac = dc * jac;
    }
    return y;
}

double SlicePlaneMap::deformation(const Vec2& y, double h) const
{
    if (!in_support(y))
        return 0.0;
    const Jet b = envelope_.jet(h);
    if (b.d1 == 0.0)
        return 0.0;
    double k = 0.0;
    Vec2 u = y;
    if (compensator_) {
        k += compensator_->deformation(y, b.v);
        u = compensator_->apply_inverse(y, b.v);
    }
    k += template_.deformation(u, b.v);
    return b.d1 * k;
}

Vec2 SlicePlaneMap::deformation_gradient(const Vec2& y, double h) const
{
    if (!in_support(y))
        return Vec2::Zero();
    const Jet b = envelope_.jet(h);
    if (b.d1 == 0.0)
        return Vec2::Zero();
    Vec2 g = Vec2::Zero();
    if (compensator_) {
        g += compensator_->deformation_gradient(y, b.v);
        const Vec2 u = compensator_->apply_inverse(y, b.v);
        const Mat2 dinv = inverse_unimodular(compensator_->derivative(u, b.v));
        g += dinv.transpose() * template_.deformation_gradient(u, b.v);
    } else {
        g += template_.deformation_gradient(y, b.v);
    }
    return b.d1 * g;
}

Vec2 SlicePlaneMap::level_velocity(const Vec2& y, double h) const
{
    const Vec2 g = deformation_gradient(y, h);
    return {g[1], -g[0]};
}

// -------------------------------------------------------- SectionPerturbation

SectionPerturbation::SectionPerturbation(SlicePlaneMap plane, Vec p_star, SectionSettings cfg)
    : plane_(std::move(plane)), p_star_(std::move(p_star)), cfg_(cfg)
{
}

SectionPerturbation SectionPerturbation::identity(const Vec& p_star)
{
    DiskTemplate none({}, Vec2(0.5, p_star[0]), 0.0);
    return SectionPerturbation(SlicePlaneMap(none, BumpProfile(0.0, 1.0)), p_star);
}

Vec2 SectionPerturbation::plane_point(const SectionPoint& sp) const
{
    const double cq = center_q();
    return {cq + wrap_centered(sp.q_bar[0] - cq), sp.p[0]};
}

bool SectionPerturbation::active(const IntegrableHamiltonian& sys, const SectionPoint& sp) const
{
    if (is_identity())
        return false;
    const Vec2 z = plane_point(sp);
    return plane_.in_support(z) && plane_.envelope().inside(sys.eval(sp.p));
}

SectionPoint SectionPerturbation::apply(const IntegrableHamiltonian& sys, const SectionPoint& sp) const
{
    if (is_identity())
        return sp;
    const Vec2 z = plane_point(sp);
    if (!plane_.in_support(z))
        return sp;
    const double h = sys.eval(sp.p);
    const Vec2 y = plane_.apply(z, h);
    if (y[0] == z[0] && y[1] == z[1])
        return sp;
    const auto n = sp.p.size();
    SectionPoint out = sp;
    out.q_bar[0] = wrap_unit(y[0]);
    out.p[0] = y[1];
    out.p[n - 1] = solve_level(sys, h, out.p.head(n - 1), sp.p[n - 1], cfg_);
    return out;
}

Mat SectionPerturbation::derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp) const
{
    const auto n = sp.p.size();
    Mat d = Mat::Identity(2 * n - 1, 2 * n - 1);
    if (!active(sys, sp))
        return d;
    const Vec2 z = plane_point(sp);
    const double h = sys.eval(sp.p);
    const Vec2 y = plane_.apply(z, h);
    const Mat2 dz = plane_.derivative(z, h);
    const Vec2 vel = plane_.level_velocity(y, h);
    const Vec w = sys.grad(sp.p);

    const Eigen::Index iq = 0, ip = n - 1, in = 2 * n - 2;
    // rows of q_1' and p_1'
    for (int r = 0; r < 2; ++r) {
        const Eigen::Index row = r == 0 ? iq : ip;
        d.row(row).setZero();
        d(row, iq) = dz(r, 0);
        d(row, ip) = dz(r, 1);
        for (Eigen::Index j = 0; j < n; ++j)
            d(row, n - 1 + j) += vel[r] * w[j];
    }
    // p_n' from H(p') = H(p)
    Vec pp = sp.p;
    pp[0] = y[1];
    pp[n - 1] = solve_level(sys, h, pp.head(n - 1), sp.p[n - 1], cfg_);
    const Vec w2 = sys.grad(pp);
    d.row(in).setZero();
    for (Eigen::Index j = 0; j < n; ++j)
        d(in, n - 1 + j) = w[j];
    for (Eigen::Index j = 0; j + 1 < n; ++j)
        d.row(in) -= w2[j] * d.row(n - 1 + j);
    d.row(in) /= w2[n - 1];
    return d;
}

Mat SectionPerturbation::slice_derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp) const
{
    const auto n = sp.p.size();
    Mat d = Mat::Identity(2 * n - 2, 2 * n - 2);
    if (!active(sys, sp))
        return d;
    const Mat2 dz = plane_.derivative(plane_point(sp), sys.eval(sp.p));
    d(0, 0) = dz(0, 0);
    d(0, n - 1) = dz(0, 1);
    d(n - 1, 0) = dz(1, 0);
    d(n - 1, n - 1) = dz(1, 1);
    return d;
}

SectionPoint perturbation_apply(const SectionPerturbation& psi, const IntegrableHamiltonian& sys,
                                const SectionPoint& sp)
{
    return psi.apply(sys, sp);
}

SectionPoint perturbed_return(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                              const SectionPoint& sp)
{
    return return_map(sys, psi.apply(sys, sp), psi.settings());
}

Mat perturbed_return_derivative(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                                const SectionPoint& sp)
{
    const SectionPoint mid = psi.apply(sys, sp);
    return return_map_derivative(sys, mid, psi.settings()) * psi.derivative(sys, sp);
}

Mat perturbed_return_slice_derivative(const IntegrableHamiltonian& sys,
                                      const SectionPerturbation& psi, const SectionPoint& sp)
{
    const SectionPoint mid = psi.apply(sys, sp);
    return slice_return_derivative(sys, mid, psi.settings()) * psi.slice_derivative(sys, sp);
}

SectionPoint perturbed_return(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                              const SectionPoint& sp, Mat& slice_jac)
{
    const auto n = sp.p.size();
    const SectionSettings& cfg = psi.settings();
    SectionPoint mid = sp;
    Mat2 d = Mat2::Identity();
    if (!psi.is_identity()) {
        const SlicePlaneMap& plane = psi.plane();
        const Vec2 z = psi.plane_point(sp);
        if (plane.in_support(z)) {
            const double h = sys.eval(sp.p);
            const Vec2 y = plane.apply(z, h, d);
            if (y[0] != z[0] || y[1] != z[1]) {
                mid.q_bar[0] = wrap_unit(y[0]);
                mid.p[0] = y[1];
                mid.p[n - 1] = solve_level(sys, h, mid.p.head(n - 1), sp.p[n - 1], cfg);
            }
        }
    }
    Mat dpsi = Mat::Identity(2 * n - 2, 2 * n - 2);
    dpsi(0, 0) = d(0, 0);
    dpsi(0, n - 1) = d(0, 1);
    dpsi(n - 1, 0) = d(1, 0);
    dpsi(n - 1, n - 1) = d(1, 1);
    slice_jac = slice_return_derivative(sys, mid, cfg) * dpsi;
    return return_map(sys, mid, cfg);
}

double envelope_eval(const BumpProfile& beta, double h)
{
    return beta(h);
}

} // namespace nearint

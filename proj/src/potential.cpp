#include "nearint/potential.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

#include <boost/math/quadrature/gauss.hpp>

namespace nearint {

namespace {

// Increasing scalar function on [lo, hi]; f returns (value, slope).
template <class F>
double bracketed_newton(F&& f, double x, double lo, double hi)
{
    for (int it = 0; it < 200; ++it) {
        const auto [val, der] = f(x);
        if (val == 0.0)
            return x;
        if (val > 0.0)
            hi = std::min(hi, x);
        else
            lo = std::max(lo, x);
        double nx = der > 0.0 ? x - val / der : 0.5 * (lo + hi);
        if (!(nx > lo && nx < hi))
            nx = 0.5 * (lo + hi);
        const double tol = 4e-16 * (1.0 + std::abs(x));
        if (std::abs(nx - x) <= tol || hi - lo <= tol)
            return nx;
        x = nx;
    }
    return x;
}

} // namespace

MapPotential::MapPotential(const SlicePlaneMap& map, PotentialSettings cfg) : map_(&map), cfg_(cfg)
{
    const Vec2& c = map.disk().center();
    q_lo_ = c[0] - map.q_half_width();
    q_hi_ = c[0] + map.q_half_width();
    p_lo_ = c[1] - map.p_half_width();
    p_hi_ = c[1] + map.p_half_width();
}

bool MapPotential::support_contains(double q, double phat, double h) const
{
    return q > q_lo_ && q < q_hi_ && phat > p_lo_ && phat < p_hi_ && map_->envelope().inside(h);
}

double MapPotential::preimage(double q, double phat, double h) const
{
    if (!support_contains(q, phat, h))
        return q;
    auto f = [&](double s) {
        Mat2 d;
        const Vec2 y = map_->apply(Vec2(s, phat), h, d);
        const double a = d(0, 0);
        if (!(a > 0.0)) {
            std::ostringstream os;
            os << "image of the line p = " << phat << " folds at s = " << s
               << " (not a graph; amplitude too large)";
            throw Error(ErrorKind::amplitude_too_large, os.str());
        }
        return std::pair<double, double>{y[0] - q, a};
    };
    return bracketed_newton(f, q, q_lo_, q_hi_);
}

double MapPotential::value(double q, double phat, double h) const
{
    return jet(q, phat, h, true, false).w;
}

PotentialJet MapPotential::jet(double q, double phat, double h, bool with_value, bool with_level) const
{
    PotentialJet j;
    j.s = q;
    if (!support_contains(q, phat, h))
        return j;
    const double s = preimage(q, phat, h);
    Mat2 d;
    const Vec2 y = map_->apply(Vec2(s, phat), h, d);
    const double a = d(0, 0), b = d(0, 1), c = d(1, 0), dd = d(1, 1);
    j.zero = false;
    j.s = s;
    j.wq = y[1] - phat;
    j.wp = s - q;
    j.wqq = c / a;
    j.wqp = dd - b * c / a - 1.0;
    j.wpp = -b / a;
    if (with_level) {
        const double k = map_->deformation(y, h);
        const Vec2 gk = map_->deformation_gradient(y, h);
        j.wh = -k;
        j.whq = -(gk[0] + gk[1] * j.wqq);
        j.whp = -gk[1] * (1.0 + j.wqp);
    }
    if (with_value) {
        auto integrand = [&](double x) {
            Mat2 dd;
            const double p = map_->apply(Vec2(x, phat), h, dd)[1];
            return (p - phat) * dd(0, 0);
        };
        using gl20 = boost::math::quadrature::gauss<double, 20>;
        // the primitive vanishes at both ends of the support; integrate from the nearer one
        const bool left = s - q_lo_ <= q_hi_ - s;
        const double a = left ? q_lo_ : s, b = left ? s : q_hi_;
        const int np = std::max(1, cfg_.quad_panels);
        double sum = 0.0;
        for (int k = 0; k < np; ++k)
            sum += gl20::integrate(integrand, a + (b - a) * k / np, a + (b - a) * (k + 1) / np);
        j.w = left ? sum : -sum;
    }
    return j;
}

double closedness_defect(const MapPotential& pot, double h, int grid, double fd_step)
{
    const SlicePlaneMap& m = pot.map();
    const Vec2& c = m.disk().center();
    const double qh = m.q_half_width(), ph = m.p_half_width();
    const double e = fd_step;
    double worst = 0.0;
    auto d4 = [e](double fm2, double fm1, double fp1, double fp2) {
        return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * e);
    };
    for (int i = 0; i < grid; ++i) {
        const double q = c[0] - qh + 2.0 * qh * (i + 0.5) / grid;
        for (int k = 0; k < grid; ++k) {
            const double p = c[1] - ph + 2.0 * ph * (k + 0.5) / grid;
            auto wq = [&](double pp) { return pot.jet(q, pp, h, false, false).wq; };
            auto wp = [&](double qq) { return pot.jet(qq, p, h, false, false).wp; };
            const double a = d4(wq(p - 2 * e), wq(p - e), wq(p + e), wq(p + 2 * e));
            const double b = d4(wp(q - 2 * e), wp(q - e), wp(q + e), wp(q + 2 * e));
            worst = std::max(worst, std::abs(a - b));
        }
    }
    return worst;
}

bool ImageManifoldSample::identically_zero() const
{
    for (std::size_t k = 0; k < w.size(); ++k)
        if (w[k] != 0.0 || wq[k] != 0.0)
            return false;
    return true;
}

std::pair<double, double> ImageManifoldSample::eval(double x) const
{
    if (q.size() < 2 || !(x > q.front() && x < q.back()))
        return {0.0, 0.0};
    const auto it = std::upper_bound(q.begin(), q.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - q.begin()) - 1;
    const double h = q[k + 1] - q[k];
    const double t = (x - q[k]) / h;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    // quintic Hermite on (w, w_Q, d/dQ w_Q) at both ends
    const double a0 = 1 - 10 * t3 + 15 * t4 - 6 * t5, a1 = 10 * t3 - 15 * t4 + 6 * t5;
    const double b0 = t - 6 * t3 + 8 * t4 - 3 * t5, b1 = -4 * t3 + 7 * t4 - 3 * t5;
    const double c0 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5), c1 = 0.5 * (t3 - 2 * t4 + t5);
    const double da0 = -30 * t2 + 60 * t3 - 30 * t4, da1 = -da0;
    const double db0 = 1 - 18 * t2 + 32 * t3 - 15 * t4, db1 = -12 * t2 + 28 * t3 - 15 * t4;
    const double dc0 = t - 4.5 * t2 + 6 * t3 - 2.5 * t4, dc1 = 1.5 * t2 - 4 * t3 + 2.5 * t4;
    const double hh = h * h;
    const double v = a0 * w[k] + a1 * w[k + 1] + h * (b0 * wq[k] + b1 * wq[k + 1])
                     + hh * (c0 * wqq[k] + c1 * wqq[k + 1]);
    const double dv = (da0 * w[k] + da1 * w[k + 1]) / h + db0 * wq[k] + db1 * wq[k + 1]
                      + h * (dc0 * wqq[k] + dc1 * wqq[k + 1]);
    return {v, dv};
}

ImageManifoldSample image_manifold_potential(const SlicePlaneMap& map, double h, double phat, int nodes)
{
    if (nodes < 2)
        throw Error(ErrorKind::configuration, "image manifold needs at least two nodes");
    const Vec2& c = map.disk().center();
    const double lo = c[0] - map.q_half_width(), hi = c[0] + map.q_half_width();
    ImageManifoldSample out;
    out.phat = phat;
    if (map.disk().empty() && !map.compensator())
        return out;
    out.s.resize(nodes);
    out.q.resize(nodes);
    out.wq.resize(nodes);
    out.wqq.resize(nodes);
    out.w.assign(nodes, 0.0);
    for (int k = 0; k < nodes; ++k) {
        const double s = lo + (hi - lo) * k / (nodes - 1);
        Mat2 d;
        const Vec2 y = map.apply(Vec2(s, phat), h, d);
        out.s[k] = s;
        out.q[k] = y[0];
        out.wq[k] = y[1] - phat;
        out.wqq[k] = d(1, 0) / d(0, 0);
        if (k > 0 && !(out.q[k] > out.q[k - 1])) {
            std::ostringstream os;
            os << "image of the line p = " << phat << " is not a graph over q (fold near q = " << y[0]
               << ")";
            throw Error(ErrorKind::amplitude_too_large, os.str());
        }
    }
    auto integrand = [&](double x) {
        Mat2 dd;
        const double p = map.apply(Vec2(x, phat), h, dd)[1];
        return (p - phat) * dd(0, 0);
    };
    using gl = boost::math::quadrature::gauss<double, 10>;
    for (int k = 1; k < nodes; ++k)
        out.w[k] = out.w[k - 1] + gl::integrate(integrand, out.s[k - 1], out.s[k]);
    if (std::abs(out.w.back()) > 1e-6) {
        std::ostringstream os;
        os << "primitive of the image manifold does not close (flux " << out.w.back() << ")";
        throw Error(ErrorKind::closedness, os.str());
    }
    return out;
}

PartitionReconstruction::PartitionReconstruction(const SlicePlaneMap& map, double h, int nodes,
                                                 double label_step)
    : map_(&map), h_(h), nodes_(nodes), step_(label_step)
{
}

Vec2 PartitionReconstruction::apply(const Vec2& z) const
{
    const double s = z[0], phat = z[1];
    const double e = step_;
    ImageManifoldSample curves[5];
    for (int k = -2; k <= 2; ++k)
        curves[k + 2] = image_manifold_potential(*map_, h_, phat + k * e, nodes_);
    auto wp = [&](double q) {
        double v[5], d[5];
        for (int k = 0; k < 5; ++k)
            std::tie(v[k], d[k]) = curves[k].eval(q);
        const double f = (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * e);
        const double fq = (d[0] - 8.0 * d[1] + 8.0 * d[3] - d[4]) / (12.0 * e);
        return std::pair<double, double>{f, fq};
    };
    const double lo = curves[2].s.front(), hi = curves[2].s.back();
    if (!(s > lo && s < hi))
        return z;
    auto g = [&](double q) {
        const auto [f, fq] = wp(q);
        return std::pair<double, double>{q + f - s, 1.0 + fq};
    };
    const double q = bracketed_newton(g, s, lo, hi);
    return {q, phat + curves[2].eval(q).second};
}

IsotopyFamily::IsotopyFamily(const MapPotential& pot, double h) : pot_(&pot), h_(h) {}

double IsotopyFamily::rho(double t)
{
    static const SmoothStep step(1.0 / 3.0, 2.0 / 3.0);
    return 1.0 - step(t);
}

Vec2 IsotopyFamily::apply(const Vec2& z, double t) const
{
    const double r = rho(t);
    if (r == 1.0)
        return pot_->map().apply(z, h_);
    if (r == 0.0)
        return z;
    const double s = z[0], phat = z[1];
    if (!pot_->support_contains(s, phat, h_))
        return z;
    auto g = [&](double q) {
        const PotentialJet j = pot_->jet(q, phat, h_, false, false);
        return std::pair<double, double>{q + r * j.wp - s, 1.0 + r * j.wqp};
    };
    const double q = bracketed_newton(g, s, pot_->q_lo(), pot_->q_hi());
    return {q, phat + r * pot_->jet(q, phat, h_, false, false).wq};
}

Mat2 IsotopyFamily::derivative(const Vec2& z, double t) const
{
    const double r = rho(t);
    if (r == 1.0)
        return pot_->map().derivative(z, h_);
    if (r == 0.0 || !pot_->support_contains(z[0], z[1], h_))
        return Mat2::Identity();
    const double q = apply(z, t)[0];
    const PotentialJet j = pot_->jet(q, z[1], h_, false, false);
    const double den = 1.0 + r * j.wqp;
    const double qs = 1.0 / den, qp = -r * j.wpp / den;
    Mat2 d;
    d << qs, qp, r * j.wqq * qs, 1.0 + r * j.wqq * qp + r * j.wqp;
    return d;
}

} // namespace nearint

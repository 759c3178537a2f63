#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nearint/flow.hpp"
#include "nearint/perturbation.hpp"
#include "support.hpp"

using namespace nearint;
using nt::vec;

namespace {

// time-1 flow of the radial Hamiltonian K*G by RK4, X = (dG/dp, -dG/dq)
Vec2 rk4_twist(const RadialTwist& tw, Vec2 z, int steps)
{
    const RadialTwist unit(tw.center(), tw.rho(), 1.0);
    auto field = [&](const Vec2& x) {
        const Vec2 g = unit.generator_gradient(x);
        return Vec2(tw.amplitude() * g[1], -tw.amplitude() * g[0]);
    };
    const double dt = 1.0 / steps;
    for (int i = 0; i < steps; ++i) {
        const Vec2 k1 = field(z);
        const Vec2 k2 = field(z + 0.5 * dt * k1);
        const Vec2 k3 = field(z + 0.5 * dt * k2);
        const Vec2 k4 = field(z + dt * k3);
        z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return z;
}

Mat2 fd_jacobian(const std::function<Vec2(const Vec2&)>& f, const Vec2& z, double h = 1e-6)
{
    Mat2 m;
    for (int j = 0; j < 2; ++j) {
        Vec2 a = z, b = z;
        a[j] += h;
        b[j] -= h;
        m.col(j) = (f(a) - f(b)) / (2 * h);
    }
    return m;
}

const IntegrableHamiltonian quad = IntegrableHamiltonian::quadratic(2);
const Vec p_star = vec({0.0, 1.0});

SectionPerturbation linked(double kick, double r = 0.1, double h0 = 0.5, double dh = 0.05)
{
    return SectionPerturbation(
        SlicePlaneMap(DiskTemplate::linked_twist(Vec2(0.5, 0.0), r, kick), BumpProfile(h0, dh)), p_star);
}

SectionPoint on_level(double q1, double p1, double h)
{
    return SectionPoint(vec({q1}), vec({p1, std::sqrt(2 * h - p1 * p1)}));
}

} // namespace

TEST_CASE("bump profile")
{
    const BumpProfile b(0.5, 0.05);
    CHECK(b(0.5) == 1.0);
    CHECK(envelope_eval(b, 0.5) == 1.0);
    CHECK(envelope_eval(b, 0.55) == 0.0);
    CHECK(envelope_eval(b, 0.45) == 0.0);
    CHECK(envelope_eval(b, 0.8) == 0.0);
    CHECK(envelope_eval(b, 0.525) == doctest::Approx(std::exp(1.0 - 1.0 / (1.0 - 0.25))).epsilon(1e-14));
    for (double x : {0.55 + 1e-9, 0.45 - 1e-9}) {
        const Jet j = b.jet(x);
        CHECK(j.v == 0.0);
        CHECK(j.d1 == 0.0);
        CHECK(j.d2 == 0.0);
    }
}

TEST_CASE("radial twist closed form")
{
    const Vec2 c(0.5, 0.0);
    const RadialTwist tw(c, 0.1, M_PI / 2);
    CHECK(tw.apply(Vec2(0.61, 0.0)) == Vec2(0.61, 0.0));
    CHECK(tw.apply(Vec2(0.5, 0.1)) == Vec2(0.5, 0.1));
    CHECK(tw.apply(c) == c);
    const double rs = tw.peak_radius();
    CHECK(RadialTwist::profile(RadialTwist::peak_s()) == doctest::Approx(1.0).epsilon(1e-14));
    const Vec2 z = c + Vec2(rs, 0.0);
    const Vec2 y = tw.apply(z);
    CHECK((y - (c + Vec2(0.0, rs))).norm() < 1e-14);
    CHECK((rk4_twist(tw, z, 2000) - y).norm() < 1e-8);
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
        const Vec2 x = c + Vec2(rng.uniform(-0.07, 0.07), rng.uniform(-0.07, 0.07));
        CHECK((rk4_twist(tw, x, 2000) - tw.apply(x)).norm() < 1e-8);
        CHECK((tw.apply_inverse(tw.apply(x)) - x).norm() < 1e-14);
    }
}

TEST_CASE("radial twist derivative")
{
    const RadialTwist tw(Vec2(0.5, 0.0), 0.1, 0.7);
    CHECK(tw.derivative(Vec2(0.7, 0.0)) == Mat2::Identity());
    Rng rng(2);
    for (int k = 0; k < 100; ++k) {
        const Vec2 z(rng.uniform(0.38, 0.62), rng.uniform(-0.12, 0.12));
        const Mat2 d = tw.derivative(z);
        CHECK(std::abs(d.determinant() - 1.0) < 1e-13);
        const Mat2 fd = fd_jacobian([&](const Vec2& x) { return tw.apply(x); }, z);
        CHECK((fd - d).cwiseAbs().maxCoeff() < 1e-6);
        Mat2 fused;
        CHECK(tw.apply(z, 1.0, fused) == tw.apply(z));
        CHECK((fused - d).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("linked twist template is area preserving with compact support")
{
    const auto tmpl = DiskTemplate::linked_twist(Vec2(0.5, 0.0), 0.1, 2.0);
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const Vec2 z(rng.uniform(0.35, 0.65), rng.uniform(-0.15, 0.15));
        CHECK(std::abs(tmpl.derivative(z).determinant() - 1.0) < 1e-12);
        if ((z - Vec2(0.5, 0.0)).norm() >= 0.1)
            CHECK(tmpl.apply(z) == z);
    }
}

TEST_CASE("perturbation_apply")
{
    const auto psi = linked(0.1);
    // far level: identity
    const auto far = on_level(0.5, 0.01, 0.7);
    CHECK(psi.apply(quad, far).q_bar == far.q_bar);
    CHECK(psi.apply(quad, far).p == far.p);

    Rng rng(4);
    for (int k = 0; k < 200; ++k) {
        const auto x = on_level(rng.uniform(0.38, 0.62), rng.uniform(-0.12, 0.12), rng.uniform(0.44, 0.56));
        const auto y = psi.apply(quad, x);
        CHECK(std::abs(quad.eval(y.p) - quad.eval(x.p)) < 1e-12);
        CHECK(std::abs(quad.eval(perturbed_return(quad, psi, x).p) - quad.eval(x.p)) < 1e-12);
    }

    // one twist at the slice origin, composed by hand
    const RadialTwist tw(Vec2(0.5, 0.0), 0.1, 0.5);
    const SectionPerturbation one(SlicePlaneMap(DiskTemplate({tw}, Vec2(0.5, 0.0), 0.1), BumpProfile(0.5, 0.05)),
                                  p_star);
    const auto x = on_level(0.53, 0.02, 0.5);
    const Vec2 z = tw.apply(Vec2(0.53, 0.02));
    const auto y = one.apply(quad, x);
    CHECK(std::abs(y.q_bar[0] - z[0]) < 1e-15);
    CHECK(std::abs(y.p[0] - z[1]) < 1e-15);
    CHECK(std::abs(y.p[1] - std::sqrt(1.0 - z[1] * z[1])) < 1e-12);
}

TEST_CASE("compact support in the slice plane for every level")
{
    const auto psi = linked(0.1);
    Rng rng(5);
    int tested = 0;
    while (tested < 200) {
        const double q = rng.uniform(), p1 = rng.uniform(-0.3, 0.3);
        if (std::hypot(wrap_centered(q - 0.5), p1) < 0.1)
            continue;
        const auto x = on_level(q, p1, rng.uniform(0.46, 0.54));
        const auto y = psi.apply(quad, x);
        CHECK(y.q_bar == x.q_bar);
        CHECK(y.p == x.p);
        ++tested;
    }
}

TEST_CASE("perturbed return")
{
    const auto psi = linked(0.1);
    const auto out = on_level(0.2, 0.05, 0.5);
    const auto a = perturbed_return(quad, psi, out), b = return_map(quad, out);
    CHECK(a.q_bar == b.q_bar);
    CHECK(a.p == b.p);
    // the slice origin is moved by the linked twist (it is off both twist centers)
    const auto origin = on_level(0.5, 0.0, 0.5);
    const auto c = perturbed_return(quad, psi, origin), d = return_map(quad, origin);
    CHECK(std::max(angle_distance(c.q_bar[0], d.q_bar[0]), std::abs(c.p[0] - d.p[0])) > 1e-6);
}

TEST_CASE("slice symplecticity and fused Jacobian")
{
    const IntegrableHamiltonian poly = IntegrableHamiltonian::polynomial({{0.0, 0.5, 0.1}, {0.0, 0.5}});
    for (bool comp : {false, true}) {
        const double r = comp ? 0.01 : 0.1;
        std::optional<DriftCompensator> c;
        if (comp)
            c.emplace(poly, p_star, 0.5, r, 0.5);
        const SectionPerturbation psi(
            SlicePlaneMap(DiskTemplate::linked_twist(Vec2(0.5, 0.0), r, 3.0), BumpProfile(0.5, 0.05), c), p_star);
        Rng rng(6);
        for (int k = 0; k < 200; ++k) {
            const Vec2 zz = rng.in_disk(0.5, 0.0, 1.3 * r);
            const double p1 = zz[1], h = rng.uniform(0.455, 0.545);
            const SectionPoint x(vec({zz[0]}), vec({p1, solve_level(poly, h, vec({p1}), 1.0)}));
            const Mat m = psi.slice_derivative(poly, x);
            CHECK(nt::max_abs(m.transpose() * standard_skew(1) * m - standard_skew(1)) < 1e-10);
            Mat fused;
            const auto y = perturbed_return(poly, psi, x, fused);
            const auto z = perturbed_return(poly, psi, x);
            CHECK(y.q_bar == z.q_bar);
            CHECK(y.p == z.p);
            CHECK(nt::max_abs(fused - perturbed_return_slice_derivative(poly, psi, x)) < 1e-12);
        }
    }
}

TEST_CASE("near-identity scaling in K")
{
    std::vector<double> ratio;
    for (double k : {1e-3, 1e-2, 1e-1}) {
        const auto psi = linked(k);
        Rng rng(7);
        double sup = 0.0;
        for (int i = 0; i < 500; ++i) {
            const auto x = on_level(rng.uniform(0.4, 0.6), rng.uniform(-0.1, 0.1), rng.uniform(0.45, 0.55));
            const auto y = psi.apply(quad, x);
            sup = std::max(sup, std::max(angle_distance(y.q_bar[0], x.q_bar[0]), (y.p - x.p).cwiseAbs().maxCoeff()));
        }
        ratio.push_back(sup / k);
    }
    for (double r : ratio) {
        CHECK(r > 0.5 * ratio.front());
        CHECK(r < 2.0 * ratio.front());
    }
}

TEST_CASE("drift compensator cancels the twist drift at h0")
{
    const DriftCompensator comp(quad, p_star, 0.5, 0.01, 0.5);
    const SectionPerturbation psi(
        SlicePlaneMap(DiskTemplate({}, Vec2(0.5, 0.0), 0.01), BumpProfile(0.5, 0.05), comp), p_star);
    Rng rng(8);
    for (int k = 0; k < 100; ++k) {
        const Vec2 z = rng.in_disk(0.5, 0.0, 0.01);
        const auto x = on_level(z[0], z[1], 0.5);
        const auto y = perturbed_return(quad, psi, x);
        CHECK(angle_distance(y.q_bar[0], x.q_bar[0]) < 1e-12);
        CHECK(std::abs(y.p[0] - x.p[0]) < 1e-12);
        Mat2 jac;
        const Vec2 w = comp.apply(z, 1.0, jac);
        CHECK(std::abs(jac.determinant() - 1.0) < 1e-12);
        CHECK((comp.apply_inverse(w) - z).norm() < 1e-12);
    }
}

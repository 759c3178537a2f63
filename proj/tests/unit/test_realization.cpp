#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nearint/flow.hpp"
#include "nearint/realization.hpp"
#include "support.hpp"

using namespace nearint;
using nt::vec;

namespace {

const IntegrableHamiltonian quad = IntegrableHamiltonian::quadratic(2);
const Vec p_star = vec({0.0, 1.0});
constexpr double h0 = 0.5;

SectionPerturbation linked(double kick, double r = 0.1, double dh = 0.05)
{
    return SectionPerturbation(
        SlicePlaneMap(DiskTemplate::linked_twist(Vec2(0.5, 0.0), r, kick), BumpProfile(h0, dh)), p_star);
}

SlicePlaneMap single(double kick)
{
    return SlicePlaneMap(DiskTemplate({RadialTwist(Vec2(0.5, 0.0), 0.08, kick)}, Vec2(0.5, 0.0), 0.08),
                         BumpProfile(h0, 0.05));
}

IntegratorSettings midpoint4()
{
    IntegratorSettings s;
    s.order = 4;
    s.step = 0.004;
    s.newton_tol = 1e-12;
    return s;
}

// plain bisection on g(h) = H_h(x) - h, g decreasing
double bisect_level(const LeafFamily& lf, double q1, double s, double p1, double pn, double hw)
{
    double lo = pn - hw, hi = pn + hw;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double m = 0.5 * (lo + hi);
        if (lf.hamiltonian_one_level(q1, s, p1, pn, m) - m > 0)
            lo = m;
        else
            hi = m;
    }
    return 0.5 * (lo + hi);
}

} // namespace

TEST_CASE("transition profile is 0 before and 1 after the zone")
{
    const TransitionProfile sg(0.1);
    CHECK(sg.jet(-0.1 - 1e-9).v == 0.0);
    CHECK(sg.jet(0.1 + 1e-9).v == 1.0);
    CHECK(sg.jet(-0.5).d1 == 0.0);
    CHECK(sg.jet(0.5).d1 == 0.0);
    for (double s = -0.099; s < 0.1; s += 0.003)
        CHECK(sg.jet(s).d1 >= 0.0);
    CHECK_FALSE(sg.active(0.1));
    CHECK(sg.active(0.0));
}

TEST_CASE("image manifold of the identity has zero potential")
{
    const SlicePlaneMap id(DiskTemplate({}, Vec2(0.5, 0.0), 0.1), BumpProfile(h0, 0.05));
    const ImageManifoldSample im = image_manifold_potential(id, h0, 0.01, 65);
    CHECK(im.identically_zero());
    const auto [w, wq] = im.eval(0.5);
    CHECK(w == 0.0);
    CHECK(wq == 0.0);
}

TEST_CASE("image manifold primitive matches the map")
{
    const SlicePlaneMap map = single(0.1);
    const MapPotential pot(map);
    const double phat = 0.02;
    const ImageManifoldSample im = image_manifold_potential(map, h0, phat, 257);
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const double s = rng.uniform(0.43, 0.57);
        const Vec2 y = map.apply(Vec2(s, phat), h0);
        const auto [w, wq] = im.eval(y[0]);
        CHECK(std::abs(wq - (y[1] - phat)) < 1e-8);
        CHECK(std::abs(w - pot.value(y[0], phat, h0)) < 1e-8);
    }
    CHECK(closedness_defect(pot, h0, 17) < 1e-8);
}

TEST_CASE("potential jet reproduces the generating relations")
{
    const SlicePlaneMap map = linked(0.1).plane();
    const MapPotential pot(map);
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        const double s = rng.uniform(0.42, 0.58), phat = rng.uniform(-0.08, 0.08);
        const double h = rng.uniform(0.46, 0.54);
        const Vec2 y = map.apply(Vec2(s, phat), h);
        const PotentialJet j = pot.jet(y[0], phat, h, false, false);
        CHECK(std::abs(j.s - s) < 1e-12);
        CHECK(std::abs(j.wq - (y[1] - phat)) < 1e-12);
        CHECK(std::abs(y[0] + j.wp - s) < 1e-12);
    }
    // outside the support
    CHECK(pot.jet(0.2, 0.0, h0).zero);
    CHECK(pot.jet(0.5, 0.0, 0.8).zero);
}

TEST_CASE("leaf formulas")
{
    const auto psi = linked(0.1);
    const MapPotential pot(psi.plane());
    const RealizationSettings cfg;
    const LeafFamily lf(pot, TransitionProfile(0.1), cfg);
    const double phat = 0.01, lev = h0;

    SUBCASE("before the zone the leaf is the horizontal line")
    {
        const Vec2 l = lf.leaf(0.5, -0.2, phat, lev, h0);
        CHECK(l[0] == phat);
        CHECK(l[1] == lev);
    }
    SUBCASE("after the zone it is the image manifold")
    {
        for (double s : {0.45, 0.5, 0.53}) {
            const Vec2 y = psi.plane().apply(Vec2(s, phat), h0);
            const Vec2 l = lf.leaf(y[0], 0.2, phat, lev, h0);
            CHECK(std::abs(l[0] - y[1]) < 1e-12);
            CHECK(l[1] == lev);
        }
    }
    SUBCASE("inside: P1 = phat + sigma w_Q, Pn = c + sigma' w")
    {
        const TransitionProfile sg(0.1);
        for (double s : {-0.05, 0.0, 0.04}) {
            const PotentialJet j = pot.jet(0.51, phat, h0, true, false);
            const Jet t = sg.jet(s);
            const Vec2 l = lf.leaf(0.51, s, phat, lev, h0);
            CHECK(std::abs(l[0] - (phat + t.v * j.wq)) < 1e-13);
            CHECK(std::abs(l[1] - (lev + t.d1 * j.w)) < 1e-13);
        }
    }
}

TEST_CASE("leaf through a point round-trips")
{
    const auto psi = linked(0.1);
    const MapPotential pot(psi.plane());
    const LeafFamily lf(pot, TransitionProfile(0.1), RealizationSettings{});
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double q1 = rng.uniform(0.42, 0.58), s = rng.uniform(-0.1, 0.1);
        const double p1 = rng.uniform(-0.08, 0.08), pn = rng.uniform(0.47, 0.53);
        const LeafLabel lab = lf.leaf_through_point(q1, s, p1, pn, h0, true);
        const Vec2 l = lf.leaf(q1, s, lab.phat, lab.level, h0);
        CHECK(std::abs(l[0] - p1) < 1e-12);
        CHECK(std::abs(l[1] - pn) < 1e-12);
    }
    // constant label before the zone
    const LeafLabel a = lf.leaf_through_point(0.47, -0.15, 0.03, 0.5, h0, true);
    const LeafLabel b = lf.leaf_through_point(0.55, -0.3, 0.03, 0.5, h0, true);
    CHECK(a.phat == 0.03);
    CHECK(b.phat == 0.03);
    CHECK(a.level == 0.5);
}

TEST_CASE("label is constant along the image manifold after the zone")
{
    const auto psi = linked(0.1);
    const MapPotential pot(psi.plane());
    const LeafFamily lf(pot, TransitionProfile(0.1), RealizationSettings{});
    const double phat = -0.02;
    for (double s : {0.44, 0.48, 0.52, 0.57}) {
        const Vec2 y = psi.plane().apply(Vec2(s, phat), h0);
        for (double ss : {0.11, 0.3}) {
            const LeafLabel lab = lf.leaf_through_point(y[0], ss, y[1], h0, h0);
            CHECK(std::abs(lab.phat - phat) < 1e-12);
        }
    }
}

TEST_CASE("glued level agrees with bisection")
{
    const auto psi = linked(0.1);
    const MapPotential pot(psi.plane());
    const LeafFamily lf(pot, TransitionProfile(0.1), RealizationSettings{});
    Rng rng(4);
    for (int i = 0; i < 40; ++i) {
        const double q1 = rng.uniform(0.42, 0.58), s = rng.uniform(-0.1, 0.1);
        const double p1 = rng.uniform(-0.08, 0.08), pn = rng.uniform(0.47, 0.53);
        const double h = lf.glue_levels(q1, s, p1, pn, 0.01);
        CHECK(std::abs(h - bisect_level(lf, q1, s, p1, pn, 0.01)) < 1e-12);
    }
}

TEST_CASE("safeguarded root")
{
    auto g = [](double x) { return std::pair<double, double>{1.0 - x * x * x, -3.0 * x * x}; };
    CHECK(std::abs(safeguarded_root(g, 0.0, 3.0, 1e-14, 100) - 1.0) < 1e-13);
    CHECK_THROWS_AS(safeguarded_root(g, 2.0, 3.0, 1e-14, 100), Error);
}

TEST_CASE("identity perturbation realizes H exactly")
{
    const auto ht = realize(quad, p_star, SectionPerturbation::identity(p_star));
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const Vec q = vec({rng.uniform(), rng.uniform()});
        const Vec p = vec({rng.uniform(-0.2, 0.2), rng.uniform(0.8, 1.2)});
        CHECK(ht->value(q, p) == quad.eval(p));
        CHECK_FALSE(ht->in_zone(q, p));
    }
    const auto psi = SectionPerturbation::identity(p_star);
    const auto samples = section_samples(quad, linked(0.1), 10, 0.0, 7);
    const FidelityReport rep = verify_realization(quad, *ht, psi, samples, midpoint4());
    CHECK(rep.sup_error <= 1e-8);
}

TEST_CASE("realized Hamiltonian")
{
    const auto psi = linked(0.1);
    const auto ht = realize(quad, p_star, psi);

    SUBCASE("equals H outside the zone and off the envelope")
    {
        Rng rng(6);
        int outside = 0;
        for (int i = 0; i < 2000; ++i) {
            const Vec q = vec({rng.uniform(), rng.uniform()});
            const Vec p = vec({rng.uniform(-0.15, 0.15), rng.uniform(0.85, 1.15)});
            if (ht->in_zone(q, p))
                continue;
            ++outside;
            CHECK(ht->value(q, p) == quad.eval(p));
        }
        CHECK(outside > 1000);
        // level outside the bump support
        const Vec p = vec({0.0, std::sqrt(2 * 0.6)});
        const ActionAngleState x = ht->from_chart(0.5, 0.0, 0.0, 0.6, {vec({0.0, 0.0}), p});
        CHECK(ht->value(x.q, x.p) == quad.eval(x.p));
    }

    SUBCASE("constant on a leaf")
    {
        const ActionAngleState rest(vec({0.0, 0.0}), p_star);
        for (double h : {0.48, 0.5, 0.52}) {
            for (double phat : {-0.03, 0.0, 0.02}) {
                for (double s : {-0.08, -0.02, 0.03, 0.07}) {
                    const double q1 = 0.49;
                    const Vec2 l = ht->leaves().leaf(q1, s, phat, h, h);
                    const ActionAngleState x = ht->from_chart(q1, s, l[0], l[1], rest);
                    CHECK(std::abs(ht->value(x.q, x.p) - h) < 1e-10);
                }
            }
        }
    }

    SUBCASE("gradient against finite differences")
    {
        const ActionAngleState rest(vec({0.0, 0.0}), p_star);
        Rng rng(9);
        for (int i = 0; i < 20; ++i) {
            const ActionAngleState x = ht->from_chart(rng.uniform(0.45, 0.55), rng.uniform(-0.08, 0.08),
                                                      rng.uniform(-0.05, 0.05), rng.uniform(0.48, 0.52), rest);
            Vec dq, dp;
            ht->gradient(x.q, x.p, dq, dp);
            const double d = 1e-6;
            double scale = std::max(dq.cwiseAbs().maxCoeff(), dp.cwiseAbs().maxCoeff());
            for (int k = 0; k < 2; ++k) {
                Vec a = x.q, b = x.q;
                a[k] += d;
                b[k] -= d;
                const double fq = (ht->value(a, x.p) - ht->value(b, x.p)) / (2 * d);
                CHECK(std::abs(fq - dq[k]) < 1e-6 * scale);
                Vec c = x.p, e = x.p;
                c[k] += d;
                e[k] -= d;
                const double fp = (ht->value(x.q, c) - ht->value(x.q, e)) / (2 * d);
                CHECK(std::abs(fp - dp[k]) < 1e-6 * scale);
            }
        }
    }

    SUBCASE("integrated return matches R o Psi")
    {
        const auto samples = section_samples(quad, psi, 12, 0.02, 11);
        const FidelityReport rep = verify_realization(quad, *ht, psi, samples, midpoint4());
        CHECK(rep.samples == 12);
        CHECK(rep.sup_error < 1e-6);
        CHECK(rep.max_outside == 0.0);
    }
}

TEST_CASE("fidelity survives a narrower zone and a smaller support")
{
    // step fine enough to resolve the narrower zone; at 0.004 the half-eps run
    // is integrator-limited
    IntegratorSettings is = midpoint4();
    is.step = 0.001;
    auto sup_error = [&](const SectionPerturbation& psi, double eps) {
        RealizationSettings cfg;
        cfg.eps_u = eps;
        const auto ht = realize(quad, p_star, psi, cfg);
        const auto samples = section_samples(quad, psi, 12, 0.0, 21);
        return verify_realization(quad, *ht, psi, samples, is).sup_error;
    };
    const double base = sup_error(linked(0.1), 0.1);
    const double half_eps = sup_error(linked(0.1), 0.05);
    const double half_r = sup_error(linked(0.1, 0.05), 0.1);
    MESSAGE("base " << base << " half eps " << half_eps << " half r " << half_r);
    CHECK(base < 1e-6);
    CHECK(half_eps <= 2.0 * base);
    CHECK(half_r <= 2.0 * base);
}

TEST_CASE("folding amplitude is rejected")
{
    CHECK_THROWS_AS(realize(quad, p_star, linked(3.0)), Error);
}

TEST_CASE("partition reconstruction recovers the slice map")
{
    const SlicePlaneMap map = linked(0.1).plane();
    const PartitionReconstruction rec(map, h0, 257, 1e-5);
    Rng rng(12);
    for (int i = 0; i < 16; ++i) {
        const Vec2 z(rng.uniform(0.44, 0.56), rng.uniform(-0.05, 0.05));
        const Vec2 a = rec.apply(z), b = map.apply(z, h0);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
    }
    const Vec2 far(0.2, 0.0);
    CHECK(rec.apply(far) == far);
}

TEST_CASE("isotopy from the map to the identity")
{
    const SlicePlaneMap map = linked(0.1).plane();
    const MapPotential pot(map);
    const IsotopyFamily iso(pot, h0);
    CHECK(IsotopyFamily::rho(0.2) == 1.0);
    CHECK(IsotopyFamily::rho(0.9) == 0.0);
    Rng rng(13);
    for (int i = 0; i < 50; ++i) {
        const Vec2 z(rng.uniform(0.42, 0.58), rng.uniform(-0.08, 0.08));
        CHECK((iso.apply(z, 0.2) - map.apply(z, h0)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(iso.apply(z, 0.9) == z);
        const double t = rng.uniform();
        CHECK(std::abs(iso.derivative(z, t).determinant() - 1.0) < 1e-10);
        // intermediate member against its generating relations
        const Vec2 y = iso.apply(z, 0.5);
        const PotentialJet j = pot.jet(y[0], z[1], h0, false, false);
        const double r = IsotopyFamily::rho(0.5);
        CHECK(std::abs(y[0] + r * j.wp - z[0]) < 1e-12);
        CHECK(std::abs(y[1] - z[1] - r * j.wq) < 1e-12);
    }
}

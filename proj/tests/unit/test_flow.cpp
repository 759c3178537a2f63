#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "nearint/flow.hpp"
#include "support.hpp"

using namespace nearint;
using nt::vec;

namespace {

constexpr double two_pi = 2.0 * M_PI;

// |p|^2/2 + a cos(2 pi q1): a nonseparable-looking test field
struct Pendulum : EvaluableHamiltonian {
    double a = 0.1;
    int dimension() const override { return 2; }
    double value(const Vec& q, const Vec& p) const override
    {
        return 0.5 * p.squaredNorm() + a * std::cos(two_pi * q[0]);
    }
    void gradient(const Vec& q, const Vec& p, Vec& dq, Vec& dp) const override
    {
        dq = Vec::Zero(2);
        dq[0] = -a * two_pi * std::sin(two_pi * q[0]);
        dp = p;
    }
};

// q1' = 1, q2' = cos(2 pi q1): q2 first falls through 0, then rises through it
struct Wobble : EvaluableHamiltonian {
    int dimension() const override { return 2; }
    double value(const Vec& q, const Vec& p) const override { return p[0] + p[1] * std::cos(two_pi * q[0]); }
    void gradient(const Vec& q, const Vec& p, Vec& dq, Vec& dp) const override
    {
        dq = Vec::Zero(2);
        dq[0] = -two_pi * p[1] * std::sin(two_pi * q[0]);
        dp = vec({1.0, std::cos(two_pi * q[0])});
    }
};

} // namespace

TEST_CASE("implicit midpoint is exact on the linear flow")
{
    const auto quad = IntegrableHamiltonian::quadratic(2);
    const IntegrableFlow f(quad);
    const ActionAngleState s(vec({0.1, 0.2}), vec({0.3, 1.1}));
    IntegratorSettings cfg;
    const auto a = step(f, s, 0.37, cfg);
    const auto b = flow_exact(quad, s, 0.37);
    for (int i = 0; i < 2; ++i)
        CHECK(angle_distance(a.q[i], b.q[i]) < 1e-13);

    Vec q = s.q, p = s.p;
    const double e0 = quad.eval(p);
    for (int k = 0; k < 10000; ++k)
        step_inplace(f, q, p, 1e-2, cfg);
    CHECK(std::abs(quad.eval(p) - e0) < 1e-8);
}

TEST_CASE("reversibility and energy behaviour on a nonlinear field")
{
    const Pendulum h;
    for (int order : {2, 4, 6}) {
        IntegratorSettings cfg;
        cfg.order = order;
        const ActionAngleState s(vec({0.13, 0.4}), vec({0.2, 0.9}));
        const auto back = step(h, step(h, s, 0.05, cfg), -0.05, cfg);
        CHECK((back.q - s.q).cwiseAbs().maxCoeff() < 1e-11);
        CHECK((back.p - s.p).cwiseAbs().maxCoeff() < 1e-11);
    }
    // composition orders: error ratio under step halving
    const ActionAngleState s(vec({0.13, 0.4}), vec({0.2, 0.9}));
    IntegratorSettings fine;
    fine.order = 6;
    Vec qr = s.q, pr = s.p;
    for (int k = 0; k < 400; ++k)
        step_inplace(h, qr, pr, 1.0 / 400, fine);
    for (int order : {2, 4}) {
        IntegratorSettings cfg;
        cfg.order = order;
        double err[2];
        for (int r = 0; r < 2; ++r) {
            const int m = 20 << r;
            Vec q = s.q, p = s.p;
            for (int k = 0; k < m; ++k)
                step_inplace(h, q, p, 1.0 / m, cfg);
            err[r] = std::max((q - qr).cwiseAbs().maxCoeff(), (p - pr).cwiseAbs().maxCoeff());
        }
        CHECK(std::log2(err[0] / err[1]) == doctest::Approx(order).epsilon(0.1));
    }
}

TEST_CASE("symplectic form is conserved along the discrete flow")
{
    const Pendulum h;
    IntegratorSettings cfg;
    cfg.newton_tol = 1e-15;
    const Vec q0 = vec({0.13, 0.4}), p0 = vec({0.2, 0.9});
    auto run = [&](Vec q, Vec p) {
        for (int k = 0; k < 1000; ++k)
            step_inplace(h, q, p, 1e-3, cfg);
        Vec out(4);
        out << q, p;
        return out;
    };
    // fourth-order stencil on the 1000-step map
    const double d = 1e-4;
    Mat m(4, 4);
    for (int j = 0; j < 4; ++j) {
        auto shifted = [&](double e) {
            Vec q = q0, p = p0;
            (j < 2 ? q[j] : p[j - 2]) += e;
            return run(q, p);
        };
        m.col(j) = (8.0 * (shifted(d) - shifted(-d)) - (shifted(2 * d) - shifted(-2 * d))) / (12 * d);
    }
    Mat J = Mat::Zero(4, 4);
    J.topRightCorner(2, 2) = Mat::Identity(2, 2);
    J.bottomLeftCorner(2, 2) = -Mat::Identity(2, 2);
    CHECK(nt::max_abs(m.transpose() * J * m - J) < 1e-10);
}

TEST_CASE("section crossings")
{
    const auto quad = IntegrableHamiltonian::quadratic(2);
    const IntegrableFlow f(quad);
    IntegratorSettings cfg;
    const auto ev = integrate_to_section(f, ActionAngleState(vec({0.0, 0.0}), vec({0.3, 2.0})), cfg);
    CHECK(ev.time == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ev.residual < 1e-10);

    // the downward pass through q2 = 0 is skipped, the upward one is taken
    const Wobble w;
    cfg.step = 1e-3;
    cfg.order = 4;
    const auto up = integrate_to_section(w, ActionAngleState(vec({0.25, 0.01}), vec({0.0, 1.0})), cfg);
    const double t_star = 1.0 - std::acos(1.0 - 0.02 * M_PI) / two_pi;
    CHECK(up.time == doctest::Approx(t_star).epsilon(1e-8));
    CHECK(up.residual < 1e-10);

    IntegratorSettings short_horizon;
    short_horizon.max_time = 1.0;
    try {
        integrate_to_section(f, ActionAngleState(vec({0.0, 0.0}), vec({0.3, 0.0})), short_horizon);
        FAIL("expected no crossing");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::no_crossing);
    }
}

TEST_CASE("integrated return map matches the closed form")
{
    const auto quad = IntegrableHamiltonian::quadratic(2);
    const IntegrableFlow f(quad);
    IntegratorSettings cfg;
    cfg.order = 4;
    cfg.step = 0.01;
    Rng rng(9);
    for (int k = 0; k < 100; ++k) {
        const SectionPoint x(vec({rng.uniform()}), vec({rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5)}));
        const auto a = integrated_return(f, x, cfg);
        const auto b = return_map(quad, x);
        CHECK(angle_distance(a.q_bar[0], b.q_bar[0]) < 1e-8);
        CHECK((a.p - b.p).cwiseAbs().maxCoeff() < 1e-8);
    }
    const SectionPoint x(vec({0.2}), vec({0.3, 1.2}));
    const auto mono = integrated_monodromy(f, x, cfg);
    CHECK(nt::max_abs(mono.slice - slice_return_derivative(quad, x)) < 1e-6);
}

TEST_CASE("tangent of the perturbed return map")
{
    const auto quad = IntegrableHamiltonian::quadratic(2);
    const Vec ps = vec({0.0, 1.0});
    const SectionPoint x(vec({0.47}), vec({0.03, std::sqrt(1.0 - 0.0009)}));
    const auto none = SectionPerturbation::identity(ps);
    CHECK(nt::max_abs(tangent_return_map(quad, none, x) - return_map_derivative(quad, x)) == 0.0);

    const SectionPerturbation psi(
        SlicePlaneMap(DiskTemplate::linked_twist(Vec2(0.5, 0.0), 0.1, 0.8), BumpProfile(0.5, 0.05)), ps);
    Rng rng(10);
    for (int k = 0; k < 50; ++k) {
        const double p1 = rng.uniform(-0.08, 0.08), h = rng.uniform(0.46, 0.54);
        const SectionPoint y(vec({rng.uniform(0.42, 0.58)}), vec({p1, std::sqrt(2 * h - p1 * p1)}));
        CHECK(std::abs(tangent_return_slice(quad, psi, y).determinant() - 1.0) < 1e-12);
        const Mat m = tangent_return_map(quad, psi, y);
        const double d = 1e-6;
        for (int j = 0; j < 3; ++j) {
            SectionPoint a = y, b = y;
            (j == 0 ? a.q_bar[0] : a.p[j - 1]) += d;
            (j == 0 ? b.q_bar[0] : b.p[j - 1]) -= d;
            const auto ra = perturbed_return(quad, psi, a), rb = perturbed_return(quad, psi, b);
            CHECK(std::abs(wrap_centered(ra.q_bar[0] - rb.q_bar[0]) / (2 * d) - m(0, j)) < 1e-6);
            for (int i = 0; i < 2; ++i)
                CHECK(std::abs((ra.p[i] - rb.p[i]) / (2 * d) - m(1 + i, j)) < 1e-6);
        }
    }
}

TEST_CASE("trajectory dump")
{
    const auto quad = IntegrableHamiltonian::quadratic(2);
    std::ostringstream os;
    IntegratorSettings cfg;
    cfg.step = 0.1;
    dump_trajectory_csv(IntegrableFlow(quad), ActionAngleState(vec({0.0, 0.0}), vec({0.3, 1.0})), cfg, os);
    const std::string s = os.str();
    CHECK(s.rfind("t,q1,q2,p1,p2\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') >= 11);
}

#include "nearint/realization.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace nearint {

void RealizationSettings::validate() const
{
    if (!(eps_u > 0.0))
        throw Error(ErrorKind::configuration, "realization: eps_u must be positive");
    if (!(glue_tol > 0.0) || !(leaf_tol > 0.0))
        throw Error(ErrorKind::configuration, "realization: tolerances must be positive");
    if (glue_max_iter < 1 || leaf_max_iter < 1)
        throw Error(ErrorKind::configuration, "realization: iteration limits must be positive");
    if (check_levels < 1 || check_labels < 1 || check_nodes < 2)
        throw Error(ErrorKind::configuration, "realization: check grid too small");
}

TransitionProfile::TransitionProfile(double eps) : step_(-eps, eps)
{
    if (!(eps > 0.0))
        throw Error(ErrorKind::configuration, "transition half-width must be positive");
}

// ----------------------------------------------------------------- LeafFamily

LeafFamily::LeafFamily(const MapPotential& pot, TransitionProfile sigma, const RealizationSettings& cfg)
    : pot_(&pot), sigma_(sigma), cfg_(cfg)
{
}

Vec2 LeafFamily::leaf(double q1, double s, double phat, double level, double h) const
{
    const Jet sg = sigma_.jet(s);
    if (sg.v == 0.0 && sg.d1 == 0.0)
        return {phat, level};
    const PotentialJet j = pot_->jet(q1, phat, h, sg.d1 != 0.0, false);
    return {phat + sg.v * j.wq, level + sg.d1 * j.w};
}

LeafLabel LeafFamily::leaf_through_point(double q1, double s, double p1, double pn, double h,
                                         bool with_level) const
{
    const Jet sg = sigma_.jet(s);
    LeafLabel out;
    out.phat = p1;
    out.level = pn;
    if (sg.v == 0.0 && sg.d1 == 0.0)
        return out;
    double ph = p1;
    bool done = false;
    for (int it = 0; it < cfg_.leaf_max_iter; ++it) {
        const PotentialJet j = pot_->jet(q1, ph, h, false, false);
        const double g = ph + sg.v * j.wq - p1;
        const double m = 1.0 + sg.v * j.wqp;
        if (!(m > 0.0)) {
            std::ostringstream os;
            os << "leaves overlap at Q1 = " << q1 << ", s = " << s << " (dP1/dphat = " << m << ")";
            throw Error(ErrorKind::foliation_overlap, os.str());
        }
        const double dx = -g / m;
        ph += dx;
        if (std::abs(dx) <= cfg_.leaf_tol) {
            done = true;
            break;
        }
    }
    if (!done) {
        std::ostringstream os;
        os << "leaf label solve did not converge at Q1 = " << q1 << ", s = " << s;
        throw Error(ErrorKind::foliation_overlap, os.str());
    }
    out.phat = ph;
    out.jet = pot_->jet(q1, ph, h, sg.d1 != 0.0, with_level);
    out.m = 1.0 + sg.v * out.jet.wqp;
    out.level = pn - sg.d1 * out.jet.w;
    return out;
}

double LeafFamily::hamiltonian_one_level(double q1, double s, double p1, double pn, double h) const
{
    return leaf_through_point(q1, s, p1, pn, h).level;
}

double safeguarded_root(const std::function<std::pair<double, double>(double)>& g, double lo,
                        double hi, double tol, int max_iter)
{
    double x = 0.5 * (lo + hi);
    bool lo_ok = false, hi_ok = false;
    auto confirm = [&](double end, bool positive) {
        const double v = g(end).first;
        if (positive ? v < 0.0 : v > 0.0) {
            std::ostringstream os;
            os << "level gluing bracket [" << lo << ", " << hi << "] holds no root";
            throw Error(ErrorKind::gluing, os.str());
        }
    };
    for (int it = 0; it < max_iter; ++it) {
        const auto [v, d] = g(x);
        if (v == 0.0)
            return x;
        // decreasing: positive value means the root lies to the right
        if (v > 0.0) {
            lo = x;
            lo_ok = true;
        } else {
            hi = x;
            hi_ok = true;
        }
        double nx = d < 0.0 ? x - v / d : 0.5 * (lo + hi);
        if (!(nx > lo && nx < hi)) {
            if (!lo_ok) {
                confirm(lo, true);
                lo_ok = true;
            }
            if (!hi_ok) {
                confirm(hi, false);
                hi_ok = true;
            }
            nx = 0.5 * (lo + hi);
        }
        if (std::abs(nx - x) <= tol)
            return nx;
        x = nx;
    }
    throw Error(ErrorKind::gluing, "level gluing did not converge");
}

double LeafFamily::glue_levels(double q1, double s, double p1, double pn, double halfwidth) const
{
    const Jet sg = sigma_.jet(s);
    if (sg.d1 == 0.0)
        return pn;
    auto g = [&](double h) {
        const LeafLabel lab = leaf_through_point(q1, s, p1, pn, h, true);
        const double dphat = -sg.v * lab.jet.whq / lab.m;
        const double slope = -1.0 - sg.d1 * (lab.jet.wh + lab.jet.wp * dphat);
        return std::pair<double, double>{lab.level - h, slope};
    };
    return safeguarded_root(g, pn - halfwidth, pn + halfwidth, cfg_.glue_tol, cfg_.glue_max_iter);
}

// -------------------------------------------------------- RealizedHamiltonian

RealizedHamiltonian::RealizedHamiltonian(const IntegrableHamiltonian& sys, const Vec& p_star,
                                         SectionPerturbation psi, RealizationSettings cfg)
    : sys_(sys), p_star_(p_star), psi_(std::make_shared<const SectionPerturbation>(std::move(psi))),
      cfg_(cfg)
{
    cfg_.validate();
    const int n = sys_.dimension();
    if (p_star_.size() != n)
        throw Error(ErrorKind::dimension_mismatch, "torus action has the wrong dimension");
    pot_ = std::make_shared<const MapPotential>(psi_->plane());
    leaves_ = LeafFamily(*pot_, TransitionProfile(cfg_.eps_u), cfg_);
    const double wn = check_transversal(sys_, p_star_, psi_->settings());
    q_center_ = 0.5 / wn;
    const SlicePlaneMap& m = psi_->plane();
    glue_half_ = 1.1 * 4.0 * m.q_half_width() * m.p_half_width() / cfg_.eps_u + 1e-12;
}

ChartPoint RealizedHamiltonian::chart(const Vec& q, const Vec& p) const
{
    const int n = sys_.dimension();
    ChartPoint c;
    c.omega = sys_.grad(p);
    c.pn = sys_.eval(p);
    c.p1 = p[0];
    c.theta = wrap_unit(q[n - 1]);
    const double wn = c.omega[n - 1];
    if (!(wn > psi_->settings().transversality_threshold)) {
        c.s = std::numeric_limits<double>::infinity();
        c.q1 = q[0];
        return c;
    }
    c.r1 = c.omega[0] / wn;
    const double cq = psi_->center_q();
    c.q1 = cq + wrap_centered(q[0] - c.theta * c.r1 - cq);
    c.s = c.theta / wn - q_center_;
    return c;
}

ActionAngleState RealizedHamiltonian::from_chart(double q1, double s, double p1, double h,
                                                 const ActionAngleState& rest) const
{
    const int n = sys_.dimension();
    Vec p = rest.p;
    p[0] = p1;
    p[n - 1] = solve_level(sys_, h, p.head(n - 1), rest.p[n - 1], psi_->settings());
    const Vec w = sys_.grad(p);
    const double theta = (s + q_center_) * w[n - 1];
    if (!(theta >= 0.0 && theta < 1.0))
        throw Error(ErrorKind::configuration, "chart point lies outside one return period");
    Vec q = rest.q;
    q[n - 1] = theta;
    q[0] = wrap_unit(q1 + theta * w[0] / w[n - 1]);
    return {q, p};
}

bool RealizedHamiltonian::in_zone(const ChartPoint& c) const
{
    if (psi_->is_identity())
        return false;
    return leaves_.transition().active(c.s) && pot_->support_contains(c.q1, c.p1, c.pn);
}

bool RealizedHamiltonian::in_zone(const Vec& q, const Vec& p) const
{
    return in_zone(chart(q, p));
}

double RealizedHamiltonian::value(const Vec& q, const Vec& p) const
{
    if (psi_->is_identity())
        return sys_.eval(p);
    const ChartPoint c = chart(q, p);
    if (!in_zone(c))
        return c.pn;
    return leaves_.glue_levels(c.q1, c.s, c.p1, c.pn, glue_half_);
}

void RealizedHamiltonian::gradient(const Vec& q, const Vec& p, Vec& dq, Vec& dp) const
{
    const int n = sys_.dimension();
    dq = Vec::Zero(n);
    if (psi_->is_identity()) {
        dp = sys_.grad(p);
        return;
    }
    const ChartPoint c = chart(q, p);
    dp = c.omega;
    if (!in_zone(c))
        return;

    const double h = leaves_.glue_levels(c.q1, c.s, c.p1, c.pn, glue_half_);
    const LeafLabel lab = leaves_.leaf_through_point(c.q1, c.s, c.p1, c.pn, h, true);
    const Jet sg = leaves_.transition().jet(c.s);
    const PotentialJet& j = lab.jet;
    const double m = lab.m;

    const double dph_q = -sg.v * j.wqq / m;
    const double dph_s = -sg.d1 * j.wq / m;
    const double dph_h = -sg.v * j.whq / m;
    const double g_q = -sg.d1 * (j.wq + j.wp * dph_q);
    const double g_s = -sg.d2 * j.w - sg.d1 * j.wp * dph_s;
    const double g_p1 = -sg.d1 * j.wp / m;
    const double g_h = -1.0 - sg.d1 * (j.wh + j.wp * dph_h);
    // implicit function: dH~/dy = -G_y / G_h, with G_Pn = 1
    const double f_q = -g_q / g_h;
    const double f_s = -g_s / g_h;
    const double f_p1 = -g_p1 / g_h;
    const double f_pn = -1.0 / g_h;

    const Mat hs = sys_.hess(p);
    const double wn = c.omega[n - 1];
    dq[0] = f_q;
    dq[n - 1] = -c.r1 * f_q + f_s / wn;
    for (int k = 0; k < n; ++k) {
        const double dr1 = (hs(0, k) * wn - c.omega[0] * hs(n - 1, k)) / (wn * wn);
        dp[k] = -c.theta * dr1 * f_q - c.theta * hs(n - 1, k) / (wn * wn) * f_s + c.omega[k] * f_pn;
    }
    dp[0] += f_p1;
}

std::shared_ptr<RealizedHamiltonian> realize(const IntegrableHamiltonian& sys, const Vec& p_star,
                                             const SectionPerturbation& psi,
                                             const RealizationSettings& cfg)
{
    auto ht = std::make_shared<RealizedHamiltonian>(sys, p_star, psi, cfg);
    if (psi.is_identity())
        return ht;
    const int n = sys.dimension();
    const SlicePlaneMap& plane = psi.plane();
    const Vec2 c = plane.disk().center();
    const double ph = plane.p_half_width();
    const BumpProfile& env = plane.envelope();
    const double eps = cfg.eps_u;
    const double qc = ht->zone_center();

    // zone fit over the support, other actions at the torus values
    const int grid = 9;
    for (int a = 0; a < grid; ++a) {
        for (int b = 0; b < grid; ++b) {
            Vec p = p_star;
            p[0] = c[1] - ph + 2.0 * ph * a / (grid - 1);
            const double h = env.center() - env.radius() + 2.0 * env.radius() * b / (grid - 1);
            p[n - 1] = solve_level(sys, h, p.head(n - 1), p_star[n - 1], psi.settings());
            const double wn = check_transversal(sys, p, psi.settings());
            if (!(qc - eps > 0.0 && qc + eps < 1.0 / wn)) {
                std::ostringstream os;
                os << "transition zone [" << qc - eps << ", " << qc + eps
                   << "] does not fit inside the return time " << 1.0 / wn << " at p1 = " << p[0]
                   << ", h = " << h << "; reduce eps_u";
                throw Error(ErrorKind::configuration, os.str());
            }
        }
    }

    // image manifolds are graphs with closed primitives
    for (int a = 0; a < cfg.check_levels; ++a) {
        const double h = env.center() - env.radius() + 2.0 * env.radius() * (a + 0.5) / cfg.check_levels;
        for (int b = 0; b < cfg.check_labels; ++b) {
            const double phat = c[1] - ph + 2.0 * ph * (b + 0.5) / cfg.check_labels;
            try {
                image_manifold_potential(plane, h, phat, cfg.check_nodes);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "realization at h = " << h << ": " << e.what();
                throw Error(e.kind(), os.str());
            }
        }
    }
    return ht;
}

double section_distance(const SectionPoint& a, const SectionPoint& b)
{
    double d = 0.0;
    for (Eigen::Index i = 0; i < a.q_bar.size(); ++i)
        d = std::max(d, angle_distance(a.q_bar[i], b.q_bar[i]));
    return std::max(d, (a.p - b.p).norm());
}

FidelityReport verify_realization(const IntegrableHamiltonian& sys, const RealizedHamiltonian& ht,
                                  const SectionPerturbation& psi,
                                  const std::vector<SectionPoint>& samples,
                                  const IntegratorSettings& cfg, int workers)
{
    const std::size_t count = samples.size();
    FidelityReport rep;
    rep.samples = count;
    rep.errors.assign(count, 0.0);
    std::vector<double> drift(count, 0.0), outside(count, -1.0);
    std::vector<char> active(count, 0);
    parallel_for(count, workers, [&](std::size_t i) {
        const SectionPoint& sp = samples[i];
        const SectionPoint mid = psi.apply(sys, sp);
        active[i] = section_distance(mid, sp) > 0.0;
        const SectionPoint want = return_map(sys, mid, psi.settings());
        const SectionPoint got = integrated_return(ht, sp, cfg);
        rep.errors[i] = section_distance(want, got);
        drift[i] = std::abs(sys.eval(got.p) - sys.eval(sp.p));
        const ActionAngleState x = sp.lift();
        if (!ht.in_zone(x.q, x.p))
            outside[i] = std::abs(ht.value(x.q, x.p) - sys.eval(x.p));
    });
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        rep.sup_error = std::max(rep.sup_error, rep.errors[i]);
        sum += rep.errors[i];
        rep.sup_energy_drift = std::max(rep.sup_energy_drift, drift[i]);
        rep.active += active[i] ? 1 : 0;
        if (outside[i] >= 0.0) {
            ++rep.outside;
            rep.max_outside = std::max(rep.max_outside, outside[i]);
        }
    }
    rep.mean_error = count ? sum / static_cast<double>(count) : 0.0;
    return rep;
}

std::vector<SectionPoint> section_samples(const IntegrableHamiltonian& sys,
                                          const SectionPerturbation& psi, std::size_t count,
                                          double margin, std::uint64_t seed)
{
    const int n = sys.dimension();
    const Vec& ps = psi.p_star();
    const SlicePlaneMap& plane = psi.plane();
    Vec2 c = plane.disk().center();
    double qh = plane.q_half_width(), ph = plane.p_half_width();
    double h0 = plane.envelope().center(), dh = plane.envelope().radius();
    if (psi.is_identity() || qh == 0.0) {
        c = Vec2(0.5, ps[0]);
        qh = 0.1;
        ph = 0.05;
        h0 = sys.eval(ps);
        dh = 0.05;
    }
    std::vector<SectionPoint> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(sub_seed(seed, i));
        Vec qb(n - 1), p = ps;
        for (int k = 0; k < n - 1; ++k)
            qb[k] = rng.uniform();
        qb[0] = wrap_unit(rng.uniform(c[0] - qh * (1 + margin), c[0] + qh * (1 + margin)));
        p[0] = rng.uniform(c[1] - ph * (1 + margin), c[1] + ph * (1 + margin));
        const double h = rng.uniform(h0 - dh * (1 + margin), h0 + dh * (1 + margin));
        p[n - 1] = solve_level(sys, h, p.head(n - 1), ps[n - 1], psi.settings());
        out[i] = SectionPoint(qb, p);
    }
    return out;
}

LocalizationReport localization_scan(const RealizedHamiltonian& ht, std::size_t samples,
                                     std::size_t zone_samples, std::uint64_t seed)
{
    const IntegrableHamiltonian& sys = ht.base();
    const SectionPerturbation& psi = ht.perturbation();
    const int n = sys.dimension();
    const Vec& ps = ht.p_star();
    const SlicePlaneMap& plane = psi.plane();
    const Vec2 c = plane.disk().center();
    const double ph = std::max(plane.p_half_width(), 0.05);
    const double h0 = psi.is_identity() ? sys.eval(ps) : plane.envelope().center();
    const double dh = psi.is_identity() ? 0.05 : plane.envelope().radius();
    LocalizationReport rep;

    auto inside = [&](const Vec& q, const Vec& p) {
        const double v = ht.value(q, p);
        rep.sup_inside = std::max(rep.sup_inside, std::abs(v - sys.eval(p)));
        Vec dq, dp;
        ht.gradient(q, p, dq, dp);
        const Vec w = sys.grad(p);
        rep.sup_gradient = std::max({rep.sup_gradient, dq.cwiseAbs().maxCoeff(),
                                     (dp - w).cwiseAbs().maxCoeff()});
    };

    for (std::size_t i = 0; i < samples; ++i) {
        Rng rng(sub_seed(seed, i));
        Vec q(n), p = ps;
        for (int k = 0; k < n; ++k)
            q[k] = rng.uniform();
        p[0] = rng.uniform(c[1] - 2 * ph, c[1] + 2 * ph);
        for (int k = 1; k + 1 < n; ++k)
            p[k] = ps[k] + rng.uniform(-2 * ph, 2 * ph);
        const double h = rng.uniform(h0 - 2 * dh, h0 + 2 * dh);
        p[n - 1] = solve_level(sys, h, p.head(n - 1), ps[n - 1], psi.settings());
        ++rep.samples;
        if (ht.in_zone(q, p)) {
            inside(q, p);
            continue;
        }
        ++rep.outside;
        Vec dq, dp;
        ht.gradient(q, p, dq, dp);
        if (ht.value(q, p) != sys.eval(p) || dp != sys.grad(p) || !dq.isZero(0.0))
            ++rep.outside_mismatch;
    }
    if (psi.is_identity())
        return rep;
    const MapPotential& pot = ht.potential();
    const double pl = c[1] - plane.p_half_width(), pu = c[1] + plane.p_half_width();
    const double eps = ht.settings().eps_u;
    for (std::size_t i = 0; i < zone_samples; ++i) {
        Rng rng(sub_seed(seed ^ 0x5a5a5a5a5a5a5a5aULL, i));
        const double q1 = rng.uniform(pot.q_lo(), pot.q_hi());
        const double s = rng.uniform(-eps, eps);
        const double p1 = rng.uniform(pl, pu);
        const double h = rng.uniform(h0 - dh, h0 + dh);
        Vec q0 = Vec::Zero(n);
        const ActionAngleState x = ht.from_chart(q1, s, p1, h, ActionAngleState(q0, ps));
        ++rep.samples;
        inside(x.q, x.p);
    }
    return rep;
}

} // namespace nearint

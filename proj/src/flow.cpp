#include "nearint/flow.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

namespace nearint {

void IntegratorSettings::validate() const
{
    if (!(step > 0.0))
        throw Error(ErrorKind::configuration, "integrator step must be positive");
    if (!(newton_tol > 0.0) || !(crossing_tol > 0.0) || !(fd_step > 0.0))
        throw Error(ErrorKind::configuration, "integrator tolerances must be positive");
    if (max_newton < 1)
        throw Error(ErrorKind::configuration, "max_newton must be at least 1");
    if (order != 2 && order != 4 && order != 6)
        throw Error(ErrorKind::configuration, "integrator order must be 2, 4 or 6");
    if (!(max_time > 0.0))
        throw Error(ErrorKind::configuration, "integration horizon must be positive");
}

std::vector<double> composition_weights(int order)
{
    if (order == 2)
        return {1.0};
    auto jump = [](const std::vector<double>& base, int k) {
        // triple jump raising order k to k+2
        const double c = std::pow(2.0, 1.0 / (k + 1));
        const double w1 = 1.0 / (2.0 - c), w0 = -c / (2.0 - c);
        std::vector<double> out;
        for (double outer : {w1, w0, w1})
            for (double b : base)
                out.push_back(outer * b);
        return out;
    };
    if (order == 4)
        return jump({1.0}, 2);
    if (order == 6)
        return jump(jump({1.0}, 2), 4);
    throw Error(ErrorKind::configuration, "unsupported composition order");
}

namespace {

// Solves k = dt f(x + k/2); returns the midpoint via (qm, pm).
void midpoint_substep(const EvaluableHamiltonian& h, Vec& q, Vec& p, double dt,
                      const IntegratorSettings& cfg, Vec* qm = nullptr, Vec* pm = nullptr)
{
    const auto n = q.size();
    Vec kq = Vec::Zero(n), kp = Vec::Zero(n), gq(n), gp(n);
    const std::optional<Mat> s = h.base_hessian(p);
    bool done = false;
    for (int it = 0; it <= cfg.max_newton; ++it) {
        const Vec mq = q + 0.5 * kq, mp = p + 0.5 * kp;
        h.gradient(mq, mp, gq, gp);
        const Vec rq = kq - dt * gp;
        const Vec rp = kp + dt * gq;
        const double res = std::max(rq.cwiseAbs().maxCoeff(), rp.cwiseAbs().maxCoeff());
        if (!std::isfinite(res))
            break;
        if (res < cfg.newton_tol) {
            done = true;
            if (qm) {
                *qm = mq;
                *pm = mp;
            }
            break;
        }
        const Vec dp = -rp;
        Vec dq = -rq;
        if (s)
            dq += 0.5 * dt * (*s) * dp;
        kq += dq;
        kp += dp;
    }
    if (!done) {
        std::ostringstream os;
        os << "implicit midpoint Newton did not converge (dt = " << dt << ")";
        throw Error(ErrorKind::step_size, os.str());
    }
    q += kq;
    p += kp;
}

void splitting_substep(const EvaluableHamiltonian& h, Vec& q, Vec& p, double dt)
{
    Vec gq, gp;
    h.gradient(q, p, gq, gp);
    p -= 0.5 * dt * gq;
    h.gradient(q, p, gq, gp);
    q += dt * gp;
    h.gradient(q, p, gq, gp);
    p -= 0.5 * dt * gq;
}

Mat fd_hessian(const EvaluableHamiltonian& h, const Vec& q, const Vec& p, double eps)
{
    const auto n = q.size();
    Mat s(2 * n, 2 * n);
    Vec gq1, gp1, gq2, gp2;
    for (Eigen::Index j = 0; j < 2 * n; ++j) {
        Vec qa = q, pa = p, qb = q, pb = p;
        if (j < n) {
            qa[j] += eps;
            qb[j] -= eps;
        } else {
            pa[j - n] += eps;
            pb[j - n] -= eps;
        }
        h.gradient(qa, pa, gq1, gp1);
        h.gradient(qb, pb, gq2, gp2);
        s.col(j).head(n) = (gq1 - gq2) / (2.0 * eps);
        s.col(j).tail(n) = (gp1 - gp2) / (2.0 * eps);
    }
    return 0.5 * (s + s.transpose());
}

Mat skew(Eigen::Index n)
{
    Mat j = Mat::Zero(2 * n, 2 * n);
    j.block(0, n, n, n) = Mat::Identity(n, n);
    j.block(n, 0, n, n) = -Mat::Identity(n, n);
    return j;
}

// One composed step; when `tangent` is given it is advanced by the discrete variational map.
void composed_step(const EvaluableHamiltonian& h, Vec& q, Vec& p, double dt,
                   const IntegratorSettings& cfg, Mat* tangent)
{
    const auto weights = composition_weights(cfg.order);
    for (double w : weights) {
        const double sub = w * dt;
        if (tangent) {
            Vec qm, pm;
            midpoint_substep(h, q, p, sub, cfg, &qm, &pm);
            const auto n = q.size();
            const Mat a = skew(n) * fd_hessian(h, qm, pm, cfg.fd_step);
            const Mat id = Mat::Identity(2 * n, 2 * n);
            const Mat lhs = id - 0.5 * sub * a;
            *tangent = lhs.partialPivLu().solve((id + 0.5 * sub * a) * (*tangent));
        } else if (cfg.scheme == Scheme::splitting && h.separable()) {
            splitting_substep(h, q, p, sub);
        } else {
            midpoint_substep(h, q, p, sub, cfg);
        }
    }
}

struct Crossing {
    Vec q, p;
    double time;
    double residual;
    long steps;
};

Crossing find_crossing(const EvaluableHamiltonian& h, Vec q, Vec p, const IntegratorSettings& cfg,
                       const TrajectoryRecorder& record, Mat* tangent)
{
    cfg.validate();
    const auto n = q.size();
    if (h.dimension() != n)
        throw Error(ErrorKind::dimension_mismatch, "state and Hamiltonian dimensions differ");
    double t = 0.0;
    long steps = 0;
    if (record)
        record(t, q, p);
    Mat step_tangent;
    while (t < cfg.max_time) {
        const Vec q0 = q, p0 = p;
        if (tangent)
            step_tangent = Mat::Identity(2 * n, 2 * n);
        composed_step(h, q, p, cfg.step, cfg, tangent ? &step_tangent : nullptr);
        ++steps;
        const double a = q0[n - 1], b = q[n - 1];
        if (std::floor(b) > std::floor(a)) {
            const double target = std::floor(a) + 1.0;
            // refine the partial step tau in (0, step]
            double lo = 0.0, hi = cfg.step;
            double tau = cfg.step * (target - a) / (b - a);
            Vec qt, pt, gq, gp;
            for (int it = 0; it < 80; ++it) {
                qt = q0;
                pt = p0;
                composed_step(h, qt, pt, tau, cfg, nullptr);
                const double g = qt[n - 1] - target;
                if (std::abs(g) < 0.01 * cfg.crossing_tol)
                    break;
                if (g > 0.0)
                    hi = tau;
                else
                    lo = tau;
                h.gradient(qt, pt, gq, gp);
                double next = tau - g / gp[n - 1];
                if (!(next > lo && next < hi))
                    next = 0.5 * (lo + hi);
                if (hi - lo < 1e-15 * cfg.step)
                    break;
                tau = next;
            }
            if (tangent) {
                Mat part = Mat::Identity(2 * n, 2 * n);
                Vec qa = q0, pa = p0;
                composed_step(h, qa, pa, tau, cfg, &part);
                *tangent = part * (*tangent);
            }
            // polish with one RK4 step in q_n as the independent variable
            auto rhs = [&](const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
                Vec gq2, gp2;
                h.gradient(x.head(n), x.segment(n, n), gq2, gp2);
                dx.resize(2 * n + 1);
                const double inv = 1.0 / gp2[n - 1];
                dx.head(n) = gp2 * inv;
                dx.segment(n, n) = -gq2 * inv;
                dx[2 * n] = inv;
            };
            Eigen::VectorXd x(2 * n + 1);
            x.head(n) = qt;
            x.segment(n, n) = pt;
            x[2 * n] = 0.0;
            const double d = target - qt[n - 1];
            if (d != 0.0) {
                Eigen::VectorXd k1, k2, k3, k4;
                rhs(x, k1);
                rhs(x + 0.5 * d * k1, k2);
                rhs(x + 0.5 * d * k2, k3);
                rhs(x + d * k3, k4);
                x += d / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            Crossing c;
            c.q = x.head(n);
            c.p = x.segment(n, n);
            c.time = t + tau + x[2 * n];
            c.residual = std::abs(c.q[n - 1] - target);
            c.steps = steps;
            if (c.residual >= cfg.crossing_tol) {
                std::ostringstream os;
                os << "section crossing refinement left residual " << c.residual;
                throw Error(ErrorKind::numerical, os.str());
            }
            if (record)
                record(c.time, c.q, c.p);
            return c;
        }
        if (tangent)
            *tangent = step_tangent * (*tangent);
        t += cfg.step;
        if (record)
            record(t, q, p);
    }
    std::ostringstream os;
    os << "no upward section crossing within time " << cfg.max_time;
    throw Error(ErrorKind::no_crossing, os.str());
}

ActionAngleState reduce(const Vec& q, const Vec& p, double target_qn)
{
    Vec qq = q;
    qq[q.size() - 1] = target_qn;
    return ActionAngleState(qq, p);
}

} // namespace

void step_inplace(const EvaluableHamiltonian& h, Vec& q, Vec& p, double dt, const IntegratorSettings& cfg)
{
    composed_step(h, q, p, dt, cfg, nullptr);
}

ActionAngleState step(const EvaluableHamiltonian& h, const ActionAngleState& s, double dt,
                      const IntegratorSettings& cfg)
{
    Vec q = s.q, p = s.p;
    step_inplace(h, q, p, dt, cfg);
    return ActionAngleState(q, p);
}

CrossingEvent integrate_to_section(const EvaluableHamiltonian& h, const ActionAngleState& s,
                                   const IntegratorSettings& cfg, const TrajectoryRecorder& record)
{
    const Crossing c = find_crossing(h, s.q, s.p, cfg, record, nullptr);
    CrossingEvent ev;
    ev.state = reduce(c.q, c.p, 0.0);
    ev.time = c.time;
    ev.residual = c.residual;
    ev.steps = c.steps;
    return ev;
}

SectionPoint integrated_return(const EvaluableHamiltonian& h, const SectionPoint& sp,
                               const IntegratorSettings& cfg, double* time)
{
    const ActionAngleState s = sp.lift();
    const Crossing c = find_crossing(h, s.q, s.p, cfg, nullptr, nullptr);
    if (time)
        *time = c.time;
    const auto n = c.q.size();
    return SectionPoint(c.q.head(n - 1), c.p);
}

Monodromy integrated_monodromy(const EvaluableHamiltonian& h, const SectionPoint& sp,
                               const IntegratorSettings& cfg)
{
    const ActionAngleState s = sp.lift();
    const auto n = s.q.size();
    Mat m = Mat::Identity(2 * n, 2 * n);
    const Crossing c = find_crossing(h, s.q, s.p, cfg, nullptr, &m);

    // crossing-time correction: project along the vector field onto q_n = const
    Vec gq, gp;
    h.gradient(c.q, c.p, gq, gp);
    Vec f(2 * n);
    f.head(n) = gp;
    f.tail(n) = -gq;
    Mat proj = Mat::Identity(2 * n, 2 * n);
    proj.col(n - 1) -= f / f[n - 1];
    Monodromy out;
    out.flow = proj * m;
    out.image = SectionPoint(c.q.head(n - 1), c.p);
    out.time = c.time;

    // slice chart at the start: dp_n from dH = 0 with q_n fixed
    Vec gq0, gp0;
    h.gradient(s.q, s.p, gq0, gp0);
    Mat lift = Mat::Zero(2 * n, 2 * n - 2);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        lift(i, i) = 1.0;
        lift(2 * n - 1, i) = -gq0[i] / gp0[n - 1];
        lift(n + i, n - 1 + i) = 1.0;
        lift(2 * n - 1, n - 1 + i) = -gp0[i] / gp0[n - 1];
    }
    const Mat full = out.flow * lift;
    out.slice.resize(2 * n - 2, 2 * n - 2);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        out.slice.row(i) = full.row(i);
        out.slice.row(n - 1 + i) = full.row(n + i);
    }
    return out;
}

Mat tangent_return_map(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                       const SectionPoint& sp)
{
    return perturbed_return_derivative(sys, psi, sp);
}

Mat tangent_return_slice(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                         const SectionPoint& sp)
{
    return perturbed_return_slice_derivative(sys, psi, sp);
}

CrossingEvent dump_trajectory_csv(const EvaluableHamiltonian& h, const ActionAngleState& s,
                                  const IntegratorSettings& cfg, std::ostream& out)
{
    const int n = h.dimension();
    out << "t";
    for (int i = 1; i <= n; ++i)
        out << ",q" << i;
    for (int i = 1; i <= n; ++i)
        out << ",p" << i;
    out << "\n";
    char buf[32];
    auto rec = [&](double t, const Vec& q, const Vec& p) {
        std::snprintf(buf, sizeof buf, "%.17g", t);
        out << buf;
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", q[i]);
            out << ',' << buf;
        }
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", p[i]);
            out << ',' << buf;
        }
        out << "\n";
    };
    return integrate_to_section(h, s, cfg, rec);
}

} // namespace nearint

#include "nearint/section_maps.hpp"

#include <sstream>

namespace nearint {

SectionPoint::SectionPoint(Vec q_bar_, Vec p_) : q_bar(std::move(q_bar_)), p(std::move(p_))
{
    if (q_bar.size() + 1 != p.size())
        throw Error(ErrorKind::dimension_mismatch, "section point needs n-1 angles and n actions");
    normalize();
}

void SectionPoint::normalize()
{
    for (Eigen::Index i = 0; i < q_bar.size(); ++i)
        q_bar[i] = wrap_unit(q_bar[i]);
}

ActionAngleState SectionPoint::lift() const
{
    Vec q(p.size());
    q.head(q_bar.size()) = q_bar;
    q[q_bar.size()] = 0.0;
    return ActionAngleState(q, p);
}

SectionBox::SectionBox(std::vector<double> lo_, std::vector<double> hi_)
    : lo(std::move(lo_)), hi(std::move(hi_))
{
    if (lo.size() != hi.size())
        throw Error(ErrorKind::dimension_mismatch, "section box bounds differ in length");
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (hi[i] < lo[i])
            throw Error(ErrorKind::configuration, "section box interval is empty");
}

double SectionBox::volume() const
{
    double v = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i)
        v *= hi[i] - lo[i];
    return v;
}

bool SectionBox::contains(const SectionPoint& sp) const
{
    const auto m = sp.q_bar.size();
    for (std::size_t i = 0; i < lo.size(); ++i) {
        const double x = static_cast<Eigen::Index>(i) < m ? sp.q_bar[static_cast<Eigen::Index>(i)]
                                                          : sp.p[static_cast<Eigen::Index>(i) - m];
        if (x < lo[i] || x > hi[i])
            return false;
    }
    return true;
}

double check_transversal(const IntegrableHamiltonian& sys, const Vec& p, const SectionSettings& cfg)
{
    const double wn = sys.grad(p)[p.size() - 1];
    if (!(wn > cfg.transversality_threshold)) {
        std::ostringstream os;
        os << "flow not transversal to the section: dH/dp_n = " << wn;
        throw Error(ErrorKind::transversality, os.str());
    }
    return wn;
}

Vec return_shift(const IntegrableHamiltonian& sys, const Vec& p, const SectionSettings& cfg)
{
    const Vec w = sys.grad(p);
    const auto n = p.size();
    const double wn = w[n - 1];
    if (!(wn > cfg.transversality_threshold)) {
        std::ostringstream os;
        os << "flow not transversal to the section: dH/dp_n = " << wn;
        throw Error(ErrorKind::transversality, os.str());
    }
    return w.head(n - 1) / wn;
}

SectionPoint return_map(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                        const SectionSettings& cfg)
{
    SectionPoint out = sp;
    out.q_bar += return_shift(sys, sp.p, cfg);
    out.normalize();
    return out;
}

SectionPoint return_map_inverse(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                                const SectionSettings& cfg)
{
    SectionPoint out = sp;
    out.q_bar -= return_shift(sys, sp.p, cfg);
    out.normalize();
    return out;
}

namespace {

// d(omega_i / omega_n) / dp_k for i < n, all k.
Mat shift_gradient(const IntegrableHamiltonian& sys, const Vec& p, const SectionSettings& cfg)
{
    const auto n = p.size();
    const Vec w = sys.grad(p);
    const Mat hs = sys.hess(p);
    const double wn = w[n - 1];
    if (!(wn > cfg.transversality_threshold))
        throw Error(ErrorKind::transversality, "flow not transversal to the section");
    Mat d(n - 1, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k)
            d(i, k) = (hs(i, k) * wn - w[i] * hs(n - 1, k)) / (wn * wn);
    return d;
}

} // namespace

Mat return_map_derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                          const SectionSettings& cfg)
{
    const auto n = sp.p.size();
    Mat m = Mat::Identity(2 * n - 1, 2 * n - 1);
    m.block(0, n - 1, n - 1, n) = shift_gradient(sys, sp.p, cfg);
    return m;
}

Mat slice_return_derivative(const IntegrableHamiltonian& sys, const SectionPoint& sp,
                            const SectionSettings& cfg)
{
    const auto n = sp.p.size();
    const Vec w = sys.grad(sp.p);
    const Mat d = shift_gradient(sys, sp.p, cfg);
    // along the level, dp_n/dp_j = -omega_j / omega_n
    Mat along = d.leftCols(n - 1);
    for (Eigen::Index j = 0; j + 1 < n; ++j)
        along.col(j) -= d.col(n - 1) * (w[j] / w[n - 1]);
    Mat m = Mat::Identity(2 * n - 2, 2 * n - 2);
    m.block(0, n - 1, n - 1, n - 1) = along;
    return m;
}

double return_time(const IntegrableHamiltonian& sys, const SectionPoint& sp, const SectionSettings& cfg)
{
    return 1.0 / check_transversal(sys, sp.p, cfg);
}

MeasureEstimate induced_measure_of_set(const IntegrableHamiltonian& sys, const SectionBox& bounds,
                                       const std::function<bool(const SectionPoint&)>& indicator,
                                       std::size_t samples, std::uint64_t seed)
{
    const int n = sys.dimension();
    if (static_cast<int>(bounds.size()) != 2 * n - 1)
        throw Error(ErrorKind::dimension_mismatch, "section box must have 2n-1 intervals");
    MeasureEstimate est;
    est.samples = samples;
    const double vol = bounds.volume();
    if (vol == 0.0 || samples == 0)
        return est;

    // fixed-size chunks with their own sub-seeds; summed in chunk order
    constexpr std::size_t chunk = 4096;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t c = 0; c * chunk < samples; ++c) {
        Rng rng(sub_seed(seed, c));
        const std::size_t end = std::min(samples, (c + 1) * chunk);
        double s = 0.0, s2 = 0.0;
        for (std::size_t k = c * chunk; k < end; ++k) {
            Vec qb(n - 1), p(n);
            for (int i = 0; i < 2 * n - 1; ++i) {
                const double x = rng.uniform(bounds.lo[i], bounds.hi[i]);
                if (i < n - 1)
                    qb[i] = x;
                else
                    p[i - (n - 1)] = x;
            }
            SectionPoint sp;
            sp.q_bar = qb;
            sp.p = p;
            double f = 0.0;
            if (indicator(sp))
                f = std::abs(sys.grad(p)[n - 1]);
            s += f;
            s2 += f * f;
        }
        sum += s;
        sum2 += s2;
    }
    const double mean = sum / static_cast<double>(samples);
    const double var = std::max(0.0, sum2 / static_cast<double>(samples) - mean * mean);
    est.value = vol * mean;
    est.standard_error = vol * std::sqrt(var / static_cast<double>(samples));
    return est;
}

MeasureEstimate induced_measure(const IntegrableHamiltonian& sys, const SectionBox& box,
                                std::size_t samples, std::uint64_t seed)
{
    return induced_measure_of_set(sys, box, [](const SectionPoint&) { return true; }, samples, seed);
}

double solve_level(const IntegrableHamiltonian& sys, double h, const Vec& p_bar, double p_n_guess,
                   const SectionSettings& cfg)
{
    const auto n = p_bar.size() + 1;
    Vec p(n);
    p.head(n - 1) = p_bar;
    double x = p_n_guess;
    const double tol = cfg.lift_tolerance * std::max(1.0, std::abs(h));
    for (int it = 0; it < cfg.lift_max_iter; ++it) {
        p[n - 1] = x;
        const double r = sys.eval(p) - h;
        const double d = sys.grad(p)[n - 1];
        if (std::abs(r) < tol) {
            // one polishing step, kept only if it helps
            if (!(d > cfg.transversality_threshold) || r == 0.0)
                return x;
            p[n - 1] = x - r / d;
            return std::abs(sys.eval(p) - h) < std::abs(r) ? p[n - 1] : x;
        }
        if (!(d > cfg.transversality_threshold))
            break;
        x -= r / d;
        if (!(std::abs(x - p_n_guess) <= cfg.lift_trust))
            break;
    }
    p[n - 1] = x;
    if (std::abs(sys.eval(p) - h) < tol && sys.grad(p)[n - 1] > cfg.transversality_threshold)
        return x;
    std::ostringstream os;
    os << "no transversal root of H = " << h << " near p_n = " << p_n_guess;
    throw Error(ErrorKind::lift_failure, os.str());
}

SectionPoint slice_lift(const IntegrableHamiltonian& sys, double h, const Vec& q_bar,
                        const Vec& p_bar, double p_n_guess, const SectionSettings& cfg)
{
    const auto n = p_bar.size() + 1;
    Vec p(n);
    p.head(n - 1) = p_bar;
    p[n - 1] = solve_level(sys, h, p_bar, p_n_guess, cfg);
    return SectionPoint(q_bar, p);
}

SliceCoordinates slice_project(const IntegrableHamiltonian& sys, const SectionPoint& sp)
{
    return SliceCoordinates{sys.eval(sp.p), sp.q_bar, sp.p.head(sp.p.size() - 1)};
}

Mat standard_skew(int m)
{
    Mat j = Mat::Zero(2 * m, 2 * m);
    j.block(0, m, m, m) = Mat::Identity(m, m);
    j.block(m, 0, m, m) = -Mat::Identity(m, m);
    return j;
}

} // namespace nearint
